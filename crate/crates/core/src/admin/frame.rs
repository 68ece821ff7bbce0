//! Wire framing: `43 56 | version | type | u32 BE length | payload`.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::lang::{decode_ast, encode_ast, AstNode, DecodeError, Value};

pub const MAGIC: [u8; 2] = [0x43, 0x56];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;
/// Largest payload accepted from a peer.
pub const MAX_PAYLOAD: u32 = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Eval = 0x01,
    Result = 0x02,
    Error = 0x03,
    Ping = 0x04,
    Pong = 0x05,
    Bye = 0x06,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => MsgType::Eval,
            0x02 => MsgType::Result,
            0x03 => MsgType::Error,
            0x04 => MsgType::Ping,
            0x05 => MsgType::Pong,
            0x06 => MsgType::Bye,
            _ => return None,
        })
    }

    /// PING, PONG and BYE carry no payload.
    pub fn is_control(self) -> bool {
        matches!(self, MsgType::Ping | MsgType::Pong | MsgType::Bye)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the limit")]
    TooLarge(u32),
    #[error("{0:?} frame must have an empty payload")]
    UnexpectedPayload(MsgType),
    #[error("truncated frame: {0} bytes missing")]
    Truncated(usize),
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum PayloadError {
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("decode: {0} trailing bytes after the node")]
    Trailing(usize),
    #[error("ERROR payload is not UTF-8")]
    Utf8,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn eval(form: &AstNode) -> Self {
        Frame::new(MsgType::Eval, encode_ast(form))
    }

    /// RESULT carrying the wire form of `value`.
    pub fn result(value: &Value) -> Self {
        Frame::new(MsgType::Result, encode_ast(&value.to_ast()))
    }

    pub fn error(text: &str) -> Self {
        Frame::new(MsgType::Error, text.as_bytes().to_vec())
    }

    pub fn ping() -> Self {
        Frame::new(MsgType::Ping, Vec::new())
    }

    pub fn pong() -> Self {
        Frame::new(MsgType::Pong, Vec::new())
    }

    pub fn bye() -> Self {
        Frame::new(MsgType::Bye, Vec::new())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `bytes`; returns it with the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::Truncated(HEADER_LEN - bytes.len()));
        }
        let header: [u8; HEADER_LEN] = bytes[..HEADER_LEN].try_into().expect("length checked");
        let (msg_type, len) = parse_header(&header)?;
        let end = HEADER_LEN + len as usize;
        if bytes.len() < end {
            return Err(FrameError::Truncated(end - bytes.len()));
        }
        Ok((Frame::new(msg_type, bytes[HEADER_LEN..end].to_vec()), end))
    }

    /// The single AST node of an EVAL or RESULT payload.
    pub fn ast(&self) -> Result<AstNode, PayloadError> {
        let (node, used) = decode_ast(&self.payload)?;
        if used != self.payload.len() {
            return Err(PayloadError::Trailing(self.payload.len() - used));
        }
        Ok(node)
    }

    pub fn text(&self) -> Result<&str, PayloadError> {
        std::str::from_utf8(&self.payload).map_err(|_| PayloadError::Utf8)
    }
}

fn parse_header(header: &[u8; HEADER_LEN]) -> Result<(MsgType, u32), FrameError> {
    if header[..2] != MAGIC {
        return Err(FrameError::BadMagic([header[0], header[1]]));
    }
    if header[2] != VERSION {
        return Err(FrameError::BadVersion(header[2]));
    }
    let msg_type = MsgType::from_byte(header[3]).ok_or(FrameError::UnknownType(header[3]))?;
    let len = u32::from_be_bytes([header[4], header[5], header[6], header[7]]);
    if len > MAX_PAYLOAD {
        return Err(FrameError::TooLarge(len));
    }
    if msg_type.is_control() && len != 0 {
        return Err(FrameError::UnexpectedPayload(msg_type));
    }
    Ok((msg_type, len))
}

/// Reads one frame. A clean end of stream before the first header byte is
/// [`FrameError::Closed`].
pub fn read_frame(r: &mut impl Read) -> Result<Frame, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(FrameError::Truncated(HEADER_LEN - filled)),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (msg_type, len) = parse_header(&header)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated(len as usize),
        _ => FrameError::Io(e),
    })?;
    Ok(Frame::new(msg_type, payload))
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}
