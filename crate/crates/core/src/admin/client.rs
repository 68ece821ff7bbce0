use std::io::{self, BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use crate::lang::{AstNode, Script};

use super::frame::{read_frame, write_frame, Frame, FrameError, MsgType};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

impl From<io::Error> for ClientError {
    fn from(e: io::Error) -> Self {
        ClientError::Frame(FrameError::Io(e))
    }
}

/// Outcome of one submitted form: the RESULT node or the ERROR text.
#[derive(Debug, Clone, PartialEq)]
pub struct FormOutcome {
    pub index: usize,
    pub result: Result<AstNode, String>,
}

pub struct AdminClient {
    addr: String,
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl std::fmt::Debug for AdminClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdminClient").field("addr", &self.addr).finish()
    }
}

impl AdminClient {
    pub fn connect(addr: impl ToSocketAddrs + ToString) -> Result<AdminClient, ClientError> {
        let label = addr.to_string();
        let err = |source| ClientError::Connect {
            addr: label.clone(),
            source,
        };
        let stream = TcpStream::connect(&addr).map_err(err)?;
        let _ = stream.set_nodelay(true);
        let reader = BufReader::new(stream.try_clone().map_err(err)?);
        Ok(AdminClient {
            addr: label,
            reader,
            writer: BufWriter::new(stream),
        })
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn set_timeout(&self, timeout: Option<Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(timeout)
    }

    /// Sends one EVAL and waits for its RESULT or ERROR.
    pub fn eval(&mut self, form: &AstNode) -> Result<Result<AstNode, String>, ClientError> {
        write_frame(&mut self.writer, &Frame::eval(form))?;
        let reply = read_frame(&mut self.reader)?;
        match reply.msg_type {
            MsgType::Result => reply
                .ast()
                .map(Ok)
                .map_err(|e| ClientError::Protocol(format!("bad RESULT payload: {e}"))),
            MsgType::Error => Ok(Err(String::from_utf8_lossy(&reply.payload).into_owned())),
            other => Err(ClientError::Protocol(format!("expected RESULT or ERROR, got {other:?}"))),
        }
    }

    pub fn ping(&mut self) -> Result<(), ClientError> {
        write_frame(&mut self.writer, &Frame::ping())?;
        match read_frame(&mut self.reader)?.msg_type {
            MsgType::Pong => Ok(()),
            other => Err(ClientError::Protocol(format!("expected PONG, got {other:?}"))),
        }
    }

    /// Says goodbye and closes the connection.
    pub fn bye(mut self) -> Result<(), ClientError> {
        write_frame(&mut self.writer, &Frame::bye())?;
        Ok(())
    }

    /// Sends the forms in order. Stops after the first ERROR unless
    /// `keep_going`.
    pub fn submit(&mut self, script: &Script, keep_going: bool) -> Result<Vec<FormOutcome>, ClientError> {
        let mut out = Vec::with_capacity(script.len());
        for (index, form) in script.forms.iter().enumerate() {
            let result = self.eval(form)?;
            let failed = result.is_err();
            out.push(FormOutcome { index, result });
            if failed && !keep_going {
                break;
            }
        }
        Ok(out)
    }
}

/// Connects, submits `script`, and says goodbye.
pub fn submit(
    addr: impl ToSocketAddrs + ToString,
    script: &Script,
    keep_going: bool,
) -> Result<Vec<FormOutcome>, ClientError> {
    let mut client = AdminClient::connect(addr)?;
    let out = client.submit(script, keep_going)?;
    client.bye()?;
    Ok(out)
}
