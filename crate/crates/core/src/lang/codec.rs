//! Binary encoding of [`AstNode`] trees.
//!
//! ```text
//! 0x01 Symbol | 0x02 Str   u32 BE byte length, UTF-8 bytes
//! 0x03 Int                 8 bytes BE two's complement
//! 0x04 Float               8 bytes IEEE-754 BE
//! 0x05 List                u32 BE child count, children in order
//! ```

use thiserror::Error;

use super::ast::AstNode;

pub const TAG_SYMBOL: u8 = 0x01;
pub const TAG_STR: u8 = 0x02;
pub const TAG_INT: u8 = 0x03;
pub const TAG_FLOAT: u8 = 0x04;
pub const TAG_LIST: u8 = 0x05;

/// Nesting limit when decoding untrusted input.
pub const MAX_DECODE_DEPTH: usize = 512;

/// Smallest possible encoded node (a tag plus a 4-byte length or count).
const MIN_NODE_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("truncated payload at offset {offset}: needed {needed} bytes, {available} present")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid UTF-8 at offset {0}")]
    InvalidUtf8(usize),
    #[error("declared list length {declared} exceeds remaining {remaining} bytes")]
    LengthExceedsRemaining { declared: u32, remaining: usize },
    #[error("nesting deeper than {MAX_DECODE_DEPTH}")]
    TooDeep,
}

pub fn encode_ast(node: &AstNode) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(node, &mut out);
    out
}

pub fn encode_into(node: &AstNode, out: &mut Vec<u8>) {
    match node {
        AstNode::Symbol(s) => put_text(TAG_SYMBOL, s, out),
        AstNode::Str(s) => put_text(TAG_STR, s, out),
        AstNode::Int(i) => {
            out.push(TAG_INT);
            out.extend_from_slice(&i.to_be_bytes());
        }
        AstNode::Float(f) => {
            out.push(TAG_FLOAT);
            out.extend_from_slice(&f.to_bits().to_be_bytes());
        }
        AstNode::List(children) => {
            out.push(TAG_LIST);
            out.extend_from_slice(&(children.len() as u32).to_be_bytes());
            for child in children {
                encode_into(child, out);
            }
        }
    }
}

fn put_text(tag: u8, s: &str, out: &mut Vec<u8>) {
    out.push(tag);
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Decodes one node from the front of `bytes`, returning it with the number
/// of bytes consumed. Trailing bytes are left alone.
pub fn decode_ast(bytes: &[u8]) -> Result<(AstNode, usize), DecodeError> {
    let mut reader = Reader { bytes, pos: 0 };
    let node = reader.node(0)?;
    Ok((node, reader.pos))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn eight(&mut self) -> Result<[u8; 8], DecodeError> {
        Ok(self.take(8)?.try_into().unwrap())
    }

    fn text(&mut self) -> Result<String, DecodeError> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let raw = self.take(len)?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|e| DecodeError::InvalidUtf8(start + e.valid_up_to()))
    }

    fn node(&mut self, depth: usize) -> Result<AstNode, DecodeError> {
        if depth > MAX_DECODE_DEPTH {
            return Err(DecodeError::TooDeep);
        }
        let tag = self.take(1)?[0];
        match tag {
            TAG_SYMBOL => Ok(AstNode::Symbol(self.text()?)),
            TAG_STR => Ok(AstNode::Str(self.text()?)),
            TAG_INT => Ok(AstNode::Int(i64::from_be_bytes(self.eight()?))),
            TAG_FLOAT => Ok(AstNode::Float(f64::from_bits(u64::from_be_bytes(self.eight()?)))),
            TAG_LIST => {
                let declared = self.u32()?;
                let remaining = self.bytes.len() - self.pos;
                if (declared as usize).saturating_mul(MIN_NODE_LEN) > remaining {
                    return Err(DecodeError::LengthExceedsRemaining { declared, remaining });
                }
                let mut children = Vec::with_capacity(declared as usize);
                for _ in 0..declared {
                    children.push(self.node(depth + 1)?);
                }
                Ok(AstNode::List(children))
            }
            other => Err(DecodeError::UnknownTag(other)),
        }
    }
}
