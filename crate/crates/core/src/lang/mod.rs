//! The reconfiguration language: parser, canonical printer, binary AST
//! codec, and an evaluator over a runtime-mutable symbol table.

mod ast;
mod codec;
mod env;
mod eval;
mod parser;
mod prelude;
mod value;

pub use ast::{is_valid_symbol, print, AstNode};
pub use codec::{decode_ast, encode_ast, encode_into, DecodeError, MAX_DECODE_DEPTH};
pub use env::{check_arity, Binding, Environment, EvalError, EvalErrorKind, NativeFn, Procedure, SyntaxFn};
pub use eval::{eval, eval_script, MAX_EVAL_DEPTH};
pub use parser::{parse, parse_one, ParseError, ParseErrorKind, Script};
pub use value::{HandleKind, Value};
