//! Container virtual machine: the reconfiguration entry point of a node.
//!
//! [`bootstrap`] builds the keyword environment over a [`NodeRuntime`];
//! [`Node`] runs it on a dedicated control thread fed by a bounded queue.

mod control;
mod keywords;
mod services;

use std::sync::Arc;

use thiserror::Error;

use crate::lang::{EvalError, Environment, HandleKind, Value};
use crate::runtime::NodeRuntime;

pub use control::{ControlHandle, Node, QUEUE_DEPTH};
pub use keywords::{install_keyword, KEYWORDS};

#[derive(Debug, Error)]
pub enum CvmError {
    #[error("node is already bootstrapped")]
    AlreadyBootstrapped,
    #[error("bootstrap form {index} failed: {error}")]
    Bootstrap { index: usize, error: EvalError },
    #[error("cannot start control thread: {0}")]
    Spawn(String),
}

/// Builds the reconfiguration environment for `runtime`: the standard
/// language plus every entry of [`KEYWORDS`]. A runtime has one entry point,
/// so the second call fails.
pub fn bootstrap(runtime: &Arc<NodeRuntime>) -> Result<Environment, CvmError> {
    if !runtime.mark_bootstrapped() {
        return Err(CvmError::AlreadyBootstrapped);
    }
    let mut env = Environment::standard();
    for name in KEYWORDS {
        install_keyword(&mut env, runtime, name);
    }
    Ok(env)
}

fn host(e: impl std::fmt::Display) -> EvalError {
    EvalError::host(e)
}

fn str_arg<'a>(name: &str, v: &'a Value) -> Result<&'a str, EvalError> {
    v.as_str()
        .ok_or_else(|| EvalError::type_error(format!("{name}: expected a string, got {}", v.type_name())))
}

fn int_arg(name: &str, v: &Value) -> Result<i64, EvalError> {
    v.as_int()
        .ok_or_else(|| EvalError::type_error(format!("{name}: expected an integer, got {}", v.type_name())))
}

/// A handle of the given kind; a bare integer is accepted as a raw id.
fn handle_arg(name: &str, kind: HandleKind, v: &Value) -> Result<u64, EvalError> {
    match v {
        Value::Handle { kind: k, id } if *k == kind => Ok(*id),
        Value::Int(i) if *i >= 0 => Ok(*i as u64),
        other => Err(EvalError::type_error(format!(
            "{name}: expected a {} handle, got {other}",
            kind.name()
        ))),
    }
}

#[cfg(test)]
mod tests;
