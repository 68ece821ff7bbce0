use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::ast::AstNode;
use super::value::Value;

/// Host operation receiving evaluated arguments.
pub type NativeFn = dyn Fn(&mut Environment, Vec<Value>) -> Result<Value, EvalError> + Send + Sync;

/// Host operation receiving its argument forms unevaluated. Special forms
/// such as `define` and `if` are bindings of this kind, which is what makes
/// them removable.
pub type SyntaxFn = dyn Fn(&mut Environment, &[AstNode]) -> Result<Value, EvalError> + Send + Sync;

#[derive(Debug)]
pub struct Procedure {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<AstNode>,
}

#[derive(Clone)]
pub enum Binding {
    Val(Value),
    Native(Arc<NativeFn>),
    Syntax(Arc<SyntaxFn>),
    Proc(Arc<Procedure>),
}

impl fmt::Debug for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Val(v) => f.debug_tuple("Val").field(v).finish(),
            Binding::Native(_) => f.write_str("Native"),
            Binding::Syntax(_) => f.write_str("Syntax"),
            Binding::Proc(p) => f.debug_tuple("Proc").field(&p.name).finish(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalErrorKind {
    UnboundSymbol(String),
    /// Head of an application is bound to something that cannot be called.
    NotCallable(String),
    /// A symbol bound to an operation was used where a value was expected.
    NotAValue(String),
    Arity {
        name: String,
        expected: String,
        got: usize,
    },
    /// Malformed special form.
    Syntax(String),
    /// Argument of the wrong type for a native.
    Type(String),
    /// Failure reported by a host operation.
    Host(String),
    DepthExceeded,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalErrorKind::UnboundSymbol(name) => write!(f, "unbound symbol: {name}"),
            EvalErrorKind::NotCallable(what) => write!(f, "not callable: {what}"),
            EvalErrorKind::NotAValue(name) => write!(f, "{name} is an operation, not a value"),
            EvalErrorKind::Arity { name, expected, got } => {
                write!(f, "arity mismatch: {name} expects {expected} argument(s), got {got}")
            }
            EvalErrorKind::Syntax(msg) => write!(f, "syntax: {msg}"),
            EvalErrorKind::Type(msg) => write!(f, "type: {msg}"),
            EvalErrorKind::Host(msg) => f.write_str(msg),
            EvalErrorKind::DepthExceeded => f.write_str("evaluation nested too deeply"),
        }
    }
}

/// Evaluation failure, tagged with the printed form it arose in.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub form: Option<String>,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(form) = &self.form {
            write!(f, " in {form}")?;
        }
        Ok(())
    }
}

impl EvalError {
    pub fn new(kind: EvalErrorKind) -> Self {
        EvalError { kind, form: None }
    }

    pub fn host(msg: impl fmt::Display) -> Self {
        Self::new(EvalErrorKind::Host(msg.to_string()))
    }

    pub fn type_error(msg: impl fmt::Display) -> Self {
        Self::new(EvalErrorKind::Type(msg.to_string()))
    }

    pub fn syntax(msg: impl fmt::Display) -> Self {
        Self::new(EvalErrorKind::Syntax(msg.to_string()))
    }

    pub fn arity(name: &str, expected: impl fmt::Display, got: usize) -> Self {
        Self::new(EvalErrorKind::Arity {
            name: name.to_string(),
            expected: expected.to_string(),
            got,
        })
    }

    pub fn unbound(name: &str) -> Self {
        Self::new(EvalErrorKind::UnboundSymbol(name.to_string()))
    }

    pub fn is_unbound(&self, name: &str) -> bool {
        matches!(&self.kind, EvalErrorKind::UnboundSymbol(n) if n == name)
    }

    pub(crate) fn in_form(mut self, form: &AstNode) -> Self {
        if self.form.is_none() {
            self.form = Some(form.print());
        }
        self
    }
}

/// Mutable symbol table. Extending the language means defining names;
/// restricting it means undefining them, special forms included.
#[derive(Default)]
pub struct Environment {
    bindings: HashMap<String, Binding>,
    pub(crate) depth: usize,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("symbols", &self.list_symbols())
            .finish()
    }
}

impl Environment {
    /// An environment with no bindings at all, not even `define`.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Special forms plus the `symbols` introspection native.
    pub fn with_core_forms() -> Self {
        let mut env = Self::empty();
        super::eval::install_core_forms(&mut env);
        env
    }

    /// Core forms plus the small prelude of list, arithmetic and comparison
    /// natives.
    pub fn standard() -> Self {
        let mut env = Self::with_core_forms();
        super::prelude::install(&mut env);
        env
    }

    pub fn lookup(&self, name: &str) -> Option<&Binding> {
        self.bindings.get(name)
    }

    pub fn is_bound(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn bind(&mut self, name: impl Into<String>, binding: Binding) -> Option<Binding> {
        self.bindings.insert(name.into(), binding)
    }

    pub fn define_value(&mut self, name: impl Into<String>, value: Value) {
        self.bind(name, Binding::Val(value));
    }

    /// Binds a host operation, replacing any previous binding of `name`.
    pub fn define_native<F>(&mut self, name: impl Into<String>, op: F)
    where
        F: Fn(&mut Environment, Vec<Value>) -> Result<Value, EvalError> + Send + Sync + 'static,
    {
        self.bind(name, Binding::Native(Arc::new(op)));
    }

    pub fn define_syntax<F>(&mut self, name: impl Into<String>, op: F)
    where
        F: Fn(&mut Environment, &[AstNode]) -> Result<Value, EvalError> + Send + Sync + 'static,
    {
        self.bind(name, Binding::Syntax(Arc::new(op)));
    }

    /// Removes a binding; returns whether it existed.
    pub fn undefine(&mut self, name: &str) -> bool {
        self.bindings.remove(name).is_some()
    }

    pub(crate) fn restore(&mut self, name: &str, previous: Option<Binding>) {
        match previous {
            Some(b) => {
                self.bindings.insert(name.to_string(), b);
            }
            None => {
                self.bindings.remove(name);
            }
        }
    }

    /// Sorted list of bound names.
    pub fn list_symbols(&self) -> Vec<String> {
        let mut names: Vec<String> = self.bindings.keys().cloned().collect();
        names.sort();
        names
    }
}

/// Checks a native's argument count against an inclusive range.
pub fn check_arity(name: &str, args: &[Value], min: usize, max: Option<usize>) -> Result<(), EvalError> {
    let n = args.len();
    let ok = n >= min && max.is_none_or(|m| n <= m);
    if ok {
        return Ok(());
    }
    let expected = match max {
        Some(m) if m == min => min.to_string(),
        Some(m) => format!("{min}..={m}"),
        None => format!("at least {min}"),
    };
    Err(EvalError::arity(name, expected, n))
}
