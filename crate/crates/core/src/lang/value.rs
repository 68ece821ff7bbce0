use std::fmt;

use super::ast::{format_float, AstNode};

/// What a handle refers to on the node that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandleKind {
    Runtime,
    Container,
    Component,
    Service,
    Metric,
    Interceptor,
    Object,
}

impl HandleKind {
    /// Wire code used in RESULT payloads.
    pub fn code(self) -> i64 {
        match self {
            HandleKind::Runtime => 1,
            HandleKind::Container => 2,
            HandleKind::Component => 3,
            HandleKind::Service => 4,
            HandleKind::Metric => 5,
            HandleKind::Interceptor => 6,
            HandleKind::Object => 7,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        Some(match code {
            1 => HandleKind::Runtime,
            2 => HandleKind::Container,
            3 => HandleKind::Component,
            4 => HandleKind::Service,
            5 => HandleKind::Metric,
            6 => HandleKind::Interceptor,
            7 => HandleKind::Object,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            HandleKind::Runtime => "runtime",
            HandleKind::Container => "container",
            HandleKind::Component => "component",
            HandleKind::Service => "service",
            HandleKind::Metric => "metric",
            HandleKind::Interceptor => "interceptor",
            HandleKind::Object => "object",
        }
    }
}

/// Result of evaluating a form.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Handle { kind: HandleKind, id: u64 },
    List(Vec<Value>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn handle(kind: HandleKind, id: u64) -> Self {
        Value::Handle { kind, id }
    }

    /// Everything except `Unit` and `false` counts as true.
    pub fn is_truthy(&self) -> bool {
        !matches!(self, Value::Unit | Value::Bool(false))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Unit => "unit",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::Handle { .. } => "handle",
            Value::List(_) => "list",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Wire form: `Unit` is the empty list, booleans are the symbols `true`
    /// and `false`, a handle is `(handle <kind-code> <id>)`.
    pub fn to_ast(&self) -> AstNode {
        match self {
            Value::Unit => AstNode::List(vec![]),
            Value::Bool(b) => AstNode::symbol(if *b { "true" } else { "false" }),
            Value::Int(i) => AstNode::Int(*i),
            Value::Float(f) => AstNode::Float(*f),
            Value::Str(s) => AstNode::Str(s.clone()),
            Value::Handle { kind, id } => AstNode::list([
                AstNode::symbol("handle"),
                AstNode::Int(kind.code()),
                AstNode::Int(*id as i64),
            ]),
            Value::List(items) => AstNode::List(items.iter().map(Value::to_ast).collect()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("unit"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => f.write_str(&format_float(*x)),
            Value::Str(s) => write!(f, "{}", AstNode::Str(s.clone())),
            Value::Handle { kind, id } => write!(f, "#<{} {id}>", kind.name()),
            Value::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_forms() {
        assert_eq!(Value::Unit.to_ast(), AstNode::List(vec![]));
        assert_eq!(
            Value::handle(HandleKind::Component, 9).to_ast().print(),
            "(handle 3 9)"
        );
        assert_eq!(Value::Bool(true).to_ast().print(), "true");
    }

    #[test]
    fn kind_codes_round_trip() {
        for code in 1..=7 {
            assert_eq!(HandleKind::from_code(code).unwrap().code(), code);
        }
        assert!(HandleKind::from_code(0).is_none());
    }

    #[test]
    fn truthiness() {
        assert!(!Value::Unit.is_truthy());
        assert!(!Value::Bool(false).is_truthy());
        assert!(Value::Int(0).is_truthy());
    }
}
