use std::fmt;

/// Syntax tree of the reconfiguration language. This is also the unit that
/// travels over the admin channel.
#[derive(Debug, Clone)]
pub enum AstNode {
    Symbol(String),
    Str(String),
    Int(i64),
    Float(f64),
    List(Vec<AstNode>),
}

impl PartialEq for AstNode {
    fn eq(&self, other: &Self) -> bool {
        use AstNode::*;
        match (self, other) {
            (Symbol(a), Symbol(b)) => a == b,
            (Str(a), Str(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            // Bitwise so that NaN payloads and signed zeros survive comparison.
            (Float(a), Float(b)) => a.to_bits() == b.to_bits(),
            (List(a), List(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for AstNode {}

/// True when `name` can stand as a symbol token: non-empty, no whitespace,
/// no parentheses, no double quote, no comment marker.
pub fn is_valid_symbol(name: &str) -> bool {
    !name.is_empty()
        && !name
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';'))
}

impl AstNode {
    pub fn symbol(name: impl Into<String>) -> Self {
        AstNode::Symbol(name.into())
    }

    pub fn string(value: impl Into<String>) -> Self {
        AstNode::Str(value.into())
    }

    pub fn list(children: impl IntoIterator<Item = AstNode>) -> Self {
        AstNode::List(children.into_iter().collect())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            AstNode::Symbol(s) => Some(s),
            _ => None,
        }
    }

    /// Number of nodes in the tree, counting `self`.
    pub fn node_count(&self) -> usize {
        match self {
            AstNode::List(children) => 1 + children.iter().map(AstNode::node_count).sum::<usize>(),
            _ => 1,
        }
    }

    /// Canonical text form. See [`print`].
    pub fn print(&self) -> String {
        print(self)
    }
}

/// Renders a node in canonical form: single spaces between list elements,
/// strings re-escaped, floats with enough digits to round-trip.
pub fn print(node: &AstNode) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out
}

fn write_node(node: &AstNode, out: &mut String) {
    match node {
        AstNode::Symbol(s) => out.push_str(s),
        AstNode::Str(s) => {
            out.push('"');
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        AstNode::Int(i) => out.push_str(&i.to_string()),
        AstNode::Float(f) => out.push_str(&format_float(*f)),
        AstNode::List(children) => {
            out.push('(');
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_node(child, out);
            }
            out.push(')');
        }
    }
}

/// Positional (never exponent) shortest round-trip rendering, always with a
/// decimal point so the token lexes back as a float.
pub(crate) fn format_float(f: f64) -> String {
    if !f.is_finite() {
        return if f.is_nan() {
            "nan".to_string()
        } else if f > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let mut s = format!("{f}");
    if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

impl fmt::Display for AstNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}
