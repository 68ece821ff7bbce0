use std::sync::Arc;

use super::ast::AstNode;
use super::env::{Binding, Environment, EvalError, EvalErrorKind, Procedure};
use super::parser::Script;
use super::value::Value;

/// Maximum nesting of list evaluation, procedure calls included.
pub const MAX_EVAL_DEPTH: usize = 256;

pub fn eval(form: &AstNode, env: &mut Environment) -> Result<Value, EvalError> {
    match form {
        AstNode::Symbol(name) => lookup_value(name, env).map_err(|e| e.in_form(form)),
        AstNode::Str(s) => Ok(Value::Str(s.clone())),
        AstNode::Int(i) => Ok(Value::Int(*i)),
        AstNode::Float(f) => Ok(Value::Float(*f)),
        AstNode::List(items) if items.is_empty() => Ok(Value::Unit),
        AstNode::List(items) => {
            if env.depth >= MAX_EVAL_DEPTH {
                return Err(EvalError::new(EvalErrorKind::DepthExceeded).in_form(form));
            }
            env.depth += 1;
            let result = apply_form(&items[0], &items[1..], env);
            env.depth -= 1;
            result.map_err(|e| e.in_form(form))
        }
    }
}

/// Evaluates forms in order, stopping at the first failure. Returns the
/// value of each form evaluated.
pub fn eval_script(script: &Script, env: &mut Environment) -> Result<Vec<Value>, (Vec<Value>, EvalError)> {
    let mut values = Vec::with_capacity(script.forms.len());
    for form in &script.forms {
        match eval(form, env) {
            Ok(v) => values.push(v),
            Err(e) => return Err((values, e)),
        }
    }
    Ok(values)
}

fn lookup_value(name: &str, env: &Environment) -> Result<Value, EvalError> {
    match env.lookup(name) {
        Some(Binding::Val(v)) => Ok(v.clone()),
        Some(_) => Err(EvalError::new(EvalErrorKind::NotAValue(name.to_string()))),
        None => Err(EvalError::unbound(name)),
    }
}

fn apply_form(head: &AstNode, rest: &[AstNode], env: &mut Environment) -> Result<Value, EvalError> {
    let AstNode::Symbol(name) = head else {
        let v = eval(head, env)?;
        return Err(EvalError::new(EvalErrorKind::NotCallable(v.to_string())));
    };
    let binding = env.lookup(name).cloned().ok_or_else(|| EvalError::unbound(name))?;
    match binding {
        Binding::Syntax(op) => op(env, rest),
        Binding::Native(op) => {
            let args = eval_args(rest, env)?;
            op(env, args)
        }
        Binding::Proc(proc_) => {
            let args = eval_args(rest, env)?;
            apply_proc(&proc_, args, env)
        }
        Binding::Val(v) => Err(EvalError::new(EvalErrorKind::NotCallable(format!("{name} = {v}")))),
    }
}

fn eval_args(forms: &[AstNode], env: &mut Environment) -> Result<Vec<Value>, EvalError> {
    forms.iter().map(|f| eval(f, env)).collect()
}

fn apply_proc(proc_: &Procedure, args: Vec<Value>, env: &mut Environment) -> Result<Value, EvalError> {
    if args.len() != proc_.params.len() {
        return Err(EvalError::arity(&proc_.name, proc_.params.len(), args.len()));
    }
    // Parameters shadow existing bindings for the duration of the call.
    let saved: Vec<Option<Binding>> = proc_
        .params
        .iter()
        .zip(args)
        .map(|(p, a)| env.bind(p.clone(), Binding::Val(a)))
        .collect();
    let mut result = Ok(Value::Unit);
    for form in &proc_.body {
        result = eval(form, env);
        if result.is_err() {
            break;
        }
    }
    for (param, previous) in proc_.params.iter().zip(saved).rev() {
        env.restore(param, previous);
    }
    result
}

fn symbol_arg<'a>(form: &'a AstNode, what: &str) -> Result<&'a str, EvalError> {
    form.as_symbol()
        .ok_or_else(|| EvalError::syntax(format!("{what} must be a symbol, got {form}")))
}

pub(crate) fn install_core_forms(env: &mut Environment) {
    env.define_syntax("define", |env, args| {
        let [name, value] = args else {
            return Err(EvalError::syntax("expected (define name form)"));
        };
        let name = symbol_arg(name, "define name")?.to_string();
        let v = eval(value, env)?;
        env.define_value(name, v);
        Ok(Value::Unit)
    });

    env.define_syntax("undefine", |env, args| {
        let [name] = args else {
            return Err(EvalError::syntax("expected (undefine name)"));
        };
        let name = symbol_arg(name, "undefine name")?;
        env.undefine(name);
        Ok(Value::Unit)
    });

    env.define_syntax("defproc", |env, args| {
        let [name, params, body @ ..] = args else {
            return Err(EvalError::syntax("expected (defproc name (params...) body...)"));
        };
        let name = symbol_arg(name, "defproc name")?.to_string();
        let AstNode::List(params) = params else {
            return Err(EvalError::syntax("defproc parameters must be a list"));
        };
        let params = params
            .iter()
            .map(|p| symbol_arg(p, "parameter").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let proc_ = Procedure {
            name: name.clone(),
            params,
            body: body.to_vec(),
        };
        env.bind(name, Binding::Proc(Arc::new(proc_)));
        Ok(Value::Unit)
    });

    env.define_syntax("if", |env, args| {
        let (cond, then, otherwise) = match args {
            [c, t] => (c, t, None),
            [c, t, e] => (c, t, Some(e)),
            _ => return Err(EvalError::syntax("expected (if cond then [else])")),
        };
        if eval(cond, env)?.is_truthy() {
            eval(then, env)
        } else {
            otherwise.map_or(Ok(Value::Unit), |e| eval(e, env))
        }
    });

    env.define_syntax("begin", |env, args| {
        let mut last = Value::Unit;
        for form in args {
            last = eval(form, env)?;
        }
        Ok(last)
    });

    env.define_native("symbols", |env, args| {
        super::env::check_arity("symbols", &args, 0, Some(0))?;
        Ok(Value::List(env.list_symbols().into_iter().map(Value::Str).collect()))
    });
}
