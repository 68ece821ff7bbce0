//! Small set of general-purpose natives: lists, arithmetic, comparison.

use super::env::{check_arity, Environment, EvalError};
use super::value::Value;

enum Num {
    I(i64),
    F(f64),
}

fn num(name: &str, v: &Value) -> Result<Num, EvalError> {
    match v {
        Value::Int(i) => Ok(Num::I(*i)),
        Value::Float(f) => Ok(Num::F(*f)),
        other => Err(EvalError::type_error(format!(
            "{name} expects numbers, got {}",
            other.type_name()
        ))),
    }
}

fn arith(name: &'static str, args: Vec<Value>, int_op: fn(i64, i64) -> Option<i64>, float_op: fn(f64, f64) -> f64) -> Result<Value, EvalError> {
    check_arity(name, &args, 1, None)?;
    let mut acc = num(name, &args[0])?;
    for arg in &args[1..] {
        acc = match (acc, num(name, arg)?) {
            (Num::I(a), Num::I(b)) => Num::I(
                int_op(a, b).ok_or_else(|| EvalError::host(format!("{name}: integer overflow")))?,
            ),
            (Num::F(a), Num::F(b)) => Num::F(float_op(a, b)),
            _ => {
                return Err(EvalError::type_error(format!(
                    "{name}: cannot mix int and float"
                )))
            }
        };
    }
    Ok(match acc {
        Num::I(i) => Value::Int(i),
        Num::F(f) => Value::Float(f),
    })
}

pub(crate) fn install(env: &mut Environment) {
    env.define_value("true", Value::Bool(true));
    env.define_value("false", Value::Bool(false));

    env.define_native("list", |_, args| Ok(Value::List(args)));
    env.define_native("nth", |_, args| {
        check_arity("nth", &args, 2, Some(2))?;
        let (Value::List(items), Value::Int(i)) = (&args[0], &args[1]) else {
            return Err(EvalError::type_error("nth expects (nth list index)"));
        };
        usize::try_from(*i)
            .ok()
            .and_then(|i| items.get(i))
            .cloned()
            .ok_or_else(|| EvalError::host(format!("nth: index {i} out of range")))
    });
    env.define_native("length", |_, args| {
        check_arity("length", &args, 1, Some(1))?;
        match &args[0] {
            Value::List(items) => Ok(Value::Int(items.len() as i64)),
            Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
            other => Err(EvalError::type_error(format!("length of {}", other.type_name()))),
        }
    });
    env.define_native("concat", |_, args| {
        let mut out = String::new();
        for a in &args {
            match a {
                Value::Str(s) => out.push_str(s),
                other => out.push_str(&other.to_string()),
            }
        }
        Ok(Value::Str(out))
    });

    env.define_native("+", |_, args| arith("+", args, i64::checked_add, |a, b| a + b));
    env.define_native("-", |_, args| arith("-", args, i64::checked_sub, |a, b| a - b));
    env.define_native("*", |_, args| arith("*", args, i64::checked_mul, |a, b| a * b));

    env.define_native("=", |_, args| {
        check_arity("=", &args, 2, Some(2))?;
        Ok(Value::Bool(args[0] == args[1]))
    });
    env.define_native("<", |_, args| {
        check_arity("<", &args, 2, Some(2))?;
        let lt = match (num("<", &args[0])?, num("<", &args[1])?) {
            (Num::I(a), Num::I(b)) => a < b,
            (Num::F(a), Num::F(b)) => a < b,
            _ => return Err(EvalError::type_error("<: cannot mix int and float")),
        };
        Ok(Value::Bool(lt))
    });
    env.define_native("not", |_, args| {
        check_arity("not", &args, 1, Some(1))?;
        Ok(Value::Bool(!args[0].is_truthy()))
    });
}
