//! Compiled-in implementation and method catalogs. They stand in for
//! dynamic class loading: `load_impl` pulls from the first, and
//! `replace_method` installs bodies built from the second.

use std::sync::Arc;
use std::time::Duration;

use crate::crypto;
use crate::demo;
use crate::lang::Value;

use super::component::{echo_impl, ComponentImpl, MethodBody};

pub type ImplFactory = Arc<dyn Fn() -> ComponentImpl + Send + Sync>;

pub fn builtin_impls() -> Vec<(String, ImplFactory)> {
    let entries: [(&str, ImplFactory); 4] = [
        ("Echo", Arc::new(echo_impl)),
        (crypto::COS_IMPL, Arc::new(crypto::cos_impl)),
        (demo::EMITTER_IMPL, Arc::new(demo::emitter_impl)),
        (demo::RECEIVER_IMPL, Arc::new(demo::receiver_impl)),
    ];
    entries.into_iter().map(|(n, f)| (n.to_string(), f)).collect()
}

/// Names accepted by [`method_body`].
pub const METHOD_CATALOG: &[&str] = &["identity", "uppercase", "sleep_echo", "fail", "xor", "caesar"];

fn int_arg(name: &str, args: &[Value]) -> Result<i64, String> {
    args.first()
        .and_then(Value::as_int)
        .ok_or_else(|| format!("method {name} needs an integer parameter"))
}

/// Builds a method body from the catalog. Returns the label recorded in the
/// version table together with the body.
pub fn method_body(name: &str, params: &[Value]) -> Result<(String, MethodBody), String> {
    let body: MethodBody = match name {
        "identity" => Arc::new(|_, args| Ok(args.first().cloned().unwrap_or(Value::Unit))),
        "uppercase" => Arc::new(|_, args| match args.first() {
            Some(Value::Str(s)) => Ok(Value::Str(s.to_uppercase())),
            Some(other) => Ok(other.clone()),
            None => Ok(Value::Unit),
        }),
        "sleep_echo" => {
            let ms = int_arg(name, params)?;
            let pause = Duration::from_millis(ms.max(0) as u64);
            Arc::new(move |_, args| {
                std::thread::sleep(pause);
                Ok(args.first().cloned().unwrap_or(Value::Unit))
            })
        }
        "fail" => Arc::new(|_, _| Err("replaced by failing method".to_string())),
        "xor" => Arc::new(crypto::xor_method),
        "caesar" => {
            let shift = int_arg(name, params)?;
            let shift = (shift.rem_euclid(256)) as u8;
            Arc::new(move |_, args| crypto::caesar_method(shift, args))
        }
        other => {
            return Err(format!(
                "unknown method body {other} (catalog: {})",
                METHOD_CATALOG.join(", ")
            ))
        }
    };
    let label = if params.is_empty() {
        name.to_string()
    } else {
        let shown: Vec<String> = params.iter().map(ToString::to_string).collect();
        format!("{name}({})", shown.join(", "))
    };
    Ok((label, body))
}
