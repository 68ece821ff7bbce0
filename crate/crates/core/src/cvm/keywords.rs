use std::sync::Arc;
use std::time::Duration;

use crate::bench;
use crate::crypto::{self, COS_IMPL};
use crate::demo::{self, DemoTopology};
use crate::interceptors::InterceptionPoint;
use crate::lang::{check_arity, eval, AstNode, Environment, EvalError, HandleKind, Value};
use crate::runtime::{method_body, NodeRuntime, RewireAction};

use super::services::invoke;
use super::{handle_arg, host, int_arg, str_arg};

/// Every name bound by bootstrap on top of the standard language.
pub const KEYWORDS: &[&str] = &[
    "get_runtime",
    "getorb",
    "clssLoaderCCM",
    "add_url_classloader",
    "add_plugin_path",
    "load_impl",
    "jrun",
    "create_container",
    "add_component",
    "remove_component",
    "connect",
    "disconnect",
    "rewire",
    "topology",
    "invoke",
    "runCCM",
    "runCCM_arg",
    "replace_method",
    "versions",
    "register_interceptor_service",
    "unregister_interceptor_service",
    "interpose",
    "deinterpose",
    "deploy_demo",
    "demo_topology",
    "bench_latency",
];

type Op = fn(&Arc<NodeRuntime>, Vec<Value>) -> Result<Value, EvalError>;

fn native(env: &mut Environment, runtime: &Arc<NodeRuntime>, name: &'static str, op: Op) {
    let rt = runtime.clone();
    env.define_native(name, move |_, args| op(&rt, args));
}

/// (Re)binds the built-in keyword `name`. Returns false for names that are
/// not keywords. This is how a restricted environment gets a keyword back.
pub fn install_keyword(env: &mut Environment, runtime: &Arc<NodeRuntime>, name: &str) -> bool {
    let Some(&name) = KEYWORDS.iter().find(|k| **k == name) else {
        return false;
    };
    let op: Op = match name {
        "get_runtime" | "getorb" => get_runtime,
        "clssLoaderCCM" => {
            env.define_syntax(name, class_loader_call);
            return true;
        }
        "add_url_classloader" | "add_plugin_path" => add_plugin_path,
        "load_impl" | "jrun" => load_impl,
        "create_container" => create_container,
        "add_component" => add_component,
        "remove_component" => remove_component,
        "connect" => connect,
        "disconnect" => disconnect,
        "rewire" => rewire,
        "topology" => topology,
        "invoke" | "runCCM" | "runCCM_arg" => invoke,
        "replace_method" => replace_method,
        "versions" => versions,
        "register_interceptor_service" => register_interceptor_service,
        "unregister_interceptor_service" => unregister_interceptor_service,
        "interpose" => interpose,
        "deinterpose" => deinterpose,
        "deploy_demo" => deploy_demo,
        "demo_topology" => demo_topology,
        "bench_latency" => bench_latency,
        _ => unreachable!("keyword table and dispatch disagree on {name}"),
    };
    native(env, runtime, name, op);
    true
}

fn get_runtime(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("get_runtime", &args, 0, Some(0))?;
    Ok(Value::handle(HandleKind::Runtime, rt.runtime_id()))
}

/// `(clssLoaderCCM kw args...)` calls keyword `kw` with `args`, so
/// `(clssLoaderCCM getorb)` is `(getorb)`.
fn class_loader_call(env: &mut Environment, forms: &[AstNode]) -> Result<Value, EvalError> {
    match forms.first() {
        Some(AstNode::Symbol(_)) => eval(&AstNode::List(forms.to_vec()), env),
        _ => Err(EvalError::syntax("clssLoaderCCM expects a keyword name")),
    }
}

fn add_plugin_path(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("add_plugin_path", &args, 1, Some(1))?;
    rt.add_plugin_path(str_arg("add_plugin_path", &args[0])?);
    Ok(Value::Unit)
}

fn load_impl(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("load_impl", &args, 1, Some(1))?;
    rt.load_impl(str_arg("load_impl", &args[0])?).map_err(host)?;
    Ok(Value::Unit)
}

fn create_container(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("create_container", &args, 0, Some(0))?;
    Ok(Value::handle(HandleKind::Container, rt.create_container()))
}

/// `(add_component container "Impl" init-args...)`
fn add_component(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("add_component", &args, 2, None)?;
    let container = handle_arg("add_component", HandleKind::Container, &args[0])?;
    let impl_name = str_arg("add_component", &args[1])?;
    let id = rt.deploy_component(container, impl_name, &args[2..]).map_err(host)?;
    Ok(Value::handle(HandleKind::Component, id))
}

fn remove_component(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("remove_component", &args, 1, Some(1))?;
    let id = handle_arg("remove_component", HandleKind::Component, &args[0])?;
    rt.remove_component(id).map_err(host)?;
    Ok(Value::Unit)
}

/// `(connect src "receptacle" dst "facet")`
fn connect(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("connect", &args, 4, Some(4))?;
    let src = handle_arg("connect", HandleKind::Component, &args[0])?;
    let dst = handle_arg("connect", HandleKind::Component, &args[2])?;
    rt.connect(src, str_arg("connect", &args[1])?, dst, str_arg("connect", &args[3])?)
        .map_err(host)?;
    Ok(Value::Unit)
}

/// `(disconnect src "receptacle")`
fn disconnect(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("disconnect", &args, 2, Some(2))?;
    let src = handle_arg("disconnect", HandleKind::Component, &args[0])?;
    rt.disconnect(src, str_arg("disconnect", &args[1])?).map_err(host)?;
    Ok(Value::Unit)
}

fn rewire_action(v: &Value) -> Result<RewireAction, EvalError> {
    let bad = || EvalError::type_error(format!("rewire: bad action {v}"));
    let Value::List(items) = v else { return Err(bad()) };
    match items.first().and_then(Value::as_str) {
        Some("disconnect") if items.len() == 3 => Ok(RewireAction::disconnect(
            handle_arg("rewire", HandleKind::Component, &items[1])?,
            str_arg("rewire", &items[2])?,
        )),
        Some("connect") if items.len() == 5 => Ok(RewireAction::connect(
            handle_arg("rewire", HandleKind::Component, &items[1])?,
            str_arg("rewire", &items[2])?,
            handle_arg("rewire", HandleKind::Component, &items[3])?,
            str_arg("rewire", &items[4])?,
        )),
        _ => Err(bad()),
    }
}

/// `(rewire (list (list "disconnect" a "out") (list "connect" a "out" c "in") ...))`
/// applies every action in one swap.
fn rewire(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("rewire", &args, 1, Some(1))?;
    let Value::List(items) = &args[0] else {
        return Err(EvalError::type_error("rewire expects a list of actions"));
    };
    let actions = items.iter().map(rewire_action).collect::<Result<Vec<_>, _>>()?;
    rt.atomic_rewire(&actions).map_err(host)?;
    Ok(Value::Unit)
}

/// Current connections as `(src "receptacle" dst "facet")` lists.
fn topology(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("topology", &args, 0, Some(0))?;
    let t = rt.topology_snapshot();
    Ok(Value::List(
        t.connections()
            .into_iter()
            .map(|c| {
                Value::List(vec![
                    Value::handle(HandleKind::Component, c.source.component),
                    Value::Str(c.source.port),
                    Value::handle(HandleKind::Component, c.target.component),
                    Value::Str(c.target.port),
                ])
            })
            .collect(),
    ))
}

/// `(replace_method "Impl" "operation" "catalog-body" params...)` → new version.
fn replace_method(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("replace_method", &args, 3, None)?;
    let impl_name = str_arg("replace_method", &args[0])?;
    let operation = str_arg("replace_method", &args[1])?;
    let (label, body) = method_body(str_arg("replace_method", &args[2])?, &args[3..]).map_err(host)?;
    let version = rt.replace_method(impl_name, operation, &label, body).map_err(host)?;
    Ok(Value::Int(version as i64))
}

/// `(versions "Impl" "operation")` → list of `(version "label")`, oldest first.
fn versions(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("versions", &args, 2, Some(2))?;
    let impl_name = str_arg("versions", &args[0])?;
    let operation = str_arg("versions", &args[1])?;
    let implementation = rt
        .loaded_impl(impl_name)
        .ok_or_else(|| host(format!("implementation {impl_name} is not loaded")))?;
    let list = implementation
        .versions(operation)
        .ok_or_else(|| host(format!("unknown operation {impl_name}.{operation}")))?;
    Ok(Value::List(
        list.iter()
            .map(|v| Value::List(vec![Value::Int(v.version as i64), Value::Str(v.label.clone())]))
            .collect(),
    ))
}

/// `(register_interceptor_service "noop"|"log")` → interceptor handle.
fn register_interceptor_service(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("register_interceptor_service", &args, 1, Some(1))?;
    let id = match str_arg("register_interceptor_service", &args[0])? {
        "noop" => bench::register_noop(rt),
        "log" => rt.register_interceptor(&InterceptionPoint::ALL, |point, info| {
            log::info!(
                "{point:?} request_id={} operation={} target={} status={}",
                info.request_id,
                info.operation,
                info.target_interface(),
                info.reply_status
            );
        }),
        other => return Err(host(format!("unknown interceptor service {other} (known: noop, log)"))),
    };
    Ok(Value::handle(HandleKind::Interceptor, id))
}

fn unregister_interceptor_service(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("unregister_interceptor_service", &args, 1, Some(1))?;
    let id = handle_arg("unregister_interceptor_service", HandleKind::Interceptor, &args[0])?;
    Ok(Value::Bool(rt.unregister_interceptor(id)))
}

/// `(interpose container src "receptacle" dst "facet" ["Impl" init-args...])`
fn interpose(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("interpose", &args, 5, None)?;
    let container = handle_arg("interpose", HandleKind::Container, &args[0])?;
    let src = handle_arg("interpose", HandleKind::Component, &args[1])?;
    let dst = handle_arg("interpose", HandleKind::Component, &args[3])?;
    let impl_name = match args.get(5) {
        Some(v) => str_arg("interpose", v)?,
        None => COS_IMPL,
    };
    let init = args.get(6..).unwrap_or(&[]);
    rt.load_impl(impl_name).map_err(host)?;
    let cos = crypto::interpose(
        rt,
        container,
        (src, str_arg("interpose", &args[2])?),
        (dst, str_arg("interpose", &args[4])?),
        impl_name,
        init,
    )
    .map_err(host)?;
    Ok(Value::handle(HandleKind::Component, cos))
}

fn deinterpose(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("deinterpose", &args, 1, Some(1))?;
    crypto::deinterpose(rt, handle_arg("deinterpose", HandleKind::Component, &args[0])?).map_err(host)?;
    Ok(Value::Unit)
}

fn demo_value(d: &DemoTopology) -> Value {
    Value::List(vec![
        Value::handle(HandleKind::Container, d.ca),
        Value::handle(HandleKind::Container, d.cb),
        Value::handle(HandleKind::Component, d.a),
        Value::handle(HandleKind::Component, d.b),
    ])
}

/// `(deploy_demo interval-ms [count])` → `(ca cb a b)`. Without a count the
/// emitter runs until the node shuts down.
fn deploy_demo(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("deploy_demo", &args, 1, Some(2))?;
    let interval = int_arg("deploy_demo", &args[0])?;
    let count = match args.get(1) {
        Some(v) => Some(int_arg("deploy_demo", v)?),
        None => None,
    };
    if interval < 0 || count.is_some_and(|c| c < 0) {
        return Err(host("deploy_demo: interval and count must be non-negative"));
    }
    let d = demo::deploy_demo(rt, Duration::from_millis(interval as u64), count.map(|c| c as u64))
        .map_err(host)?;
    Ok(demo_value(&d))
}

/// The most recently deployed demo as `(ca cb a b)`, or unit if none.
fn demo_topology(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("demo_topology", &args, 0, Some(0))?;
    Ok(rt.demos().last().map_or(Value::Unit, |d| demo_value(d)))
}

/// `(bench_latency requests interceptors)` → `(mean-us std-us)`.
fn bench_latency(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("bench_latency", &args, 2, Some(2))?;
    let n = int_arg("bench_latency", &args[0])?;
    let k = int_arg("bench_latency", &args[1])?;
    if n <= 0 || k < 0 {
        return Err(host("bench_latency: need a positive request count and a non-negative interceptor count"));
    }
    let stats = bench::measure_latency(rt, n as usize, k as usize).map_err(host)?;
    Ok(Value::List(vec![Value::Float(stats.mean_us), Value::Float(stats.std_us)]))
}
