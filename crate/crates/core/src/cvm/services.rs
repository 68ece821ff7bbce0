//! Targets reachable through `invoke` (alias `runCCM`, `runCCM_arg`):
//! the `Monitor` service class, metric constructors, loaded implementations
//! and component handles.

use std::path::PathBuf;
use std::sync::Arc;

use crate::lang::{check_arity, EvalError, HandleKind, Value};
use crate::monitoring::{MetricSnapshot, MetricSpec, MonitorService};
use crate::runtime::{ComponentId, NodeRuntime, ServiceObject};

use super::{handle_arg, host, str_arg};

pub const MONITOR_CLASS: &str = "Monitor";

/// `(invoke target "operation" "signature" args...)`. The signature is
/// accepted as opaque text and only appears in debug logs.
pub(super) fn invoke(rt: &Arc<NodeRuntime>, args: Vec<Value>) -> Result<Value, EvalError> {
    check_arity("invoke", &args, 3, None)?;
    let mut args = args.into_iter();
    let target = args.next().unwrap_or(Value::Unit);
    let operation = args.next().unwrap_or(Value::Unit);
    let operation = str_arg("invoke", &operation)?.to_string();
    let signature = args.next().unwrap_or(Value::Unit);
    let rest: Vec<Value> = args.collect();

    let result = match &target {
        Value::Str(class) => match class.as_str() {
            MONITOR_CLASS => monitor_op(rt, &operation, rest),
            "DebugMetric" | "CountMethod" | "CountComponent" | "Temporal" => {
                metric_constructor(rt, class, &operation, &rest)
            }
            impl_name => impl_call(rt, impl_name, &operation, rest),
        },
        Value::Handle {
            kind: HandleKind::Service,
            ..
        } => {
            let mut all = vec![target.clone()];
            all.extend(rest);
            monitor_op(rt, &operation, all)
        }
        Value::Handle {
            kind: HandleKind::Component,
            id,
        } => component_call(rt, *id, &operation, rest),
        other => Err(EvalError::type_error(format!("invoke: cannot invoke on {other}"))),
    };
    if let Err(e) = &result {
        log::debug!("invoke {target} {operation} (signature {signature}) failed: {e}");
    }
    result
}

fn unknown_op(target: &str, op: &str) -> EvalError {
    host(format!("unknown operation {target}.{op}"))
}

fn monitor(rt: &NodeRuntime) -> Result<Arc<MonitorService>, EvalError> {
    rt.monitor()
        .ok_or_else(|| host("monitoring is not installed (call Monitor.getInstance first)"))
}

/// Drops a leading service handle after checking it names the installed
/// monitor.
fn strip_service_handle(rt: &NodeRuntime, mut args: Vec<Value>) -> Result<Vec<Value>, EvalError> {
    if let Some(Value::Handle {
        kind: HandleKind::Service,
        id,
    }) = args.first()
    {
        let current = rt.monitor().map(|m| m.handle_id());
        if current != Some(*id) {
            return Err(host(format!("unknown monitor handle {id}")));
        }
        args.remove(0);
    }
    Ok(args)
}

fn monitor_op(rt: &Arc<NodeRuntime>, op: &str, args: Vec<Value>) -> Result<Value, EvalError> {
    if op == "getInstance" {
        let service = match rt.monitor() {
            Some(existing) => existing,
            None => {
                let config = rt.config();
                MonitorService::install(rt, &config.journal_path, config.scan_interval).map_err(host)?
            }
        };
        return Ok(Value::handle(HandleKind::Service, service.handle_id()));
    }
    let args = strip_service_handle(rt, args)?;
    let mon = monitor(rt)?;
    match op {
        "registerMetric" => {
            check_arity("registerMetric", &args, 1, Some(1))?;
            let id = handle_arg("registerMetric", HandleKind::Object, &args[0])?;
            let Some(ServiceObject::MetricDef(spec)) = rt.object(id) else {
                return Err(host(format!("object {id} is not a metric definition")));
            };
            Ok(Value::handle(HandleKind::Metric, mon.register_metric(rt, spec)))
        }
        "unregisterMetric" => {
            check_arity("unregisterMetric", &args, 1, Some(1))?;
            let id = handle_arg("unregisterMetric", HandleKind::Metric, &args[0])?;
            Ok(Value::Bool(mon.unregister_metric(id)))
        }
        "start" => {
            mon.start();
            Ok(Value::Unit)
        }
        "stop" => {
            mon.stop();
            Ok(Value::Unit)
        }
        "scan" => {
            mon.scan_now();
            Ok(Value::Unit)
        }
        "snapshot" => Ok(Value::List(mon.snapshot().iter().map(snapshot_value).collect())),
        "journal" => Ok(Value::Str(mon.journal_path().display().to_string())),
        "uninstall" => {
            MonitorService::uninstall(rt).map_err(host)?;
            Ok(Value::Unit)
        }
        other => Err(unknown_op(MONITOR_CLASS, other)),
    }
}

/// `(metric "spec" count)`, with `min max mean` appended for temporal
/// metrics that have seen a call.
pub fn snapshot_value(s: &MetricSnapshot) -> Value {
    let mut items = vec![
        Value::handle(HandleKind::Metric, s.id),
        Value::Str(s.spec.to_string()),
        Value::Int(s.count as i64),
    ];
    if let Some(d) = &s.durations {
        items.push(Value::Int(d.min_us as i64));
        items.push(Value::Int(d.max_us as i64));
        items.push(Value::Float(d.mean_us));
    }
    Value::List(items)
}

/// Builds a metric definition object. The constructor is called either by
/// the class name itself (`"DebugMetric" "DebugMetric"`) or `new`.
fn metric_constructor(rt: &NodeRuntime, class: &str, op: &str, args: &[Value]) -> Result<Value, EvalError> {
    if op != class && op != "new" {
        return Err(unknown_op(class, op));
    }
    let spec = match class {
        "DebugMetric" => {
            check_arity(class, args, 1, Some(1))?;
            MetricSpec::Debug {
                path: PathBuf::from(str_arg(class, &args[0])?),
            }
        }
        "CountComponent" => {
            check_arity(class, args, 1, Some(1))?;
            MetricSpec::CountComponent {
                implementation: str_arg(class, &args[0])?.to_string(),
            }
        }
        _ => {
            check_arity(class, args, 2, Some(2))?;
            let implementation = str_arg(class, &args[0])?.to_string();
            let operation = str_arg(class, &args[1])?.to_string();
            if class == "Temporal" {
                MetricSpec::Temporal { implementation, operation }
            } else {
                MetricSpec::CountMethod { implementation, operation }
            }
        }
    };
    Ok(Value::handle(HandleKind::Object, rt.store_object(ServiceObject::MetricDef(spec))))
}

/// Calls `op` on the oldest deployed instance of a loaded implementation.
fn impl_call(rt: &NodeRuntime, impl_name: &str, op: &str, args: Vec<Value>) -> Result<Value, EvalError> {
    if rt.loaded_impl(impl_name).is_none() {
        return Err(host(format!("unknown invoke target {impl_name}")));
    }
    let topology = rt.topology_snapshot();
    let instance = topology
        .instances()
        .find(|i| i.implementation.name() == impl_name)
        .ok_or_else(|| host(format!("no deployed instance of {impl_name}")))?;
    let id = instance.id;
    drop(topology);
    component_call(rt, id, op, args)
}

fn component_call(rt: &NodeRuntime, id: ComponentId, op: &str, args: Vec<Value>) -> Result<Value, EvalError> {
    let reply = rt.call_component(id, op, args).map_err(host)?;
    reply.outcome.map_err(host)
}
