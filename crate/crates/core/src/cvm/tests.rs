use super::*;
use crate::lang::{parse, parse_one, EvalErrorKind};
use crate::runtime::NodeConfig;
use std::time::Duration;

const MONITORING: &str = include_str!("../../scripts/monitoring.mvv");
const MONITORING_UNFIXED: &str = include_str!("../../scripts/monitoring_unfixed.mvv");
const INTERPOSE: &str = include_str!("../../scripts/interpose.mvv");

fn test_config(dir: &tempfile::TempDir) -> NodeConfig {
    NodeConfig {
        journal_path: dir.path().join("journal.log"),
        scan_interval: Duration::from_millis(10),
    }
}

fn node() -> (Node, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    (Node::start(test_config(&dir), None).unwrap(), dir)
}

fn run(node: &Node, src: &str) -> Result<Value, EvalError> {
    let script = parse(src).unwrap();
    let mut last = Value::Unit;
    for r in node.control().eval_script(&script, false) {
        last = r?;
    }
    Ok(last)
}

#[test]
fn get_runtime_returns_runtime_handle() {
    let (n, _d) = node();
    let h = Value::handle(HandleKind::Runtime, 1);
    assert_eq!(run(&n, "(get_runtime)").unwrap(), h);
    assert_eq!(run(&n, "(getorb)").unwrap(), h);
    assert_eq!(run(&n, "(clssLoaderCCM getorb  )").unwrap(), h);
}

#[test]
fn symbols_cover_keyword_list() {
    let (n, _d) = node();
    let symbols = n.control().symbols();
    for k in KEYWORDS.iter().chain(["define", "undefine", "defproc", "if", "begin", "symbols"].iter()) {
        assert!(symbols.iter().any(|s| s == k), "missing {k}");
    }
}

#[test]
fn bootstrap_twice_fails() {
    let rt = NodeRuntime::with_defaults();
    bootstrap(&rt).unwrap();
    assert!(matches!(bootstrap(&rt), Err(CvmError::AlreadyBootstrapped)));
}

#[test]
fn load_impl_reports_search_path() {
    let (n, _d) = node();
    run(&n, r#"(add_url_classloader "file:/x/")"#).unwrap();
    run(&n, r#"(jrun "CryptoCOS")"#).unwrap();
    run(&n, r#"(jrun "CryptoCOS")"#).unwrap();
    let e = run(&n, r#"(load_impl "Missing")"#).unwrap_err();
    assert!(e.to_string().contains("file:/x/"), "{e}");
}

#[test]
fn queue_keeps_going_after_error() {
    let (n, _d) = node();
    assert!(n.control().eval(&parse_one("(boom)").unwrap().unwrap()).is_err());
    assert_eq!(run(&n, "(define x 1) x").unwrap(), Value::Int(1));
}

#[test]
fn deploy_connect_and_invoke() {
    let (n, _d) = node();
    let v = run(
        &n,
        r#"(jrun "Echo")
           (define c (create_container))
           (define e (add_component c "Echo"))
           (invoke e "echo" "" "hi")"#,
    )
    .unwrap();
    assert_eq!(v, Value::str("hi"));
    assert_eq!(run(&n, r#"(runCCM "Echo" "echo" "sig" 4)"#).unwrap(), Value::Int(4));
    let e = run(&n, r#"(invoke e "fail" "" "bad")"#).unwrap_err();
    assert_eq!(e.kind, EvalErrorKind::Host("bad".into()));
}

#[test]
fn monitor_service_class() {
    let (n, _d) = node();
    let mon = run(&n, r#"(runCCM "Monitor" "getInstance" "sig")"#).unwrap();
    assert!(matches!(mon, Value::Handle { kind: HandleKind::Service, .. }));
    assert_eq!(run(&n, r#"(runCCM "Monitor" "getInstance" "sig")"#).unwrap(), mon);
    assert_eq!(run(&n, r#"(runCCM_arg "Monitor" "start" "()V")"#).unwrap(), Value::Unit);
    assert_eq!(run(&n, r#"(runCCM_arg "Monitor" "start" "()V")"#).unwrap(), Value::Unit);
    let e = run(&n, r#"(runCCM "Monitor" "nope" "sig")"#).unwrap_err();
    assert!(e.to_string().contains("unknown operation Monitor.nope"), "{e}");
}

#[test]
fn metrics_through_script() {
    let (n, _d) = node();
    let v = run(
        &n,
        r#"(jrun "Echo")
           (define e (add_component (create_container) "Echo"))
           (define mon (invoke "Monitor" "getInstance" ""))
           (define m (invoke "CountMethod" "new" "" "Echo" "echo"))
           (define h (invoke "Monitor" "registerMetric" "" mon m))
           (invoke e "echo" "" 1)
           (invoke e "echo" "" 2)
           (invoke e "stats" "")
           (invoke "Monitor" "scan" "")
           (invoke mon "snapshot" "")"#,
    )
    .unwrap();
    let Value::List(metrics) = v else { panic!("{v}") };
    let Value::List(first) = &metrics[0] else { panic!() };
    assert_eq!(first[1], Value::str("CountMethod(Echo.echo)"));
    assert_eq!(first[2], Value::Int(2));
}

#[test]
fn monitoring_script_runs_verbatim() {
    let (n, _d) = node();
    let script = parse(MONITORING).unwrap();
    assert_eq!(script.len(), 11);
    let results = n.control().eval_script(&script, false);
    assert_eq!(results.len(), 11);
    assert!(results.iter().all(Result::is_ok), "{results:?}");
    assert_eq!(results[10], Ok(Value::Unit));
    assert!(n.runtime().monitor().unwrap().is_running());
}

#[test]
fn unfixed_monitoring_script_hits_unbound_log() {
    let (n, _d) = node();
    let script = parse(MONITORING_UNFIXED).unwrap();
    let results = n.control().eval_script(&script, false);
    let err = results.last().unwrap().as_ref().unwrap_err();
    assert!(err.is_unbound("log"), "{err}");
}

#[test]
fn connect_restriction_and_reinstall() {
    let (n, _d) = node();
    run(
        &n,
        r#"(jrun "Emitter") (jrun "Echo")
           (define c (create_container))
           (define a (add_component c "Emitter"))
           (define b (add_component c "Echo"))
           (connect a "out" b "in")
           (undefine connect)"#,
    )
    .unwrap();
    assert!(run(&n, r#"(connect a "out" b "in")"#).unwrap_err().is_unbound("connect"));
    run(&n, r#"(disconnect a "out")"#).unwrap();
    let rt = n.runtime().clone();
    assert_eq!(n.control().with_environment(move |env| install_keyword(env, &rt, "connect")), Some(true));
    run(&n, r#"(connect a "out" b "in")"#).unwrap();
}

#[test]
fn replace_method_and_versions() {
    let (n, _d) = node();
    let v = run(
        &n,
        r#"(jrun "CryptoCOS")
           (replace_method "CryptoCOS" "encrypt" "caesar" 3)"#,
    )
    .unwrap();
    assert_eq!(v, Value::Int(2));
    let v = run(&n, r#"(versions "CryptoCOS" "encrypt")"#).unwrap();
    assert_eq!(v.to_string(), r#"((1 "builtin") (2 "caesar(3)"))"#);
    assert!(run(&n, r#"(replace_method "CryptoCOS" "nope" "identity")"#).is_err());
}

#[test]
fn interceptor_services() {
    let (n, _d) = node();
    let h = run(&n, r#"(register_interceptor_service "noop")"#).unwrap();
    assert!(matches!(h, Value::Handle { kind: HandleKind::Interceptor, .. }));
    assert_eq!(n.runtime().interceptors().registered_ids().len(), 1);
    let src = format!("(unregister_interceptor_service {})", h.to_ast());
    assert!(run(&n, &src).is_err(), "raw handle syntax is not a value");
    let Value::Handle { id, .. } = h else { panic!() };
    assert_eq!(run(&n, &format!("(unregister_interceptor_service {id})")).unwrap(), Value::Bool(true));
    assert!(run(&n, r#"(register_interceptor_service "weird")"#).is_err());
}

#[test]
fn interposition_script_on_demo() {
    let (n, _d) = node();
    run(&n, "(deploy_demo 0 200)").unwrap();
    run(&n, INTERPOSE).unwrap();
    let demo = n.runtime().demos()[0].clone();
    assert!(demo.wait(Duration::from_secs(10)));
    let received = demo.received(n.runtime());
    assert_eq!(received.len(), 200);
    assert!(received.iter().enumerate().all(|(i, m)| m.seq == i as u64 + 1));
    let cos = run(&n, "cos").unwrap();
    let topo = run(&n, "(topology)").unwrap();
    assert!(topo.to_string().contains(&cos.to_string()));
}

#[test]
fn interpose_keyword_and_inverse() {
    let (n, _d) = node();
    run(
        &n,
        r#"(define d (deploy_demo 0 0))
           (define cos (interpose (nth d 0) (nth d 2) "out" (nth d 3) "in"))"#,
    )
    .unwrap();
    assert!(run(&n, r#"(interpose (nth d 0) (nth d 2) "out" (nth d 3) "in")"#).is_err());
    run(&n, "(deinterpose cos)").unwrap();
    assert_eq!(n.runtime().topology_snapshot().connections().len(), 1);
}

#[test]
fn demo_topology_is_unit_without_demo() {
    let (n, _d) = node();
    assert_eq!(run(&n, "(demo_topology)").unwrap(), Value::Unit);
}

#[test]
fn bootstrap_script_failure_aborts_start() {
    let dir = tempfile::tempdir().unwrap();
    let script = parse("(define x 1) (boom)").unwrap();
    match Node::start(test_config(&dir), Some(&script)) {
        Err(CvmError::Bootstrap { index: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn bench_latency_keyword() {
    let (n, _d) = node();
    let Value::List(v) = run(&n, "(bench_latency 100 1)").unwrap() else { panic!() };
    assert!(matches!(v[0], Value::Float(m) if m > 0.0));
}
