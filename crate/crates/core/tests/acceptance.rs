//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use cvm_core::admin::{submit, AdminServer, Frame, FormOutcome};
use cvm_core::bench::overhead_profile;
use cvm_core::crypto::{caesar_inverse, xor_rolling, SequencedMessage};
use cvm_core::cvm::{install_keyword, Node};
use cvm_core::demo::{plaintext, DemoTopology};
use cvm_core::lang::{decode_ast, encode_ast, parse, AstNode, Script, Value};
use cvm_core::runtime::{NodeConfig, NodeRuntime};

const MONITORING: &str = include_str!("../scripts/monitoring.mvv");
const MONITORING_UNFIXED: &str = include_str!("../scripts/monitoring_unfixed.mvv");
const INTERPOSE: &str = include_str!("../scripts/interpose.mvv");
const COS_KEY: &[u8] = b"secret";

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Served {
    node: Node,
    server: AdminServer,
    _dir: tempfile::TempDir,
}

impl Served {
    fn start() -> Served {
        let dir = tempfile::tempdir().expect("tempdir");
        let config = NodeConfig {
            journal_path: dir.path().join("journal.log"),
            scan_interval: Duration::from_millis(20),
        };
        let node = Node::start(config, None).expect("node start");
        let server = AdminServer::bind("127.0.0.1:0", node.control().clone()).expect("bind");
        Served { node, server, _dir: dir }
    }

    fn addr(&self) -> SocketAddr {
        self.server.local_addr()
    }

    fn runtime(&self) -> &Arc<NodeRuntime> {
        self.node.runtime()
    }

    fn remote(&self, src: &str) -> Result<Vec<FormOutcome>, String> {
        let script = parse(src).map_err(|e| e.to_string())?;
        submit(self.addr(), &script, false).map_err(|e| e.to_string())
    }

    fn remote_ok(&self, src: &str) -> Result<Vec<AstNode>, String> {
        self.remote(src)?
            .into_iter()
            .map(|o| o.result.map_err(|e| format!("form {} failed: {e}", o.index)))
            .collect()
    }
}

fn monitoring_script() -> Outcome {
    let started = Instant::now();
    let served = Served::start();
    let script = parse(MONITORING).map_err(|e| e.to_string())?;
    ensure(script.len() == 11, || format!("parsed {} forms", script.len()))?;
    let out = submit(served.addr(), &script, false).map_err(|e| e.to_string())?;
    let results = out.iter().filter(|o| o.result.is_ok()).count();
    ensure(results == 11, || format!("{results} RESULTs: {out:?}"))?;
    ensure(out[10].result == Ok(AstNode::list([])), || "last result is not unit".into())?;

    let other = Served::start();
    let unfixed = parse(MONITORING_UNFIXED).map_err(|e| e.to_string())?;
    let out = submit(other.addr(), &unfixed, false).map_err(|e| e.to_string())?;
    let last = out.last().ok_or("no replies")?;
    let err = last.result.as_ref().err().ok_or("unfixed variant succeeded")?;
    ensure(err.contains("unbound symbol: log"), || format!("unexpected error: {err}"))?;

    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("11 RESULTs; unfixed fails at form {}; {elapsed:.2?}", last.index))
}

/// Index of the first message in `received` that is not plaintext; all
/// later messages must decrypt under `decrypt`.
fn single_cutover(
    received: &[SequencedMessage],
    expected: u64,
    before: impl Fn(&[u8]) -> Vec<u8>,
    after: impl Fn(&[u8]) -> Vec<u8>,
) -> Result<usize, String> {
    ensure(received.len() as u64 == expected, || {
        format!("received {} of {expected}", received.len())
    })?;
    for (i, m) in received.iter().enumerate() {
        ensure(m.seq == i as u64 + 1, || format!("position {i} holds seq {}", m.seq))?;
    }
    let mut cutover = None;
    for (i, m) in received.iter().enumerate() {
        let plain = plaintext(m.seq);
        let old = before(&m.payload) == plain;
        let new = after(&m.payload) == plain;
        ensure(old != new, || format!("seq {} decodes under {} rules", m.seq, if old { "both" } else { "neither" }))?;
        match (cutover, new) {
            (None, true) => cutover = Some(i),
            (Some(_), false) => return Err(format!("seq {} reverts to the old rule", m.seq)),
            _ => {}
        }
    }
    let c = cutover.ok_or("no cutover observed")?;
    ensure(c > 0, || "cutover at the very first message".into())?;
    Ok(c)
}

fn wait_emitted(demo: &DemoTopology, n: u64) {
    let deadline = Instant::now() + Duration::from_secs(60);
    while demo.emitted() < n && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn interposition_run(messages: u64) -> Result<usize, String> {
    let served = Served::start();
    served.remote_ok(&format!("(deploy_demo 1 {messages})"))?;
    let demo = served.runtime().demos().pop().ok_or("no demo")?;
    wait_emitted(&demo, messages / 2);
    served.remote_ok(INTERPOSE)?;
    ensure(demo.wait(Duration::from_secs(120)), || "emitter did not finish".into())?;
    ensure(demo.failures().is_empty(), || format!("failed sends: {:?}", demo.failures()))?;
    single_cutover(&demo.received(served.runtime()), messages, |p| p.to_vec(), |p| {
        xor_rolling(p, COS_KEY)
    })
}

fn interposition() -> Outcome {
    const RUNS: usize = 20;
    const MESSAGES: u64 = 10_000;
    let handles: Vec<_> = (0..RUNS)
        .map(|_| std::thread::spawn(|| interposition_run(MESSAGES)))
        .collect();
    let mut cutovers = Vec::new();
    let mut failures = Vec::new();
    for (i, h) in handles.into_iter().enumerate() {
        match h.join() {
            Ok(Ok(c)) => cutovers.push(c),
            Ok(Err(e)) => failures.push(format!("run {i}: {e}")),
            Err(_) => failures.push(format!("run {i}: panicked")),
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!(
        "{RUNS} runs x {MESSAGES} messages, 0 gaps/duplicates, cutovers at {}..{}",
        cutovers.iter().min().unwrap_or(&0),
        cutovers.iter().max().unwrap_or(&0)
    ))
}

fn metric_count(row: &AstNode) -> Option<i64> {
    match row {
        AstNode::List(items) => match items.get(2) {
            Some(AstNode::Int(n)) => Some(*n),
            _ => None,
        },
        _ => None,
    }
}

fn monitoring_exactness() -> Outcome {
    const N: usize = 100;
    let served = Served::start();
    served.remote_ok(
        r#"(jrun "Echo")
           (define e (add_component (create_container) "Echo"))
           (define mon (invoke "Monitor" "getInstance" ""))
           (invoke "Monitor" "registerMetric" "" mon (invoke "CountMethod" "new" "" "Echo" "echo"))
           (invoke "Monitor" "registerMetric" "" mon (invoke "CountMethod" "new" "" "Echo" "stats"))
           (invoke "Monitor" "registerMetric" "" mon (invoke "CountComponent" "new" "" "Echo"))"#,
    )?;
    let echo = served
        .runtime()
        .topology_snapshot()
        .instances()
        .next()
        .map(|i| i.id)
        .ok_or("no echo")?;
    for i in 0..N {
        served
            .runtime()
            .call_component(echo, "echo", vec![Value::Int(i as i64)])
            .map_err(|e| e.to_string())?;
    }
    for _ in 0..7 {
        served
            .runtime()
            .call_component(echo, "stats", vec![])
            .map_err(|e| e.to_string())?;
    }
    let snap = served.remote_ok(r#"(invoke "Monitor" "scan" "") (invoke "Monitor" "snapshot" "")"#)?;
    let AstNode::List(rows) = &snap[1] else {
        return Err("snapshot is not a list".into());
    };
    let counts: Vec<i64> = rows.iter().filter_map(metric_count).collect();
    ensure(counts == [N as i64, 7, N as i64 + 7], || format!("counts {counts:?}"))?;

    let timed = Served::start();
    let rows = timed.remote_ok(
        r#"(jrun "Echo")
           (define e (add_component (create_container) "Echo"))
           (replace_method "Echo" "echo" "sleep_echo" 5)
           (define mon (invoke "Monitor" "getInstance" ""))
           (invoke "Monitor" "registerMetric" "" mon (invoke "Temporal" "new" "" "Echo" "echo"))
           (invoke e "echo" "" 1) (invoke e "echo" "" 2) (invoke e "echo" "" 3)
           (invoke "Monitor" "scan" "")
           (invoke "Monitor" "snapshot" "")"#,
    )?;
    let mean = match rows.last() {
        Some(AstNode::List(rows)) => match rows.first() {
            Some(AstNode::List(r)) => match r.get(5) {
                Some(AstNode::Float(m)) => *m,
                _ => return Err(format!("no temporal stats in {r:?}")),
            },
            _ => return Err("empty snapshot".into()),
        },
        _ => return Err("bad snapshot".into()),
    };
    ensure(mean >= 5000.0, || format!("temporal mean {mean} us"))?;
    Ok(format!("CountMethod {N}, CountComponent {} = {N} + 7, temporal mean {mean:.0} us", N + 7))
}

fn random_tree(rng: &mut StdRng, depth: usize) -> AstNode {
    let pick = if depth == 0 { rng.gen_range(0..4) } else { rng.gen_range(0..6) };
    match pick {
        0 => {
            let len = rng.gen_range(1..8);
            AstNode::Symbol((0..len).map(|_| rng.gen_range('a'..='z')).collect())
        }
        1 => {
            let len = rng.gen_range(0..12);
            AstNode::Str((0..len).map(|_| rng.gen::<char>()).collect())
        }
        2 => AstNode::Int(rng.gen()),
        3 => AstNode::Float(f64::from_bits(rng.gen())),
        _ => {
            let len = rng.gen_range(0..5);
            AstNode::List((0..len).map(|_| random_tree(rng, depth - 1)).collect())
        }
    }
}

fn codec_golden() -> Outcome {
    let golden: [(AstNode, &[u8]); 4] = [
        (AstNode::symbol("x"), &[0x01, 0, 0, 0, 1, 0x78]),
        (AstNode::Int(1), &[0x03, 0, 0, 0, 0, 0, 0, 0, 1]),
        (AstNode::string("A"), &[0x02, 0, 0, 0, 1, 0x41]),
        (AstNode::list([]), &[0x05, 0, 0, 0, 0]),
    ];
    for (node, bytes) in golden {
        ensure(encode_ast(&node) == bytes, || format!("encoding of {node}"))?;
    }
    let frame = Frame::eval(&AstNode::symbol("x")).encode();
    ensure(
        frame == [0x43, 0x56, 0x01, 0x01, 0x00, 0x00, 0x00, 0x06, 0x01, 0x00, 0x00, 0x00, 0x01, 0x78],
        || format!("frame bytes {frame:02x?}"),
    )?;
    let mut rng = StdRng::seed_from_u64(0x4356);
    const TREES: usize = 10_000;
    for i in 0..TREES {
        let tree = random_tree(&mut rng, 4);
        let bytes = encode_ast(&tree);
        let (back, used) = decode_ast(&bytes).map_err(|e| format!("tree {i}: {e}"))?;
        ensure(back == tree && used == bytes.len(), || format!("tree {i} did not round-trip"))?;
    }
    Ok(format!("golden bytes match; {TREES} random trees round-trip"))
}

fn language_restriction() -> Outcome {
    let served = Served::start();
    served.remote_ok(
        r#"(jrun "Emitter") (jrun "Echo")
           (define c (create_container))
           (define a (add_component c "Emitter"))
           (define b (add_component c "Echo"))
           (connect a "out" b "in")
           (undefine connect)"#,
    )?;
    let out = served.remote(r#"(connect a "out" b "in")"#)?;
    let err = out[0].result.as_ref().err().ok_or("connect still works")?;
    ensure(err.contains("unbound symbol: connect"), || format!("unexpected error {err}"))?;
    served.remote_ok(r#"(disconnect a "out")"#)?;
    let rt = served.runtime().clone();
    let reinstalled = served
        .node
        .control()
        .with_environment(move |env| install_keyword(env, &rt, "connect"));
    ensure(reinstalled == Some(true), || "re-definition failed".into())?;
    served.remote_ok(r#"(connect a "out" b "in")"#)?;
    Ok("connect unbound after undefine, disconnect works, connect restored".into())
}

fn hot_replacement() -> Outcome {
    const MESSAGES: u64 = 4_000;
    let served = Served::start();
    served.remote_ok(&format!("(deploy_demo 1 {MESSAGES})"))?;
    served.remote_ok(INTERPOSE)?;
    let demo = served.runtime().demos().pop().ok_or("no demo")?;
    let before = served.remote_ok(r#"(length (versions "CryptoCOS" "encrypt"))"#)?;
    wait_emitted(&demo, MESSAGES / 2);
    served.remote_ok(r#"(replace_method "CryptoCOS" "encrypt" "caesar" 3)"#)?;
    ensure(demo.wait(Duration::from_secs(120)), || "emitter did not finish".into())?;
    ensure(demo.failures().is_empty(), || format!("failed sends: {:?}", demo.failures()))?;

    // Messages sent before the interposition script ran are plaintext.
    let received = demo.received(served.runtime());
    ensure(received.len() as u64 == MESSAGES, || format!("received {}", received.len()))?;
    let gap_free = received.iter().enumerate().all(|(i, m)| m.seq == i as u64 + 1);
    ensure(gap_free, || "sequence gap or duplicate".into())?;
    let first_cipher = received
        .iter()
        .position(|m| m.payload != plaintext(m.seq))
        .ok_or("nothing was encrypted")?;
    let encrypted = &received[first_cipher..];
    ensure(encrypted.iter().all(|m| m.payload != plaintext(m.seq)), || "plaintext after interposition".into())?;
    let c = cutover_by_rules(encrypted)?;
    let after = served.remote_ok(r#"(versions "CryptoCOS" "encrypt")"#)?;
    let listed = after[0].to_string();
    ensure(before[0] == AstNode::Int(1), || format!("versions before: {}", before[0]))?;
    ensure(listed == r#"((1 "builtin") (2 "caesar(3)"))"#, || format!("versions after: {listed}"))?;
    Ok(format!("one xor->caesar cutover after {c} encrypted messages; versions 1 -> 2"))
}

fn cutover_by_rules(msgs: &[SequencedMessage]) -> Result<usize, String> {
    let mut cutover = None;
    for (i, m) in msgs.iter().enumerate() {
        let plain = plaintext(m.seq);
        let old = xor_rolling(&m.payload, COS_KEY) == plain;
        let new = caesar_inverse(&m.payload, 3) == plain;
        ensure(old != new, || format!("seq {} is ambiguous or undecodable", m.seq))?;
        match (cutover, new) {
            (None, true) => cutover = Some(i),
            (Some(_), false) => return Err(format!("seq {} reverts to xor", m.seq)),
            _ => {}
        }
    }
    cutover.ok_or_else(|| "no caesar messages".into())
}

fn interceptor_overhead() -> Outcome {
    let rt = NodeRuntime::with_defaults();
    let p = overhead_profile(&rt, &[0, 1, 4], 100, 1_000).map_err(|e| e.to_string())?;
    let m = &p.mean_us;
    let line = format!(
        "mean latency us: 0 -> {:.3}, 1 -> {:.3}, 4 -> {:.3} (median {:.3}/{:.3}/{:.3}; {} requests each)",
        m[0], m[1], m[2], p.median_us[0], p.median_us[1], p.median_us[2], p.requests_each
    );
    ensure(m[0] <= m[1] && m[1] <= m[2], || line.clone())?;
    Ok(line)
}

fn random_form(rng: &mut StdRng, defined: &mut Vec<String>) -> String {
    let int = |rng: &mut StdRng| rng.gen_range(-1000i64..1000).to_string();
    match rng.gen_range(0..10) {
        0 => {
            let name = format!("v{}", defined.len());
            let form = format!("(define {name} (+ {} {}))", int(rng), int(rng));
            defined.push(name);
            form
        }
        1 if !defined.is_empty() => defined[rng.gen_range(0..defined.len())].clone(),
        2 => format!("(list {} \"s{}\" {}.5)", int(rng), rng.gen_range(0..99), int(rng)),
        3 => format!("(if (< {} {}) \"yes\" (list))", int(rng), int(rng)),
        4 => format!("(concat \"a{}\" \"b\")", rng.gen_range(0..9)),
        5 => format!("(nth (list 1 2 3) {})", rng.gen_range(0..5)),
        6 => "(create_container)".to_string(),
        7 => format!("(* {} {})", int(rng), int(rng)),
        8 => "(get_runtime)".to_string(),
        _ => format!("(undefined_{})", rng.gen_range(0..3)),
    }
}

fn remote_local_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(50);
    let mut defined = Vec::new();
    let src: Vec<String> = (0..50).map(|_| random_form(&mut rng, &mut defined)).collect();
    let script: Script = parse(&src.join("\n")).map_err(|e| e.to_string())?;
    ensure(script.len() == 50, || format!("{} forms", script.len()))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let local_node = Node::start(
        NodeConfig {
            journal_path: dir.path().join("j"),
            scan_interval: Duration::from_secs(1),
        },
        None,
    )
    .map_err(|e| e.to_string())?;
    let local: Vec<Result<Vec<u8>, String>> = local_node
        .control()
        .eval_script(&script, true)
        .into_iter()
        .map(|r| r.map(|v| Frame::result(&v).payload).map_err(|e| e.to_string()))
        .collect();

    let served = Served::start();
    let remote: Vec<Result<Vec<u8>, String>> = submit(served.addr(), &script, true)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|o| o.result.map(|n| encode_ast(&n)))
        .collect();
    ensure(local.len() == 50 && remote.len() == 50, || "result count".into())?;
    for (i, (l, r)) in local.iter().zip(&remote).enumerate() {
        ensure(l == r, || format!("form {i} `{}` differs: {l:?} vs {r:?}", src[i]))?;
    }
    let errors = local.iter().filter(|r| r.is_err()).count();
    Ok(format!("50 forms byte-identical ({errors} errors included)"))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("monitoring script fidelity", monitoring_script),
        ("no-interruption interposition", interposition),
        ("monitoring exactness", monitoring_exactness),
        ("codec and frame golden bytes", codec_golden),
        ("language restriction", language_restriction),
        ("hot method replacement", hot_replacement),
        ("interceptor overhead monotone", interceptor_overhead),
        ("remote/local equivalence", remote_local_equivalence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
