use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use cvm_console::{parse_targets, porcelain_line, run_batch, run_bench, BatchOptions, BenchError, Flow, Repl};
use cvm_core::admin::{AdminServer, FormOutcome};
use cvm_core::cvm::Node;
use cvm_core::lang::{parse, AstNode};
use cvm_core::runtime::NodeConfig;

struct Fixture {
    node: Node,
    server: AdminServer,
    _dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let config = NodeConfig {
            journal_path: dir.path().join("journal.log"),
            scan_interval: Duration::from_millis(20),
        };
        let node = Node::start(config, None).unwrap();
        let server = AdminServer::bind("127.0.0.1:0", node.control().clone()).unwrap();
        Fixture { node, server, _dir: dir }
    }

    fn addr(&self) -> String {
        self.server.local_addr().to_string()
    }

    fn lookup(&self, name: &str) -> bool {
        self.node.control().symbols().iter().any(|s| s == name)
    }
}

fn closed_port() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

fn text(buf: Vec<u8>) -> String {
    String::from_utf8(buf).unwrap()
}

#[test]
fn target_lists() {
    assert_eq!(parse_targets(None), ["127.0.0.1:4777"]);
    assert_eq!(parse_targets(Some(" a:1, ,b:2 ")), ["a:1", "b:2"]);
    assert_eq!(parse_targets(Some("")), ["127.0.0.1:4777"]);
}

#[test]
fn porcelain_escapes_payload() {
    let ok = FormOutcome {
        index: 3,
        result: Ok(AstNode::Str("a\tb".into())),
    };
    assert_eq!(porcelain_line(&ok), "3\tok\t\"a\\tb\"");
    let err = FormOutcome {
        index: 0,
        result: Err("line one\nline two".into()),
    };
    assert_eq!(porcelain_line(&err), "0\terr\tline one\\nline two");
}

#[test]
fn batch_reports_and_stops() {
    let f = Fixture::new();
    let script = parse("(define x 1) (nope) (define y 2)").unwrap();
    let mut out = Vec::new();
    let ok = run_batch(&[f.addr()], &script, BatchOptions { keep_going: false, porcelain: true }, &mut out).unwrap();
    assert!(!ok);
    let out = text(out);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "0\tok\t()");
    assert!(lines[1].starts_with("1\terr\tunbound symbol: nope"), "{out}");
    assert!(!f.lookup("y"));
}

#[test]
fn batch_keep_going_human() {
    let f = Fixture::new();
    let script = parse("(nope) (define y 2) y").unwrap();
    let mut out = Vec::new();
    let ok = run_batch(&[f.addr()], &script, BatchOptions { keep_going: true, porcelain: false }, &mut out).unwrap();
    assert!(!ok);
    let out = text(out);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("error: unbound symbol: nope"));
    assert_eq!(&lines[1..], ["ok: ()", "ok: 2"]);
}

#[test]
fn batch_over_several_targets() {
    let a = Fixture::new();
    let b = Fixture::new();
    let dead = closed_port();
    let script = parse("(define z 5)").unwrap();
    let targets = [a.addr(), dead.clone(), b.addr()];
    let mut out = Vec::new();
    let ok = run_batch(&targets, &script, BatchOptions { keep_going: false, porcelain: true }, &mut out).unwrap();
    assert!(!ok, "the dead target counts as a failure");
    assert!(a.lookup("z") && b.lookup("z"));
    let out = text(out);
    assert!(out.contains(&format!("{}\t0\tok\t()", a.addr())));
    assert!(out.contains(&format!("{dead}\t-\terr\tcannot connect")));
}

#[test]
fn repl_evaluates_and_buffers_multiline() {
    let f = Fixture::new();
    let mut out = Vec::new();
    let mut repl = Repl::connect(&[f.addr()], &mut out).unwrap();
    assert_eq!(repl.handle_line("(define x", &mut out).unwrap(), Flow::NeedMore);
    assert!(repl.has_pending());
    assert_eq!(repl.prompt(), "...> ");
    assert_eq!(repl.handle_line("  42)", &mut out).unwrap(), Flow::Continue);
    repl.handle_line("x (nope)", &mut out).unwrap();
    let out = text(out);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "ok: ()");
    assert_eq!(lines[1], "ok: 42");
    assert!(lines[2].starts_with("error: unbound symbol: nope"));
}

#[test]
fn repl_parse_errors_stay_local() {
    let f = Fixture::new();
    let mut out = Vec::new();
    let mut repl = Repl::connect(&[f.addr()], &mut out).unwrap();
    std::thread::sleep(Duration::from_millis(20));
    let before = f.server.stats().frames_in;
    repl.handle_line(")", &mut out).unwrap();
    assert!(!repl.has_pending());
    assert!(text(out).starts_with("parse error: 1:1"));
    assert_eq!(f.server.stats().frames_in, before);
}

#[test]
fn repl_commands() {
    let f = Fixture::new();
    let dead = closed_port();
    let mut out = Vec::new();
    let mut repl = Repl::connect(&[f.addr(), dead.clone()], &mut out).unwrap();
    assert_eq!(repl.connected(), 1);
    repl.handle_line(":nodes", &mut out).unwrap();
    repl.handle_line(":reconnect", &mut out).unwrap();
    let before = f.server.stats().frames_in;
    assert_eq!(repl.handle_line(":quit", &mut out).unwrap(), Flow::Quit);
    assert_eq!(repl.connected(), 0);
    let out = text(out);
    assert!(out.starts_with("error: cannot connect"));
    assert!(out.contains(&format!("{}\tconnected\n{dead}\tdisconnected\n", f.addr())));
    assert!(out.contains("1 of 2 nodes connected"));
    std::thread::sleep(Duration::from_millis(50));
    assert_eq!(f.server.stats().frames_in, before + 1, ":quit sends BYE");
}

#[test]
fn bench_requires_demo() {
    let f = Fixture::new();
    assert!(matches!(run_bench(&f.addr(), 1, 10), Err(BenchError::NoDemo)));
}

#[test]
fn bench_with_demo() {
    let f = Fixture::new();
    f.node.control().eval(&parse("(deploy_demo 1)").unwrap().forms[0]).unwrap();
    let report = run_bench(&f.addr(), 2, 200).unwrap();
    assert_eq!(report.scripts.len(), 2);
    assert_eq!(report.scripts[0].repetitions, 2);
    let ks: Vec<usize> = report.latency.iter().map(|r| r.interceptors).collect();
    assert_eq!(ks, [0, 1, 4]);
    assert!(report.latency.iter().all(|r| r.mean_us > 0.0));
    let mut out = Vec::new();
    cvm_console::print_report(&report, &mut out).unwrap();
    let out = text(out);
    assert!(out.contains("monitoring integration (reference, PIII 664MHz): 8.539 s"));
    assert!(out.contains("COS add (reference): 2.054 s"));
    assert!(out.contains("latency with 4 interceptors"));
}

fn console() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cvm-console"));
    c.env_remove("CVM_TARGETS");
    c
}

#[test]
fn console_binary_batch_exit_codes() {
    let f = Fixture::new();
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.mvv");
    std::fs::write(&good, "(define a 1)\na").unwrap();
    let bad = dir.path().join("bad.mvv");
    std::fs::write(&bad, "(define b 1)\n(nope)").unwrap();

    let out = console().args(["--connect", &f.addr(), "--porcelain", "--script"]).arg(&good).output().unwrap();
    assert!(out.status.success());
    assert_eq!(text(out.stdout), "0\tok\t()\n1\tok\t1\n");

    let out = console().env("CVM_TARGETS", f.addr()).arg("--script").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(out.stdout).contains("error: unbound symbol: nope"));
}

#[test]
fn console_binary_rejects_unparsable_script() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.mvv");
    std::fs::write(&path, "(define a").unwrap();
    let out = console().args(["--connect", &closed_port(), "--script"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(text(out.stderr).contains("broken.mvv:1:1"));
}

#[test]
fn console_binary_repl_over_stdin() {
    let f = Fixture::new();
    let mut child = console()
        .args(["--connect", &f.addr()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"(define k 9)\nk\n:quit\n(define never 1)\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(text(out.stdout), "ok: ()\nok: 9\n");
    assert!(!f.lookup("never"));
}

#[test]
fn node_binary_bootstraps_and_serves() {
    let dir = tempfile::tempdir().unwrap();
    let boot = dir.path().join("boot.mvv");
    std::fs::write(&boot, "(undefine connect)\n(define site \"lab\")").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_cvm-node"))
        .args(["--admin", "127.0.0.1:0", "--no-http", "--journal"])
        .arg(dir.path().join("j.log"))
        .env("CVM_BOOTSTRAP", &boot)
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("admin listening on ").expect(&line).to_string();

    let script = parse("site connect").unwrap();
    let outcomes = cvm_core::admin::submit(addr.as_str(), &script, true).unwrap();
    assert_eq!(outcomes[0].result, Ok(AstNode::Str("lab".into())));
    assert!(outcomes[1].result.as_ref().unwrap_err().contains("unbound symbol: connect"));
    child.kill().unwrap();
    let _ = child.wait();
}

#[test]
fn node_binary_fails_on_bad_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    let boot = dir.path().join("boot.mvv");
    std::fs::write(&boot, "(define ok 1)\n(nope)").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cvm-node"))
        .args(["--admin", "127.0.0.1:0", "--no-http", "--bootstrap"])
        .arg(&boot)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = text(out.stderr);
    assert!(err.contains("nope"), "{err}");
}
