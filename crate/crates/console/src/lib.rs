//! Client side of the administration protocol: batch submission, the
//! interactive loop and the bench driver behind `cvm-console`.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use cvm_core::admin::{AdminClient, ClientError, FormOutcome, DEFAULT_PORT};
use cvm_core::bench::mean_std;
use cvm_core::lang::{parse, AstNode, ParseErrorKind, Script};
use cvm_core::scripts;

/// Environment variable holding a default target list.
pub const TARGETS_ENV: &str = "CVM_TARGETS";

/// Splits a comma-separated target list. Blank entries are dropped; an
/// empty list falls back to the local node.
pub fn parse_targets(list: Option<&str>) -> Vec<String> {
    let targets: Vec<String> = list
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect();
    if targets.is_empty() {
        vec![format!("127.0.0.1:{DEFAULT_PORT}")]
    } else {
        targets
    }
}

/// Escapes a payload so it fits on one porcelain line.
fn one_line(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n").replace('\t', "\\t")
}

/// `index<TAB>ok|err<TAB>payload`.
pub fn porcelain_line(outcome: &FormOutcome) -> String {
    match &outcome.result {
        Ok(node) => format!("{}\tok\t{}", outcome.index, one_line(&node.to_string())),
        Err(e) => format!("{}\terr\t{}", outcome.index, one_line(e)),
    }
}

pub fn human_line(outcome: &FormOutcome) -> String {
    match &outcome.result {
        Ok(node) => format!("ok: {node}"),
        Err(e) => format!("error: {e}"),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BatchOptions {
    pub keep_going: bool,
    pub porcelain: bool,
}

/// Submits `script` to every target in turn and prints the outcomes.
/// Returns `true` when every form on every target succeeded. Connection
/// failures are reported and count as failures; later targets still run.
pub fn run_batch(targets: &[String], script: &Script, opts: BatchOptions, out: &mut dyn Write) -> io::Result<bool> {
    let mut all_ok = true;
    let tagged = targets.len() > 1;
    for target in targets {
        if tagged && !opts.porcelain {
            writeln!(out, "== {target}")?;
        }
        let prefix = if tagged && opts.porcelain { format!("{target}\t") } else { String::new() };
        match cvm_core::admin::submit(target.as_str(), script, opts.keep_going) {
            Ok(outcomes) => {
                for o in &outcomes {
                    all_ok &= o.result.is_ok();
                    let line = if opts.porcelain { porcelain_line(o) } else { human_line(o) };
                    writeln!(out, "{prefix}{line}")?;
                }
            }
            Err(e) => {
                all_ok = false;
                if opts.porcelain {
                    writeln!(out, "{prefix}-\terr\t{}", one_line(&e.to_string()))?;
                } else {
                    writeln!(out, "error: {e}")?;
                }
            }
        }
    }
    Ok(all_ok)
}

struct Session {
    addr: String,
    client: Option<AdminClient>,
}

/// What the caller should do after a REPL line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    /// The input so far is an unfinished form; prompt for more.
    NeedMore,
    Quit,
}

/// Line-oriented interactive session over one or more nodes. Each complete
/// form is sent to every connected node.
pub struct Repl {
    sessions: Vec<Session>,
    pending: String,
}

impl Repl {
    /// Connects to every target. Unreachable nodes are reported to `out`
    /// and can be retried with `:reconnect`.
    pub fn connect(targets: &[String], out: &mut dyn Write) -> io::Result<Repl> {
        let mut repl = Repl {
            sessions: targets
                .iter()
                .map(|a| Session {
                    addr: a.clone(),
                    client: None,
                })
                .collect(),
            pending: String::new(),
        };
        repl.reconnect(out)?;
        Ok(repl)
    }

    pub fn connected(&self) -> usize {
        self.sessions.iter().filter(|s| s.client.is_some()).count()
    }

    fn reconnect(&mut self, out: &mut dyn Write) -> io::Result<()> {
        for s in &mut self.sessions {
            if s.client.is_some() {
                continue;
            }
            match AdminClient::connect(s.addr.as_str()) {
                Ok(c) => s.client = Some(c),
                Err(e) => writeln!(out, "error: {e}")?,
            }
        }
        Ok(())
    }

    /// True while an unfinished form is buffered.
    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn prompt(&self) -> &'static str {
        if self.pending.is_empty() {
            "cvm> "
        } else {
            "...> "
        }
    }

    pub fn handle_line(&mut self, line: &str, out: &mut dyn Write) -> io::Result<Flow> {
        if self.pending.is_empty() {
            match line.trim() {
                ":quit" | ":q" => {
                    self.quit();
                    return Ok(Flow::Quit);
                }
                ":nodes" => {
                    for s in &self.sessions {
                        let state = if s.client.is_some() { "connected" } else { "disconnected" };
                        writeln!(out, "{}\t{state}", s.addr)?;
                    }
                    return Ok(Flow::Continue);
                }
                ":reconnect" => {
                    self.reconnect(out)?;
                    writeln!(out, "{} of {} nodes connected", self.connected(), self.sessions.len())?;
                    return Ok(Flow::Continue);
                }
                ":help" => {
                    writeln!(out, ":nodes  :reconnect  :quit")?;
                    return Ok(Flow::Continue);
                }
                _ => {}
            }
        }
        self.pending.push_str(line);
        self.pending.push('\n');
        let script = match parse(&self.pending) {
            Ok(s) => s,
            Err(e) if matches!(e.kind, ParseErrorKind::UnclosedList | ParseErrorKind::UnterminatedString) => {
                return Ok(Flow::NeedMore);
            }
            Err(e) => {
                self.pending.clear();
                writeln!(out, "parse error: {e}")?;
                return Ok(Flow::Continue);
            }
        };
        self.pending.clear();
        let tagged = self.sessions.len() > 1;
        for form in &script.forms {
            for s in &mut self.sessions {
                let Some(client) = s.client.as_mut() else { continue };
                let prefix = if tagged { format!("[{}] ", s.addr) } else { String::new() };
                match client.eval(form) {
                    Ok(Ok(node)) => writeln!(out, "{prefix}ok: {node}")?,
                    Ok(Err(e)) => writeln!(out, "{prefix}error: {e}")?,
                    Err(e) => {
                        writeln!(out, "{prefix}connection lost: {e}")?;
                        s.client = None;
                    }
                }
            }
        }
        if self.connected() == 0 && !script.forms.is_empty() {
            writeln!(out, "no connected nodes (try :reconnect)")?;
        }
        Ok(Flow::Continue)
    }

    /// Sends BYE on every live session.
    pub fn quit(&mut self) {
        for s in &mut self.sessions {
            if let Some(c) = s.client.take() {
                let _ = c.bye();
            }
        }
    }
}

impl Drop for Repl {
    fn drop(&mut self) {
        self.quit();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptTiming {
    pub name: &'static str,
    pub repetitions: usize,
    pub mean: Duration,
    pub std: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub interceptors: usize,
    pub mean_us: f64,
    pub std_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub scripts: Vec<ScriptTiming>,
    pub latency: Vec<LatencyRow>,
    pub requests: usize,
}

#[derive(Debug)]
pub enum BenchError {
    Client(ClientError),
    /// The node has no demo topology to interpose on.
    NoDemo,
    Form { script: &'static str, error: String },
    Reply(String),
}

impl std::fmt::Display for BenchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenchError::Client(e) => write!(f, "{e}"),
            BenchError::NoDemo => f.write_str("node has no demo topology (start it with --demo)"),
            BenchError::Form { script, error } => write!(f, "{script} script failed: {error}"),
            BenchError::Reply(r) => write!(f, "unexpected reply: {r}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<ClientError> for BenchError {
    fn from(e: ClientError) -> Self {
        BenchError::Client(e)
    }
}

pub const INTERCEPTOR_COUNTS: [usize; 3] = [0, 1, 4];

fn eval_text(client: &mut AdminClient, text: &str) -> Result<AstNode, BenchError> {
    let script = parse(text).map_err(|e| BenchError::Reply(e.to_string()))?;
    let form = script.forms.first().ok_or_else(|| BenchError::Reply("empty".into()))?;
    client.eval(form)?.map_err(BenchError::Reply)
}

fn time_script(
    client: &mut AdminClient,
    name: &'static str,
    text: &str,
    repetitions: usize,
) -> Result<ScriptTiming, BenchError> {
    let script = parse(text).expect("bundled script parses");
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for o in client.submit(&script, false)? {
            if let Err(error) = o.result {
                return Err(BenchError::Form { script: name, error });
            }
        }
        samples.push(start.elapsed().as_secs_f64());
    }
    let (mean, std) = mean_std(&samples);
    Ok(ScriptTiming {
        name,
        repetitions,
        mean: Duration::from_secs_f64(mean),
        std: Duration::from_secs_f64(std),
    })
}

fn float(node: &AstNode) -> Option<f64> {
    match node {
        AstNode::Float(f) => Some(*f),
        AstNode::Int(i) => Some(*i as f64),
        _ => None,
    }
}

/// Times the monitoring and interposition scripts end to end over the
/// admin connection, then asks the node for per-request latency at each
/// interceptor count. The node must already run the demo topology.
pub fn run_bench(target: &str, repetitions: usize, requests: usize) -> Result<BenchReport, BenchError> {
    let mut client = AdminClient::connect(target)?;
    if eval_text(&mut client, "(demo_topology)")? == AstNode::List(vec![]) {
        return Err(BenchError::NoDemo);
    }
    let scripts = vec![
        time_script(&mut client, "monitoring", scripts::MONITORING, repetitions)?,
        time_script(&mut client, "interpose", scripts::INTERPOSE, repetitions)?,
    ];
    let mut latency = Vec::new();
    for k in INTERCEPTOR_COUNTS {
        let reply = eval_text(&mut client, &format!("(bench_latency {requests} {k})"))?;
        let pair = match &reply {
            AstNode::List(items) if items.len() == 2 => float(&items[0]).zip(float(&items[1])),
            _ => None,
        };
        let (mean_us, std_us) = pair.ok_or_else(|| BenchError::Reply(reply.to_string()))?;
        latency.push(LatencyRow {
            interceptors: k,
            mean_us,
            std_us,
        });
    }
    let _ = client.bye();
    Ok(BenchReport {
        scripts,
        latency,
        requests,
    })
}

pub fn print_report(report: &BenchReport, out: &mut dyn Write) -> io::Result<()> {
    for s in &report.scripts {
        writeln!(
            out,
            "{} script: mean {:.3} ms, std {:.3} ms over {} runs",
            s.name,
            s.mean.as_secs_f64() * 1e3,
            s.std.as_secs_f64() * 1e3,
            s.repetitions
        )?;
    }
    writeln!(out, "monitoring integration (reference, PIII 664MHz): 8.539 s")?;
    writeln!(out, "COS add (reference): 2.054 s")?;
    for row in &report.latency {
        writeln!(
            out,
            "latency with {} interceptors: mean {:.3} us, std {:.3} us over {} requests",
            row.interceptors, row.mean_us, row.std_us, report.requests
        )?;
    }
    Ok(())
}
