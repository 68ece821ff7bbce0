//! Remote administration console.

use std::io::{self, BufRead, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cvm_console::{parse_targets, print_report, run_batch, run_bench, BatchOptions, Flow, Repl, TARGETS_ENV};
use cvm_core::lang::parse;

#[derive(Debug, Parser)]
#[command(name = "cvm-console", version, about = "Send reconfiguration scripts to running nodes")]
struct Args {
    /// Comma-separated node addresses (host:port).
    #[arg(long, env = TARGETS_ENV)]
    connect: Option<String>,
    /// Submit this script and exit instead of starting the prompt.
    #[arg(long, conflicts_with = "bench")]
    script: Option<PathBuf>,
    /// Keep sending forms after one fails.
    #[arg(long)]
    keep_going: bool,
    /// Machine-readable batch output: index, ok|err, payload, tab-separated.
    #[arg(long)]
    porcelain: bool,
    /// Benchmark the first target. The node must run the demo.
    #[arg(long)]
    bench: bool,
    /// Script repetitions in bench mode.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    repetitions: u64,
    /// Requests per latency measurement in bench mode.
    #[arg(long, default_value_t = 10_000)]
    requests: usize,
}

fn batch(args: &Args, path: &PathBuf, targets: &[String]) -> Result<bool, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let script = parse(&text).map_err(|e| format!("{}:{e}", path.display()))?;
    let opts = BatchOptions {
        keep_going: args.keep_going,
        porcelain: args.porcelain,
    };
    let stdout = io::stdout();
    run_batch(targets, &script, opts, &mut stdout.lock()).map_err(|e| e.to_string())
}

fn interactive(targets: &[String]) -> Result<bool, String> {
    let stdin = io::stdin();
    let tty = stdin.is_terminal();
    let mut out = io::stdout();
    let mut repl = Repl::connect(targets, &mut out).map_err(|e| e.to_string())?;
    let mut line = String::new();
    loop {
        if tty {
            print!("{}", repl.prompt());
            let _ = out.flush();
        }
        line.clear();
        if stdin.lock().read_line(&mut line).map_err(|e| e.to_string())? == 0 {
            if repl.has_pending() {
                eprintln!("incomplete form discarded");
            }
            break;
        }
        if repl.handle_line(line.trim_end_matches(['\r', '\n']), &mut out).map_err(|e| e.to_string())? == Flow::Quit {
            break;
        }
    }
    repl.quit();
    Ok(true)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let targets = parse_targets(args.connect.as_deref());
    let outcome = if args.bench {
        run_bench(&targets[0], args.repetitions as usize, args.requests)
            .map_err(|e| e.to_string())
            .and_then(|r| print_report(&r, &mut io::stdout()).map_err(|e| e.to_string()))
            .map(|()| true)
    } else if let Some(path) = &args.script {
        batch(&args, path, &targets)
    } else {
        interactive(&targets)
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("cvm-console: {e}");
            ExitCode::FAILURE
        }
    }
}
