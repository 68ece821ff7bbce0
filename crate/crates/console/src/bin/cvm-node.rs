//! Runs a node: the control thread, the admin listener and the HTTP gateway.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use cvm_core::admin::{AdminServer, BOOTSTRAP_ENV, DEFAULT_PORT};
use cvm_core::cvm::Node;
use cvm_core::lang::{parse, AstNode};
use cvm_core::runtime::NodeConfig;
use cvm_gateway::Gateway;

#[derive(Debug, Parser)]
#[command(name = "cvm-node", version, about = "Run a component node with remote administration")]
struct Args {
    /// Address for the binary admin protocol.
    #[arg(long, default_value_t = format!("127.0.0.1:{DEFAULT_PORT}"))]
    admin: String,
    /// Address for the HTTP gateway.
    #[arg(long, default_value_t = format!("127.0.0.1:{}", cvm_gateway::DEFAULT_PORT))]
    http: String,
    /// Do not start the HTTP gateway.
    #[arg(long)]
    no_http: bool,
    /// Script evaluated before any listener opens.
    #[arg(long, env = BOOTSTRAP_ENV)]
    bootstrap: Option<PathBuf>,
    /// Deploy the emitter/receiver demo with this send interval in ms.
    #[arg(long, value_name = "MS", num_args = 0..=1, default_missing_value = "1")]
    demo: Option<u64>,
    /// Trace journal used by the monitoring service.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Monitoring scan interval in milliseconds.
    #[arg(long, default_value_t = 1000)]
    scan_interval_ms: u64,
}

fn run(args: Args) -> Result<(), String> {
    let mut config = NodeConfig::default();
    if let Some(j) = args.journal {
        config.journal_path = j;
    }
    config.scan_interval = Duration::from_millis(args.scan_interval_ms);

    let bootstrap = match &args.bootstrap {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Some(parse(&text).map_err(|e| format!("{}:{e}", path.display()))?)
        }
        None => None,
    };
    let node = Node::start(config, bootstrap.as_ref()).map_err(|e| e.to_string())?;

    if let Some(ms) = args.demo {
        let form = AstNode::List(vec![AstNode::symbol("deploy_demo"), AstNode::Int(ms as i64)]);
        node.control().eval(&form).map_err(|e| format!("demo: {e}"))?;
        eprintln!("demo running, interval {ms} ms");
    }

    let admin = AdminServer::bind(args.admin.as_str(), node.control().clone())
        .map_err(|e| format!("admin {}: {e}", args.admin))?;
    eprintln!("admin listening on {}", admin.local_addr());
    let _gateway = if args.no_http {
        None
    } else {
        let gw = Gateway::new(node.runtime().clone(), node.control().clone());
        let handle = cvm_gateway::spawn(&args.http, gw).map_err(|e| format!("http {}: {e}", args.http))?;
        eprintln!("gateway listening on http://{}", handle.local_addr());
        Some(handle)
    };
    loop {
        std::thread::park();
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvm-node: {e}");
            ExitCode::FAILURE
        }
    }
}
