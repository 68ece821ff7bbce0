//! Running example: component A in container CA sends sequenced messages
//! through its `out` receptacle to component B in container CB.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::crypto::SequencedMessage;
use crate::lang::Value;
use crate::runtime::{ComponentId, ComponentImpl, ContainerId, NodeRuntime, RuntimeError};

pub const EMITTER_IMPL: &str = "Emitter";
pub const RECEIVER_IMPL: &str = "Receiver";

/// Text carried by message `seq` before any encryption.
pub fn plaintext(seq: u64) -> Vec<u8> {
    format!("message {seq}").into_bytes()
}

/// Component A. Emission is driven from outside the component (see
/// [`deploy_demo`]); `emit` sends one message on demand.
pub fn emitter_impl() -> ComponentImpl {
    ComponentImpl::builder(EMITTER_IMPL)
        .receptacle("out")
        .operation("emit", |ctx, args| {
            let seq = args.first().and_then(Value::as_int).ok_or("emit needs a sequence number")?;
            let msg = SequencedMessage::new(seq as u64, plaintext(seq as u64));
            let reply = ctx.send("out", "send", vec![msg.to_value()]).map_err(|e| e.to_string())?;
            reply.outcome
        })
        .build()
}

#[derive(Debug, Default)]
pub struct ReceiverState {
    pub received: Vec<SequencedMessage>,
}

/// Component B: records every message in arrival order.
pub fn receiver_impl() -> ComponentImpl {
    ComponentImpl::builder(RECEIVER_IMPL)
        .facet("in")
        .init(|_| Ok(Box::new(ReceiverState::default())))
        .operation("send", |ctx, args| {
            let msg = SequencedMessage::from_value(args.first().unwrap_or(&Value::Unit))?;
            ctx.state::<ReceiverState>()?.received.push(msg);
            Ok(Value::Unit)
        })
        .operation("count", |ctx, _| {
            Ok(Value::Int(ctx.state::<ReceiverState>()?.received.len() as i64))
        })
        .operation("received", |ctx, _| {
            let state = ctx.state::<ReceiverState>()?;
            Ok(Value::List(state.received.iter().map(SequencedMessage::to_value).collect()))
        })
        .build()
}

/// A deployed demo and its traffic generator.
#[derive(Debug)]
pub struct DemoTopology {
    pub ca: ContainerId,
    pub cb: ContainerId,
    pub a: ComponentId,
    pub b: ComponentId,
    pub interval: Duration,
    /// `None` emits until stopped.
    pub count: Option<u64>,
    emitted: AtomicU64,
    failures: Mutex<Vec<(u64, String)>>,
    stop: AtomicBool,
    done: AtomicBool,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl DemoTopology {
    pub fn emitted(&self) -> u64 {
        self.emitted.load(Ordering::SeqCst)
    }

    pub fn is_done(&self) -> bool {
        self.done.load(Ordering::SeqCst)
    }

    /// Messages whose send did not produce a successful reply.
    pub fn failures(&self) -> Vec<(u64, String)> {
        self.failures.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.join();
    }

    /// Waits for the generator to finish; false on timeout.
    pub fn wait(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while !self.is_done() {
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        self.join();
        true
    }

    fn join(&self) {
        let handle = self.thread.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(h) = handle {
            let _ = h.join();
        }
    }

    /// B's record so far.
    pub fn received(&self, runtime: &NodeRuntime) -> Vec<SequencedMessage> {
        runtime
            .with_state::<ReceiverState, _>(self.b, |s| s.received.clone())
            .unwrap_or_default()
    }

    pub fn received_count(&self, runtime: &NodeRuntime) -> usize {
        runtime
            .with_state::<ReceiverState, _>(self.b, |s| s.received.len())
            .unwrap_or(0)
    }
}

/// Deploys CA{A} and CB{B}, wires A.out to B.in and starts A's generator on
/// its own thread.
pub fn deploy_demo(
    runtime: &Arc<NodeRuntime>,
    interval: Duration,
    count: Option<u64>,
) -> Result<Arc<DemoTopology>, RuntimeError> {
    runtime.load_impl(EMITTER_IMPL)?;
    runtime.load_impl(RECEIVER_IMPL)?;
    let ca = runtime.create_container();
    let cb = runtime.create_container();
    let a = runtime.deploy_component(ca, EMITTER_IMPL, &[])?;
    let b = runtime.deploy_component(cb, RECEIVER_IMPL, &[])?;
    runtime.connect(a, "out", b, "in")?;

    let demo = Arc::new(DemoTopology {
        ca,
        cb,
        a,
        b,
        interval,
        count,
        emitted: AtomicU64::new(0),
        failures: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
        done: AtomicBool::new(false),
        thread: Mutex::new(None),
    });

    let rt = runtime.clone();
    let d = demo.clone();
    let handle = std::thread::Builder::new()
        .name(format!("emitter-{a}"))
        .spawn(move || run_emitter(&rt, &d))
        .map_err(|e| RuntimeError::Precondition(format!("cannot spawn emitter: {e}")))?;
    *demo.thread.lock().unwrap_or_else(|e| e.into_inner()) = Some(handle);
    runtime
        .demos
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .push(demo.clone());
    Ok(demo)
}

fn run_emitter(runtime: &NodeRuntime, demo: &DemoTopology) {
    let mut seq = 1u64;
    while demo.count.is_none_or(|n| seq <= n) && !demo.stop.load(Ordering::SeqCst) {
        let msg = SequencedMessage::new(seq, plaintext(seq));
        let failure = match runtime.send_request(demo.a, "out", "send", vec![msg.to_value()]) {
            Ok(reply) => reply.outcome.err(),
            Err(e) => Some(e.to_string()),
        };
        if let Some(err) = failure {
            demo.failures
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push((seq, err));
        }
        demo.emitted.store(seq, Ordering::SeqCst);
        seq += 1;
        if !demo.interval.is_zero() {
            std::thread::sleep(demo.interval);
        }
    }
    demo.done.store(true, Ordering::SeqCst);
}
