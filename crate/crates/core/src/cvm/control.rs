use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::lang::{eval, AstNode, Environment, EvalError, Script, Value};
use crate::monitoring::MonitorService;
use crate::runtime::{NodeConfig, NodeRuntime};

use super::{bootstrap, CvmError};

/// Forms waiting for the control thread. Submitters block once the queue
/// holds this many.
pub const QUEUE_DEPTH: usize = 64;

const CONTROL_STACK: usize = 64 * 1024 * 1024;

type EnvJob = Box<dyn FnOnce(&mut Environment) + Send>;

enum Job {
    Eval(AstNode, mpsc::Sender<Result<Value, EvalError>>),
    Env(EnvJob),
}

/// Submits work to a node's control thread. Cheap to clone; every clone
/// feeds the same queue, so forms from all sources run one at a time.
#[derive(Clone)]
pub struct ControlHandle {
    tx: SyncSender<Job>,
}

impl std::fmt::Debug for ControlHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ControlHandle")
    }
}

fn stopped() -> EvalError {
    EvalError::host("control loop stopped")
}

impl ControlHandle {
    /// Evaluates one form on the control thread and waits for its value.
    pub fn eval(&self, form: &AstNode) -> Result<Value, EvalError> {
        let (tx, rx) = mpsc::channel();
        self.tx.send(Job::Eval(form.clone(), tx)).map_err(|_| stopped())?;
        rx.recv().map_err(|_| stopped())?
    }

    /// Evaluates forms in order. Stops after the first error unless
    /// `keep_going` is set.
    pub fn eval_script(&self, script: &Script, keep_going: bool) -> Vec<Result<Value, EvalError>> {
        let mut out = Vec::with_capacity(script.len());
        for form in &script.forms {
            let r = self.eval(form);
            let failed = r.is_err();
            out.push(r);
            if failed && !keep_going {
                break;
            }
        }
        out
    }

    /// Runs `f` against the environment on the control thread, between
    /// forms. Returns `None` if the loop has stopped.
    pub fn with_environment<R, F>(&self, f: F) -> Option<R>
    where
        R: Send + 'static,
        F: FnOnce(&mut Environment) -> R + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        let job: EnvJob = Box::new(move |env| {
            let _ = tx.send(f(env));
        });
        self.tx.send(Job::Env(job)).ok()?;
        rx.recv().ok()
    }

    /// Sorted symbol list of the control environment.
    pub fn symbols(&self) -> Vec<String> {
        self.with_environment(|env| env.list_symbols()).unwrap_or_default()
    }
}

fn run(mut env: Environment, rx: Receiver<Job>) {
    for job in rx {
        match job {
            Job::Eval(form, reply) => {
                let result = catch_unwind(AssertUnwindSafe(|| eval(&form, &mut env)))
                    .unwrap_or_else(|_| Err(EvalError::host("evaluation panicked")));
                let _ = reply.send(result);
            }
            Job::Env(f) => {
                if catch_unwind(AssertUnwindSafe(|| f(&mut env))).is_err() {
                    log::error!("environment job panicked");
                }
            }
        }
    }
}

/// Moves `env` onto a new control thread. The thread exits once every
/// handle is dropped.
pub fn spawn_control_loop(env: Environment) -> Result<(ControlHandle, JoinHandle<()>), CvmError> {
    let (tx, rx) = mpsc::sync_channel(QUEUE_DEPTH);
    let thread = std::thread::Builder::new()
        .name("cvm-control".into())
        .stack_size(CONTROL_STACK)
        .spawn(move || run(env, rx))
        .map_err(|e| CvmError::Spawn(e.to_string()))?;
    Ok((ControlHandle { tx }, thread))
}

/// A bootstrapped node: runtime plus its control thread.
pub struct Node {
    runtime: Arc<NodeRuntime>,
    control: ControlHandle,
    _thread: JoinHandle<()>,
}

impl Node {
    /// Creates a runtime, bootstraps it and evaluates `bootstrap_script`
    /// (site policy, initial deployment) before handing out the control
    /// handle. Any failing bootstrap form aborts startup.
    pub fn start(config: NodeConfig, bootstrap_script: Option<&Script>) -> Result<Node, CvmError> {
        let runtime = NodeRuntime::new(config);
        let env = bootstrap(&runtime)?;
        let (control, thread) = spawn_control_loop(env)?;
        if let Some(script) = bootstrap_script {
            for (index, form) in script.forms.iter().enumerate() {
                control
                    .eval(form)
                    .map_err(|error| CvmError::Bootstrap { index, error })?;
            }
        }
        Ok(Node {
            runtime,
            control,
            _thread: thread,
        })
    }

    pub fn runtime(&self) -> &Arc<NodeRuntime> {
        &self.runtime
    }

    pub fn control(&self) -> &ControlHandle {
        &self.control
    }

    /// Stops demo traffic and the monitoring scanner. The control thread
    /// ends when the last handle goes away.
    pub fn shutdown(&self) {
        for demo in self.runtime.demos() {
            demo.stop();
        }
        if self.runtime.monitor().is_some() {
            let _ = MonitorService::uninstall(&self.runtime);
        }
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("runtime", &self.runtime).finish()
    }
}
