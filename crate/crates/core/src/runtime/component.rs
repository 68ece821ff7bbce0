use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, RwLock};

use crate::lang::Value;

use super::dispatch::CallCtx;
use super::RuntimeError;

/// Host function implementing one version of an operation. Errors become
/// `EXCEPTION` replies.
pub type MethodBody = Arc<dyn Fn(&mut CallCtx<'_>, &[Value]) -> Result<Value, String> + Send + Sync>;

pub type StateInit = Arc<dyn Fn(&[Value]) -> Result<Box<dyn Any + Send>, String> + Send + Sync>;

pub struct MethodVersion {
    pub version: u32,
    /// Human-readable origin of the body, e.g. `builtin` or `caesar(3)`.
    pub label: String,
    pub(crate) body: MethodBody,
}

impl fmt::Debug for MethodVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{} {}", self.version, self.label)
    }
}

/// A component implementation: declared ports plus a versioned method table.
/// Versions are append-only and dispatch always uses the highest one.
pub struct ComponentImpl {
    name: String,
    facets: BTreeSet<String>,
    receptacles: BTreeSet<String>,
    operations: RwLock<BTreeMap<String, Vec<Arc<MethodVersion>>>>,
    init: StateInit,
}

impl fmt::Debug for ComponentImpl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComponentImpl")
            .field("name", &self.name)
            .field("facets", &self.facets)
            .field("receptacles", &self.receptacles)
            .field("operations", &self.operation_names())
            .finish()
    }
}

impl ComponentImpl {
    pub fn builder(name: impl Into<String>) -> ImplBuilder {
        ImplBuilder {
            name: name.into(),
            facets: BTreeSet::new(),
            receptacles: BTreeSet::new(),
            operations: BTreeMap::new(),
            init: Arc::new(|_| Ok(Box::new(()))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn facets(&self) -> &BTreeSet<String> {
        &self.facets
    }

    pub fn receptacles(&self) -> &BTreeSet<String> {
        &self.receptacles
    }

    pub fn operation_names(&self) -> Vec<String> {
        self.read_ops().keys().cloned().collect()
    }

    pub fn has_operation(&self, op: &str) -> bool {
        self.read_ops().contains_key(op)
    }

    /// Currently dispatched version of `op`.
    pub fn active(&self, op: &str) -> Option<Arc<MethodVersion>> {
        self.read_ops().get(op).and_then(|v| v.last().cloned())
    }

    /// Every version ever installed for `op`, oldest first.
    pub fn versions(&self, op: &str) -> Option<Vec<Arc<MethodVersion>>> {
        self.read_ops().get(op).cloned()
    }

    /// Appends a new version and makes it active. Calls already running keep
    /// the version they started with.
    pub fn replace(&self, op: &str, label: impl Into<String>, body: MethodBody) -> Result<u32, RuntimeError> {
        let mut ops = self.operations.write().unwrap_or_else(|e| e.into_inner());
        let versions = ops.get_mut(op).ok_or_else(|| RuntimeError::UnknownOperation {
            implementation: self.name.clone(),
            operation: op.to_string(),
        })?;
        let version = versions.last().map_or(1, |v| v.version + 1);
        versions.push(Arc::new(MethodVersion {
            version,
            label: label.into(),
            body,
        }));
        Ok(version)
    }

    pub(crate) fn init_state(&self, args: &[Value]) -> Result<Box<dyn Any + Send>, String> {
        (self.init)(args)
    }

    fn read_ops(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Vec<Arc<MethodVersion>>>> {
        self.operations.read().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct ImplBuilder {
    name: String,
    facets: BTreeSet<String>,
    receptacles: BTreeSet<String>,
    operations: BTreeMap<String, Vec<Arc<MethodVersion>>>,
    init: StateInit,
}

impl ImplBuilder {
    pub fn facet(mut self, name: &str) -> Self {
        self.facets.insert(name.to_string());
        self
    }

    pub fn receptacle(mut self, name: &str) -> Self {
        self.receptacles.insert(name.to_string());
        self
    }

    pub fn operation<F>(mut self, name: &str, body: F) -> Self
    where
        F: Fn(&mut CallCtx<'_>, &[Value]) -> Result<Value, String> + Send + Sync + 'static,
    {
        self.operations.insert(
            name.to_string(),
            vec![Arc::new(MethodVersion {
                version: 1,
                label: "builtin".to_string(),
                body: Arc::new(body),
            })],
        );
        self
    }

    pub fn init<F>(mut self, init: F) -> Self
    where
        F: Fn(&[Value]) -> Result<Box<dyn Any + Send>, String> + Send + Sync + 'static,
    {
        self.init = Arc::new(init);
        self
    }

    pub fn build(self) -> ComponentImpl {
        ComponentImpl {
            name: self.name,
            facets: self.facets,
            receptacles: self.receptacles,
            operations: RwLock::new(self.operations),
            init: self.init,
        }
    }
}

/// Built-in echo component: facet `in`, operations `echo`, `stats`, `fail`.
pub fn echo_impl() -> ComponentImpl {
    struct EchoState {
        calls: u64,
    }
    ComponentImpl::builder("Echo")
        .facet("in")
        .init(|_| Ok(Box::new(EchoState { calls: 0 })))
        .operation("echo", |ctx, args| {
            if let Ok(s) = ctx.state::<EchoState>() {
                s.calls += 1;
            }
            Ok(args.first().cloned().unwrap_or(Value::Unit))
        })
        .operation("stats", |ctx, _| {
            let s = ctx.state::<EchoState>()?;
            s.calls += 1;
            Ok(Value::Int(s.calls as i64))
        })
        .operation("fail", |_, args| {
            Err(args
                .first()
                .and_then(Value::as_str)
                .unwrap_or("requested failure")
                .to_string())
        })
        .build()
}
