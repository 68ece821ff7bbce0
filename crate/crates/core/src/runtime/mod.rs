//! In-process component middleware: containers, component instances with
//! facets and receptacles, a swappable connection table, and synchronous
//! request dispatch through the interceptor chain.

mod catalog;
mod component;
mod dispatch;
mod topology;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use arc_swap::ArcSwap;
use thiserror::Error;

use crate::demo::DemoTopology;
use crate::interceptors::{InterceptionPoint, InterceptorRegistry, RequestInfo};
use crate::lang::Value;
use crate::monitoring::{MetricSpec, MonitorService};

pub use catalog::{builtin_impls, method_body, ImplFactory, METHOD_CATALOG};
pub use component::{echo_impl, ComponentImpl, ImplBuilder, MethodBody, MethodVersion, StateInit};
pub use dispatch::{CallCtx, DispatchError, Reply};
pub use topology::{Connection, Endpoint, Instance, RewireAction, Topology};

pub type ComponentId = u64;
pub type ContainerId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("unknown implementation {name} (searched: {})", format_paths(.searched))]
    UnknownImpl { name: String, searched: Vec<String> },
    #[error("unknown container {0}")]
    UnknownContainer(ContainerId),
    #[error("unknown component {0}")]
    UnknownComponent(ComponentId),
    #[error("component {component} has no port {port}")]
    UnknownPort { component: ComponentId, port: String },
    #[error("receptacle {receptacle} is already bound to {target}")]
    ReceptacleBound { receptacle: Endpoint, target: Endpoint },
    #[error("receptacle {0} is not connected")]
    NotConnected(Endpoint),
    #[error("component {id} is still connected: {}", format_connections(.connections))]
    StillConnected { id: ComponentId, connections: Vec<Connection> },
    #[error("unknown operation {implementation}.{operation}")]
    UnknownOperation { implementation: String, operation: String },
    #[error("component initialisation failed: {0}")]
    Init(String),
    #[error("topology integrity violated: {0}")]
    Integrity(String),
    #[error("{0}")]
    Precondition(String),
}

fn format_paths(paths: &[String]) -> String {
    if paths.is_empty() {
        "<empty plugin path>, builtin catalog".to_string()
    } else {
        format!("{}, builtin catalog", paths.join(", "))
    }
}

fn format_connections(conns: &[Connection]) -> String {
    conns.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    /// Trace journal used when monitoring is installed from a script.
    pub journal_path: PathBuf,
    pub scan_interval: Duration,
}

impl Default for NodeConfig {
    fn default() -> Self {
        static SEQ: AtomicU64 = AtomicU64::new(0);
        let n = SEQ.fetch_add(1, Ordering::Relaxed);
        NodeConfig {
            journal_path: std::env::temp_dir()
                .join(format!("cvm-{}-{n}.journal", std::process::id())),
            scan_interval: Duration::from_millis(1000),
        }
    }
}

/// Script-visible objects that are neither components nor containers.
#[derive(Debug, Clone)]
pub enum ServiceObject {
    /// Metric definition created but not yet registered.
    MetricDef(MetricSpec),
}

/// One node: the component middleware plus the state the control VM
/// manipulates. Ids for containers, components, handles and interceptor
/// registrations come from one counter and are never reused.
pub struct NodeRuntime {
    config: NodeConfig,
    ids: AtomicU64,
    requests: AtomicU64,
    runtime_id: u64,
    catalog: RwLock<BTreeMap<String, ImplFactory>>,
    registry: RwLock<BTreeMap<String, Arc<ComponentImpl>>>,
    search_path: Mutex<Vec<String>>,
    topology: ArcSwap<Topology>,
    writer: Mutex<()>,
    interceptors: InterceptorRegistry,
    pub(crate) monitor: Mutex<Option<Arc<MonitorService>>>,
    objects: Mutex<HashMap<u64, ServiceObject>>,
    pub(crate) demos: Mutex<Vec<Arc<DemoTopology>>>,
    bootstrapped: AtomicBool,
}

impl std::fmt::Debug for NodeRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeRuntime")
            .field("runtime_id", &self.runtime_id)
            .field("topology", &self.topology.load())
            .finish()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl NodeRuntime {
    pub fn new(config: NodeConfig) -> Arc<Self> {
        let catalog = builtin_impls().into_iter().collect();
        Arc::new(NodeRuntime {
            config,
            ids: AtomicU64::new(2),
            requests: AtomicU64::new(1),
            runtime_id: 1,
            catalog: RwLock::new(catalog),
            registry: RwLock::new(BTreeMap::new()),
            search_path: Mutex::new(Vec::new()),
            topology: ArcSwap::from_pointee(Topology::default()),
            writer: Mutex::new(()),
            interceptors: InterceptorRegistry::new(),
            monitor: Mutex::new(None),
            objects: Mutex::new(HashMap::new()),
            demos: Mutex::new(Vec::new()),
            bootstrapped: AtomicBool::new(false),
        })
    }

    pub fn with_defaults() -> Arc<Self> {
        Self::new(NodeConfig::default())
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn runtime_id(&self) -> u64 {
        self.runtime_id
    }

    /// Fresh node-unique id.
    pub fn next_id(&self) -> u64 {
        self.ids.fetch_add(1, Ordering::Relaxed)
    }

    pub(crate) fn next_request_id(&self) -> u64 {
        self.requests.fetch_add(1, Ordering::Relaxed)
    }

    /// Marks the single entry point as taken. Fails on the second call.
    pub(crate) fn mark_bootstrapped(&self) -> bool {
        !self.bootstrapped.swap(true, Ordering::SeqCst)
    }

    pub fn interceptors(&self) -> &InterceptorRegistry {
        &self.interceptors
    }

    pub fn register_interceptor<F>(&self, points: &[InterceptionPoint], callback: F) -> u64
    where
        F: Fn(InterceptionPoint, &mut RequestInfo) + Send + Sync + 'static,
    {
        let id = self.next_id();
        self.interceptors.register(id, points, callback);
        id
    }

    pub fn unregister_interceptor(&self, id: u64) -> bool {
        self.interceptors.unregister(id)
    }

    // ---- plugin path and implementation catalog ----

    /// Appends a plugin location; duplicates are ignored.
    pub fn add_plugin_path(&self, location: &str) {
        let mut path = lock(&self.search_path);
        if !path.iter().any(|p| p == location) {
            path.push(location.to_string());
        }
    }

    pub fn plugin_path(&self) -> Vec<String> {
        lock(&self.search_path).clone()
    }

    /// Adds a factory to the implementation catalog, replacing any existing
    /// entry of the same name. Already loaded implementations are unaffected.
    pub fn add_catalog_entry(&self, name: &str, factory: ImplFactory) {
        self.catalog
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(name.to_string(), factory);
    }

    /// Makes `name` deployable. Loading an already loaded implementation is a
    /// no-op.
    pub fn load_impl(&self, name: &str) -> Result<Arc<ComponentImpl>, RuntimeError> {
        let mut registry = self.registry.write().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = registry.get(name) {
            return Ok(existing.clone());
        }
        let factory = self
            .catalog
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(name)
            .cloned()
            .ok_or_else(|| RuntimeError::UnknownImpl {
                name: name.to_string(),
                searched: self.plugin_path(),
            })?;
        let implementation = Arc::new(factory());
        registry.insert(name.to_string(), implementation.clone());
        Ok(implementation)
    }

    pub fn loaded_impl(&self, name: &str) -> Option<Arc<ComponentImpl>> {
        self.registry
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(name)
            .cloned()
    }

    pub fn loaded_impls(&self) -> Vec<String> {
        self.registry
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    // ---- topology ----

    pub fn topology_snapshot(&self) -> Arc<Topology> {
        self.topology.load_full()
    }

    /// Serialises writers, applies `f` to a copy of the current topology and
    /// swaps the result in if it succeeds and passes the integrity check.
    fn mutate<R>(&self, f: impl FnOnce(&mut Topology) -> Result<R, RuntimeError>) -> Result<R, RuntimeError> {
        let _guard = lock(&self.writer);
        let mut next = (*self.topology.load_full()).clone();
        let out = f(&mut next)?;
        next.check_integrity().map_err(RuntimeError::Integrity)?;
        next.version += 1;
        self.topology.store(Arc::new(next));
        Ok(out)
    }

    pub fn create_container(&self) -> ContainerId {
        let id = self.next_id();
        self.mutate(|t| {
            t.containers.insert(id);
            Ok(())
        })
        .expect("adding a container cannot break integrity");
        id
    }

    pub fn deploy_component(
        &self,
        container: ContainerId,
        impl_name: &str,
        init_args: &[Value],
    ) -> Result<ComponentId, RuntimeError> {
        let implementation = self.loaded_impl(impl_name).ok_or_else(|| RuntimeError::UnknownImpl {
            name: impl_name.to_string(),
            searched: self.plugin_path(),
        })?;
        if !self.topology.load().containers.contains(&container) {
            return Err(RuntimeError::UnknownContainer(container));
        }
        let state = implementation.init_state(init_args).map_err(RuntimeError::Init)?;
        let id = self.next_id();
        let instance = Arc::new(Instance {
            id,
            container,
            implementation,
            state: Mutex::new(state),
        });
        self.mutate(|t| {
            if !t.containers.contains(&container) {
                return Err(RuntimeError::UnknownContainer(container));
            }
            t.instances.insert(id, instance);
            Ok(())
        })?;
        Ok(id)
    }

    pub fn remove_component(&self, id: ComponentId) -> Result<(), RuntimeError> {
        self.mutate(|t| {
            if !t.instances.contains_key(&id) {
                return Err(RuntimeError::UnknownComponent(id));
            }
            let dangling = t.connections_of(id);
            if !dangling.is_empty() {
                return Err(RuntimeError::StillConnected {
                    id,
                    connections: dangling,
                });
            }
            t.instances.remove(&id);
            Ok(())
        })
    }

    pub fn connect(
        &self,
        source: ComponentId,
        receptacle: &str,
        target: ComponentId,
        facet: &str,
    ) -> Result<(), RuntimeError> {
        self.mutate(|t| t.connect(source, receptacle, target, facet))
    }

    pub fn disconnect(&self, source: ComponentId, receptacle: &str) -> Result<(), RuntimeError> {
        self.mutate(|t| t.disconnect(source, receptacle))
    }

    /// Applies every action in one swap, or none of them.
    pub fn atomic_rewire(&self, actions: &[RewireAction]) -> Result<(), RuntimeError> {
        if actions.is_empty() {
            return Ok(());
        }
        self.mutate(|t| actions.iter().try_for_each(|a| t.apply(a)))
    }

    /// Installs a new version of `operation` for every instance of
    /// `impl_name`. Returns the new version number.
    pub fn replace_method(
        &self,
        impl_name: &str,
        operation: &str,
        label: &str,
        body: MethodBody,
    ) -> Result<u32, RuntimeError> {
        let implementation = self.loaded_impl(impl_name).ok_or_else(|| RuntimeError::UnknownImpl {
            name: impl_name.to_string(),
            searched: self.plugin_path(),
        })?;
        implementation.replace(operation, label, body)
    }

    /// Runs `f` against a component's state, blocking while it serves a
    /// request. Used for inspection in tests and by the demo.
    pub fn with_state<T: 'static, R>(&self, id: ComponentId, f: impl FnOnce(&mut T) -> R) -> Result<R, RuntimeError> {
        let topology = self.topology_snapshot();
        let instance = topology.instance(id).ok_or(RuntimeError::UnknownComponent(id))?;
        let mut state = lock(&instance.state);
        let typed = state
            .downcast_mut::<T>()
            .ok_or_else(|| RuntimeError::Precondition(format!("component {id} has a different state type")))?;
        Ok(f(typed))
    }

    // ---- script-visible objects ----

    pub fn store_object(&self, object: ServiceObject) -> u64 {
        let id = self.next_id();
        lock(&self.objects).insert(id, object);
        id
    }

    pub fn object(&self, id: u64) -> Option<ServiceObject> {
        lock(&self.objects).get(&id).cloned()
    }

    pub fn monitor(&self) -> Option<Arc<MonitorService>> {
        lock(&self.monitor).clone()
    }

    pub fn demos(&self) -> Vec<Arc<DemoTopology>> {
        lock(&self.demos).clone()
    }
}
