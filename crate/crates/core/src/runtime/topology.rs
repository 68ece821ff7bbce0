//! Immutable topology snapshots.
//!
//! A [`Topology`] holds containers, component instances and the connection
//! table. Requests read one snapshot for their whole lifetime; mutations
//! build a new snapshot and swap it in, so a request never sees half of a
//! rewiring.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use super::component::ComponentImpl;
use super::{ComponentId, ContainerId, RuntimeError};

pub struct Instance {
    pub id: ComponentId,
    pub container: ContainerId,
    pub implementation: Arc<ComponentImpl>,
    pub(crate) state: Mutex<Box<dyn Any + Send>>,
}

impl fmt::Debug for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Instance")
            .field("id", &self.id)
            .field("container", &self.container)
            .field("impl", &self.implementation.name())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub component: ComponentId,
    pub port: String,
}

impl Endpoint {
    pub fn new(component: ComponentId, port: impl Into<String>) -> Self {
        Endpoint {
            component,
            port: port.into(),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.port)
    }
}

/// Receptacle `source` wired to facet `target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Connection {
    pub source: Endpoint,
    pub target: Endpoint,
}

impl fmt::Display for Connection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewireAction {
    Disconnect {
        source: ComponentId,
        receptacle: String,
    },
    Connect {
        source: ComponentId,
        receptacle: String,
        target: ComponentId,
        facet: String,
    },
}

impl RewireAction {
    pub fn disconnect(source: ComponentId, receptacle: &str) -> Self {
        RewireAction::Disconnect {
            source,
            receptacle: receptacle.to_string(),
        }
    }

    pub fn connect(source: ComponentId, receptacle: &str, target: ComponentId, facet: &str) -> Self {
        RewireAction::Connect {
            source,
            receptacle: receptacle.to_string(),
            target,
            facet: facet.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Topology {
    /// Bumped on every swap.
    pub version: u64,
    pub(crate) containers: BTreeSet<ContainerId>,
    pub(crate) instances: BTreeMap<ComponentId, Arc<Instance>>,
    /// Keyed by the source receptacle; simplex, so one target per key.
    pub(crate) connections: BTreeMap<Endpoint, Endpoint>,
}

impl Topology {
    pub fn containers(&self) -> impl Iterator<Item = ContainerId> + '_ {
        self.containers.iter().copied()
    }

    pub fn instances(&self) -> impl Iterator<Item = &Arc<Instance>> {
        self.instances.values()
    }

    pub fn instance(&self, id: ComponentId) -> Option<&Arc<Instance>> {
        self.instances.get(&id)
    }

    pub fn connections(&self) -> Vec<Connection> {
        self.connections
            .iter()
            .map(|(s, t)| Connection {
                source: s.clone(),
                target: t.clone(),
            })
            .collect()
    }

    pub fn target_of(&self, source: ComponentId, receptacle: &str) -> Option<&Endpoint> {
        self.connections.get(&Endpoint::new(source, receptacle))
    }

    /// Connections with `id` at either end.
    pub fn connections_of(&self, id: ComponentId) -> Vec<Connection> {
        self.connections()
            .into_iter()
            .filter(|c| c.source.component == id || c.target.component == id)
            .collect()
    }

    fn require_instance(&self, id: ComponentId) -> Result<&Arc<Instance>, RuntimeError> {
        self.instances.get(&id).ok_or(RuntimeError::UnknownComponent(id))
    }

    pub(crate) fn disconnect(&mut self, source: ComponentId, receptacle: &str) -> Result<(), RuntimeError> {
        let inst = self.require_instance(source)?;
        if !inst.implementation.receptacles().contains(receptacle) {
            return Err(RuntimeError::UnknownPort {
                component: source,
                port: receptacle.to_string(),
            });
        }
        self.connections
            .remove(&Endpoint::new(source, receptacle))
            .map(|_| ())
            .ok_or_else(|| RuntimeError::NotConnected(Endpoint::new(source, receptacle)))
    }

    pub(crate) fn connect(
        &mut self,
        source: ComponentId,
        receptacle: &str,
        target: ComponentId,
        facet: &str,
    ) -> Result<(), RuntimeError> {
        let src = self.require_instance(source)?;
        if !src.implementation.receptacles().contains(receptacle) {
            return Err(RuntimeError::UnknownPort {
                component: source,
                port: receptacle.to_string(),
            });
        }
        let dst = self.require_instance(target)?;
        if !dst.implementation.facets().contains(facet) {
            return Err(RuntimeError::UnknownPort {
                component: target,
                port: facet.to_string(),
            });
        }
        let key = Endpoint::new(source, receptacle);
        if let Some(existing) = self.connections.get(&key) {
            return Err(RuntimeError::ReceptacleBound {
                receptacle: key,
                target: existing.clone(),
            });
        }
        self.connections.insert(key, Endpoint::new(target, facet));
        Ok(())
    }

    pub(crate) fn apply(&mut self, action: &RewireAction) -> Result<(), RuntimeError> {
        match action {
            RewireAction::Disconnect { source, receptacle } => self.disconnect(*source, receptacle),
            RewireAction::Connect {
                source,
                receptacle,
                target,
                facet,
            } => self.connect(*source, receptacle, *target, facet),
        }
    }

    /// Every connection endpoint refers to a live instance and a declared
    /// port, and every instance lives in a known container.
    pub fn check_integrity(&self) -> Result<(), String> {
        for (s, t) in &self.connections {
            let src = self
                .instances
                .get(&s.component)
                .ok_or_else(|| format!("dangling source {s}"))?;
            let dst = self
                .instances
                .get(&t.component)
                .ok_or_else(|| format!("dangling target {t}"))?;
            if !src.implementation.receptacles().contains(&s.port) {
                return Err(format!("undeclared receptacle {s}"));
            }
            if !dst.implementation.facets().contains(&t.port) {
                return Err(format!("undeclared facet {t}"));
            }
        }
        for inst in self.instances.values() {
            if !self.containers.contains(&inst.container) {
                return Err(format!("component {} in unknown container {}", inst.id, inst.container));
            }
        }
        Ok(())
    }
}
