use std::any::Any;
use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::interceptors::{InterceptionPoint, ReplyStatus, RequestInfo};
use crate::lang::Value;

use super::component::ComponentImpl;
use super::topology::{Instance, Topology};
use super::{ComponentId, NodeRuntime};

#[derive(Debug, Clone)]
pub struct Reply {
    pub request_id: u64,
    /// `Err` carries the exception text.
    pub outcome: Result<Value, String>,
    pub slots: HashMap<u16, Vec<u8>>,
}

impl Reply {
    pub fn status(&self) -> ReplyStatus {
        if self.outcome.is_ok() {
            ReplyStatus::Successful
        } else {
            ReplyStatus::Exception
        }
    }

    pub fn is_success(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Failures that prevent a request from being dispatched at all. These are
/// reported to the caller rather than turned into `EXCEPTION` replies.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("receptacle {receptacle} of component {component} is not connected")]
    Unbound { component: ComponentId, receptacle: String },
    #[error("unknown component {0}")]
    UnknownComponent(ComponentId),
}

/// Execution context handed to a method body.
pub struct CallCtx<'a> {
    pub(crate) runtime: &'a NodeRuntime,
    pub(crate) topology: &'a Arc<Topology>,
    pub(crate) instance: &'a Instance,
    pub(crate) state: &'a mut (dyn Any + Send),
    pub request_id: u64,
}

impl<'a> CallCtx<'a> {
    pub fn component_id(&self) -> ComponentId {
        self.instance.id
    }

    pub fn implementation(&self) -> &Arc<ComponentImpl> {
        &self.instance.implementation
    }

    /// Typed access to the instance state.
    pub fn state<T: 'static>(&mut self) -> Result<&mut T, String> {
        self.state
            .downcast_mut::<T>()
            .ok_or_else(|| format!("{}: unexpected instance state type", self.instance.implementation.name()))
    }

    /// Sends a request through one of this component's receptacles, using
    /// the same topology snapshot as the request being served.
    pub fn send(&self, receptacle: &str, operation: &str, args: Vec<Value>) -> Result<Reply, DispatchError> {
        self.runtime
            .send_with(self.topology, self.instance.id, receptacle, operation, args)
    }

    /// Calls the active version of one of this component's own operations,
    /// bypassing interceptors and reusing the held instance state.
    pub fn call_self(&mut self, operation: &str, args: &[Value]) -> Result<Value, String> {
        let method = self.instance.implementation.active(operation).ok_or_else(|| {
            format!(
                "unknown operation {}.{operation}",
                self.instance.implementation.name()
            )
        })?;
        (method.body)(self, args)
    }
}

pub(crate) fn print_args(args: &[Value]) -> String {
    let list = Value::List(args.to_vec());
    list.to_ast().print()
}

impl NodeRuntime {
    /// Sends `operation` through `source`'s receptacle. Traverses the four
    /// interception points in order around the target's active method.
    pub fn send_request(
        &self,
        source: ComponentId,
        receptacle: &str,
        operation: &str,
        args: Vec<Value>,
    ) -> Result<Reply, DispatchError> {
        let topology = self.topology_snapshot();
        self.send_with(&topology, source, receptacle, operation, args)
    }

    pub(crate) fn send_with(
        &self,
        topology: &Arc<Topology>,
        source: ComponentId,
        receptacle: &str,
        operation: &str,
        args: Vec<Value>,
    ) -> Result<Reply, DispatchError> {
        let target = topology
            .target_of(source, receptacle)
            .ok_or_else(|| DispatchError::Unbound {
                component: source,
                receptacle: receptacle.to_string(),
            })?;
        let instance = topology
            .instance(target.component)
            .ok_or(DispatchError::UnknownComponent(target.component))?;
        Ok(self.dispatch(topology, source, instance, operation, args))
    }

    /// Invokes an operation on a component directly (sender 0, the control
    /// VM). Still crosses every interception point.
    pub fn call_component(
        &self,
        target: ComponentId,
        operation: &str,
        args: Vec<Value>,
    ) -> Result<Reply, DispatchError> {
        let topology = self.topology_snapshot();
        let instance = topology
            .instance(target)
            .ok_or(DispatchError::UnknownComponent(target))?;
        Ok(self.dispatch(&topology, 0, instance, operation, args))
    }

    fn dispatch(
        &self,
        topology: &Arc<Topology>,
        sender: ComponentId,
        instance: &Instance,
        operation: &str,
        args: Vec<Value>,
    ) -> Reply {
        let request_id = self.next_request_id();
        let chain = self.interceptors().snapshot();
        let mut info = RequestInfo::new(
            request_id,
            operation,
            sender,
            instance.id,
            instance.implementation.name(),
            print_args(&args),
        );

        chain.fire(InterceptionPoint::ClientSendRequest, &mut info);
        chain.fire(InterceptionPoint::ServerReceiveRequest, &mut info);

        let outcome = match instance.implementation.active(operation) {
            Some(method) => {
                let mut state = instance.state.lock().unwrap_or_else(|e| e.into_inner());
                let mut ctx = CallCtx {
                    runtime: self,
                    topology,
                    instance,
                    state: &mut **state,
                    request_id,
                };
                (method.body)(&mut ctx, &args)
            }
            None => Err(format!(
                "unknown operation {}.{operation}",
                instance.implementation.name()
            )),
        };

        match &outcome {
            Ok(_) => info.reply_status = ReplyStatus::Successful,
            Err(e) => {
                info.reply_status = ReplyStatus::Exception;
                info.exception = Some(e.clone());
            }
        }
        chain.fire(InterceptionPoint::ServerSendReply, &mut info);
        chain.fire(InterceptionPoint::ClientReceiveReply, &mut info);

        Reply {
            request_id,
            outcome,
            slots: info.into_slots(),
        }
    }
}
