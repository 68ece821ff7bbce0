//! Portable-interceptor style hooks crossed by every request.
//!
//! Interceptors are node-global. Each request takes one snapshot of the
//! chain when it starts, so registration changes only affect requests that
//! begin afterwards.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;

use crate::runtime::ComponentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterceptionPoint {
    ClientSendRequest,
    ServerReceiveRequest,
    ServerSendReply,
    ClientReceiveReply,
}

impl InterceptionPoint {
    /// All points in traversal order.
    pub const ALL: [InterceptionPoint; 4] = [
        InterceptionPoint::ClientSendRequest,
        InterceptionPoint::ServerReceiveRequest,
        InterceptionPoint::ServerSendReply,
        InterceptionPoint::ClientReceiveReply,
    ];

    pub const SERVER: [InterceptionPoint; 2] = [
        InterceptionPoint::ServerReceiveRequest,
        InterceptionPoint::ServerSendReply,
    ];

    pub fn is_reply_side(self) -> bool {
        matches!(
            self,
            InterceptionPoint::ServerSendReply | InterceptionPoint::ClientReceiveReply
        )
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReplyStatus {
    Successful,
    Exception,
    Pending,
}

impl fmt::Display for ReplyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReplyStatus::Successful => "SUCCESSFUL",
            ReplyStatus::Exception => "EXCEPTION",
            ReplyStatus::Pending => "PENDING",
        })
    }
}

impl std::str::FromStr for ReplyStatus {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "SUCCESSFUL" => Ok(ReplyStatus::Successful),
            "EXCEPTION" => Ok(ReplyStatus::Exception),
            "PENDING" => Ok(ReplyStatus::Pending),
            _ => Err(()),
        }
    }
}

/// What an interceptor can see of one request. Callbacks observe; the only
/// thing they may write is the piggybacked slot table.
#[derive(Debug, Clone)]
pub struct RequestInfo {
    pub request_id: u64,
    pub operation: String,
    /// Sending component; 0 for requests issued by the control VM.
    pub sender: ComponentId,
    pub target_component: ComponentId,
    pub target_impl: String,
    pub response_expected: bool,
    pub reply_status: ReplyStatus,
    /// Printed argument list, read-only.
    pub arguments: String,
    /// Error text when `reply_status` is `Exception`.
    pub exception: Option<String>,
    slots: HashMap<u16, Vec<u8>>,
}

impl RequestInfo {
    pub(crate) fn new(
        request_id: u64,
        operation: &str,
        sender: ComponentId,
        target_component: ComponentId,
        target_impl: &str,
        arguments: String,
    ) -> Self {
        RequestInfo {
            request_id,
            operation: operation.to_string(),
            sender,
            target_component,
            target_impl: target_impl.to_string(),
            response_expected: true,
            reply_status: ReplyStatus::Pending,
            arguments,
            exception: None,
            slots: HashMap::new(),
        }
    }

    /// `IDL:<impl_name>:1.0`
    pub fn target_interface(&self) -> String {
        format!("IDL:{}:1.0", self.target_impl)
    }

    pub fn slot_set(&mut self, slot: u16, bytes: impl Into<Vec<u8>>) {
        self.slots.insert(slot, bytes.into());
    }

    pub fn slot_get(&self, slot: u16) -> Option<&[u8]> {
        self.slots.get(&slot).map(Vec::as_slice)
    }

    pub(crate) fn into_slots(self) -> HashMap<u16, Vec<u8>> {
        self.slots
    }
}

pub type InterceptorFn = dyn Fn(InterceptionPoint, &mut RequestInfo) + Send + Sync;

pub struct Registration {
    pub id: u64,
    points: u8,
    callback: Arc<InterceptorFn>,
}

impl fmt::Debug for Registration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registration")
            .field("id", &self.id)
            .field("points", &self.points)
            .finish()
    }
}

/// Immutable view of the chain taken at the start of a request.
#[derive(Debug, Clone, Default)]
pub struct ChainSnapshot(Arc<Vec<Arc<Registration>>>);

impl ChainSnapshot {
    pub fn fire(&self, point: InterceptionPoint, info: &mut RequestInfo) {
        let bit = point.bit();
        for reg in self.0.iter() {
            if reg.points & bit != 0 {
                (reg.callback)(point, info);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Default)]
pub struct InterceptorRegistry {
    chain: ArcSwap<Vec<Arc<Registration>>>,
    writer: Mutex<()>,
}

impl InterceptorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a callback to the chain of each listed point. `id` must be
    /// unique; the runtime allocates it.
    pub fn register<F>(&self, id: u64, points: &[InterceptionPoint], callback: F)
    where
        F: Fn(InterceptionPoint, &mut RequestInfo) + Send + Sync + 'static,
    {
        let points = points.iter().fold(0u8, |acc, p| acc | p.bit());
        let reg = Arc::new(Registration {
            id,
            points,
            callback: Arc::new(callback),
        });
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = (**self.chain.load()).clone();
        next.push(reg);
        self.chain.store(Arc::new(next));
    }

    pub fn unregister(&self, id: u64) -> bool {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.chain.load_full();
        if !current.iter().any(|r| r.id == id) {
            return false;
        }
        let next: Vec<_> = current.iter().filter(|r| r.id != id).cloned().collect();
        self.chain.store(Arc::new(next));
        true
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot(self.chain.load_full())
    }

    pub fn registered_ids(&self) -> Vec<u64> {
        self.chain.load().iter().map(|r| r.id).collect()
    }
}
