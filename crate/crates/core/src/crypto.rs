//! Encryption system component (COS) placed between two application
//! components, plus the interposition procedure that wires it in.
//!
//! The ciphers here are deliberately toy transforms. What matters is how the
//! component is inserted and how its `encrypt` method is swapped at runtime.

use crate::lang::Value;
use crate::runtime::{CallCtx, ComponentId, ComponentImpl, ContainerId, NodeRuntime, RewireAction, RuntimeError};

pub const COS_IMPL: &str = "CryptoCOS";
pub const COS_FACET: &str = "in";
pub const COS_RECEPTACLE: &str = "out";

/// Key used when a COS is deployed without one.
pub const DEFAULT_KEY: &[u8] = b"cvm";

/// XOR with a key repeated over the message. An empty key is the identity.
pub fn xor_rolling(data: &[u8], key: &[u8]) -> Vec<u8> {
    if key.is_empty() {
        return data.to_vec();
    }
    data.iter()
        .zip(key.iter().cycle())
        .map(|(b, k)| b ^ k)
        .collect()
}

/// Adds `shift` to every byte, wrapping.
pub fn caesar(data: &[u8], shift: u8) -> Vec<u8> {
    data.iter().map(|b| b.wrapping_add(shift)).collect()
}

pub fn caesar_inverse(data: &[u8], shift: u8) -> Vec<u8> {
    data.iter().map(|b| b.wrapping_sub(shift)).collect()
}

/// A payload tagged with the sender's sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencedMessage {
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl SequencedMessage {
    pub fn new(seq: u64, payload: impl Into<Vec<u8>>) -> Self {
        SequencedMessage {
            seq,
            payload: payload.into(),
        }
    }

    /// `(seq "hex-payload")`
    pub fn to_value(&self) -> Value {
        Value::List(vec![
            Value::Int(self.seq as i64),
            Value::Str(hex::encode(&self.payload)),
        ])
    }

    pub fn from_value(value: &Value) -> Result<Self, String> {
        match value {
            Value::List(items) => match items.as_slice() {
                [Value::Int(seq), Value::Str(hex_payload)] if *seq >= 0 => Ok(SequencedMessage {
                    seq: *seq as u64,
                    payload: hex::decode(hex_payload).map_err(|e| format!("bad payload: {e}"))?,
                }),
                _ => Err(format!("malformed message {value}")),
            },
            other => Err(format!("expected a message, got {}", other.type_name())),
        }
    }
}

pub(crate) struct CosState {
    key: Vec<u8>,
}

fn key_from(value: &Value) -> Result<Vec<u8>, String> {
    match value {
        Value::Str(s) => Ok(s.as_bytes().to_vec()),
        Value::Int(i) => u8::try_from(*i)
            .map(|b| vec![b])
            .map_err(|_| format!("key byte {i} out of range")),
        Value::List(items) => items
            .iter()
            .map(|v| match v {
                Value::Int(i) => u8::try_from(*i).map_err(|_| format!("key byte {i} out of range")),
                other => Err(format!("key bytes must be ints, got {}", other.type_name())),
            })
            .collect(),
        other => Err(format!("unsupported key type {}", other.type_name())),
    }
}

fn hex_arg(args: &[Value]) -> Result<Vec<u8>, String> {
    match args.first() {
        Some(Value::Str(s)) => hex::decode(s).map_err(|e| format!("bad hex payload: {e}")),
        _ => Err("expected a hex payload string".to_string()),
    }
}

/// Default `encrypt` body: rolling XOR with the instance key.
pub(crate) fn xor_method(ctx: &mut CallCtx<'_>, args: &[Value]) -> Result<Value, String> {
    let data = hex_arg(args)?;
    let key = &ctx.state::<CosState>()?.key;
    Ok(Value::Str(hex::encode(xor_rolling(&data, key))))
}

pub(crate) fn caesar_method(shift: u8, args: &[Value]) -> Result<Value, String> {
    let data = hex_arg(args)?;
    Ok(Value::Str(hex::encode(caesar(&data, shift))))
}

/// `CryptoCOS`: facet `in` (operation `send`), receptacle `out`. `send`
/// runs the payload through the active `encrypt` version and forwards the
/// message, sequence number untouched.
pub fn cos_impl() -> ComponentImpl {
    ComponentImpl::builder(COS_IMPL)
        .facet(COS_FACET)
        .receptacle(COS_RECEPTACLE)
        .init(|args| {
            let key = match args.first() {
                Some(v) => key_from(v)?,
                None => DEFAULT_KEY.to_vec(),
            };
            Ok(Box::new(CosState { key }))
        })
        .operation("send", |ctx, args| {
            let msg = SequencedMessage::from_value(args.first().unwrap_or(&Value::Unit))?;
            let encrypted = ctx.call_self("encrypt", &[Value::Str(hex::encode(&msg.payload))])?;
            let Value::Str(hex_payload) = encrypted else {
                return Err("encrypt must return a hex string".to_string());
            };
            let forwarded = Value::List(vec![Value::Int(msg.seq as i64), Value::Str(hex_payload)]);
            let reply = ctx
                .send(COS_RECEPTACLE, "send", vec![forwarded])
                .map_err(|e| e.to_string())?;
            reply.outcome
        })
        .operation("encrypt", xor_method)
        .operation("set_key", |ctx, args| {
            let key = key_from(args.first().ok_or("set_key needs a key")?)?;
            ctx.state::<CosState>()?.key = key;
            Ok(Value::Unit)
        })
        .build()
}

/// Deploys a COS into `container` and reroutes `source -> target` through
/// it in a single table swap. Nothing is deployed if `source` is not
/// currently wired to `target`.
pub fn interpose(
    runtime: &NodeRuntime,
    container: ContainerId,
    source: (ComponentId, &str),
    target: (ComponentId, &str),
    impl_name: &str,
    init_args: &[Value],
) -> Result<ComponentId, RuntimeError> {
    let (src, receptacle) = source;
    let (dst, facet) = target;
    let topology = runtime.topology_snapshot();
    match topology.target_of(src, receptacle) {
        Some(t) if t.component == dst && t.port == facet => {}
        current => {
            return Err(RuntimeError::Precondition(format!(
                "interpose: {src}.{receptacle} is not connected to {dst}.{facet} (currently {})",
                current.map_or("unbound".to_string(), ToString::to_string)
            )))
        }
    }
    let cos = runtime.deploy_component(container, impl_name, init_args)?;
    let actions = [
        RewireAction::disconnect(src, receptacle),
        RewireAction::connect(src, receptacle, cos, COS_FACET),
        RewireAction::connect(cos, COS_RECEPTACLE, dst, facet),
    ];
    if let Err(e) = runtime.atomic_rewire(&actions) {
        let _ = runtime.remove_component(cos);
        return Err(e);
    }
    Ok(cos)
}

/// Inverse of [`interpose`] for any component with exactly one inbound and
/// one outbound connection: restores the direct link and removes it.
pub fn deinterpose(runtime: &NodeRuntime, cos: ComponentId) -> Result<(), RuntimeError> {
    let topology = runtime.topology_snapshot();
    if topology.instance(cos).is_none() {
        return Err(RuntimeError::UnknownComponent(cos));
    }
    let conns = topology.connections_of(cos);
    let inbound: Vec<_> = conns.iter().filter(|c| c.target.component == cos).collect();
    let outbound: Vec<_> = conns.iter().filter(|c| c.source.component == cos).collect();
    let ([inbound], [outbound]) = (inbound.as_slice(), outbound.as_slice()) else {
        return Err(RuntimeError::Precondition(format!(
            "deinterpose: component {cos} has {} inbound and {} outbound connections, expected 1 and 1",
            inbound.len(),
            outbound.len()
        )));
    };
    runtime.atomic_rewire(&[
        RewireAction::disconnect(inbound.source.component, &inbound.source.port),
        RewireAction::disconnect(cos, &outbound.source.port),
        RewireAction::connect(
            inbound.source.component,
            &inbound.source.port,
            outbound.target.component,
            &outbound.target.port,
        ),
    ])?;
    runtime.remove_component(cos)
}
