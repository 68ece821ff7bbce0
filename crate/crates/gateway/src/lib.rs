//! JSON and server-sent-events front end for a running node.
//!
//! Scripts go through the node's control thread like admin-protocol
//! traffic; topology and metric reads go straight to the runtime snapshots.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Serialize;
use tokio::sync::oneshot;

use cvm_core::cvm::ControlHandle;
use cvm_core::lang::parse;
use cvm_core::monitoring::MetricSnapshot;
use cvm_core::runtime::NodeRuntime;

pub const DEFAULT_PORT: u16 = 4778;
/// How often the event stream samples topology and metric counters.
pub const EVENT_POLL: Duration = Duration::from_millis(250);

#[derive(Clone)]
pub struct Gateway {
    runtime: Arc<NodeRuntime>,
    control: ControlHandle,
    poll: Duration,
}

impl Gateway {
    pub fn new(runtime: Arc<NodeRuntime>, control: ControlHandle) -> Self {
        Gateway {
            runtime,
            control,
            poll: EVENT_POLL,
        }
    }

    pub fn with_poll_interval(mut self, poll: Duration) -> Self {
        self.poll = poll;
        self
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/api/topology", get(topology))
            .route("/api/metrics", get(metrics))
            .route("/api/symbols", get(symbols))
            .route("/api/script", post(script))
            .route("/api/events", get(events))
            .with_state(self)
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct TopologyView {
    pub version: u64,
    pub containers: Vec<u64>,
    pub components: Vec<ComponentView>,
    pub connections: Vec<ConnectionView>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ComponentView {
    pub id: u64,
    pub container: u64,
    pub implementation: String,
    pub facets: Vec<String>,
    pub receptacles: Vec<String>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ConnectionView {
    pub source: EndpointView,
    pub target: EndpointView,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct EndpointView {
    pub component: u64,
    pub port: String,
}

pub fn topology_view(runtime: &NodeRuntime) -> TopologyView {
    let topo = runtime.topology_snapshot();
    TopologyView {
        version: topo.version,
        containers: topo.containers().collect(),
        components: topo
            .instances()
            .map(|i| ComponentView {
                id: i.id,
                container: i.container,
                implementation: i.implementation.name().to_string(),
                facets: i.implementation.facets().iter().cloned().collect(),
                receptacles: i.implementation.receptacles().iter().cloned().collect(),
            })
            .collect(),
        connections: topo
            .connections()
            .into_iter()
            .map(|c| ConnectionView {
                source: EndpointView {
                    component: c.source.component,
                    port: c.source.port,
                },
                target: EndpointView {
                    component: c.target.component,
                    port: c.target.port,
                },
            })
            .collect(),
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct MetricsView {
    pub installed: bool,
    pub running: bool,
    pub generation: u64,
    pub metrics: Vec<MetricView>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct MetricView {
    pub id: u64,
    pub kind: &'static str,
    pub spec: String,
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub durations: Option<DurationView>,
    #[serde(skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub breakdown: std::collections::BTreeMap<String, u64>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct DurationView {
    pub min_us: u64,
    pub max_us: u64,
    pub mean_us: f64,
    pub total_us: u64,
}

impl From<MetricSnapshot> for MetricView {
    fn from(s: MetricSnapshot) -> Self {
        MetricView {
            id: s.id,
            kind: s.spec.kind(),
            spec: s.spec.to_string(),
            count: s.count,
            durations: s.durations.map(|d| DurationView {
                min_us: d.min_us,
                max_us: d.max_us,
                mean_us: d.mean_us,
                total_us: d.total_us,
            }),
            breakdown: s.breakdown,
        }
    }
}

pub fn metrics_view(runtime: &NodeRuntime) -> MetricsView {
    match runtime.monitor() {
        None => MetricsView {
            installed: false,
            running: false,
            generation: 0,
            metrics: Vec::new(),
        },
        Some(m) => MetricsView {
            installed: true,
            running: m.is_running(),
            generation: m.generation(),
            metrics: m.snapshot().into_iter().map(MetricView::from).collect(),
        },
    }
}

async fn topology(State(gw): State<Gateway>) -> Json<TopologyView> {
    Json(topology_view(&gw.runtime))
}

async fn metrics(State(gw): State<Gateway>) -> Json<MetricsView> {
    Json(metrics_view(&gw.runtime))
}

async fn symbols(State(gw): State<Gateway>) -> Response {
    let control = gw.control.clone();
    match tokio::task::spawn_blocking(move || control.symbols()).await {
        Ok(list) => Json(list).into_response(),
        Err(e) => internal(e.to_string()),
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum FormResult {
    Ok { index: usize, ok: String },
    Err { index: usize, err: String },
}

async fn script(State(gw): State<Gateway>, body: String) -> Response {
    let script = match parse(&body) {
        Ok(s) => s,
        Err(e) => {
            let body = serde_json::json!({ "error": e.to_string(), "line": e.line, "column": e.column });
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    let control = gw.control.clone();
    let outcome = tokio::task::spawn_blocking(move || control.eval_script(&script, false)).await;
    match outcome {
        Ok(results) => {
            let results: Vec<FormResult> = results
                .into_iter()
                .enumerate()
                .map(|(index, r)| match r {
                    Ok(v) => FormResult::Ok {
                        index,
                        ok: v.to_string(),
                    },
                    Err(e) => FormResult::Err {
                        index,
                        err: e.to_string(),
                    },
                })
                .collect();
            Json(serde_json::json!({ "results": results })).into_response()
        }
        Err(e) => internal(e.to_string()),
    }
}

fn internal(msg: String) -> Response {
    (StatusCode::INTERNAL_SERVER_ERROR, Json(serde_json::json!({ "error": msg }))).into_response()
}

/// Emits `topology` and `metrics` events whenever the topology version or
/// monitor generation moves. Both are sent once on connect.
async fn events(State(gw): State<Gateway>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let state = (gw, None::<u64>, None::<u64>, Vec::<Event>::new());
    let stream = stream::unfold(state, |(gw, mut topo_seen, mut gen_seen, mut pending)| async move {
        loop {
            if let Some(ev) = pending.pop() {
                return Some((Ok(ev), (gw, topo_seen, gen_seen, pending)));
            }
            let version = gw.runtime.topology_snapshot().version;
            let generation = gw.runtime.monitor().map(|m| m.generation()).unwrap_or(0);
            // Popped from the back, so push metrics first to send topology first.
            if gen_seen != Some(generation) {
                gen_seen = Some(generation);
                pending.push(json_event("metrics", &metrics_view(&gw.runtime)));
            }
            if topo_seen != Some(version) {
                topo_seen = Some(version);
                pending.push(json_event("topology", &topology_view(&gw.runtime)));
            }
            if pending.is_empty() {
                tokio::time::sleep(gw.poll).await;
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

fn json_event(name: &str, data: &impl Serialize) -> Event {
    Event::default()
        .event(name)
        .json_data(data)
        .unwrap_or_else(|e| Event::default().event("error").data(e.to_string()))
}

pub async fn serve(listener: tokio::net::TcpListener, gateway: Gateway) -> std::io::Result<()> {
    axum::serve(listener, gateway.router()).await
}

/// A gateway running on its own thread and tokio runtime.
pub struct GatewayHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl GatewayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` and serves in the background until the handle is shut down
/// or dropped.
pub fn spawn(addr: &str, gateway: Gateway) -> std::io::Result<GatewayHandle> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let local = std_listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .thread_name("cvm-gateway")
        .build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("cvm-gateway".into()).spawn(move || {
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(std_listener) {
                Ok(l) => l,
                Err(e) => {
                    log::error!("gateway listener: {e}");
                    return;
                }
            };
            tokio::select! {
                r = axum::serve(listener, gateway.router()) => {
                    if let Err(e) = r {
                        log::error!("gateway stopped: {e}");
                    }
                }
                _ = rx => {}
            }
        });
        // SSE streams never end on their own; drop them with the runtime.
        rt.shutdown_timeout(Duration::from_millis(100));
    })?;
    Ok(GatewayHandle {
        addr: local,
        stop: Some(tx),
        thread: Some(thread),
    })
}
