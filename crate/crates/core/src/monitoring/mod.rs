//! Monitoring service installed at runtime.
//!
//! Two server-side interceptors append [`TraceRecord`] lines to a journal
//! file. A periodic scanner reads the journal, pairs records by request id
//! and updates the registered metrics. The journal is the source of truth:
//! metrics are only ever derived from scanned lines.

mod record;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::interceptors::{InterceptionPoint, ReplyStatus, RequestInfo};
use crate::runtime::NodeRuntime;

pub use record::{wall_clock_now, RecordParseError, TraceMethod, TraceRecord, TOPIC};

/// Slot carrying the receive timestamp (µs, 8 bytes big-endian).
pub const TIMESTAMP_SLOT: u16 = 1;

/// Microseconds on a process-wide monotonic clock.
pub fn monotonic_us() -> u64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_micros() as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricSpec {
    /// Completed calls of one operation.
    CountMethod { implementation: String, operation: String },
    /// Completed calls of any operation of one implementation.
    CountComponent { implementation: String },
    /// Duration of completed calls of one operation.
    Temporal { implementation: String, operation: String },
    /// Per-operation counts for everything, dumped to `path` after each scan.
    Debug { path: PathBuf },
}

impl MetricSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            MetricSpec::CountMethod { .. } => "count_method",
            MetricSpec::CountComponent { .. } => "count_component",
            MetricSpec::Temporal { .. } => "temporal",
            MetricSpec::Debug { .. } => "debug",
        }
    }

    fn matches(&self, class: &str, operation: &str) -> bool {
        match self {
            MetricSpec::CountMethod { implementation, operation: op }
            | MetricSpec::Temporal { implementation, operation: op } => implementation == class && op == operation,
            MetricSpec::CountComponent { implementation } => implementation == class,
            MetricSpec::Debug { .. } => true,
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::CountMethod { implementation, operation } => {
                write!(f, "CountMethod({implementation}.{operation})")
            }
            MetricSpec::CountComponent { implementation } => write!(f, "CountComponent({implementation})"),
            MetricSpec::Temporal { implementation, operation } => {
                write!(f, "Temporal({implementation}.{operation})")
            }
            MetricSpec::Debug { path } => write!(f, "Debug({})", path.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationStats {
    pub min_us: u64,
    pub max_us: u64,
    pub total_us: u64,
    pub mean_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSnapshot {
    pub id: u64,
    pub spec: MetricSpec,
    pub count: u64,
    /// Present for temporal metrics once at least one pair completed.
    pub durations: Option<DurationStats>,
    /// `impl.operation` → count, for debug metrics.
    pub breakdown: BTreeMap<String, u64>,
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("monitoring is already installed on this node")]
    AlreadyInstalled,
    #[error("monitoring is not installed")]
    NotInstalled,
    #[error("journal {path} is not writable: {reason}")]
    Journal { path: PathBuf, reason: String },
    #[error("unknown monitor handle {0}")]
    UnknownHandle(u64),
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Append-only journal; each record is written with a single call under the
/// lock so lines never interleave.
struct Journal {
    path: PathBuf,
    file: Mutex<(File, u64)>,
}

impl Journal {
    fn open(path: &Path) -> Result<Self, MonitorError> {
        let err = |e: std::io::Error| MonitorError::Journal {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        let len = file.metadata().map_err(err)?.len();
        Ok(Journal {
            path: path.to_path_buf(),
            file: Mutex::new((file, len)),
        })
    }

    fn append(&self, record: &TraceRecord) {
        let mut line = record.to_string();
        line.push('\n');
        let mut guard = lock(&self.file);
        match guard.0.write_all(line.as_bytes()) {
            Ok(()) => guard.1 += line.len() as u64,
            Err(e) => log::warn!("journal {}: {e}", self.path.display()),
        }
    }

    fn len(&self) -> u64 {
        lock(&self.file).1
    }
}

fn record_for(info: &RequestInfo, method: TraceMethod, mono_us: u64) -> TraceRecord {
    let thread = std::thread::current();
    TraceRecord {
        date: wall_clock_now(),
        thread: thread.name().map_or_else(|| format!("{:?}", thread.id()), str::to_string),
        topic: TOPIC.to_string(),
        class: info.target_impl.clone(),
        method,
        line: 0,
        request_id: info.request_id,
        operation: info.operation.clone(),
        arguments: info.arguments.clone(),
        exceptions: info.exception.clone().unwrap_or_default(),
        response_expected: info.response_expected,
        reply_status: info.reply_status,
        target_interface: info.target_interface(),
        mono_us: Some(mono_us),
    }
}

#[derive(Debug)]
struct MetricEntry {
    spec: MetricSpec,
    /// Journal offset at registration; earlier lines are not counted.
    start_offset: u64,
    count: u64,
    min_us: u64,
    max_us: u64,
    total_us: u64,
    breakdown: BTreeMap<String, u64>,
}

impl MetricEntry {
    fn snapshot(&self, id: u64) -> MetricSnapshot {
        let durations = (matches!(self.spec, MetricSpec::Temporal { .. }) && self.count > 0).then(|| DurationStats {
            min_us: self.min_us,
            max_us: self.max_us,
            total_us: self.total_us,
            mean_us: self.total_us as f64 / self.count as f64,
        });
        MetricSnapshot {
            id,
            spec: self.spec.clone(),
            count: self.count,
            durations,
            breakdown: self.breakdown.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct ScanState {
    /// End of the scanned prefix; always at a line boundary.
    offset: u64,
    /// Receive timestamps waiting for their reply record.
    pending: HashMap<u64, u64>,
    metrics: BTreeMap<u64, MetricEntry>,
    malformed_lines: u64,
}

struct Scanner {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

pub struct MonitorService {
    handle_id: u64,
    journal: Arc<Journal>,
    scan: Mutex<ScanState>,
    interceptor_ids: Mutex<Vec<u64>>,
    scanner: Mutex<Option<Scanner>>,
    interval: Duration,
    generation: AtomicU64,
}

impl fmt::Debug for MonitorService {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonitorService")
            .field("handle_id", &self.handle_id)
            .field("journal", &self.journal.path)
            .finish()
    }
}

impl MonitorService {
    /// Opens the journal and registers the two server-side interceptors.
    /// Scanning starts with [`MonitorService::start`].
    pub fn install(runtime: &NodeRuntime, journal_path: &Path, interval: Duration) -> Result<Arc<Self>, MonitorError> {
        let mut slot = lock(&runtime.monitor);
        if slot.is_some() {
            return Err(MonitorError::AlreadyInstalled);
        }
        let journal = Arc::new(Journal::open(journal_path)?);
        let service = Arc::new(MonitorService {
            handle_id: runtime.next_id(),
            scan: Mutex::new(ScanState {
                offset: journal.len(),
                ..ScanState::default()
            }),
            journal: journal.clone(),
            interceptor_ids: Mutex::new(Vec::new()),
            scanner: Mutex::new(None),
            interval,
            generation: AtomicU64::new(0),
        });

        let id = runtime.register_interceptor(&InterceptionPoint::SERVER, move |point, info| match point {
            InterceptionPoint::ServerReceiveRequest => {
                let ts = monotonic_us();
                info.slot_set(TIMESTAMP_SLOT, ts.to_be_bytes());
                journal.append(&record_for(info, TraceMethod::ReceiveRequest, ts));
            }
            InterceptionPoint::ServerSendReply => {
                journal.append(&record_for(info, TraceMethod::SendReply, monotonic_us()));
            }
            _ => {}
        });
        lock(&service.interceptor_ids).push(id);
        *slot = Some(service.clone());
        Ok(service)
    }

    /// Stops scanning, removes the interceptors and detaches the service
    /// from the node. The journal file is left in place.
    pub fn uninstall(runtime: &NodeRuntime) -> Result<(), MonitorError> {
        let service = lock(&runtime.monitor).take().ok_or(MonitorError::NotInstalled)?;
        service.stop();
        for id in lock(&service.interceptor_ids).drain(..) {
            runtime.unregister_interceptor(id);
        }
        Ok(())
    }

    pub fn handle_id(&self) -> u64 {
        self.handle_id
    }

    pub fn journal_path(&self) -> &Path {
        &self.journal.path
    }

    /// Increments whenever a scan pass changes a metric.
    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::SeqCst)
    }

    pub fn register_metric(&self, runtime: &NodeRuntime, spec: MetricSpec) -> u64 {
        let id = runtime.next_id();
        let start_offset = self.journal.len();
        lock(&self.scan).metrics.insert(
            id,
            MetricEntry {
                spec,
                start_offset,
                count: 0,
                min_us: u64::MAX,
                max_us: 0,
                total_us: 0,
                breakdown: BTreeMap::new(),
            },
        );
        id
    }

    pub fn unregister_metric(&self, id: u64) -> bool {
        lock(&self.scan).metrics.remove(&id).is_some()
    }

    /// Starts the periodic scanner. Starting a running scanner does nothing.
    pub fn start(self: &Arc<Self>) {
        let mut scanner = lock(&self.scanner);
        if scanner.is_some() {
            return;
        }
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let service = self.clone();
        let thread = std::thread::Builder::new()
            .name("monitor-scanner".into())
            .spawn(move || {
                let tick = Duration::from_millis(5).min(service.interval);
                'outer: loop {
                    let wake = Instant::now() + service.interval;
                    while Instant::now() < wake {
                        if flag.load(Ordering::SeqCst) {
                            break 'outer;
                        }
                        std::thread::sleep(tick);
                    }
                    service.scan_now();
                }
            })
            .expect("spawn monitor scanner");
        *scanner = Some(Scanner { stop, thread });
    }

    /// Stops the scanner after its current pass. Metrics stay frozen until
    /// the next start or explicit scan.
    pub fn stop(&self) {
        let scanner = lock(&self.scanner).take();
        if let Some(s) = scanner {
            s.stop.store(true, Ordering::SeqCst);
            let _ = s.thread.join();
        }
    }

    pub fn is_running(&self) -> bool {
        lock(&self.scanner).is_some()
    }

    /// Runs one scan pass over the journal lines written since the last one.
    /// A trailing line without its newline is left for the next pass.
    pub fn scan_now(&self) {
        let mut state = lock(&self.scan);
        let mut buf = Vec::new();
        let read = File::open(&self.journal.path).and_then(|mut f| {
            f.seek(SeekFrom::Start(state.offset))?;
            f.read_to_end(&mut buf)
        });
        if let Err(e) = read {
            log::warn!("journal scan {}: {e}", self.journal.path.display());
            return;
        }

        let mut changed = false;
        let mut consumed = 0usize;
        while let Some(nl) = buf[consumed..].iter().position(|&b| b == b'\n') {
            let line_offset = state.offset + consumed as u64;
            let line = &buf[consumed..consumed + nl];
            consumed += nl + 1;
            let parsed = std::str::from_utf8(line)
                .map_err(|_| ())
                .and_then(|l| l.parse::<TraceRecord>().map_err(|_| ()));
            match parsed {
                Ok(record) => changed |= apply_record(&mut state, &record, line_offset),
                Err(()) => state.malformed_lines += 1,
            }
        }
        state.offset += consumed as u64;

        if changed {
            self.generation.fetch_add(1, Ordering::SeqCst);
            for (id, entry) in &state.metrics {
                if let MetricSpec::Debug { path } = &entry.spec {
                    dump_debug(path, *id, entry);
                }
            }
        }
    }

    /// Metrics as of the end of the last scan pass, ordered by id.
    pub fn snapshot(&self) -> Vec<MetricSnapshot> {
        let state = lock(&self.scan);
        state.metrics.iter().map(|(id, m)| m.snapshot(*id)).collect()
    }

    pub fn metric(&self, id: u64) -> Option<MetricSnapshot> {
        lock(&self.scan).metrics.get(&id).map(|m| m.snapshot(id))
    }

    /// Byte length of the scanned prefix and of the journal.
    pub fn progress(&self) -> (u64, u64) {
        (lock(&self.scan).offset, self.journal.len())
    }

    pub fn malformed_lines(&self) -> u64 {
        lock(&self.scan).malformed_lines
    }
}

fn apply_record(state: &mut ScanState, record: &TraceRecord, line_offset: u64) -> bool {
    match record.method {
        TraceMethod::ReceiveRequest => {
            if let Some(ts) = record.mono_us {
                state.pending.insert(record.request_id, ts);
            }
            false
        }
        TraceMethod::SendReply => {
            if record.reply_status == ReplyStatus::Pending {
                return false;
            }
            let started = state.pending.remove(&record.request_id);
            let duration = match (started, record.mono_us) {
                (Some(a), Some(b)) => Some(b.saturating_sub(a)),
                _ => None,
            };
            let mut changed = false;
            for entry in state.metrics.values_mut() {
                if line_offset < entry.start_offset || !entry.spec.matches(&record.class, &record.operation) {
                    continue;
                }
                match &entry.spec {
                    MetricSpec::Temporal { .. } => {
                        let Some(d) = duration else { continue };
                        entry.count += 1;
                        entry.min_us = entry.min_us.min(d);
                        entry.max_us = entry.max_us.max(d);
                        entry.total_us += d;
                    }
                    MetricSpec::Debug { .. } => {
                        entry.count += 1;
                        *entry
                            .breakdown
                            .entry(format!("{}.{}", record.class, record.operation))
                            .or_default() += 1;
                    }
                    _ => entry.count += 1,
                }
                changed = true;
            }
            changed
        }
    }
}

fn dump_debug(path: &Path, id: u64, entry: &MetricEntry) {
    let mut text = format!("metric {id} total {}\n", entry.count);
    for (k, v) in &entry.breakdown {
        text.push_str(&format!("{k} {v}\n"));
    }
    if let Err(e) = std::fs::write(path, text) {
        log::warn!("debug metric dump {}: {e}", path.display());
    }
}
