use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::cvm::ControlHandle;

use super::frame::{read_frame, write_frame, Frame, FrameError, MsgType};

/// Frame counters, kept per session and summed over the server.
#[derive(Debug, Default)]
pub struct SessionStats {
    pub frames_in: AtomicU64,
    pub frames_out: AtomicU64,
    pub errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatsSnapshot {
    pub frames_in: u64,
    pub frames_out: u64,
    pub errors: u64,
}

impl SessionStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            frames_in: self.frames_in.load(Ordering::SeqCst),
            frames_out: self.frames_out.load(Ordering::SeqCst),
            errors: self.errors.load(Ordering::SeqCst),
        }
    }
}

/// TCP admin listener. Each connection gets its own thread; all of them
/// feed the node's single control queue.
pub struct AdminServer {
    addr: SocketAddr,
    stats: Arc<SessionStats>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl AdminServer {
    pub fn bind(addr: impl ToSocketAddrs, control: ControlHandle) -> io::Result<AdminServer> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stats = Arc::new(SessionStats::default());
        let stop = Arc::new(AtomicBool::new(false));
        let (s, f) = (stats.clone(), stop.clone());
        let thread = std::thread::Builder::new()
            .name(format!("admin-{addr}"))
            .spawn(move || accept_loop(listener, control, s, f))?;
        Ok(AdminServer {
            addr,
            stats,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Totals over every session so far.
    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Stops accepting connections. Open sessions run until their peer
    /// leaves.
    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for AdminServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, control: ControlHandle, stats: Arc<SessionStats>, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("admin accept: {e}");
                continue;
            }
        };
        let peer = stream.peer_addr().map_or_else(|_| "?".to_string(), |a| a.to_string());
        let (control, stats) = (control.clone(), stats.clone());
        let spawned = std::thread::Builder::new()
            .name(format!("admin-session-{peer}"))
            .spawn(move || {
                if let Err(e) = serve_session(stream, &control, &stats) {
                    log::info!("admin session {peer} ended: {e}");
                }
            });
        if let Err(e) = spawned {
            log::error!("cannot spawn admin session: {e}");
        }
    }
}

/// Strict request-reply: one EVAL in, one RESULT or ERROR out, before the
/// next frame is read.
pub fn serve_session(stream: TcpStream, control: &ControlHandle, stats: &SessionStats) -> Result<(), FrameError> {
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(f) => f,
            Err(FrameError::Closed) => return Ok(()),
            Err(e) => {
                stats.errors.fetch_add(1, Ordering::SeqCst);
                return Err(e);
            }
        };
        stats.frames_in.fetch_add(1, Ordering::SeqCst);
        let reply = match frame.msg_type {
            MsgType::Eval => match frame.ast() {
                Ok(form) => match control.eval(&form) {
                    Ok(value) => Frame::result(&value),
                    Err(e) => Frame::error(&e.to_string()),
                },
                Err(e) => Frame::error(&e.to_string()),
            },
            MsgType::Ping => Frame::pong(),
            MsgType::Bye => return Ok(()),
            other => {
                stats.errors.fetch_add(1, Ordering::SeqCst);
                return Err(FrameError::Io(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unexpected {other:?} frame from client"),
                )));
            }
        };
        if reply.msg_type == MsgType::Error {
            stats.errors.fetch_add(1, Ordering::SeqCst);
        }
        write_frame(&mut writer, &reply)?;
        stats.frames_out.fetch_add(1, Ordering::SeqCst);
    }
}
