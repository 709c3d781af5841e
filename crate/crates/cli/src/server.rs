//! WebSocket front end for live sessions. Each text frame from the client
//! holds one or more JSON lines; each reply is one JSON line per text frame.

use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures_util::{SinkExt, StreamExt};
use log::{debug, info, warn};
use pathsense::protocol::{parse_client_message, ClientMessage, ClockMode, Connection, ConnectionOptions, ServerMessage};
use pathsense::TrajectoryRecord;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::time::{interval, MissedTickBehavior};
use tokio_tungstenite::tungstenite::Message;

/// Outbound queue depth. Paced frames beyond it are dropped rather than
/// letting a slow client stall the clock.
const OUTBOUND_QUEUE: usize = 64;

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Where finished and abandoned sessions are written; `None` keeps
    /// nothing.
    pub data_dir: Option<PathBuf>,
    pub clock: ClockMode,
    pub connection: ConnectionOptions,
}

/// Accepts clients forever, one task per connection.
pub async fn serve(listener: TcpListener, opts: ServeOptions) -> std::io::Result<()> {
    let opts = Arc::new(opts);
    if let Some(dir) = &opts.data_dir {
        fs::create_dir_all(dir)?;
    }
    info!("listening on {} ({:?} clock)", listener.local_addr()?, opts.clock);
    loop {
        let (stream, peer) = listener.accept().await?;
        let opts = Arc::clone(&opts);
        tokio::spawn(async move {
            if let Err(e) = handle_client(stream, peer, &opts).await {
                warn!("{peer}: {e}");
            }
        });
    }
}

struct Outbox {
    tx: mpsc::Sender<String>,
}

impl Outbox {
    /// Sends everything, waiting for room.
    async fn send_all(&self, msgs: Vec<ServerMessage>) {
        for m in msgs {
            let _ = self.tx.send(m.to_line()).await;
        }
    }

    /// Frames are best effort; everything else is delivered.
    async fn send_paced(&self, msgs: Vec<ServerMessage>) {
        for m in msgs {
            if matches!(m, ServerMessage::Frame { .. }) {
                if self.tx.try_send(m.to_line()).is_err() {
                    debug!("frame dropped");
                }
            } else {
                let _ = self.tx.send(m.to_line()).await;
            }
        }
    }
}

async fn handle_client(stream: TcpStream, peer: SocketAddr, opts: &ServeOptions) -> anyhow::Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    info!("{peer}: connected");
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::channel::<String>(OUTBOUND_QUEUE);
    let writer = tokio::spawn(async move {
        while let Some(line) = rx.recv().await {
            if sink.send(Message::text(line)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    let out = Outbox { tx };
    let mut conn = Connection::new(opts.connection.clone());
    let mut ticker = interval(Duration::from_millis(5));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);

    loop {
        let paced = opts.clock == ClockMode::Realtime && conn.is_running();
        tokio::select! {
            msg = source.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    for line in text.lines().filter(|l| !l.trim().is_empty()) {
                        let was_running = conn.is_running();
                        process_line(&mut conn, line, opts.clock, &out).await;
                        if !was_running && conn.is_running() {
                            let tick_ms = conn.session().map_or(5, |s| s.config().tick_ms);
                            ticker = interval(Duration::from_millis(u64::from(tick_ms)));
                            ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
                            // the first interval tick fires at once; skip it
                            ticker.tick().await;
                        }
                    }
                    persist(&mut conn, opts);
                }
                Some(Ok(Message::Close(_))) | None => break,
                Some(Ok(_)) => {}
                Some(Err(e)) => {
                    warn!("{peer}: {e}");
                    break;
                }
            },
            _ = ticker.tick(), if paced => {
                out.send_paced(conn.tick()).await;
                persist(&mut conn, opts);
            }
        }
    }
    conn.disconnect();
    persist(&mut conn, opts);
    drop(out);
    let _ = writer.await;
    info!("{peer}: closed");
    Ok(())
}

async fn process_line(conn: &mut Connection, line: &str, clock: ClockMode, out: &Outbox) {
    let msg = match parse_client_message(line) {
        Ok(m) => m,
        Err(e) => return out.send_all(vec![ServerMessage::error(e.to_string())]).await,
    };
    let steps = matches!(msg, ClientMessage::Input { .. } | ClientMessage::Pose { .. });
    out.send_all(conn.handle(msg)).await;
    match clock {
        ClockMode::Fast if conn.is_scripted() => {
            while conn.is_running() {
                out.send_all(conn.tick()).await;
            }
        }
        ClockMode::Fast | ClockMode::Lockstep if steps => out.send_all(conn.tick()).await,
        _ => {}
    }
}

static FILE_COUNTER: AtomicU64 = AtomicU64::new(0);

fn persist(conn: &mut Connection, opts: &ServeOptions) {
    let records = conn.take_finished();
    let Some(dir) = &opts.data_dir else {
        return;
    };
    for r in records {
        let path = dir.join(record_file_name(&r));
        match fs::write(&path, r.to_jsonl()) {
            Ok(()) => info!("saved {}", path.display()),
            Err(e) => warn!("could not save {}: {e}", path.display()),
        }
    }
}

fn record_file_name(r: &TrajectoryRecord) -> String {
    let h = &r.header;
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let n = FILE_COUNTER.fetch_add(1, Ordering::Relaxed);
    format!("{}-{}-{}-{ms}-{n:04}.jsonl", h.path_id, h.display, h.controller)
}
