//! WebSocket service: one session per connection, connections served one
//! after another.
//!
//! In realtime mode the physics clock never waits for the client. Incoming
//! messages are drained without blocking at every tick, the newest key state
//! goes into a latest-value mailbox, and a frame is skipped whenever the
//! previous one is still waiting in the socket buffer.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use rockcap_core::env::{EnvAssets, EnvConfig};

use crate::protocol::{decode_client, encode_server, ClientMessage, ClockMode, ProtocolError, ServerMessage, SessionSummary};
use crate::session::{Session, SessionConfig, StepEvent, PHYSICS_HZ, STEPS_PER_FRAME};
use crate::TeleopError;

/// Single-slot mailbox: a write replaces whatever was there.
#[derive(Debug, Default)]
pub struct Mailbox<T> {
    slot: Mutex<Option<T>>,
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self { slot: Mutex::new(None) }
    }

    pub fn put(&self, value: T) {
        *self.slot.lock().expect("mailbox poisoned") = Some(value);
    }

    pub fn take(&self) -> Option<T> {
        self.slot.lock().expect("mailbox poisoned").take()
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub env: EnvConfig,
    pub assets: EnvAssets,
    pub session: SessionConfig,
    pub clock: ClockMode,
    /// Where human episode logs go; nothing is written when `None`.
    pub record_dir: Option<PathBuf>,
    /// Stop after this many connections; serve forever when `None`.
    pub max_connections: Option<usize>,
}

/// How a connection ended.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionReport {
    pub summary: SessionSummary,
    /// The client left with a trial still running.
    pub disconnected_mid_trial: bool,
}

pub fn serve(listener: TcpListener, cfg: &ServerConfig) -> Result<Vec<ConnectionReport>, TeleopError> {
    let mut reports = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        match handle_connection(stream, cfg, n) {
            Ok(r) => reports.push(r),
            // one bad client must not take the service down
            Err(e) => eprintln!("connection {n}: {e}"),
        }
        if cfg.max_connections.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    Ok(reports)
}

fn handle_connection(stream: TcpStream, cfg: &ServerConfig, n: usize) -> Result<ConnectionReport, TeleopError> {
    stream.set_nodelay(true)?;
    let ws = tungstenite::accept(stream).map_err(|e| TeleopError::Session(format!("handshake: {e}")))?;
    let tag = format!("session{n:03}");
    let session = Session::new(
        cfg.env.clone(),
        cfg.assets.clone(),
        cfg.session.clone(),
        cfg.record_dir.clone(),
        &tag,
    )?;
    let mut conn = Connection { ws, session };
    conn.send(&conn.session.hello(cfg.clock))?;
    let ended = match cfg.clock {
        ClockMode::Lockstep => conn.run_lockstep(),
        ClockMode::Realtime => conn.run_realtime(),
    };
    let disconnected_mid_trial = conn.session.is_running();
    if disconnected_mid_trial {
        conn.session.abort();
    }
    ended?;
    Ok(ConnectionReport {
        summary: conn.session.summary(),
        disconnected_mid_trial,
    })
}

struct Connection {
    ws: WebSocket<TcpStream>,
    session: Session,
}

enum Incoming {
    Message(ClientMessage),
    Malformed(String),
    Nothing,
    Closed,
}

fn is_would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if io.kind() == ErrorKind::WouldBlock)
}

impl Connection {
    fn send(&mut self, msg: &ServerMessage) -> Result<(), TeleopError> {
        let bytes = match encode_server(msg) {
            Ok(b) => b,
            // a corrupt frame is skipped; the client is told why
            Err(ProtocolError::NonFinite(field)) => encode_server(&ServerMessage::Error {
                message: format!("frame dropped: non-finite {field}"),
            })?,
            Err(e) => return Err(e.into()),
        };
        match self.ws.send(Message::Binary(bytes.into())) {
            Ok(()) => Ok(()),
            // queued inside the socket; flushed on a later write
            Err(e) if is_would_block(&e) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    /// Sends a frame unless the previous output has not drained yet.
    fn send_frame_or_drop(&mut self) -> Result<(), TeleopError> {
        match self.ws.flush() {
            Ok(()) => {
                let frame = self.session.frame();
                self.send(&ServerMessage::Frame(frame))
            }
            Err(e) if is_would_block(&e) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn read(&mut self) -> Result<Incoming, TeleopError> {
        match self.ws.read() {
            Ok(Message::Binary(b)) => Ok(match decode_client(&b) {
                Ok(m) => Incoming::Message(m),
                Err(e) => Incoming::Malformed(e.to_string()),
            }),
            Ok(Message::Close(_)) => Ok(Incoming::Closed),
            Ok(Message::Text(_)) => Ok(Incoming::Malformed("text messages are not part of the protocol".into())),
            Ok(_) => Ok(Incoming::Nothing),
            Err(e) if is_would_block(&e) => Ok(Incoming::Nothing),
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => Ok(Incoming::Closed),
            Err(tungstenite::Error::Protocol(_)) | Err(tungstenite::Error::Io(_)) => Ok(Incoming::Closed),
            Err(e) => Err(e.into()),
        }
    }

    fn error(&mut self, message: String) -> Result<(), TeleopError> {
        self.send(&ServerMessage::Error { message })
    }

    /// Handles a start or abort request. Returns the control message, if any.
    fn handle(&mut self, msg: ClientMessage) -> Result<Option<crate::protocol::ControlMessage>, TeleopError> {
        match msg {
            ClientMessage::Control(c) => return Ok(Some(c)),
            ClientMessage::Start => match self.session.start_trial() {
                Ok(frame) => self.send(&ServerMessage::Frame(frame))?,
                Err(e) => self.error(e.to_string())?,
            },
            ClientMessage::Abort => {
                if !self.session.abort() {
                    self.error("no trial is running".into())?;
                }
            }
        }
        Ok(None)
    }

    fn finish_trial(&mut self, event: StepEvent) -> Result<bool, TeleopError> {
        if let StepEvent::Ended(result) = event {
            self.send(&ServerMessage::Result(result))?;
            if self.session.is_finished() {
                self.send(&ServerMessage::Summary(self.session.summary()))?;
                let _ = self.ws.close(None);
                let _ = self.ws.flush();
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// One physics step per control message, answered by a frame.
    fn run_lockstep(&mut self) -> Result<(), TeleopError> {
        loop {
            match self.read()? {
                Incoming::Closed => return Ok(()),
                Incoming::Nothing => {}
                Incoming::Malformed(e) => self.error(e)?,
                Incoming::Message(m) => {
                    let Some(control) = self.handle(m)? else { continue };
                    if !self.session.is_running() {
                        self.error("no trial is running".into())?;
                        continue;
                    }
                    self.session.set_keys(control.key_states);
                    match self.session.step()? {
                        StepEvent::Continue => {
                            let frame = self.session.frame();
                            self.send(&ServerMessage::Frame(frame))?;
                        }
                        event => {
                            if self.finish_trial(event)? {
                                return Ok(());
                            }
                        }
                    }
                }
            }
        }
    }

    fn run_realtime(&mut self) -> Result<(), TeleopError> {
        self.ws.get_mut().set_nonblocking(true)?;
        let mailbox = Mailbox::new();
        let dt = Duration::from_secs_f64(1.0 / PHYSICS_HZ);
        let mut next_tick = Instant::now();
        let mut steps = 0usize;
        loop {
            loop {
                match self.read()? {
                    Incoming::Nothing => break,
                    Incoming::Closed => return Ok(()),
                    Incoming::Malformed(e) => self.error(e)?,
                    Incoming::Message(m) => {
                        if let Some(c) = self.handle(m)? {
                            mailbox.put(c);
                        }
                    }
                }
            }
            if let Some(c) = mailbox.take() {
                self.session.set_keys(c.key_states);
            }
            if self.session.is_running() {
                let event = self.session.step()?;
                steps += 1;
                if event == StepEvent::Continue {
                    if steps.is_multiple_of(STEPS_PER_FRAME) {
                        self.send_frame_or_drop()?;
                    }
                } else {
                    steps = 0;
                    if self.finish_trial(event)? {
                        return Ok(());
                    }
                }
            } else {
                // keep pending output moving while idle
                match self.ws.flush() {
                    Ok(()) => {}
                    Err(e) if is_would_block(&e) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            next_tick += dt;
            let now = Instant::now();
            if next_tick > now {
                std::thread::sleep(next_tick - now);
            } else {
                // fell behind; do not try to catch up with a burst
                next_tick = now;
            }
        }
    }
}
