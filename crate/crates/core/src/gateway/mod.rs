//! Session gateway: the selection engine behind a framed socket protocol.
//!
//! Each frame is a 4-byte big-endian length followed by one UTF-8 JSON
//! object whose `type` field names the message.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineConfig, EngineEvent};
use crate::error::Error;
use crate::geometry::{LinkId, PageLayout};
use crate::params::ModelParams;
use crate::segmentation::GazeSample;

pub const PROTOCOL_VERSION: &str = "gdw/1";
pub const MAX_FRAME_BYTES: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClientMessage {
    Hello { protocol_version: String },
    PageLayout { layout: PageLayout },
    Gaze { t: u64, x: f64, y: f64 },
    Cancel,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDwell {
    pub link: LinkId,
    pub n: u32,
    pub t_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ServerMessage {
    Ack { of: String },
    Dwells { dwells: Vec<WireDwell> },
    Command { name: String, t: u64 },
    Selected { link: LinkId, t: u64, response_time_ms: Option<f64> },
    Cancelled { link: Option<LinkId> },
    Error { code: String, msg: String },
}

impl ServerMessage {
    fn error(code: &str, msg: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.into(), msg: msg.into() }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub engine: EngineConfig,
    pub models: Arc<ModelParams>,
    /// Leave posterior values out of DWELLS.
    pub hide_posterior: bool,
}

/// What the transport should do after a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Close,
}

/// Protocol state of one connection, independent of the transport.
#[derive(Debug)]
pub struct Session {
    config: GatewayConfig,
    greeted: bool,
    engine: Option<Engine>,
    last_t: Option<u64>,
}

impl Session {
    pub fn new(config: GatewayConfig) -> Self {
        Session { config, greeted: false, engine: None, last_t: None }
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.as_ref()
    }

    fn translate(&self, ev: EngineEvent) -> Option<ServerMessage> {
        Some(match ev {
            EngineEvent::CommandActivated { command, t } => ServerMessage::Command { name: command.name().into(), t },
            EngineEvent::DwellsAssigned { dwells, posterior } => ServerMessage::Dwells {
                dwells: dwells
                    .dwells
                    .iter()
                    .map(|d| WireDwell {
                        link: d.link,
                        n: d.samples,
                        t_ms: d.samples as f64 * crate::SAMPLE_PERIOD_MS,
                        p: (!self.config.hide_posterior).then(|| posterior.prob(d.link)),
                    })
                    .collect(),
            },
            EngineEvent::LinkSelected { link, t, response_time_ms } => ServerMessage::Selected { link, t, response_time_ms },
            EngineEvent::SelectionCancelled { link } => ServerMessage::Cancelled { link },
            EngineEvent::SelectReleased { .. } => return None,
        })
    }

    /// Handles one raw frame payload.
    pub fn handle_text(&mut self, text: &str) -> (Vec<ServerMessage>, Flow) {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => (vec![ServerMessage::error("malformed", e.to_string())], Flow::Continue),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> (Vec<ServerMessage>, Flow) {
        let fatal = |code: &str, m: String| (vec![ServerMessage::error(code, m)], Flow::Close);
        if !self.greeted {
            return match msg {
                ClientMessage::Hello { protocol_version } if protocol_version == PROTOCOL_VERSION => {
                    self.greeted = true;
                    (vec![ServerMessage::Ack { of: "HELLO".into() }], Flow::Continue)
                }
                ClientMessage::Hello { protocol_version } => {
                    fatal("unsupported_version", format!("server speaks {PROTOCOL_VERSION}, got '{protocol_version}'"))
                }
                _ => fatal("no_hello", "first message must be HELLO".into()),
            };
        }
        match msg {
            ClientMessage::Hello { .. } => {
                (vec![ServerMessage::error("duplicate_hello", "session already open")], Flow::Continue)
            }
            ClientMessage::PageLayout { layout } => {
                let result = match self.engine.as_mut() {
                    Some(e) => e.set_layout(layout),
                    None => Engine::new(self.config.engine.clone(), self.config.models.clone(), layout).map(|e| {
                        self.engine = Some(e);
                    }),
                };
                match result {
                    Ok(()) => (vec![ServerMessage::Ack { of: "PAGE_LAYOUT".into() }], Flow::Continue),
                    Err(e) => (vec![ServerMessage::error("invalid_layout", e.to_string())], Flow::Continue),
                }
            }
            ClientMessage::Gaze { t, x, y } => {
                if let Some(last) = self.last_t {
                    if t <= last {
                        return fatal("out_of_order", format!("t={t} after t={last}"));
                    }
                }
                let Some(engine) = self.engine.as_mut() else {
                    return fatal("no_layout", "GAZE before PAGE_LAYOUT".into());
                };
                self.last_t = Some(t);
                match engine.feed_gaze(GazeSample::new(t, x, y)) {
                    Ok(events) => (events.into_iter().filter_map(|e| self.translate(e)).collect(), Flow::Continue),
                    Err(Error::OutOfOrderSample { last, got }) => {
                        fatal("out_of_order", format!("t={got} after t={last}"))
                    }
                    Err(e) => (vec![ServerMessage::error("engine", e.to_string())], Flow::Continue),
                }
            }
            ClientMessage::Cancel => match self.engine.as_mut().map(|e| e.cancel()) {
                Some(Ok(ev)) => (self.translate(ev).into_iter().collect(), Flow::Continue),
                Some(Err(e)) => (vec![ServerMessage::error("nothing_to_cancel", e.to_string())], Flow::Continue),
                None => (vec![ServerMessage::error("nothing_to_cancel", "no page loaded")], Flow::Continue),
            },
            ClientMessage::Reset => {
                if let Some(e) = self.engine.as_mut() {
                    e.reset();
                }
                (vec![ServerMessage::Ack { of: "RESET".into() }], Flow::Continue)
            }
        }
    }
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len);
    if n > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; n as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let n = u32::try_from(payload.len())
        .ok()
        .filter(|&n| n <= MAX_FRAME_BYTES)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&n.to_be_bytes())?;
    w.write_all(payload)?;
    Ok(())
}

pub fn write_message<W: Write>(w: &mut W, msg: &impl Serialize) -> io::Result<()> {
    let text = serde_json::to_vec(msg).map_err(io::Error::other)?;
    write_frame(w, &text)
}

/// Serves one connection until the peer closes it or breaks the protocol.
pub fn handle_session<S: Read + Write>(stream: &mut S, config: GatewayConfig) -> io::Result<()> {
    let mut session = Session::new(config);
    while let Some(frame) = read_frame(stream)? {
        let (replies, flow) = match std::str::from_utf8(&frame) {
            Ok(text) => session.handle_text(text),
            Err(e) => (vec![ServerMessage::error("malformed", e.to_string())], Flow::Continue),
        };
        for r in &replies {
            write_message(stream, r)?;
        }
        stream.flush()?;
        if flow == Flow::Close {
            break;
        }
    }
    Ok(())
}

pub struct Server {
    listener: TcpListener,
    config: GatewayConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: GatewayConfig) -> io::Result<Self> {
        Ok(Server { listener: TcpListener::bind(addr)?, config })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one thread per session.
    pub fn run(&self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let config = self.config.clone();
            thread::spawn(move || serve_stream(stream, config));
        }
        Ok(())
    }
}

fn serve_stream(mut stream: TcpStream, config: GatewayConfig) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let _ = stream.set_nodelay(true);
    log::info!("session {peer} opened");
    if let Err(e) = handle_session(&mut stream, config) {
        log::warn!("session {peer} ended with error: {e}");
    }
    log::info!("session {peer} closed");
}

/// Minimal blocking client, used by tests and the replay tool.
pub struct Client {
    stream: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { stream })
    }

    pub fn send(&mut self, msg: &ClientMessage) -> io::Result<()> {
        write_message(&mut self.stream, msg)
    }

    pub fn send_raw(&mut self, payload: &[u8]) -> io::Result<()> {
        write_frame(&mut self.stream, payload)
    }

    pub fn recv(&mut self) -> io::Result<Option<ServerMessage>> {
        match read_frame(&mut self.stream)? {
            None => Ok(None),
            Some(buf) => serde_json::from_slice(&buf).map(Some).map_err(io::Error::other),
        }
    }

    pub fn set_read_timeout(&self, d: Option<std::time::Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(d)
    }

    pub fn shutdown_write(&self) -> io::Result<()> {
        self.stream.shutdown(std::net::Shutdown::Write)
    }
}
