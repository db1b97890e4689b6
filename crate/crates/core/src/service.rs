//! Live session service. One registration state per connection, driven by
//! line-delimited JSON messages over a web socket (`/session`) or a raw TCP
//! fallback. Both transports share [`Connection`].

use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State as AxumState;
use axum::routing::get;
use axum::Router;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::geometry::{intrinsics_from_fov, CameraIntrinsics, PixelPoint, RigidPose};
use crate::glb::parse_glb;
use crate::mesh::{Mesh, Rect};
use crate::models::{self, MAX_GLB_BYTES};
use crate::registration::{FrameMetrics, ManualParams, RegistrationError, RegistrationState};
use crate::session::{SessionFrame, SessionHeader, SessionWriter};

pub const PROTOCOL_VERSION: u32 = 1;
/// Longest accepted message; room for a base64 GLB at the size cap.
pub const MAX_MESSAGE_BYTES: usize = MAX_GLB_BYTES / 3 * 4 + 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    #[serde(default = "default_protocol")]
    pub protocol_version: u32,
    pub image_w: u32,
    pub image_h: u32,
    pub fov_v_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_glb_b64: Option<String>,
}

fn default_protocol() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello(Hello),
    Frame(SessionFrame),
    Set(ManualParams),
    RecordStart { name: String },
    RecordStop {},
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrCode {
    NoHello,
    UnsupportedVersion,
    Parse,
    BadPose,
    ModelLoad,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ready {
        session_id: String,
    },
    State {
        seq: u64,
        /// Column-major.
        model_matrix: RigidPose,
        s_w: f64,
        s_h: f64,
        anchor: PixelPoint,
        box_m: Rect,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metrics: Option<FrameMetrics>,
        visible: bool,
        opacity: f64,
    },
    Err {
        code: ErrCode,
        msg: String,
        fatal: bool,
    },
}

impl ServerMessage {
    pub fn err(code: ErrCode, msg: impl Into<String>, fatal: bool) -> Self {
        ServerMessage::Err { code, msg: msg.into(), fatal }
    }

    pub fn is_fatal(&self) -> bool {
        matches!(self, ServerMessage::Err { fatal: true, .. })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// Replies to one inbound message, and whether the connection must close.
#[derive(Debug, Default)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    pub close: bool,
}

impl Reply {
    fn one(m: ServerMessage) -> Self {
        let close = m.is_fatal();
        Reply { messages: vec![m], close }
    }
}

struct Recorder {
    writer: SessionWriter<BufWriter<File>>,
    path: PathBuf,
}

struct Active {
    state: RegistrationState,
    k: CameraIntrinsics,
    header: SessionHeader,
    inline_glb: Option<Vec<u8>>,
    recorder: Option<Recorder>,
}

/// Protocol state machine for one connection, independent of transport.
pub struct Connection {
    asset_dir: Arc<PathBuf>,
    session_id: String,
    active: Option<Active>,
}

impl Connection {
    pub fn new(asset_dir: impl Into<PathBuf>) -> Self {
        Self::with_shared_dir(Arc::new(asset_dir.into()))
    }

    fn with_shared_dir(asset_dir: Arc<PathBuf>) -> Self {
        Self { asset_dir, session_id: uuid::Uuid::new_v4().to_string(), active: None }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn handle_text(&mut self, text: &str) -> Reply {
        let msg: ClientMessage = match serde_json::from_str(text.trim()) {
            Ok(m) => m,
            Err(e) if self.active.is_none() => {
                return Reply::one(ServerMessage::err(ErrCode::NoHello, format!("expected hello: {e}"), true))
            }
            Err(e) => return Reply::one(ServerMessage::err(ErrCode::Parse, e.to_string(), false)),
        };
        self.handle(msg)
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Reply {
        if let ClientMessage::Hello(h) = msg {
            return self.hello(h);
        }
        let Some(active) = self.active.as_mut() else {
            return Reply::one(ServerMessage::err(ErrCode::NoHello, "first message must be hello", true));
        };
        match msg {
            ClientMessage::Hello(_) => unreachable!(),
            ClientMessage::Frame(f) => active.frame(f),
            ClientMessage::Set(p) => match active.state.set_manual(&p) {
                Ok(()) => Reply::default(),
                Err(e) => Reply::one(ServerMessage::err(ErrCode::Parse, format!("set: {e}"), false)),
            },
            ClientMessage::RecordStart { name } => Reply { messages: active.record_start(&self.asset_dir, &name), close: false },
            ClientMessage::RecordStop {} => Reply { messages: active.record_stop(), close: false },
        }
    }

    /// Flushes any open recording.
    pub fn finish(&mut self) {
        if let Some(a) = self.active.as_mut() {
            a.record_stop();
        }
    }

    fn hello(&mut self, h: Hello) -> Reply {
        if h.protocol_version != PROTOCOL_VERSION {
            return Reply::one(ServerMessage::err(
                ErrCode::UnsupportedVersion,
                format!("protocol version {} not supported (server speaks {PROTOCOL_VERSION})", h.protocol_version),
                true,
            ));
        }
        let k = match intrinsics_from_fov(h.fov_v_deg, h.image_w, h.image_h) {
            Ok(k) => k,
            Err(e) => return Reply::one(ServerMessage::err(ErrCode::Parse, format!("hello: {e}"), false)),
        };
        let (mesh, model_ref, inline_glb) = match self.load_model(&h) {
            Ok(v) => v,
            Err(msg) => return Reply::one(ServerMessage::err(ErrCode::ModelLoad, msg, true)),
        };
        self.finish();
        let header = SessionHeader::new(h.image_w, h.image_h, h.fov_v_deg, model_ref);
        self.active = Some(Active { state: RegistrationState::new(mesh), k, header, inline_glb, recorder: None });
        Reply::one(ServerMessage::Ready { session_id: self.session_id.clone() })
    }

    fn load_model(&self, h: &Hello) -> Result<(Arc<Mesh>, String, Option<Vec<u8>>), String> {
        match (&h.model_ref, &h.model_glb_b64) {
            (Some(_), Some(_)) => Err("hello carries both model_ref and model_glb_b64".into()),
            (None, None) => Err("hello carries neither model_ref nor model_glb_b64".into()),
            (Some(r), None) => {
                if !r.starts_with("builtin:") && !is_contained_relative(Path::new(r)) {
                    return Err(format!("model_ref {r:?} must be a builtin or a path inside the asset directory"));
                }
                let mesh = models::resolve_model_ref(r, Some(&self.asset_dir)).map_err(|e| e.to_string())?;
                Ok((mesh, r.clone(), None))
            }
            (None, Some(b64)) => {
                if b64.len() / 4 * 3 > MAX_GLB_BYTES + 2 {
                    return Err(format!("uploaded model exceeds {MAX_GLB_BYTES} bytes"));
                }
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64.trim())
                    .map_err(|e| format!("model_glb_b64: {e}"))?;
                if bytes.len() > MAX_GLB_BYTES {
                    return Err(format!("uploaded model exceeds {MAX_GLB_BYTES} bytes"));
                }
                let mesh = parse_glb(&bytes).map_err(|e| format!("uploaded model: {e}"))?;
                Ok((Arc::new(mesh), "inline.glb".into(), Some(bytes)))
            }
        }
    }
}

fn is_contained_relative(p: &Path) -> bool {
    p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

/// Recording names: 1 to 64 of `[A-Za-z0-9_.-]`, not starting with a dot.
pub fn is_path_safe_name(name: &str) -> bool {
    (1..=64).contains(&name.len())
        && !name.starts_with('.')
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

fn bad_pose(e: &RegistrationError) -> bool {
    matches!(
        e,
        RegistrationError::NonRigidPose
            | RegistrationError::BehindCamera(_)
            | RegistrationError::DegenerateModelBox { .. }
            | RegistrationError::DegenerateHeadBox { .. }
    )
}

impl Active {
    fn frame(&mut self, f: SessionFrame) -> Reply {
        if f.box_.is_some() && f.mask_rle.is_some() {
            return Reply::one(ServerMessage::err(ErrCode::Parse, format!("frame {}: both box and mask_rle", f.seq), false));
        }
        let result = match self.state.step(&f, &self.k) {
            Ok(r) => r,
            Err(e) => {
                let code = if bad_pose(&e) {
                    ErrCode::BadPose
                } else if matches!(e, RegistrationError::Segmentation(_)) {
                    ErrCode::Parse
                } else {
                    ErrCode::Internal
                };
                return Reply::one(ServerMessage::err(code, format!("frame {}: {e}", f.seq), false));
            }
        };
        let mut messages = vec![ServerMessage::State {
            seq: result.seq,
            model_matrix: result.model_matrix,
            s_w: result.scale.s_w,
            s_h: result.scale.s_h,
            anchor: result.anchor,
            box_m: result.box_m,
            metrics: result.metrics().and_then(|m| m.ok()),
            visible: result.visible,
            opacity: result.opacity,
        }];
        if let Some(rec) = self.recorder.as_mut() {
            if let Err(e) = rec.writer.write_frame(&f) {
                messages.push(ServerMessage::err(ErrCode::Parse, format!("frame {} not recorded: {e}", f.seq), false));
            }
        }
        Reply { messages, close: false }
    }

    fn record_start(&mut self, asset_dir: &Path, name: &str) -> Vec<ServerMessage> {
        if !is_path_safe_name(name) {
            return vec![ServerMessage::err(ErrCode::Parse, format!("recording name {name:?} is not path-safe"), false)];
        }
        let mut out = self.record_stop();
        let dir = asset_dir.join("recordings");
        let opened = (|| -> Result<Recorder, String> {
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let mut header = self.header.clone();
            if let Some(glb) = &self.inline_glb {
                let glb_name = format!("{name}.glb");
                std::fs::write(dir.join(&glb_name), glb).map_err(|e| e.to_string())?;
                header.model_ref = glb_name;
            } else if !header.model_ref.starts_with("builtin:") {
                header.model_ref = Path::new("..").join(&header.model_ref).to_string_lossy().into_owned();
            }
            header.notes = format!("recorded live session {}", name);
            let path = dir.join(format!("{name}.jsonl"));
            let file = File::create(&path).map_err(|e| e.to_string())?;
            let writer = SessionWriter::new(BufWriter::new(file), &header).map_err(|e| e.to_string())?;
            Ok(Recorder { writer, path })
        })();
        match opened {
            Ok(r) => {
                log::info!("recording to {}", r.path.display());
                self.recorder = Some(r);
            }
            Err(e) => out.push(ServerMessage::err(ErrCode::Internal, format!("cannot start recording: {e}"), false)),
        }
        out
    }

    fn record_stop(&mut self) -> Vec<ServerMessage> {
        match self.recorder.take() {
            Some(mut r) => match r.writer.flush() {
                Ok(()) => vec![],
                Err(e) => vec![ServerMessage::err(ErrCode::Internal, format!("recording {}: {e}", r.path.display()), false)],
            },
            None => vec![],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Web socket listener; `None` disables it.
    pub ws_addr: Option<SocketAddr>,
    /// Raw TCP line listener; `None` disables it.
    pub tcp_addr: Option<SocketAddr>,
    pub asset_dir: PathBuf,
}

/// Handle to a bound, running server.
pub struct RunningServer {
    pub ws_addr: Option<SocketAddr>,
    pub tcp_addr: Option<SocketAddr>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningServer {
    /// Stops accepting and waits for the listeners to wind down.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
    }

    /// Waits until the listeners exit (normally never).
    pub async fn wait(self) {
        for t in self.tasks {
            let _ = t.await;
        }
    }
}

/// Binds both listeners, failing before any connection is accepted if either is unavailable.
pub async fn bind(cfg: ServerConfig) -> std::io::Result<RunningServer> {
    if !cfg.asset_dir.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("asset directory {} does not exist", cfg.asset_dir.display()),
        ));
    }
    let ws = match cfg.ws_addr {
        Some(a) => Some(TcpListener::bind(a).await?),
        None => None,
    };
    let tcp = match cfg.tcp_addr {
        Some(a) => Some(TcpListener::bind(a).await?),
        None => None,
    };
    let (tx, rx) = watch::channel(false);
    let assets = Arc::new(cfg.asset_dir);
    let mut tasks = Vec::new();
    let mut server = RunningServer { ws_addr: None, tcp_addr: None, shutdown: tx, tasks: Vec::new() };

    if let Some(listener) = ws {
        server.ws_addr = Some(listener.local_addr()?);
        let app = Router::new().route("/session", get(ws_upgrade)).with_state(assets.clone());
        let mut rx = rx.clone();
        tasks.push(tokio::spawn(async move {
            let stop = async move {
                let _ = rx.wait_for(|v| *v).await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
                log::error!("web socket listener: {e}");
            }
        }));
    }
    if let Some(listener) = tcp {
        server.tcp_addr = Some(listener.local_addr()?);
        let mut rx = rx.clone();
        tasks.push(tokio::spawn(async move {
            loop {
                tokio::select! {
                    _ = rx.wait_for(|v| *v) => break,
                    accepted = listener.accept() => match accepted {
                        Ok((stream, peer)) => {
                            let assets = assets.clone();
                            tokio::spawn(async move {
                                if let Err(e) = tcp_connection(stream, assets).await {
                                    log::debug!("tcp {peer}: {e}");
                                }
                            });
                        }
                        Err(e) => log::warn!("tcp accept: {e}"),
                    }
                }
            }
        }));
    }
    server.tasks = tasks;
    Ok(server)
}

/// Runs until Ctrl-C.
pub async fn serve(cfg: ServerConfig) -> std::io::Result<()> {
    let server = bind(cfg).await?;
    if let Some(a) = server.ws_addr {
        log::info!("web socket endpoint ws://{a}/session");
    }
    if let Some(a) = server.tcp_addr {
        log::info!("tcp line endpoint {a}");
    }
    tokio::signal::ctrl_c().await?;
    server.shutdown().await;
    Ok(())
}

async fn tcp_connection(stream: TcpStream, assets: Arc<PathBuf>) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut conn = Connection::with_shared_dir(assets);
    let mut buf = Vec::new();
    let outcome = loop {
        buf.clear();
        let n = (&mut reader).take(MAX_MESSAGE_BYTES as u64 + 1).read_until(b'\n', &mut buf).await?;
        if n == 0 {
            break Ok(());
        }
        let reply = if buf.len() > MAX_MESSAGE_BYTES {
            Reply::one(ServerMessage::err(ErrCode::Parse, format!("message exceeds {MAX_MESSAGE_BYTES} bytes"), true))
        } else {
            match std::str::from_utf8(&buf) {
                Ok(t) if t.trim().is_empty() => continue,
                Ok(t) => conn.handle_text(t),
                Err(_) => Reply::one(ServerMessage::err(ErrCode::Parse, "message is not UTF-8", conn.active.is_none())),
            }
        };
        let mut out = String::new();
        for m in &reply.messages {
            out.push_str(&m.to_line());
            out.push('\n');
        }
        write.write_all(out.as_bytes()).await?;
        if reply.close {
            break Ok(());
        }
    };
    conn.finish();
    write.shutdown().await.ok();
    outcome
}

async fn ws_upgrade(ws: WebSocketUpgrade, AxumState(assets): AxumState<Arc<PathBuf>>) -> axum::response::Response {
    ws.max_message_size(MAX_MESSAGE_BYTES).on_upgrade(move |socket| ws_connection(socket, assets))
}

async fn ws_connection(mut socket: WebSocket, assets: Arc<PathBuf>) {
    let mut conn = Connection::with_shared_dir(assets);
    while let Some(Ok(msg)) = socket.recv().await {
        let reply = match msg {
            Message::Text(t) => conn.handle_text(t.as_str()),
            Message::Binary(b) => match std::str::from_utf8(&b) {
                Ok(t) => conn.handle_text(t),
                Err(_) => Reply::one(ServerMessage::err(ErrCode::Parse, "message is not UTF-8", conn.active.is_none())),
            },
            Message::Close(_) => break,
            _ => continue,
        };
        let mut failed = false;
        for m in &reply.messages {
            if socket.send(Message::Text(m.to_line().into())).await.is_err() {
                failed = true;
                break;
            }
        }
        if failed {
            break;
        }
        if reply.close {
            let _ = socket.send(Message::Close(None)).await;
            break;
        }
    }
    conn.finish();
}
