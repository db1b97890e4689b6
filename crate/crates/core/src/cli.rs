//! Command-line front end. Exit codes: 0 success, 1 usage, 2 input/parse,
//! 3 runtime/IO.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::evaluation::{aggregate, DofLabel};
use crate::glb::parse_glb_asset;
use crate::mesh::mesh_aabb;
use crate::models::{resolve_model_ref, MAX_GLB_BYTES};
use crate::registration::AutoScaleMode;
use crate::replay::{fmt_g9, replay, write_csv, ReplayError, ReplayOptions};
use crate::service::{self, ServerConfig};
use crate::session::{read_session, synth_session, SessionError, SessionWriter, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "headreg", version, about = "Head model registration: synthesize, replay, serve, inspect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic head-rotation session with ground-truth boxes.
    Synth(SynthArgs),
    /// Run a session through registration and score it.
    Replay(ReplayArgs),
    /// Run the live session service.
    Serve(ServeArgs),
    /// Describe a .glb model.
    #[command(name = "glb-info")]
    GlbInfo(GlbInfoArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "yaw")]
    pub dof: DofLabel,
    #[arg(long, default_value_t = 45.0)]
    pub max_deg: f64,
    #[arg(long, default_value_t = 90)]
    pub frames: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise_rot_deg: f64,
    /// Translation noise standard deviation as a fraction of depth.
    #[arg(long, default_value_t = 0.0)]
    pub noise_trans: f64,
    /// Registered model size relative to the head, as `sw,sh`.
    #[arg(long, default_value = "1,1", value_parser = parse_pair)]
    pub scale_mismatch: (f64, f64),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep out to max-deg and back.
    #[arg(long)]
    pub return_sweep: bool,
    #[arg(long, default_value_t = 0.5)]
    pub z0: f64,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    #[arg(long, default_value_t = 50.0)]
    pub fov: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Session file.
    pub session: PathBuf,
    /// GLB path or builtin:* model; defaults to the session's model_ref.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value = "off")]
    pub auto_scale: AutoScaleMode,
    /// Pose smoothing factor in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Scale both axes by the geometric mean of the ratios.
    #[arg(long)]
    pub uniform: bool,
    /// Metrics CSV destination; stdout when omitted.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Summary JSON destination; stdout when --metrics is given, stderr otherwise.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Web socket port (path /session).
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Raw TCP line-protocol port.
    #[arg(long, default_value_t = 8766)]
    pub tcp_port: u16,
    #[arg(long, default_value = ".")]
    pub assets: PathBuf,
}

#[derive(Debug, Args)]
pub struct GlbInfoArgs {
    pub file: PathBuf,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated numbers, got {s:?}"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

struct Failure(i32, String);

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Failure(EXIT_USAGE, m.into())
    }
    fn input(m: impl Into<String>) -> Self {
        Failure(EXIT_INPUT, m.into())
    }
    fn runtime(m: impl Into<String>) -> Self {
        Failure(EXIT_RUNTIME, m.into())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Replay(a) => replay_cmd(a),
        Command::Serve(a) => serve(a),
        Command::GlbInfo(a) => glb_info(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            eprintln!("headreg: {msg}");
            code
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", path.display())))
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        dof: a.dof,
        max_deg: a.max_deg,
        frames: a.frames,
        z0: a.z0,
        noise_rot_deg: a.noise_rot_deg,
        noise_trans: a.noise_trans,
        scale_mismatch: a.scale_mismatch,
        seed: a.seed,
        return_sweep: a.return_sweep,
        image_w: a.width,
        image_h: a.height,
        fov_v_deg: a.fov,
        ..Default::default()
    };
    let (header, frames) = synth_session(&cfg).map_err(|e| Failure::usage(e.to_string()))?;
    let out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let io = |e: SessionError| Failure::runtime(e.to_string());
    let mut w = SessionWriter::new(out, &header).map_err(io)?;
    for f in &frames {
        w.write_frame(f).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn replay_cmd(a: ReplayArgs) -> Result<(), Failure> {
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(Failure::usage(format!("--alpha {} not in (0, 1]", a.alpha)));
    }
    let file = File::open(&a.session).map_err(|e| Failure::runtime(format!("cannot open {}: {e}", a.session.display())))?;
    let session_err = |e: SessionError| match e {
        SessionError::Io(e) => Failure::runtime(format!("{}: {e}", a.session.display())),
        e => Failure::input(format!("{}: {e}", a.session.display())),
    };
    let (header, frames) = read_session(BufReader::new(file)).map_err(session_err)?;
    let model = match &a.model {
        Some(m) => resolve_model_ref(m, None),
        None => resolve_model_ref(&header.model_ref, a.session.parent()),
    }
    .map_err(|e| Failure::input(e.to_string()))?;

    let opts = ReplayOptions { auto_scale: a.auto_scale, alpha: a.alpha, uniform_scale: a.uniform };
    let rows = replay(&header, frames, model, &opts).map_err(|e| match e {
        ReplayError::Session(e) => session_err(e),
        ReplayError::Option(e) => Failure::usage(e.to_string()),
        e => Failure::input(e.to_string()),
    })?;

    let io = |e: std::io::Error| Failure::runtime(e.to_string());
    match &a.metrics {
        Some(p) => {
            let mut w = create(p)?;
            write_csv(&mut w, &rows).and_then(|_| w.flush()).map_err(io)?;
        }
        None => {
            let mut w = BufWriter::new(std::io::stdout().lock());
            write_csv(&mut w, &rows).and_then(|_| w.flush()).map_err(io)?;
        }
    }

    let summary = match aggregate(&rows) {
        Ok(s) => serde_json::to_string_pretty(&s.to_json()).expect("summary serializes"),
        Err(e) => {
            log::warn!("no scored frames: {e}");
            serde_json::json!({"overall": null, "per_dof": {}, "n_frames": 0, "records": []}).to_string()
        }
    };
    match (&a.summary, &a.metrics) {
        (Some(p), _) => {
            let mut w = create(p)?;
            writeln!(w, "{summary}").and_then(|_| w.flush()).map_err(io)?;
        }
        (None, Some(_)) => writeln!(std::io::stdout().lock(), "{summary}").map_err(io)?,
        (None, None) => writeln!(std::io::stderr().lock(), "{summary}").map_err(io)?,
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let cfg = ServerConfig {
        ws_addr: Some(SocketAddr::new(a.host, a.port)),
        tcp_addr: Some(SocketAddr::new(a.host, a.tcp_port)),
        asset_dir: a.assets,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(e.to_string()))?;
    rt.block_on(service::serve(cfg)).map_err(|e| Failure::runtime(format!("serve: {e}")))
}

fn glb_info(a: GlbInfoArgs) -> Result<(), Failure> {
    let meta = std::fs::metadata(&a.file).map_err(|e| Failure::runtime(format!("{}: {e}", a.file.display())))?;
    if meta.len() > MAX_GLB_BYTES as u64 {
        return Err(Failure::input(format!("{}: {} bytes exceeds the {MAX_GLB_BYTES} byte limit", a.file.display(), meta.len())));
    }
    let bytes = std::fs::read(&a.file).map_err(|e| Failure::runtime(format!("{}: {e}", a.file.display())))?;
    let asset = parse_glb_asset(&bytes).map_err(|e| Failure::input(format!("{}: {e}", a.file.display())))?;
    let b = mesh_aabb(&asset.mesh).map_err(|e| Failure::input(e.to_string()))?;
    let (min, max) = ([b.min.x, b.min.y, b.min.z], [b.max.x, b.max.y, b.max.z]);
    let aabb = if min.iter().all(|v| *v == min[0]) && max.iter().all(|v| *v == max[0]) {
        format!("[{},{}]^3", fmt_g9(min[0]), fmt_g9(max[0]))
    } else {
        (0..3).map(|i| format!("[{},{}]", fmt_g9(min[i]), fmt_g9(max[i]))).collect::<Vec<_>>().join("x")
    };
    let mut text = format!("{} vertices, AABB {aabb}\n", asset.mesh.vertex_count());
    let tris = asset.mesh.indices().map_or(0, |i| i.len());
    text.push_str(&format!("primitives: {}, triangles: {tris}\n", asset.primitive_count));
    for w in &asset.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| Failure::runtime(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("1.25,0.8"), Ok((1.25, 0.8)));
        assert_eq!(parse_pair(" 1 , 2 "), Ok((1.0, 2.0)));
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("a,b").is_err());
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(["headreg", "synth", "--max-deg", "0"]), EXIT_USAGE);
        assert_eq!(run(["headreg", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["headreg", "synth", "--dof", "sideways"]), EXIT_USAGE);
        assert_eq!(run(["headreg", "--help"]), EXIT_OK);
    }
}
