//! Recorded tracking sessions: a line-oriented JSON file format and a
//! synthetic generator for head-rotation sweeps with known ground truth.
//!
//! Line 1 is the header object, every following line one frame object.
//! Reals are written in shortest round-trip decimal form, so reading back a
//! written file reproduces every value bit-for-bit.

use std::io::{BufRead, Write};

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::DofLabel;
use crate::geometry::{intrinsics_from_fov, RigidPose, ScaleFactors, DEFAULT_FOV_V_DEG};
use crate::mesh::{ellipsoid, project_mesh_bbox, Rect, HEAD_SEMI_AXES};
use crate::models;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unsupported session format version {found} (expected {FORMAT_VERSION})")]
    FormatVersionMismatch { found: i64 },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: seq {seq} does not increase past {prev}")]
    NonMonotonicSeq { line: usize, prev: u64, seq: u64 },
    #[error("invalid synthetic session config: {0}")]
    Config(String),
    #[error("session is empty (no header line)")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SessionError {
    /// 1-based line number for errors tied to a line.
    pub fn line(&self) -> Option<usize> {
        match self {
            SessionError::MalformedLine { line, .. } | SessionError::NonMonotonicSeq { line, .. } => Some(*line),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, SessionError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format_version: u32,
    pub image_w: u32,
    pub image_h: u32,
    pub fov_v_deg: f64,
    pub model_ref: String,
    #[serde(default)]
    pub notes: String,
}

impl SessionHeader {
    pub fn new(image_w: u32, image_h: u32, fov_v_deg: f64, model_ref: impl Into<String>) -> Self {
        Self { format_version: FORMAT_VERSION, image_w, image_h, fov_v_deg, model_ref: model_ref.into(), notes: String::new() }
    }

    fn validate(&self, line: usize) -> Result<()> {
        if self.image_w == 0 || self.image_h == 0 {
            return Err(SessionError::MalformedLine { line, reason: "image dimensions must be >= 1".into() });
        }
        if !(self.fov_v_deg > 0.0 && self.fov_v_deg < 180.0) {
            return Err(SessionError::MalformedLine { line, reason: format!("fov_v_deg {} not in (0, 180)", self.fov_v_deg) });
        }
        Ok(())
    }
}

/// Run-length encoded head mask (see [`crate::segmentation`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub w: u32,
    pub h: u32,
    pub runs: Vec<u32>,
}

/// One timestamped tracking sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFrame {
    pub seq: u64,
    #[serde(default)]
    pub t_ms: f64,
    /// Face pose; serialized as 16 column-major reals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<RigidPose>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub box_: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<RleMask>,
    #[serde(default)]
    pub dof_label: DofLabel,
    /// Ground-truth rotation; NaN (written as `null`) for live captures.
    #[serde(default = "nan", with = "nan_as_null")]
    pub angle_deg: f64,
}

fn nan() -> f64 {
    f64::NAN
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl SessionFrame {
    pub fn new(seq: u64, t_ms: f64, pose: RigidPose) -> Self {
        Self { seq, t_ms, pose: Some(pose), box_: None, mask_rle: None, dof_label: DofLabel::Static, angle_deg: f64::NAN }
    }

    /// Field-wise equality treating NaN angles as equal.
    pub fn same_as(&self, other: &SessionFrame) -> bool {
        let angles = self.angle_deg == other.angle_deg || (self.angle_deg.is_nan() && other.angle_deg.is_nan());
        angles
            && self.seq == other.seq
            && self.t_ms == other.t_ms
            && self.pose == other.pose
            && self.box_ == other.box_
            && self.mask_rle == other.mask_rle
            && self.dof_label == other.dof_label
    }

    fn check_observation(&self) -> std::result::Result<(), String> {
        if self.box_.is_some() && self.mask_rle.is_some() {
            return Err("frame carries both box and mask_rle".into());
        }
        Ok(())
    }
}

/// Streams a session: header first, then frames with strictly increasing `seq`.
pub struct SessionWriter<W: Write> {
    out: W,
    last_seq: Option<u64>,
    line: usize,
}

impl<W: Write> SessionWriter<W> {
    pub fn new(mut out: W, header: &SessionHeader) -> Result<Self> {
        serde_json::to_writer(&mut out, header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(Self { out, last_seq: None, line: 1 })
    }

    pub fn write_frame(&mut self, frame: &SessionFrame) -> Result<()> {
        let line = self.line + 1;
        if let Some(prev) = self.last_seq {
            if frame.seq <= prev {
                return Err(SessionError::NonMonotonicSeq { line, prev, seq: frame.seq });
            }
        }
        frame.check_observation().map_err(|reason| SessionError::MalformedLine { line, reason })?;
        if frame.pose.is_none() {
            return Err(SessionError::MalformedLine { line, reason: "frame has no pose".into() });
        }
        serde_json::to_writer(&mut self.out, frame).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.last_seq = Some(frame.seq);
        self.line = line;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_session(header: &SessionHeader, frames: &[SessionFrame]) -> Result<Vec<u8>> {
    let mut w = SessionWriter::new(Vec::new(), header)?;
    for f in frames {
        w.write_frame(f)?;
    }
    Ok(w.into_inner())
}

/// Iterator over the frames of a session stream.
pub struct SessionReader<R: BufRead> {
    input: R,
    line: usize,
    last_seq: Option<u64>,
    buf: String,
    failed: bool,
}

pub fn read_session<R: BufRead>(mut input: R) -> Result<(SessionHeader, SessionReader<R>)> {
    let mut buf = String::new();
    let mut line = 0;
    loop {
        buf.clear();
        if input.read_line(&mut buf)? == 0 {
            return Err(SessionError::MissingHeader);
        }
        line += 1;
        if !buf.trim().is_empty() {
            break;
        }
    }
    let value: serde_json::Value = serde_json::from_str(buf.trim())
        .map_err(|e| SessionError::MalformedLine { line, reason: format!("header: {e}") })?;
    match value.get("format_version").and_then(|v| v.as_i64()) {
        Some(1) => {}
        Some(found) => return Err(SessionError::FormatVersionMismatch { found }),
        None => return Err(SessionError::MalformedLine { line, reason: "header lacks integer format_version".into() }),
    }
    let header: SessionHeader =
        serde_json::from_value(value).map_err(|e| SessionError::MalformedLine { line, reason: format!("header: {e}") })?;
    header.validate(line)?;
    Ok((header, SessionReader { input, line, last_seq: None, buf, failed: false }))
}

/// Reads a whole session held in memory.
pub fn read_session_bytes(bytes: &[u8]) -> Result<(SessionHeader, Vec<SessionFrame>)> {
    let (header, reader) = read_session(bytes)?;
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}

impl<R: BufRead> SessionReader<R> {
    fn parse_line(&mut self) -> Result<SessionFrame> {
        let line = self.line;
        let frame: SessionFrame = serde_json::from_str(self.buf.trim())
            .map_err(|e| SessionError::MalformedLine { line, reason: e.to_string() })?;
        if frame.pose.is_none() {
            return Err(SessionError::MalformedLine { line, reason: "frame has no pose".into() });
        }
        frame.check_observation().map_err(|reason| SessionError::MalformedLine { line, reason })?;
        if let Some(prev) = self.last_seq {
            if frame.seq <= prev {
                return Err(SessionError::NonMonotonicSeq { line, prev, seq: frame.seq });
            }
        }
        self.last_seq = Some(frame.seq);
        Ok(frame)
    }
}

impl<R: BufRead> Iterator for SessionReader<R> {
    type Item = Result<SessionFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.line += 1;
            if self.buf.trim().is_empty() {
                continue;
            }
            let r = self.parse_line();
            self.failed = r.is_err();
            return Some(r);
        }
    }
}

/// Parameters of a synthetic head-rotation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dof: DofLabel,
    pub max_deg: f64,
    pub frames: usize,
    /// Ground-truth head ellipsoid semi-axes (x, y, z), world units.
    pub head: [f64; 3],
    /// Depth of the head center.
    pub z0: f64,
    /// Standard deviation of the random-axis rotation perturbation, degrees.
    pub noise_rot_deg: f64,
    /// Standard deviation of the translation perturbation, as a fraction of `z0`.
    pub noise_trans: f64,
    /// Registered-model size relative to the ground-truth head, (width, height).
    pub scale_mismatch: (f64, f64),
    pub seed: u64,
    /// Sweep 0 → max → 0 instead of 0 → max.
    pub return_sweep: bool,
    pub image_w: u32,
    pub image_h: u32,
    pub fov_v_deg: f64,
    pub fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dof: DofLabel::Yaw,
            max_deg: 45.0,
            frames: 90,
            head: HEAD_SEMI_AXES,
            z0: 0.5,
            noise_rot_deg: 0.0,
            noise_trans: 0.0,
            scale_mismatch: (1.0, 1.0),
            seed: 0,
            return_sweep: false,
            image_w: 640,
            image_h: 480,
            fov_v_deg: DEFAULT_FOV_V_DEG,
            fps: 30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SessionError::Config(m));
        if self.frames < 2 {
            return bad(format!("frames must be >= 2, got {}", self.frames));
        }
        if self.dof != DofLabel::Static && !(self.max_deg > 0.0 && self.max_deg < 90.0) {
            return bad(format!("max_deg must lie in (0, 90), got {}", self.max_deg));
        }
        if !self.head.iter().all(|a| a.is_finite() && *a > 0.0) {
            return bad(format!("head semi-axes must be positive, got {:?}", self.head));
        }
        let reach = self.head.iter().cloned().fold(0.0, f64::max)
            * self.scale_mismatch.0.max(self.scale_mismatch.1).max(1.0);
        if !(self.z0.is_finite() && self.z0 > 1.5 * reach) {
            return bad(format!("z0 = {} puts the head too close to the camera", self.z0));
        }
        if !(self.noise_rot_deg >= 0.0 && self.noise_trans >= 0.0 && self.noise_rot_deg.is_finite() && self.noise_trans.is_finite()) {
            return bad("noise standard deviations must be finite and >= 0".into());
        }
        let (sw, sh) = self.scale_mismatch;
        if !(sw > 0.0 && sh > 0.0 && sw.is_finite() && sh.is_finite()) {
            return bad(format!("scale_mismatch must be positive, got ({sw}, {sh})"));
        }
        if self.image_w == 0 || self.image_h == 0 || !(self.fov_v_deg > 0.0 && self.fov_v_deg < 180.0) {
            return bad("camera must have non-zero dimensions and a field of view in (0, 180)".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        Ok(())
    }

    /// Ground-truth angle of frame `k`, degrees.
    pub fn angle_at(&self, k: usize) -> f64 {
        if self.dof == DofLabel::Static {
            return 0.0;
        }
        let n = (self.frames - 1) as f64;
        if self.return_sweep {
            let phase = k as f64 / n;
            self.max_deg * (1.0 - (2.0 * phase - 1.0).abs())
        } else {
            self.max_deg * k as f64 / n
        }
    }

    /// Semi-axes of the registered model: the head scaled by the mismatch in
    /// width and height, depth by their geometric mean.
    pub fn model_semi_axes(&self) -> [f64; 3] {
        let (sw, sh) = self.scale_mismatch;
        [self.head[0] * sw, self.head[1] * sh, self.head[2] * (sw * sh).sqrt()]
    }

    pub fn model_ref(&self) -> String {
        let axes = self.model_semi_axes();
        if axes == HEAD_SEMI_AXES {
            models::HEAD_ELLIPSOID.to_string()
        } else {
            models::ellipsoid_ref(axes)
        }
    }
}

/// Head rotation for `dof` by `deg` about the head center (pitch = X, yaw = Y, roll = Z).
pub fn dof_rotation(dof: DofLabel, deg: f64) -> RigidPose {
    let r = deg.to_radians();
    match dof {
        DofLabel::Pitch => RigidPose::rotation_x(r),
        DofLabel::Yaw => RigidPose::rotation_y(r),
        DofLabel::Roll => RigidPose::rotation_z(r),
        DofLabel::Static => RigidPose::IDENTITY,
    }
}

/// Noise-free face pose for a head rotated by `deg` with its center at depth `z0`.
pub fn true_pose(dof: DofLabel, deg: f64, z0: f64) -> RigidPose {
    RigidPose::translation(0.0, 0.0, z0).compose(&dof_rotation(dof, deg))
}

pub fn synth_session(cfg: &SynthConfig) -> Result<(SessionHeader, Vec<SessionFrame>)> {
    cfg.validate()?;
    let k = intrinsics_from_fov(cfg.fov_v_deg, cfg.image_w, cfg.image_h).map_err(|e| SessionError::Config(e.to_string()))?;
    let truth = ellipsoid(cfg.head);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut frames = Vec::with_capacity(cfg.frames);
    for i in 0..cfg.frames {
        let angle = cfg.angle_at(i);
        let exact = true_pose(cfg.dof, angle, cfg.z0);
        let head_box = project_mesh_bbox(&k, &exact, ScaleFactors::IDENTITY, k.principal_point(), &truth)
            .map_err(|e| SessionError::Config(format!("frame {i}: {e}")))?;

        // Draw the same amount of randomness per frame regardless of sigma.
        let axis: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let angle_noise: f64 = StandardNormal.sample(&mut rng);
        let trans_noise: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));

        let mut pose = exact;
        if cfg.noise_rot_deg > 0.0 {
            let axis = Vector3::from(axis);
            let axis = if axis.norm() > 1e-12 { Unit::new_normalize(axis) } else { Vector3::x_axis() };
            let q = UnitQuaternion::from_axis_angle(&axis, (angle_noise * cfg.noise_rot_deg).to_radians());
            let noise = RigidPose::from_quaternion_translation(&q, Vector3::zeros());
            pose = RigidPose::translation(0.0, 0.0, cfg.z0).compose(&noise).compose(&dof_rotation(cfg.dof, angle));
        }
        if cfg.noise_trans > 0.0 {
            let s = cfg.noise_trans * cfg.z0;
            pose = RigidPose::translation(trans_noise[0] * s, trans_noise[1] * s, trans_noise[2] * s).compose(&pose);
        }

        frames.push(SessionFrame {
            seq: i as u64,
            t_ms: i as f64 * 1000.0 / cfg.fps,
            pose: Some(pose),
            box_: Some(head_box),
            mask_rle: None,
            dof_label: cfg.dof,
            angle_deg: angle,
        });
    }

    let mut header = SessionHeader::new(cfg.image_w, cfg.image_h, cfg.fov_v_deg, cfg.model_ref());
    header.notes = format!(
        "synthetic {} sweep to {} deg over {} frames{}; head {:?} at z0={}; noise_rot_deg={} noise_trans={}; scale_mismatch={},{}; seed={}",
        cfg.dof,
        cfg.max_deg,
        cfg.frames,
        if cfg.return_sweep { " and back" } else { "" },
        cfg.head,
        cfg.z0,
        cfg.noise_rot_deg,
        cfg.noise_trans,
        cfg.scale_mismatch.0,
        cfg.scale_mismatch.1,
        cfg.seed
    );
    Ok((header, frames))
}
