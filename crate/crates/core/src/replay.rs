//! Offline replay of recorded sessions through the registration pipeline,
//! producing per-frame metrics rows and their CSV form.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::evaluation::{EvalError, MetricsRow};
use crate::geometry::intrinsics_from_fov;
use crate::mesh::Mesh;
use crate::registration::{AutoScaleMode, ManualParams, RegistrationError, RegistrationState};
use crate::session::{SessionError, SessionFrame, SessionHeader};

pub const CSV_HEADER: &str = "seq,t_ms,dof_label,angle_deg,ratio_w,ratio_h,e_w_pct,e_h_pct,iou";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("invalid camera in session header: {0}")]
    Camera(String),
    #[error("invalid replay option: {0}")]
    Option(RegistrationError),
    #[error("frame seq {seq}: {source}")]
    Frame { seq: u64, source: RegistrationError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    pub auto_scale: AutoScaleMode,
    /// Pose smoothing factor in (0, 1]; 1 disables smoothing.
    pub alpha: f64,
    pub uniform_scale: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { auto_scale: AutoScaleMode::Off, alpha: 1.0, uniform_scale: false }
    }
}

/// Runs every frame through one registration state. Frames without a head
/// observation advance the tracker but yield no row.
pub fn replay<I>(header: &SessionHeader, frames: I, model: Arc<Mesh>, opts: &ReplayOptions) -> Result<Vec<MetricsRow>, ReplayError>
where
    I: IntoIterator<Item = Result<SessionFrame, SessionError>>,
{
    let k = intrinsics_from_fov(header.fov_v_deg, header.image_w, header.image_h).map_err(|e| ReplayError::Camera(e.to_string()))?;
    let mut state = RegistrationState::new(model).with_auto_scale(opts.auto_scale);
    state
        .set_manual(&ManualParams { smoothing_alpha: Some(opts.alpha), uniform_scale: Some(opts.uniform_scale), ..Default::default() })
        .map_err(ReplayError::Option)?;

    let mut rows = Vec::new();
    for frame in frames {
        let frame = frame?;
        let seq = frame.seq;
        let result = state.step(&frame, &k).map_err(|source| ReplayError::Frame { seq, source })?;
        let Some(head) = result.head_box else { continue };
        match MetricsRow::evaluate(seq, frame.t_ms, frame.dof_label, frame.angle_deg, &head, &result.box_m) {
            Ok(row) => rows.push(row),
            Err(e @ (EvalError::DegenerateGroundTruth { .. } | EvalError::BothEmpty)) => {
                log::warn!("frame seq {seq}: skipped in metrics: {e}");
            }
            Err(e) => log::warn!("frame seq {seq}: {e}"),
        }
    }
    Ok(rows)
}

/// `%.9g`-style rendering: 9 significant digits, trailing zeros trimmed.
pub fn fmt_g9(v: f64) -> String {
    const P: i32 = 9;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_csv<W: Write>(mut out: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.seq,
            fmt_g9(r.t_ms),
            r.dof_label,
            fmt_g9(r.angle_deg),
            fmt_g9(r.ratio_w),
            fmt_g9(r.ratio_h),
            fmt_g9(r.e_w_pct),
            fmt_g9(r.e_h_pct),
            fmt_g9(r.iou)
        )?;
    }
    Ok(())
}

pub fn csv_string(rows: &[MetricsRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}
