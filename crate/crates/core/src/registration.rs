//! Per-session registration state: pose tracking, auto-scaling and manual
//! adjustments, producing the model transform and projected model box per frame.

use std::sync::Arc;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{dimension_errors, iou, DimensionErrors, EvalError};
use crate::geometry::{
    compose, invert, project_point, CameraIntrinsics, GeometryError, PixelPoint, RigidPose,
    ScaleFactors,
};
use crate::mesh::{project_mesh_bbox, Mesh, MeshError, Rect};
use crate::segmentation::{self, SegmentationError};
use crate::session::SessionFrame;

/// Minimum projected model extent, in pixels, for scale factors to be defined.
pub const MIN_MODEL_EXTENT_PX: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("pose is missing or not a rigid transform")]
    NonRigidPose,
    #[error("projection failed: {0}")]
    BehindCamera(String),
    #[error("projected model box is degenerate ({w} x {h})")]
    DegenerateModelBox { w: f64, h: f64 },
    #[error("head box is degenerate ({w} x {h})")]
    DegenerateHeadBox { w: f64, h: f64 },
    #[error("{field} out of range: {reason}")]
    Range { field: &'static str, reason: String },
    #[error("auto-scale is disabled")]
    NoOp,
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Mesh(MeshError),
}

impl From<MeshError> for RegistrationError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::BehindCamera { .. } => RegistrationError::BehindCamera(e.to_string()),
            other => RegistrationError::Mesh(other),
        }
    }
}

impl From<GeometryError> for RegistrationError {
    fn from(e: GeometryError) -> Self {
        RegistrationError::BehindCamera(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RegistrationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoScaleMode {
    #[default]
    Off,
    /// Rescale once, at the next frame carrying a head observation.
    #[serde(rename = "oneshot")]
    OneShot,
    /// Rescale on every frame carrying a head observation.
    Continuous,
}

impl std::str::FromStr for AutoScaleMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "off" => Ok(Self::Off),
            "oneshot" | "one-shot" => Ok(Self::OneShot),
            "continuous" => Ok(Self::Continuous),
            other => Err(format!("unknown auto-scale mode '{other}' (expected off, oneshot or continuous)")),
        }
    }
}

/// Partial update of the user-adjustable parameters. `None` leaves a field unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManualParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manual_scale: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<RigidPose>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opacity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visible: Option<bool>,
    /// `true` selects continuous auto-scaling, `false` turns it off.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auto_scale_enabled: Option<bool>,
    /// `true` arms a one-shot rescale on the next frame with a head observation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auto_scale_once: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_scale: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing_alpha: Option<f64>,
    /// `true` resets the image-space scale to identity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reset_scale: Option<bool>,
}

/// Observable output of one registration step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub seq: u64,
    /// Smoothed `pose ∘ offset`.
    pub model_matrix: RigidPose,
    pub scale: ScaleFactors,
    /// Projected model box `B_m`.
    pub box_m: Rect,
    /// Projected face origin, the fixed point of image-space scaling.
    pub anchor: PixelPoint,
    /// Head box `B_i` in image pixels, when the frame carried one.
    pub head_box: Option<Rect>,
    pub visible: bool,
    pub opacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub ratio_w: f64,
    pub ratio_h: f64,
    pub e_w_pct: f64,
    pub e_h_pct: f64,
    pub iou: f64,
}

impl FrameResult {
    /// Overlay metrics against the head box, if one was observed.
    pub fn metrics(&self) -> Option<std::result::Result<FrameMetrics, EvalError>> {
        let head = self.head_box?;
        Some((|| {
            let DimensionErrors { ratio_w, ratio_h, e_w_pct, e_h_pct } = dimension_errors(&head, &self.box_m)?;
            Ok(FrameMetrics { ratio_w, ratio_h, e_w_pct, e_h_pct, iou: iou(&head, &self.box_m)? })
        })())
    }
}

/// Scale factors `(w_i / w_m, h_i / h_m)`, clamped.
pub fn compute_scale_factors(head: &Rect, model: &Rect) -> Result<ScaleFactors> {
    let (sw, sh) = raw_ratios(head, model)?;
    Ok(ScaleFactors::clamped(sw, sh))
}

fn raw_ratios(head: &Rect, model: &Rect) -> Result<(f64, f64)> {
    if !(model.w > MIN_MODEL_EXTENT_PX && model.h > MIN_MODEL_EXTENT_PX) || !model.is_finite() {
        return Err(RegistrationError::DegenerateModelBox { w: model.w, h: model.h });
    }
    if head.is_degenerate() || !head.is_finite() {
        return Err(RegistrationError::DegenerateHeadBox { w: head.w, h: head.h });
    }
    Ok((head.w / model.w, head.h / model.h))
}

/// State of one registration session.
#[derive(Debug, Clone)]
pub struct RegistrationState {
    model: Arc<Mesh>,
    offset: RigidPose,
    offset_inv: RigidPose,
    scale: ScaleFactors,
    manual_scale: [f64; 3],
    opacity: f64,
    visible: bool,
    auto_scale: AutoScaleMode,
    one_shot_pending: bool,
    uniform_scale: bool,
    smoothing_alpha: f64,
    last_pose: Option<RigidPose>,
    min_component_px: usize,
}

impl RegistrationState {
    pub fn new(model: Arc<Mesh>) -> Self {
        Self {
            model,
            offset: RigidPose::IDENTITY,
            offset_inv: RigidPose::IDENTITY,
            scale: ScaleFactors::IDENTITY,
            manual_scale: [1.0; 3],
            opacity: 1.0,
            visible: true,
            auto_scale: AutoScaleMode::Off,
            one_shot_pending: false,
            uniform_scale: false,
            smoothing_alpha: 1.0,
            last_pose: None,
            min_component_px: segmentation::DEFAULT_MIN_COMPONENT_PX,
        }
    }

    pub fn with_auto_scale(mut self, mode: AutoScaleMode) -> Self {
        self.set_auto_scale_mode(mode);
        self
    }

    pub fn model(&self) -> &Arc<Mesh> {
        &self.model
    }

    pub fn offset(&self) -> &RigidPose {
        &self.offset
    }

    pub fn scale(&self) -> ScaleFactors {
        self.scale
    }

    pub fn manual_scale(&self) -> [f64; 3] {
        self.manual_scale
    }

    pub fn opacity(&self) -> f64 {
        self.opacity
    }

    pub fn visible(&self) -> bool {
        self.visible
    }

    pub fn auto_scale_mode(&self) -> AutoScaleMode {
        self.auto_scale
    }

    pub fn auto_scale_enabled(&self) -> bool {
        self.auto_scale == AutoScaleMode::Continuous || self.one_shot_pending
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn last_pose(&self) -> Option<&RigidPose> {
        self.last_pose.as_ref()
    }

    pub fn set_auto_scale_mode(&mut self, mode: AutoScaleMode) {
        self.auto_scale = mode;
        self.one_shot_pending = mode == AutoScaleMode::OneShot;
    }

    pub fn set_min_component_px(&mut self, px: usize) {
        self.min_component_px = px;
    }

    /// Validates every supplied field before applying any of them.
    pub fn set_manual(&mut self, p: &ManualParams) -> Result<()> {
        if let Some(s) = p.manual_scale {
            if !s.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(RegistrationError::Range { field: "manual_scale", reason: format!("{s:?} must be positive") });
            }
        }
        let offset_inv = match &p.offset {
            Some(o) if !o.is_rigid() => {
                return Err(RegistrationError::Range { field: "offset", reason: "must be a rigid transform".into() })
            }
            Some(o) => Some(invert(o).map_err(|_| RegistrationError::Range {
                field: "offset",
                reason: "not invertible".into(),
            })?),
            None => None,
        };
        if let Some(o) = p.opacity {
            if !(0.0..=1.0).contains(&o) {
                return Err(RegistrationError::Range { field: "opacity", reason: format!("{o} not in [0, 1]") });
            }
        }
        if let Some(a) = p.smoothing_alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(RegistrationError::Range { field: "smoothing_alpha", reason: format!("{a} not in (0, 1]") });
            }
        }

        if let Some(s) = p.manual_scale {
            self.manual_scale = s;
        }
        if let (Some(o), Some(inv)) = (p.offset, offset_inv) {
            self.offset = o;
            self.offset_inv = inv;
        }
        if let Some(o) = p.opacity {
            self.opacity = o;
        }
        if let Some(v) = p.visible {
            self.visible = v;
        }
        if let Some(on) = p.auto_scale_enabled {
            self.auto_scale = if on { AutoScaleMode::Continuous } else { AutoScaleMode::Off };
            if !on {
                self.one_shot_pending = false;
            }
        }
        if p.auto_scale_once == Some(true) {
            self.one_shot_pending = true;
        }
        if let Some(u) = p.uniform_scale {
            self.uniform_scale = u;
        }
        if let Some(a) = p.smoothing_alpha {
            self.smoothing_alpha = a;
        }
        if p.reset_scale == Some(true) {
            self.scale = ScaleFactors::IDENTITY;
        }
        Ok(())
    }

    /// Attaches the model to the face pose and applies exponential smoothing.
    pub fn update_pose(&mut self, face_pose: &RigidPose) -> Result<RigidPose> {
        if !face_pose.is_rigid() {
            return Err(RegistrationError::NonRigidPose);
        }
        let raw = if self.offset == RigidPose::IDENTITY { *face_pose } else { compose(face_pose, &self.offset) };
        let out = match self.last_pose {
            Some(last) if self.smoothing_alpha < 1.0 => blend(&last, &raw, self.smoothing_alpha),
            _ => raw,
        };
        self.last_pose = Some(out);
        Ok(out)
    }

    /// Projected face origin for a (smoothed) model matrix.
    pub fn anchor_for(&self, k: &CameraIntrinsics, model_matrix: &RigidPose) -> Result<PixelPoint> {
        let face = if self.offset == RigidPose::IDENTITY {
            model_matrix.origin()
        } else {
            compose(model_matrix, &self.offset_inv).origin()
        };
        Ok(project_point(k, face)?)
    }

    fn projection_pose(&self, model_matrix: &RigidPose) -> RigidPose {
        if self.manual_scale == [1.0; 3] {
            *model_matrix
        } else {
            let [sx, sy, sz] = self.manual_scale;
            compose(model_matrix, &RigidPose::scaling(sx, sy, sz))
        }
    }

    /// `B_m` for a model matrix under the current scale.
    pub fn model_box(&self, k: &CameraIntrinsics, model_matrix: &RigidPose) -> Result<(Rect, PixelPoint)> {
        let anchor = self.anchor_for(k, model_matrix)?;
        let pose = self.projection_pose(model_matrix);
        Ok((project_mesh_bbox(k, &pose, self.scale, anchor, &self.model)?, anchor))
    }

    fn rescale(&mut self, head: &Rect, model: &Rect) -> Result<()> {
        let (sw, sh) = raw_ratios(head, model)?;
        let (sw, sh) = if self.uniform_scale {
            let g = (sw * sh).sqrt();
            (g, g)
        } else {
            (sw, sh)
        };
        self.scale = ScaleFactors::clamped(self.scale.s_w * sw, self.scale.s_h * sh);
        Ok(())
    }

    /// Rescales so the model box matches `head`, for the given model matrix.
    pub fn apply_auto_scale(&mut self, head: &Rect, k: &CameraIntrinsics, model_matrix: &RigidPose) -> Result<()> {
        if !self.auto_scale_enabled() {
            return Err(RegistrationError::NoOp);
        }
        let (b_m, _) = self.model_box(k, model_matrix)?;
        self.rescale(head, &b_m)?;
        self.one_shot_pending = false;
        Ok(())
    }

    /// Head box of a frame in image pixels. Masks are resolution-scaled to the image;
    /// a mask with no surviving component yields `None`.
    pub fn head_box(&self, frame: &SessionFrame, k: &CameraIntrinsics) -> Result<Option<Rect>> {
        if let Some(b) = frame.box_ {
            return Ok(Some(b));
        }
        let Some(m) = &frame.mask_rle else { return Ok(None) };
        match segmentation::box_from_rle(m.w, m.h, &m.runs, self.min_component_px) {
            Ok(r) => Ok(Some(r.rescaled(k.image_w as f64 / m.w as f64, k.image_h as f64 / m.h as f64))),
            Err(SegmentationError::NoHeadDetected) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// One pipeline step: track, project, optionally auto-scale.
    pub fn step(&mut self, frame: &SessionFrame, k: &CameraIntrinsics) -> Result<FrameResult> {
        let pose = frame.pose.as_ref().ok_or(RegistrationError::NonRigidPose)?;
        let head = self.head_box(frame, k)?;
        let model_matrix = self.update_pose(pose)?;
        let anchor = self.anchor_for(k, &model_matrix)?;
        let proj = self.projection_pose(&model_matrix);
        let mut box_m = project_mesh_bbox(k, &proj, self.scale, anchor, &self.model)?;
        if let Some(h) = &head {
            if self.auto_scale_enabled() {
                self.rescale(h, &box_m)?;
                self.one_shot_pending = false;
                box_m = project_mesh_bbox(k, &proj, self.scale, anchor, &self.model)?;
            }
        }
        Ok(FrameResult {
            seq: frame.seq,
            model_matrix,
            scale: self.scale,
            box_m,
            anchor,
            head_box: head,
            visible: self.visible,
            opacity: self.opacity,
        })
    }
}

/// Linear translation blend and shortest-arc rotation blend from `from` toward `to`.
fn blend(from: &RigidPose, to: &RigidPose, alpha: f64) -> RigidPose {
    let q_from = rotation_of(from);
    let mut q_to = rotation_of(to);
    if q_from.coords.dot(&q_to.coords) < 0.0 {
        q_to = UnitQuaternion::new_unchecked(-q_to.into_inner());
    }
    let q = q_from.try_slerp(&q_to, alpha, 1e-12).unwrap_or_else(|| q_from.nlerp(&q_to, alpha));
    let t = from.translation_vector() + (to.translation_vector() - from.translation_vector()) * alpha;
    RigidPose::from_quaternion_translation(&q, t)
}

fn rotation_of(p: &RigidPose) -> UnitQuaternion<f64> {
    UnitQuaternion::from_matrix(&p.linear())
}
