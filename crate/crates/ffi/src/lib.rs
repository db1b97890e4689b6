//! C ABI over the registration engine.
//!
//! Every function returns an [`HrStatus`]; on failure a message is kept in
//! thread-local storage and can be read with [`hr_last_error`]. Engines are
//! opaque handles created by `hr_engine_new*` and released by
//! [`hr_engine_free`]. Matrices cross the boundary as 16 doubles in
//! column-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use headreg::evaluation;
use headreg::geometry::{intrinsics_from_fov, project_point, CameraIntrinsics, Point3, RigidPose};
use headreg::glb::parse_glb;
use headreg::mesh::Rect;
use headreg::models::{resolve_model_ref, MAX_GLB_BYTES};
use headreg::registration::{AutoScaleMode, FrameResult, ManualParams, RegistrationError, RegistrationState};
use headreg::session::SessionFrame;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Parse = 3,
    BadPose = 4,
    ModelLoad = 5,
    Internal = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrAutoScale {
    Off = 0,
    OneShot = 1,
    Continuous = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HrRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<HrRect> for Rect {
    fn from(r: HrRect) -> Rect {
        Rect::new(r.x, r.y, r.w, r.h)
    }
}

impl From<Rect> for HrRect {
    fn from(r: Rect) -> HrRect {
        HrRect { x: r.x, y: r.y, w: r.w, h: r.h }
    }
}

/// Output of one step. Metric fields are meaningful only when `has_metrics` is 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HrFrameResult {
    pub seq: u64,
    pub model_matrix: [f64; 16],
    pub s_w: f64,
    pub s_h: f64,
    pub anchor_u: f64,
    pub anchor_v: f64,
    pub box_m: HrRect,
    pub has_head_box: i32,
    pub head_box: HrRect,
    pub has_metrics: i32,
    pub ratio_w: f64,
    pub ratio_h: f64,
    pub e_w_pct: f64,
    pub e_h_pct: f64,
    pub iou: f64,
    pub visible: i32,
    pub opacity: f64,
}

impl From<&FrameResult> for HrFrameResult {
    fn from(r: &FrameResult) -> Self {
        let mut out = HrFrameResult {
            seq: r.seq,
            model_matrix: r.model_matrix.to_col_major(),
            s_w: r.scale.s_w,
            s_h: r.scale.s_h,
            anchor_u: r.anchor.u,
            anchor_v: r.anchor.v,
            box_m: r.box_m.into(),
            visible: r.visible as i32,
            opacity: r.opacity,
            ..Default::default()
        };
        if let Some(h) = r.head_box {
            out.has_head_box = 1;
            out.head_box = h.into();
        }
        if let Some(Ok(m)) = r.metrics() {
            out.has_metrics = 1;
            out.ratio_w = m.ratio_w;
            out.ratio_h = m.ratio_h;
            out.e_w_pct = m.e_w_pct;
            out.e_h_pct = m.e_h_pct;
            out.iou = m.iou;
        }
        out
    }
}

/// Opaque registration engine: one camera, one model, one tracking state.
pub struct HrEngine {
    state: RegistrationState,
    k: CameraIntrinsics,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

type Res<T> = Result<T, (HrStatus, String)>;

fn guard(f: impl FnOnce() -> Res<()>) -> HrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HrStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let what = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {what}"));
            HrStatus::Panic
        }
    }
}

fn null(name: &str) -> (HrStatus, String) {
    (HrStatus::NullArgument, format!("{name} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (HrStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn camera(image_w: u32, image_h: u32, fov_v_deg: f64) -> Res<CameraIntrinsics> {
    intrinsics_from_fov(fov_v_deg, image_w, image_h).map_err(|e| (HrStatus::InvalidArgument, e.to_string()))
}

fn reg_status(e: &RegistrationError) -> HrStatus {
    match e {
        RegistrationError::NonRigidPose
        | RegistrationError::BehindCamera(_)
        | RegistrationError::DegenerateModelBox { .. }
        | RegistrationError::DegenerateHeadBox { .. } => HrStatus::BadPose,
        RegistrationError::Range { .. } => HrStatus::InvalidArgument,
        RegistrationError::Segmentation(_) => HrStatus::Parse,
        _ => HrStatus::Internal,
    }
}

unsafe fn engine_mut<'a>(engine: *mut HrEngine) -> Res<&'a mut HrEngine> {
    engine.as_mut().ok_or_else(|| null("engine"))
}

/// Message describing the last failed call on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an engine from a model reference (`builtin:*` or a `.glb` path).
///
/// # Safety
/// `model_ref` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_new(
    model_ref: *const c_char,
    image_w: u32,
    image_h: u32,
    fov_v_deg: f64,
    out: *mut *mut HrEngine,
) -> HrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let model_ref = str_arg(model_ref, "model_ref")?;
        let k = camera(image_w, image_h, fov_v_deg)?;
        let mesh = resolve_model_ref(model_ref, None).map_err(|e| (HrStatus::ModelLoad, e.to_string()))?;
        *out = Box::into_raw(Box::new(HrEngine { state: RegistrationState::new(mesh), k }));
        Ok(())
    })
}

/// Creates an engine from GLB bytes held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_new_from_glb(
    data: *const u8,
    len: usize,
    image_w: u32,
    image_h: u32,
    fov_v_deg: f64,
    out: *mut *mut HrEngine,
) -> HrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        if data.is_null() {
            return Err(null("data"));
        }
        if len > MAX_GLB_BYTES {
            return Err((HrStatus::ModelLoad, format!("model is {len} bytes (limit {MAX_GLB_BYTES})")));
        }
        let k = camera(image_w, image_h, fov_v_deg)?;
        let bytes = std::slice::from_raw_parts(data, len);
        let mesh = parse_glb(bytes).map_err(|e| (HrStatus::ModelLoad, e.to_string()))?;
        *out = Box::into_raw(Box::new(HrEngine { state: RegistrationState::new(Arc::new(mesh)), k }));
        Ok(())
    })
}

/// Releases an engine. NULL is ignored.
///
/// # Safety
/// `engine` must come from `hr_engine_new*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_free(engine: *mut HrEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_set_auto_scale(engine: *mut HrEngine, mode: HrAutoScale) -> HrStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        e.state.set_auto_scale_mode(match mode {
            HrAutoScale::Off => AutoScaleMode::Off,
            HrAutoScale::OneShot => AutoScaleMode::OneShot,
            HrAutoScale::Continuous => AutoScaleMode::Continuous,
        });
        Ok(())
    })
}

/// Applies a partial parameter update given as a JSON object with any of
/// `manual_scale`, `offset`, `opacity`, `visible`, `auto_scale_enabled`,
/// `auto_scale_once`, `uniform_scale`, `smoothing_alpha`, `reset_scale`.
/// Nothing is applied if any field is invalid.
///
/// # Safety
/// `engine` must be a live handle and `json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_set_params_json(engine: *mut HrEngine, json: *const c_char) -> HrStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        let params: ManualParams =
            serde_json::from_str(str_arg(json, "json")?).map_err(|err| (HrStatus::Parse, err.to_string()))?;
        e.state.set_manual(&params).map_err(|err| (reg_status(&err), err.to_string()))
    })
}

fn step(e: &mut HrEngine, frame: &SessionFrame, out: &mut HrFrameResult) -> Res<()> {
    let r = e.state.step(frame, &e.k).map_err(|err| (reg_status(&err), err.to_string()))?;
    *out = HrFrameResult::from(&r);
    Ok(())
}

/// Runs one frame: `pose` is the face pose (16 doubles, column-major),
/// `head_box` the observed head rectangle or NULL.
///
/// # Safety
/// `engine` must be live, `pose` point to 16 doubles, `head_box` be NULL or
/// valid, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_step(
    engine: *mut HrEngine,
    seq: u64,
    pose: *const f64,
    head_box: *const HrRect,
    out: *mut HrFrameResult,
) -> HrStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        if pose.is_null() {
            return Err(null("pose"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let mut m = [0.0; 16];
        m.copy_from_slice(std::slice::from_raw_parts(pose, 16));
        let mut frame = SessionFrame::new(seq, 0.0, RigidPose::from_col_major(m));
        frame.box_ = head_box.as_ref().map(|b| Rect::from(*b));
        step(e, &frame, out)
    })
}

/// Runs one frame given as a session-format JSON object (allows `mask_rle`).
///
/// # Safety
/// `engine` must be live, `frame_json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_step_json(engine: *mut HrEngine, frame_json: *const c_char, out: *mut HrFrameResult) -> HrStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let frame: SessionFrame =
            serde_json::from_str(str_arg(frame_json, "frame_json")?).map_err(|err| (HrStatus::Parse, err.to_string()))?;
        if frame.box_.is_some() && frame.mask_rle.is_some() {
            return Err((HrStatus::Parse, "frame carries both box and mask_rle".into()));
        }
        step(e, &frame, out)
    })
}

/// Current image-space scale factors.
///
/// # Safety
/// `engine` must be live; `s_w` and `s_h` writable.
#[no_mangle]
pub unsafe extern "C" fn hr_engine_scale(engine: *const HrEngine, s_w: *mut f64, s_h: *mut f64) -> HrStatus {
    guard(|| {
        let e = engine.as_ref().ok_or_else(|| null("engine"))?;
        let (w, h) = (s_w.as_mut().ok_or_else(|| null("s_w"))?, s_h.as_mut().ok_or_else(|| null("s_h"))?);
        let s = e.state.scale();
        *w = s.s_w;
        *h = s.s_h;
        Ok(())
    })
}

/// Intersection over union of two rectangles.
///
/// # Safety
/// `a`, `b` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hr_iou(a: *const HrRect, b: *const HrRect, out: *mut f64) -> HrStatus {
    guard(|| {
        let (a, b) = (a.as_ref().ok_or_else(|| null("a"))?, b.as_ref().ok_or_else(|| null("b"))?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = evaluation::iou(&(*a).into(), &(*b).into()).map_err(|e| (HrStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Projects a camera-frame point (3 doubles) to pixels (2 doubles) for a
/// pinhole camera given by vertical field of view and image size.
///
/// # Safety
/// `point` must point to 3 doubles and `out_uv` to 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hr_project_point(
    fov_v_deg: f64,
    image_w: u32,
    image_h: u32,
    point: *const f64,
    out_uv: *mut f64,
) -> HrStatus {
    guard(|| {
        if point.is_null() {
            return Err(null("point"));
        }
        if out_uv.is_null() {
            return Err(null("out_uv"));
        }
        let k = camera(image_w, image_h, fov_v_deg)?;
        let p = std::slice::from_raw_parts(point, 3);
        let px = project_point(&k, Point3::new(p[0], p[1], p[2])).map_err(|e| (HrStatus::BadPose, e.to_string()))?;
        let uv = std::slice::from_raw_parts_mut(out_uv, 2);
        uv[0] = px.u;
        uv[1] = px.v;
        Ok(())
    })
}
