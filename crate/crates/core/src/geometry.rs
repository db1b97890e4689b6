//! Pinhole projection and 4×4 homogeneous transform algebra.
//!
//! Conventions: right-handed camera frame, +X right, +Y down, the camera looks
//! along +Z and visible points have `z >= Z_MIN`. Matrices are stored
//! row-major in memory and exchanged column-major on the wire.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest depth accepted by the perspective divide.
pub const Z_MIN: f64 = 1e-6;

/// Clamp range applied to auto-scale factors.
pub const SCALE_MIN: f64 = 0.25;
pub const SCALE_MAX: f64 = 4.0;

/// Default vertical field of view, mirroring the usual WebGL perspective camera default.
pub const DEFAULT_FOV_V_DEG: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("matrix is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

/// A point divided by its depth: `(X/Z, Y/Z, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    nx: f64,
    ny: f64,
}

impl NormalizedPoint {
    /// Builds the normalized point of `(nx, ny, 1)`.
    pub fn new(nx: f64, ny: f64) -> Result<Self> {
        if !(nx.is_finite() && ny.is_finite()) {
            return Err(GeometryError::Domain(format!(
                "normalized point ({nx}, {ny}) is not finite"
            )));
        }
        Ok(Self { nx, ny })
    }

    pub fn nx(&self) -> f64 {
        self.nx
    }

    pub fn ny(&self) -> f64 {
        self.ny
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Pinhole intrinsics `K` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_w: u32, image_h: u32) -> Result<Self> {
        if image_w == 0 || image_h == 0 {
            return Err(GeometryError::Domain("image dimensions must be >= 1".into()));
        }
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::Domain(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !((0.0..=image_w as f64).contains(&cx) && (0.0..=image_h as f64).contains(&cy)) {
            return Err(GeometryError::Domain(format!(
                "principal point ({cx}, {cy}) outside the {image_w}x{image_h} image"
            )));
        }
        Ok(Self { fx, fy, cx, cy, image_w, image_h })
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.cx, self.cy)
    }

    /// `K · P_n`.
    #[inline]
    pub fn apply(&self, pn: NormalizedPoint) -> PixelPoint {
        PixelPoint::new(self.fx * pn.nx + self.cx, self.fy * pn.ny + self.cy)
    }
}

/// Derives square-pixel intrinsics with a centered principal point from a vertical FOV.
pub fn intrinsics_from_fov(fov_v_deg: f64, image_w: u32, image_h: u32) -> Result<CameraIntrinsics> {
    if !(fov_v_deg > 0.0 && fov_v_deg < 180.0) {
        return Err(GeometryError::Domain(format!(
            "vertical field of view must lie in (0, 180) degrees, got {fov_v_deg}"
        )));
    }
    if image_w == 0 || image_h == 0 {
        return Err(GeometryError::Domain("image dimensions must be >= 1".into()));
    }
    let fy = (image_h as f64 / 2.0) / (fov_v_deg * std::f64::consts::PI / 360.0).tan();
    CameraIntrinsics::new(fy, fy, image_w as f64 / 2.0, image_h as f64 / 2.0, image_w, image_h)
}

#[inline]
pub fn normalize(p: Point3) -> Result<NormalizedPoint> {
    // Also rejects NaN depth.
    if !(p.z >= Z_MIN) {
        return Err(GeometryError::BehindCamera { z: p.z });
    }
    Ok(NormalizedPoint { nx: p.x / p.z, ny: p.y / p.z })
}

#[inline]
pub fn project_point(k: &CameraIntrinsics, p: Point3) -> Result<PixelPoint> {
    Ok(k.apply(normalize(p)?))
}

/// Full `z_c p_c = K T P_w`: transform, divide by the resulting depth, apply `K`.
/// Returns the pixel and the depth `z_c`.
pub fn project_point_full_with_depth(
    k: &CameraIntrinsics,
    t: &RigidPose,
    p_world: Point3,
) -> Result<(PixelPoint, f64)> {
    let pc = t.transform_point(p_world);
    Ok((project_point(k, pc)?, pc.z))
}

pub fn project_point_full(k: &CameraIntrinsics, t: &RigidPose, p_world: Point3) -> Result<PixelPoint> {
    project_point_full_with_depth(k, t, p_world).map(|(px, _)| px)
}

/// `K · S · P_n`: scales about the principal point.
#[inline]
pub fn project_scaled(k: &CameraIntrinsics, s: ScaleFactors, pn: NormalizedPoint) -> PixelPoint {
    PixelPoint::new(k.fx * (s.s_w * pn.nx) + k.cx, k.fy * (s.s_h * pn.ny) + k.cy)
}

/// Scales the projection of `pn` about an arbitrary pixel anchor.
#[inline]
pub fn project_scaled_about(
    k: &CameraIntrinsics,
    s: ScaleFactors,
    anchor: PixelPoint,
    pn: NormalizedPoint,
) -> PixelPoint {
    let p = k.apply(pn);
    PixelPoint::new(
        anchor.u + s.s_w * (p.u - anchor.u),
        anchor.v + s.s_h * (p.v - anchor.v),
    )
}

/// Per-axis image-space scale `S = diag(s_w, s_h, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors {
    pub s_w: f64,
    pub s_h: f64,
}

impl Default for ScaleFactors {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl ScaleFactors {
    pub const IDENTITY: ScaleFactors = ScaleFactors { s_w: 1.0, s_h: 1.0 };

    pub fn new(s_w: f64, s_h: f64) -> Result<Self> {
        if !(s_w > 0.0 && s_h > 0.0 && s_w.is_finite() && s_h.is_finite()) {
            return Err(GeometryError::Domain(format!(
                "scale factors must be positive and finite, got ({s_w}, {s_h})"
            )));
        }
        Ok(Self { s_w, s_h })
    }

    /// Clamps both factors into `[SCALE_MIN, SCALE_MAX]`.
    pub fn clamped(s_w: f64, s_h: f64) -> Self {
        Self { s_w: s_w.clamp(SCALE_MIN, SCALE_MAX), s_h: s_h.clamp(SCALE_MIN, SCALE_MAX) }
    }

    pub fn is_within_clamp(&self) -> bool {
        (SCALE_MIN..=SCALE_MAX).contains(&self.s_w) && (SCALE_MIN..=SCALE_MAX).contains(&self.s_h)
    }

    /// Both axes set to the geometric mean, for shape-preserving scaling.
    pub fn uniform(&self) -> Self {
        let g = (self.s_w * self.s_h).sqrt();
        Self { s_w: g, s_h: g }
    }
}

/// A 4×4 homogeneous transform, row-major.
///
/// Despite the name this may carry scale (manual model scaling is folded in
/// before projection); [`RigidPose::is_rigid`] checks the strict case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    m: [f64; 16],
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidPose {
    pub const IDENTITY: RigidPose = RigidPose {
        m: [
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    };

    pub const fn from_row_major(m: [f64; 16]) -> Self {
        Self { m }
    }

    pub fn from_col_major(c: [f64; 16]) -> Self {
        let mut m = [0.0; 16];
        for r in 0..4 {
            for col in 0..4 {
                m[r * 4 + col] = c[col * 4 + r];
            }
        }
        Self { m }
    }

    pub fn as_row_major(&self) -> &[f64; 16] {
        &self.m
    }

    pub fn to_col_major(&self) -> [f64; 16] {
        let mut c = [0.0; 16];
        for r in 0..4 {
            for col in 0..4 {
                c[col * 4 + r] = self.m[r * 4 + col];
            }
        }
        c
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row * 4 + col]
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        let mut p = Self::IDENTITY;
        p.m[3] = x;
        p.m[7] = y;
        p.m[11] = z;
        p
    }

    pub fn scaling(sx: f64, sy: f64, sz: f64) -> Self {
        let mut p = Self::IDENTITY;
        p.m[0] = sx;
        p.m[5] = sy;
        p.m[10] = sz;
        p
    }

    pub fn rotation_x(rad: f64) -> Self {
        Self::from_linear_and_translation(Rotation3::from_axis_angle(&Vector3::x_axis(), rad).into_inner(), Vector3::zeros())
    }

    pub fn rotation_y(rad: f64) -> Self {
        Self::from_linear_and_translation(Rotation3::from_axis_angle(&Vector3::y_axis(), rad).into_inner(), Vector3::zeros())
    }

    pub fn rotation_z(rad: f64) -> Self {
        Self::from_linear_and_translation(Rotation3::from_axis_angle(&Vector3::z_axis(), rad).into_inner(), Vector3::zeros())
    }

    pub fn from_linear_and_translation(linear: Matrix3<f64>, t: Vector3<f64>) -> Self {
        let mut m = [0.0; 16];
        for r in 0..3 {
            for c in 0..3 {
                m[r * 4 + c] = linear[(r, c)];
            }
            m[r * 4 + 3] = t[r];
        }
        m[15] = 1.0;
        Self { m }
    }

    pub fn from_quaternion_translation(q: &UnitQuaternion<f64>, t: Vector3<f64>) -> Self {
        Self::from_linear_and_translation(q.to_rotation_matrix().into_inner(), t)
    }

    /// Upper-left 3×3 block.
    pub fn linear(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.m[0], self.m[1], self.m[2], //
            self.m[4], self.m[5], self.m[6], //
            self.m[8], self.m[9], self.m[10],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::new(self.m[3], self.m[7], self.m[11])
    }

    pub fn origin(&self) -> Point3 {
        Point3::new(self.m[3], self.m[7], self.m[11])
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }

    pub fn has_affine_bottom_row(&self) -> bool {
        const TOL: f64 = 1e-9;
        self.m[12].abs() <= TOL
            && self.m[13].abs() <= TOL
            && self.m[14].abs() <= TOL
            && (self.m[15] - 1.0).abs() <= TOL
    }

    /// Finite, affine bottom row, and a proper rotation block (orthonormal within 1e-6, det > 0).
    pub fn is_rigid(&self) -> bool {
        if !self.is_finite() || !self.has_affine_bottom_row() {
            return false;
        }
        let r = self.linear();
        let gram = r.transpose() * r;
        let ortho = (gram - Matrix3::identity()).iter().all(|e| e.abs() <= 1e-6);
        ortho && r.determinant() > 0.0
    }

    /// Applies the transform to a point (homogeneous w = 1).
    #[inline]
    pub fn transform_point(&self, p: Point3) -> Point3 {
        let m = &self.m;
        Point3::new(
            m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11],
        )
    }

    pub fn compose(&self, rhs: &RigidPose) -> RigidPose {
        compose(self, rhs)
    }

    pub fn inverse(&self) -> Result<RigidPose> {
        invert(self)
    }
}

impl Serialize for RigidPose {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_col_major().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidPose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        let arr: [f64; 16] = v
            .try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"16 matrix entries"))?;
        Ok(RigidPose::from_col_major(arr))
    }
}

/// Matrix product `a · b` (apply `b` first).
pub fn compose(a: &RigidPose, b: &RigidPose) -> RigidPose {
    let mut m = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += a.m[r * 4 + k] * b.m[k * 4 + c];
            }
            m[r * 4 + c] = acc;
        }
    }
    RigidPose { m }
}

/// Inverse of an affine transform. Non-affine matrices fall back to a general 4×4 inverse.
pub fn invert(a: &RigidPose) -> Result<RigidPose> {
    if a.has_affine_bottom_row() && a.m[12] == 0.0 && a.m[13] == 0.0 && a.m[14] == 0.0 && a.m[15] == 1.0 {
        let lin = a.linear();
        let det = lin.determinant();
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(GeometryError::Singular);
        }
        let inv = lin.try_inverse().ok_or(GeometryError::Singular)?;
        let t = -(inv * a.translation_vector());
        return Ok(RigidPose::from_linear_and_translation(inv, t));
    }
    let full = nalgebra::Matrix4::from_row_slice(&a.m);
    let inv = full.try_inverse().ok_or(GeometryError::Singular)?;
    let mut m = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            m[r * 4 + c] = inv[(r, c)];
        }
    }
    Ok(RigidPose { m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k90() -> CameraIntrinsics {
        intrinsics_from_fov(90.0, 480, 480).unwrap()
    }

    fn k50() -> CameraIntrinsics {
        intrinsics_from_fov(50.0, 480, 480).unwrap()
    }

    #[test]
    fn fov_90_gives_unit_tangent_focal() {
        let k = k90();
        assert_abs_diff_eq!(k.fx, 240.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.fy, 240.0, epsilon = 1e-12);
        assert_eq!((k.cx, k.cy), (240.0, 240.0));
    }

    #[test]
    fn fov_50_focal_matches_independent_tangent() {
        // tan(25°) = 0.46630765815499859283 (20 digits, from a series expansion)
        let expected = 240.0 / 0.466_307_658_154_998_6;
        assert_abs_diff_eq!(k50().fy, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(k50().fy, 514.681_660_922_294, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_fov_rejected() {
        assert!(matches!(intrinsics_from_fov(0.0, 480, 480), Err(GeometryError::Domain(_))));
        assert!(matches!(intrinsics_from_fov(180.0, 480, 480), Err(GeometryError::Domain(_))));
        assert!(matches!(intrinsics_from_fov(f64::NAN, 480, 480), Err(GeometryError::Domain(_))));
        assert!(intrinsics_from_fov(50.0, 0, 480).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(-1.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 11.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 10.0, 10, 10).is_ok());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((n.nx(), n.ny()), (0.0, 0.0));
        let n = normalize(Point3::new(1.0, -2.0, 2.0)).unwrap();
        assert_eq!((n.nx(), n.ny()), (0.5, -1.0));
        assert!(matches!(normalize(Point3::new(1.0, 1.0, 0.0)), Err(GeometryError::BehindCamera { .. })));
        assert!(normalize(Point3::new(1.0, 1.0, f64::NAN)).is_err());
    }

    #[test]
    fn project_point_examples() {
        assert_eq!(project_point(&k90(), Point3::new(0.0, 0.0, 2.0)).unwrap(), PixelPoint::new(240.0, 240.0));
        // Oracle: full homogeneous product with T = I, written out independently.
        let k = k50();
        let (x, y, z) = (1.0, 0.0, 2.0);
        let kp = [k.fx * x + k.cx * z, k.fy * y + k.cy * z, z];
        let px = project_point(&k, Point3::new(x, y, z)).unwrap();
        assert_abs_diff_eq!(px.u, kp[0] / kp[2], epsilon = 1e-12);
        assert_abs_diff_eq!(px.v, kp[1] / kp[2], epsilon = 1e-12);
        assert_abs_diff_eq!(px.u, 497.340_830_461_147, epsilon = 1e-9);
        assert!(matches!(
            project_point(&k90(), Point3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
    }

    #[test]
    fn project_full_examples() {
        let k = k90();
        let p = Point3::new(0.3, -0.2, 1.7);
        assert_eq!(project_point_full(&k, &RigidPose::IDENTITY, p).unwrap(), project_point(&k, p).unwrap());

        let (px, zc) = project_point_full_with_depth(&k, &RigidPose::translation(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(px, PixelPoint::new(240.0, 240.0));
        assert_eq!(zc, 2.0);

        assert!(matches!(
            project_point_full(&k, &RigidPose::translation(0.0, 0.0, -2.0), Point3::new(0.0, 0.0, 1.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
    }

    #[test]
    fn project_scaled_examples() {
        let k = k90();
        let pn = NormalizedPoint::new(0.5, 0.0).unwrap();
        assert_eq!(project_scaled(&k, ScaleFactors::IDENTITY, pn), k.apply(pn));
        // K·S·P_n expanded: u = 240·(2·0.5) + 240
        assert_eq!(project_scaled(&k, ScaleFactors::new(2.0, 1.0).unwrap(), pn), PixelPoint::new(480.0, 240.0));
        let origin = NormalizedPoint::new(0.0, 0.0).unwrap();
        assert_eq!(project_scaled(&k, ScaleFactors::new(2.0, 3.0).unwrap(), origin), k.principal_point());
    }

    #[test]
    fn project_scaled_about_examples() {
        let k = k90();
        let pn = NormalizedPoint::new(0.3, -0.1).unwrap();
        let anchor = PixelPoint::new(17.0, 300.0);
        assert_eq!(project_scaled_about(&k, ScaleFactors::IDENTITY, anchor, pn), k.apply(pn));
        // unscaled projection (150, 100): nx = (150-240)/240
        let pn = NormalizedPoint::new(-0.375, -140.0 / 240.0).unwrap();
        let unscaled = k.apply(pn);
        assert_eq!(unscaled.u, 150.0);
        assert_abs_diff_eq!(unscaled.v, 100.0, epsilon = 1e-12);
        let p = project_scaled_about(&k, ScaleFactors::new(2.0, 2.0).unwrap(), PixelPoint::new(100.0, 100.0), pn);
        assert_abs_diff_eq!(p.u, 200.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, 100.0, epsilon = 1e-12);
    }

    #[test]
    fn anchored_at_principal_point_matches_literal_form() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let k = intrinsics_from_fov(rng.random_range(10.0..170.0), rng.random_range(1..2000), rng.random_range(1..2000)).unwrap();
            let s = ScaleFactors::new(rng.random_range(0.25..4.0), rng.random_range(0.25..4.0)).unwrap();
            let pn = NormalizedPoint::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)).unwrap();
            let a = project_scaled(&k, s, pn);
            let b = project_scaled_about(&k, s, k.principal_point(), pn);
            let tol = 1e-9 * (1.0 + a.u.abs().max(a.v.abs()));
            assert!((a.u - b.u).abs() <= tol && (a.v - b.v).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn compose_and_invert_examples() {
        let b = RigidPose::rotation_y(0.3).compose(&RigidPose::translation(1.0, -2.0, 5.0));
        assert_eq!(compose(&RigidPose::IDENTITY, &b), b);
        assert_eq!(invert(&RigidPose::translation(1.0, 2.0, 3.0)).unwrap(), RigidPose::translation(-1.0, -2.0, -3.0));
        let r = RigidPose::rotation_x(30f64.to_radians());
        let id = compose(&r, &invert(&r).unwrap());
        for (a, e) in id.as_row_major().iter().zip(RigidPose::IDENTITY.as_row_major()) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-12);
        }
        assert_eq!(invert(&RigidPose::scaling(0.0, 1.0, 1.0)), Err(GeometryError::Singular));
    }

    #[test]
    fn column_major_boundary_is_a_transpose() {
        let p = RigidPose::translation(1.0, 2.0, 3.0);
        let c = p.to_col_major();
        assert_eq!(&c[12..15], &[1.0, 2.0, 3.0]);
        assert_eq!(RigidPose::from_col_major(c), p);
    }

    #[test]
    fn rigidity_check() {
        assert!(RigidPose::IDENTITY.is_rigid());
        assert!(RigidPose::rotation_z(1.0).compose(&RigidPose::translation(0.0, 0.0, 2.0)).is_rigid());
        assert!(!RigidPose::scaling(2.0, 1.0, 1.0).is_rigid());
        assert!(!RigidPose::scaling(-1.0, 1.0, 1.0).is_rigid());
        assert!(!RigidPose::from_row_major([0.0; 16]).is_rigid());
        let mut m = *RigidPose::IDENTITY.as_row_major();
        m[12] = 0.5;
        assert!(!RigidPose::from_row_major(m).is_rigid());
    }

    fn arb_rigid() -> impl Strategy<Value = RigidPose> {
        (
            -3.2f64..3.2, -3.2f64..3.2, -3.2f64..3.2,
            -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0,
        )
            .prop_map(|(a, b, c, x, y, z)| {
                let q = UnitQuaternion::from_euler_angles(a, b, c);
                RigidPose::from_quaternion_translation(&q, Vector3::new(x, y, z))
            })
    }

    fn arb_intrinsics() -> impl Strategy<Value = CameraIntrinsics> {
        (5.0f64..175.0, 1u32..4096, 1u32..4096).prop_map(|(f, w, h)| intrinsics_from_fov(f, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn eq2_path_equals_eq1_path_with_identity(k in arb_intrinsics(), x in -10.0f64..10.0, y in -10.0f64..10.0, z in 1e-3f64..50.0) {
            let p = Point3::new(x, y, z);
            let a = project_point(&k, p).unwrap();
            let b = k.apply(normalize(p).unwrap());
            let c = project_point_full(&k, &RigidPose::IDENTITY, p).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((a.u - c.u).abs() <= 1e-12 && (a.v - c.v).abs() <= 1e-12);
        }

        #[test]
        fn projection_invariant_to_uniform_point_scaling(k in arb_intrinsics(), x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.1f64..10.0, lambda in 0.01f64..100.0) {
            let p = Point3::new(x, y, z);
            let a = project_point(&k, p).unwrap();
            let b = project_point(&k, p.scaled(lambda)).unwrap();
            let tol = 1e-9 * (1.0 + a.u.abs() + a.v.abs());
            prop_assert!((a.u - b.u).abs() <= tol && (a.v - b.v).abs() <= tol);
        }

        #[test]
        fn scaled_offsets_are_linear(k in arb_intrinsics(), sw in 0.1f64..2.0, sh in 0.1f64..2.0, nx in -2.0f64..2.0, ny in -2.0f64..2.0) {
            let pn = NormalizedPoint::new(nx, ny).unwrap();
            let one = project_scaled(&k, ScaleFactors::new(sw, sh).unwrap(), pn);
            let two = project_scaled(&k, ScaleFactors::new(2.0 * sw, 2.0 * sh).unwrap(), pn);
            let tol = 1e-9 * (1.0 + one.u.abs() + one.v.abs());
            prop_assert!((two.u - k.cx - 2.0 * (one.u - k.cx)).abs() <= tol);
            prop_assert!((two.v - k.cy - 2.0 * (one.v - k.cy)).abs() <= tol);
        }

        #[test]
        fn compose_is_associative(a in arb_rigid(), b in arb_rigid(), c in arb_rigid()) {
            let l = compose(&compose(&a, &b), &c);
            let r = compose(&a, &compose(&b, &c));
            for (x, y) in l.as_row_major().iter().zip(r.as_row_major()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn compose_with_inverse_is_identity(a in arb_rigid()) {
            let id = compose(&a, &invert(&a).unwrap());
            for (x, y) in id.as_row_major().iter().zip(RigidPose::IDENTITY.as_row_major()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            prop_assert!(a.is_rigid());
        }
    }
}
