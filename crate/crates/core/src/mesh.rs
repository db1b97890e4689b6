//! Model meshes, their 3D bounds, and the projected model boundary rectangle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    normalize, project_scaled_about, CameraIntrinsics, GeometryError, PixelPoint, Point3,
    RigidPose, ScaleFactors,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("triangle index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: u32, len: usize },
    #[error("vertex {0} is not finite")]
    NonFiniteVertex(usize),
    #[error("vertex {vertex} is behind the camera (z = {z})")]
    BehindCamera { vertex: usize, z: f64 },
}

/// Point set with optional triangle list, in model-local units.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    positions: Vec<Point3>,
    indices: Option<Vec<[u32; 3]>>,
    node_transform_applied: bool,
}

impl Mesh {
    pub fn new(positions: Vec<Point3>, indices: Option<Vec<[u32; 3]>>) -> Result<Self, MeshError> {
        Self::with_transform_flag(positions, indices, false)
    }

    pub(crate) fn with_transform_flag(
        positions: Vec<Point3>,
        indices: Option<Vec<[u32; 3]>>,
        node_transform_applied: bool,
    ) -> Result<Self, MeshError> {
        if positions.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        if let Some(tris) = &indices {
            let len = positions.len();
            if let Some(&index) = tris.iter().flatten().find(|&&i| i as usize >= len) {
                return Err(MeshError::IndexOutOfRange { index, len });
            }
        }
        Ok(Self { positions, indices, node_transform_applied })
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn indices(&self) -> Option<&[[u32; 3]]> {
        self.indices.as_deref()
    }

    pub fn node_transform_applied(&self) -> bool {
        self.node_transform_applied
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Copy with every vertex multiplied componentwise.
    pub fn scaled(&self, sx: f64, sy: f64, sz: f64) -> Mesh {
        Mesh {
            positions: self.positions.iter().map(|p| Point3::new(p.x * sx, p.y * sy, p.z * sz)).collect(),
            indices: self.indices.clone(),
            node_transform_applied: self.node_transform_applied,
        }
    }
}

/// Axis-aligned 3D box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min: Point3,
    pub max: Point3,
}

impl Box3 {
    pub fn size(&self) -> Point3 {
        Point3::new(self.max.x - self.min.x, self.max.y - self.min.y, self.max.z - self.min.z)
    }
}

/// Axis-aligned pixel rectangle, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_bounds(min_u: f64, min_v: f64, max_u: f64, max_v: f64) -> Self {
        Self { x: min_u, y: min_v, w: max_u - min_u, h: max_v - min_v }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Scales every coordinate about the image origin.
    pub fn rescaled(&self, kx: f64, ky: f64) -> Rect {
        Rect::new(self.x * kx, self.y * ky, self.w * kx, self.h * ky)
    }
}

pub fn mesh_aabb(m: &Mesh) -> Result<Box3, MeshError> {
    aabb_of(m.positions()).ok_or(MeshError::EmptyMesh)
}

pub(crate) fn aabb_of(points: &[Point3]) -> Option<Box3> {
    let first = *points.first()?;
    let mut b = Box3 { min: first, max: first };
    for p in &points[1..] {
        b.min.x = b.min.x.min(p.x);
        b.min.y = b.min.y.min(p.y);
        b.min.z = b.min.z.min(p.z);
        b.max.x = b.max.x.max(p.x);
        b.max.y = b.max.y.max(p.y);
        b.max.z = b.max.z.max(p.z);
    }
    Some(b)
}

/// Tight pixel bounds of every vertex after `model_pose`, perspective divide and
/// anchor-centered scaling. Not clipped to the image.
pub fn project_mesh_bbox(
    k: &CameraIntrinsics,
    model_pose: &RigidPose,
    s: ScaleFactors,
    anchor: PixelPoint,
    m: &Mesh,
) -> Result<Rect, MeshError> {
    project_points_bbox(k, model_pose, s, anchor, m.positions())
}

pub fn project_points_bbox(
    k: &CameraIntrinsics,
    model_pose: &RigidPose,
    s: ScaleFactors,
    anchor: PixelPoint,
    points: &[Point3],
) -> Result<Rect, MeshError> {
    if points.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let (mut min_u, mut min_v) = (f64::INFINITY, f64::INFINITY);
    let (mut max_u, mut max_v) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let pc = model_pose.transform_point(*p);
        let pn = normalize(pc).map_err(|e| match e {
            GeometryError::BehindCamera { z } => MeshError::BehindCamera { vertex: i, z },
            _ => MeshError::NonFiniteVertex(i),
        })?;
        let px = project_scaled_about(k, s, anchor, pn);
        min_u = min_u.min(px.u);
        min_v = min_v.min(px.v);
        max_u = max_u.max(px.u);
        max_v = max_v.max(px.v);
    }
    Ok(Rect::from_bounds(min_u, min_v, max_u, max_v))
}

/// Default synthetic head semi-axes (x, y, z) in world units.
pub const HEAD_SEMI_AXES: [f64; 3] = [0.09, 0.12, 0.10];

const ELLIPSOID_SEGMENTS: usize = 32;
const ELLIPSOID_RINGS: usize = 16;

/// Axis-aligned cube of side `side`, centered at the origin.
pub fn cube(side: f64) -> Mesh {
    let h = side / 2.0;
    let mut positions = Vec::with_capacity(8);
    for i in 0..8u32 {
        let sx = if i & 1 == 0 { -h } else { h };
        let sy = if i & 2 == 0 { -h } else { h };
        let sz = if i & 4 == 0 { -h } else { h };
        positions.push(Point3::new(sx, sy, sz));
    }
    let tris = vec![
        [0, 2, 1], [1, 2, 3], // -z
        [4, 5, 6], [5, 7, 6], // +z
        [0, 1, 4], [1, 5, 4], // -y
        [2, 6, 3], [3, 6, 7], // +y
        [0, 4, 2], [2, 4, 6], // -x
        [1, 3, 5], [3, 7, 5], // +x
    ];
    Mesh::new(positions, Some(tris)).expect("cube is well-formed")
}

/// 32×16 UV sphere stretched to the given semi-axes. Poles lie on ±Y.
pub fn ellipsoid(semi_axes: [f64; 3]) -> Mesh {
    let [a, b, c] = semi_axes;
    let mut positions = Vec::with_capacity(2 + (ELLIPSOID_RINGS - 1) * ELLIPSOID_SEGMENTS);
    positions.push(Point3::new(0.0, b, 0.0));
    for ring in 1..ELLIPSOID_RINGS {
        let theta = PI * ring as f64 / ELLIPSOID_RINGS as f64;
        let (st, ct) = theta.sin_cos();
        for seg in 0..ELLIPSOID_SEGMENTS {
            let phi = 2.0 * PI * seg as f64 / ELLIPSOID_SEGMENTS as f64;
            let (sp, cp) = phi.sin_cos();
            positions.push(Point3::new(a * st * cp, b * ct, c * st * sp));
        }
    }
    positions.push(Point3::new(0.0, -b, 0.0));

    let seg = ELLIPSOID_SEGMENTS as u32;
    let ring_start = |r: u32| 1 + (r - 1) * seg;
    let south = positions.len() as u32 - 1;
    let mut tris = Vec::new();
    for j in 0..seg {
        tris.push([0, ring_start(1) + (j + 1) % seg, ring_start(1) + j]);
    }
    for r in 1..(ELLIPSOID_RINGS as u32 - 1) {
        for j in 0..seg {
            let a0 = ring_start(r) + j;
            let a1 = ring_start(r) + (j + 1) % seg;
            let b0 = ring_start(r + 1) + j;
            let b1 = ring_start(r + 1) + (j + 1) % seg;
            tris.push([a0, a1, b0]);
            tris.push([a1, b1, b0]);
        }
    }
    let last = ring_start(ELLIPSOID_RINGS as u32 - 1);
    for j in 0..seg {
        tris.push([south, last + j, last + (j + 1) % seg]);
    }
    Mesh::new(positions, Some(tris)).expect("ellipsoid is well-formed")
}

pub fn head_ellipsoid() -> Mesh {
    ellipsoid(HEAD_SEMI_AXES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{intrinsics_from_fov, project_point};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn aabb_examples() {
        let single = Mesh::new(vec![Point3::new(1.0, 2.0, 3.0)], None).unwrap();
        let b = mesh_aabb(&single).unwrap();
        assert_eq!(b.min, Point3::new(1.0, 2.0, 3.0));
        assert_eq!(b.max, b.min);

        let c = cube(1.0);
        let (mut lo, mut hi) = ([f64::MAX; 3], [f64::MIN; 3]);
        for p in c.positions() {
            for (i, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        let b = mesh_aabb(&c).unwrap();
        assert_eq!([b.min.x, b.min.y, b.min.z], lo);
        assert_eq!([b.max.x, b.max.y, b.max.z], hi);
        assert_eq!(lo, [-0.5; 3]);

        assert_eq!(Mesh::new(vec![], None), Err(MeshError::EmptyMesh));
        assert_eq!(aabb_of(&[]), None);
    }

    #[test]
    fn mesh_validation() {
        assert!(matches!(
            Mesh::new(vec![Point3::ORIGIN], Some(vec![[0, 0, 1]])),
            Err(MeshError::IndexOutOfRange { index: 1, len: 1 })
        ));
        assert!(matches!(
            Mesh::new(vec![Point3::new(f64::NAN, 0.0, 0.0)], None),
            Err(MeshError::NonFiniteVertex(0))
        ));
    }

    fn brute_force_bbox(k: &CameraIntrinsics, pose: &RigidPose, s: (f64, f64), anchor: PixelPoint, m: &Mesh) -> Rect {
        let px: Vec<PixelPoint> = m
            .positions()
            .iter()
            .map(|p| {
                let q = project_point(k, pose.transform_point(*p)).unwrap();
                PixelPoint::new(anchor.u + s.0 * (q.u - anchor.u), anchor.v + s.1 * (q.v - anchor.v))
            })
            .collect();
        let min_u = px.iter().map(|p| p.u).fold(f64::MAX, f64::min);
        let max_u = px.iter().map(|p| p.u).fold(f64::MIN, f64::max);
        let min_v = px.iter().map(|p| p.v).fold(f64::MAX, f64::min);
        let max_v = px.iter().map(|p| p.v).fold(f64::MIN, f64::max);
        Rect::from_bounds(min_u, min_v, max_u, max_v)
    }

    #[test]
    fn cube_bbox_at_depth_four() {
        let k = intrinsics_from_fov(90.0, 480, 480).unwrap();
        let pose = RigidPose::translation(0.0, 0.0, 4.0);
        let anchor = PixelPoint::new(240.0, 240.0);
        let r = project_mesh_bbox(&k, &pose, ScaleFactors::IDENTITY, anchor, &cube(1.0)).unwrap();
        let oracle = brute_force_bbox(&k, &pose, (1.0, 1.0), anchor, &cube(1.0));
        assert_eq!(r, oracle);
        assert_abs_diff_eq!(r.x, 240.0 - 240.0 * (0.5 / 3.5), epsilon = 1e-9);
        assert_abs_diff_eq!(r.right(), 240.0 + 240.0 * (0.5 / 3.5), epsilon = 1e-9);
        assert_abs_diff_eq!(r.x, 205.714_285_714, epsilon = 1e-6);
        assert_abs_diff_eq!(r.y, r.x, epsilon = 1e-12);

        let wide = project_mesh_bbox(&k, &pose, ScaleFactors::new(2.0, 1.0).unwrap(), anchor, &cube(1.0)).unwrap();
        let oracle = brute_force_bbox(&k, &pose, (2.0, 1.0), anchor, &cube(1.0));
        assert_abs_diff_eq!(wide.w, oracle.w, epsilon = 1e-9);
        assert_abs_diff_eq!(wide.w, 2.0 * r.w, epsilon = 1e-9);
        assert_abs_diff_eq!(wide.w, 137.142_857_142, epsilon = 1e-6);
        assert_abs_diff_eq!(wide.h, r.h, epsilon = 1e-12);
    }

    #[test]
    fn vertex_behind_camera_rejected() {
        let k = intrinsics_from_fov(90.0, 480, 480).unwrap();
        let pose = RigidPose::translation(0.0, 0.0, 0.5);
        let err = project_mesh_bbox(&k, &pose, ScaleFactors::IDENTITY, k.principal_point(), &cube(1.0)).unwrap_err();
        assert!(matches!(err, MeshError::BehindCamera { .. }));
    }

    #[test]
    fn ellipsoid_tessellation_is_fixed() {
        let m = head_ellipsoid();
        assert_eq!(m.vertex_count(), 2 + 15 * 32);
        assert_eq!(m.indices().unwrap().len(), 2 * 32 + 14 * 32 * 2);
        let b = mesh_aabb(&m).unwrap();
        assert_abs_diff_eq!(b.max.x, 0.09, epsilon = 1e-15);
        assert_abs_diff_eq!(b.max.y, 0.12, epsilon = 1e-15);
        assert_abs_diff_eq!(b.min.y, -0.12, epsilon = 1e-15);
        assert_abs_diff_eq!(b.max.z, 0.10, epsilon = 1e-3);
    }

    proptest! {
        #[test]
        fn bbox_scales_linearly_about_anchor(
            sw in 0.25f64..4.0, sh in 0.25f64..4.0,
            au in -200.0f64..800.0, av in -200.0f64..800.0,
            yaw in -1.0f64..1.0, depth in 0.4f64..3.0,
        ) {
            let k = intrinsics_from_fov(50.0, 640, 480).unwrap();
            let pose = RigidPose::translation(0.05, -0.02, depth).compose(&RigidPose::rotation_y(yaw));
            let anchor = PixelPoint::new(au, av);
            let m = head_ellipsoid();
            let base = project_mesh_bbox(&k, &pose, ScaleFactors::IDENTITY, anchor, &m).unwrap();
            let scaled = project_mesh_bbox(&k, &pose, ScaleFactors::new(sw, sh).unwrap(), anchor, &m).unwrap();
            prop_assert!((scaled.w - sw * base.w).abs() <= 1e-9 * (1.0 + scaled.w + (au - base.x).abs()));
            prop_assert!((scaled.h - sh * base.h).abs() <= 1e-9 * (1.0 + scaled.h + (av - base.y).abs()));
        }
    }
}
