//! Binary glTF 2.0 (GLB) geometry reader and a minimal writer.
//!
//! Only what feeds projection is read: every primitive's `POSITION` accessor
//! (float32 VEC3) and triangle indices, baked through the node hierarchy.
//! Materials, skins and animations are skipped and reported as warnings.

use std::collections::HashMap;

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::Point3;
use crate::mesh::{Mesh, MeshError};

pub const GLB_MAGIC: u32 = 0x4654_6C67;
pub const GLB_VERSION: u32 = 2;
pub const CHUNK_JSON: u32 = 0x4E4F_534A;
pub const CHUNK_BIN: u32 = 0x004E_4942;

const HEADER_LEN: usize = 12;
const CHUNK_HEADER_LEN: usize = 8;
const MAX_NODE_DEPTH: usize = 256;

const COMPONENT_U8: u32 = 5121;
const COMPONENT_U16: u32 = 5123;
const COMPONENT_U32: u32 = 5125;
const COMPONENT_F32: u32 = 5126;
const MODE_TRIANGLES: u32 = 4;

const UNSUPPORTED_EXTENSIONS: &[&str] = &[
    "KHR_draco_mesh_compression",
    "EXT_meshopt_compression",
    "KHR_mesh_quantization",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlbError {
    #[error("bad magic 0x{0:08x}, not a GLB container")]
    BadMagic(u32),
    #[error("unsupported GLB container version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated chunk: {0}")]
    TruncatedChunk(String),
    #[error("malformed chunk stream: {0}")]
    BadChunk(String),
    #[error("invalid glTF JSON: {0}")]
    Json(String),
    #[error("no POSITION data in any mesh primitive")]
    MissingPositions,
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("invalid accessor {index}: {reason}")]
    InvalidAccessor { index: usize, reason: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub type Result<T> = std::result::Result<T, GlbError>;

/// A parsed model plus bookkeeping from the container.
#[derive(Debug, Clone)]
pub struct GlbAsset {
    pub mesh: Mesh,
    pub primitive_count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Document {
    #[serde(default)]
    scene: Option<usize>,
    #[serde(default)]
    scenes: Vec<Scene>,
    #[serde(default)]
    nodes: Vec<Node>,
    #[serde(default)]
    meshes: Vec<MeshDef>,
    #[serde(default)]
    accessors: Vec<Accessor>,
    #[serde(default)]
    buffer_views: Vec<BufferView>,
    #[serde(default)]
    buffers: Vec<Buffer>,
    #[serde(default)]
    extensions_used: Vec<String>,
    #[serde(default)]
    extensions_required: Vec<String>,
    #[serde(default)]
    materials: Vec<serde_json::Value>,
    #[serde(default)]
    textures: Vec<serde_json::Value>,
    #[serde(default)]
    images: Vec<serde_json::Value>,
    #[serde(default)]
    skins: Vec<serde_json::Value>,
    #[serde(default)]
    animations: Vec<serde_json::Value>,
    #[serde(default)]
    cameras: Vec<serde_json::Value>,
}

#[derive(Debug, Default, Deserialize)]
struct Scene {
    #[serde(default)]
    nodes: Vec<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct Node {
    #[serde(default)]
    children: Vec<usize>,
    mesh: Option<usize>,
    matrix: Option<[f64; 16]>,
    translation: Option<[f64; 3]>,
    rotation: Option<[f64; 4]>,
    scale: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
struct MeshDef {
    #[serde(default)]
    primitives: Vec<Primitive>,
}

#[derive(Debug, Default, Deserialize)]
struct Primitive {
    #[serde(default)]
    attributes: HashMap<String, usize>,
    indices: Option<usize>,
    mode: Option<u32>,
    #[serde(default)]
    extensions: HashMap<String, serde_json::Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Accessor {
    buffer_view: Option<usize>,
    #[serde(default)]
    byte_offset: usize,
    component_type: u32,
    count: usize,
    #[serde(rename = "type")]
    kind: String,
    sparse: Option<serde_json::Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct BufferView {
    buffer: usize,
    #[serde(default)]
    byte_offset: usize,
    byte_length: usize,
    byte_stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Buffer {
    byte_length: usize,
    uri: Option<String>,
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Splits a GLB container into its JSON and optional BIN chunk payloads.
pub fn split_chunks(bytes: &[u8]) -> Result<(&[u8], Option<&[u8]>)> {
    if bytes.len() < 4 {
        return Err(GlbError::TruncatedChunk(format!("{} bytes is shorter than the magic", bytes.len())));
    }
    let magic = read_u32(bytes, 0);
    if magic != GLB_MAGIC {
        return Err(GlbError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(GlbError::TruncatedChunk("header shorter than 12 bytes".into()));
    }
    let version = read_u32(bytes, 4);
    if version != GLB_VERSION {
        return Err(GlbError::UnsupportedVersion(version));
    }
    let declared = read_u32(bytes, 8) as usize;
    if declared > bytes.len() {
        return Err(GlbError::TruncatedChunk(format!(
            "header declares {declared} bytes but only {} are present",
            bytes.len()
        )));
    }
    if declared < HEADER_LEN + CHUNK_HEADER_LEN {
        return Err(GlbError::TruncatedChunk(format!("declared length {declared} leaves no room for a chunk")));
    }
    let body = &bytes[..declared];

    let mut offset = HEADER_LEN;
    let mut json = None;
    let mut bin = None;
    let mut index = 0usize;
    while offset < body.len() {
        if body.len() - offset < CHUNK_HEADER_LEN {
            return Err(GlbError::TruncatedChunk(format!("chunk {index} header at byte {offset}")));
        }
        let len = read_u32(body, offset) as usize;
        let kind = read_u32(body, offset + 4);
        let start = offset + CHUNK_HEADER_LEN;
        let end = start
            .checked_add(len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| GlbError::TruncatedChunk(format!("chunk {index} claims {len} bytes past byte {start}")))?;
        let payload = &body[start..end];
        match (index, kind) {
            (0, CHUNK_JSON) => json = Some(payload),
            (0, other) => {
                return Err(GlbError::BadChunk(format!("first chunk must be JSON, found type 0x{other:08x}")))
            }
            (_, CHUNK_JSON) => return Err(GlbError::BadChunk("more than one JSON chunk".into())),
            (1, CHUNK_BIN) => bin = Some(payload),
            (_, CHUNK_BIN) => return Err(GlbError::BadChunk("BIN chunk must directly follow JSON".into())),
            // Unknown chunk types are skipped.
            _ => {}
        }
        offset = end;
        index += 1;
    }
    let json = json.ok_or_else(|| GlbError::BadChunk("missing JSON chunk".into()))?;
    Ok((json, bin))
}

pub fn parse_glb(bytes: &[u8]) -> Result<Mesh> {
    parse_glb_asset(bytes).map(|a| a.mesh)
}

pub fn parse_glb_asset(bytes: &[u8]) -> Result<GlbAsset> {
    let (json, bin) = split_chunks(bytes)?;
    let doc: Document = serde_json::from_slice(json).map_err(|e| GlbError::Json(e.to_string()))?;
    let mut warnings = Vec::new();

    for ext in &doc.extensions_required {
        if UNSUPPORTED_EXTENSIONS.contains(&ext.as_str()) {
            return Err(GlbError::UnsupportedEncoding(format!("required extension {ext}")));
        }
        warnings.push(format!("required extension {ext} is not understood; geometry read as-is"));
    }
    for (what, n) in [
        ("materials", doc.materials.len()),
        ("textures", doc.textures.len()),
        ("images", doc.images.len()),
        ("skins", doc.skins.len()),
        ("animations", doc.animations.len()),
        ("cameras", doc.cameras.len()),
    ] {
        if n > 0 {
            warnings.push(format!("ignored {n} {what}"));
        }
    }
    for ext in &doc.extensions_used {
        if !doc.extensions_required.contains(ext) {
            warnings.push(format!("ignored extension {ext}"));
        }
    }

    let reader = Reader { doc: &doc, bin };
    let instances = mesh_instances(&doc)?;
    let node_transform_applied = instances.iter().any(|(_, m)| m.is_some());

    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    let mut primitive_count = 0usize;
    let mut saw_positions = false;
    for (mesh_index, transform) in &instances {
        let mesh = doc
            .meshes
            .get(*mesh_index)
            .ok_or_else(|| GlbError::Json(format!("node references missing mesh {mesh_index}")))?;
        for (pi, prim) in mesh.primitives.iter().enumerate() {
            primitive_count += 1;
            if let Some(ext) = prim.extensions.keys().find(|k| UNSUPPORTED_EXTENSIONS.contains(&k.as_str())) {
                return Err(GlbError::UnsupportedEncoding(format!("mesh {mesh_index} primitive {pi} uses {ext}")));
            }
            let Some(&pos_acc) = prim.attributes.get("POSITION") else {
                warnings.push(format!("mesh {mesh_index} primitive {pi} has no POSITION attribute"));
                continue;
            };
            let local = reader.read_positions(pos_acc)?;
            if local.is_empty() {
                continue;
            }
            saw_positions = true;
            let base = positions.len();
            match transform {
                Some(m) => positions.extend(local.iter().map(|p| {
                    let v = m.transform_point(&nalgebra::Point3::new(p[0], p[1], p[2]));
                    Point3::new(v.x, v.y, v.z)
                })),
                None => positions.extend(local.iter().map(|p| Point3::new(p[0], p[1], p[2]))),
            }

            let mode = prim.mode.unwrap_or(MODE_TRIANGLES);
            if mode != MODE_TRIANGLES {
                warnings.push(format!("mesh {mesh_index} primitive {pi} uses mode {mode}; only points are used"));
                continue;
            }
            let idx = match prim.indices {
                Some(acc) => reader.read_indices(acc)?,
                None => (0..local.len() as u32).collect(),
            };
            if idx.len() % 3 != 0 {
                warnings.push(format!("mesh {mesh_index} primitive {pi} index count {} is not a multiple of 3", idx.len()));
            }
            for tri in idx.chunks_exact(3) {
                let mut out = [0u32; 3];
                for (o, &i) in out.iter_mut().zip(tri) {
                    if i as usize >= local.len() {
                        return Err(GlbError::InvalidAccessor {
                            index: prim.indices.unwrap_or(pos_acc),
                            reason: format!("index {i} exceeds {} vertices", local.len()),
                        });
                    }
                    *o = (base + i as usize) as u32;
                }
                triangles.push(out);
            }
        }
    }
    if !saw_positions {
        return Err(GlbError::MissingPositions);
    }
    let indices = if triangles.is_empty() { None } else { Some(triangles) };
    let mesh = Mesh::with_transform_flag(positions, indices, node_transform_applied)?;
    Ok(GlbAsset { mesh, primitive_count, warnings })
}

/// `(mesh index, world transform)` for every mesh instance reachable from the
/// active scene. Meshes are used untransformed when no node references one.
fn mesh_instances(doc: &Document) -> Result<Vec<(usize, Option<Matrix4<f64>>)>> {
    let roots: Vec<usize> = if let Some(scene) = doc.scene.or(if doc.scenes.is_empty() { None } else { Some(0) }) {
        doc.scenes
            .get(scene)
            .ok_or_else(|| GlbError::Json(format!("scene {scene} does not exist")))?
            .nodes
            .clone()
    } else {
        let mut is_child = vec![false; doc.nodes.len()];
        for n in &doc.nodes {
            for &c in &n.children {
                if let Some(flag) = is_child.get_mut(c) {
                    *flag = true;
                }
            }
        }
        (0..doc.nodes.len()).filter(|&i| !is_child[i]).collect()
    };

    let mut out = Vec::new();
    let mut stack: Vec<(usize, Matrix4<f64>, usize)> =
        roots.iter().rev().map(|&r| (r, Matrix4::identity(), 0)).collect();
    while let Some((idx, parent, depth)) = stack.pop() {
        if depth > MAX_NODE_DEPTH {
            return Err(GlbError::Json("node hierarchy too deep or cyclic".into()));
        }
        let node = doc.nodes.get(idx).ok_or_else(|| GlbError::Json(format!("node {idx} does not exist")))?;
        let world = parent * local_transform(node);
        if let Some(m) = node.mesh {
            out.push((m, Some(world)));
        }
        for &c in node.children.iter().rev() {
            stack.push((c, world, depth + 1));
        }
    }
    if out.is_empty() {
        out = (0..doc.meshes.len()).map(|m| (m, None)).collect();
    }
    Ok(out)
}

fn local_transform(node: &Node) -> Matrix4<f64> {
    if let Some(m) = node.matrix {
        return Matrix4::from_column_slice(&m);
    }
    let t = node.translation.unwrap_or([0.0; 3]);
    let r = node.rotation.unwrap_or([0.0, 0.0, 0.0, 1.0]);
    let s = node.scale.unwrap_or([1.0; 3]);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(r[3], r[0], r[1], r[2]));
    Matrix4::new_translation(&Vector3::new(t[0], t[1], t[2]))
        * q.to_homogeneous()
        * Matrix4::new_nonuniform_scaling(&Vector3::new(s[0], s[1], s[2]))
}

struct Reader<'a> {
    doc: &'a Document,
    bin: Option<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn invalid(index: usize, reason: impl Into<String>) -> GlbError {
        GlbError::InvalidAccessor { index, reason: reason.into() }
    }

    /// Returns the accessor, the byte slice of its buffer view starting at the
    /// accessor offset, and the element stride.
    fn element_bytes(&self, index: usize, elem_size: usize) -> Result<(&'a Accessor, &'a [u8], usize)> {
        let acc = self.doc.accessors.get(index).ok_or_else(|| Self::invalid(index, "does not exist"))?;
        if acc.sparse.is_some() {
            return Err(GlbError::UnsupportedEncoding(format!("accessor {index} is sparse")));
        }
        let view_index = acc
            .buffer_view
            .ok_or_else(|| GlbError::UnsupportedEncoding(format!("accessor {index} has no bufferView")))?;
        let view = self.doc.buffer_views.get(view_index).ok_or_else(|| Self::invalid(index, "bufferView missing"))?;
        let buffer = self.doc.buffers.get(view.buffer).ok_or_else(|| Self::invalid(index, "buffer missing"))?;
        if view.buffer != 0 || buffer.uri.is_some() {
            return Err(GlbError::UnsupportedEncoding(format!(
                "accessor {index} reads external buffer {}",
                view.buffer
            )));
        }
        let bin = self.bin.ok_or_else(|| GlbError::TruncatedChunk("accessor data requires a BIN chunk".into()))?;
        if buffer.byte_length > bin.len() {
            return Err(GlbError::TruncatedChunk(format!(
                "buffer 0 declares {} bytes, BIN chunk holds {}",
                buffer.byte_length,
                bin.len()
            )));
        }
        let view_end = view
            .byte_offset
            .checked_add(view.byte_length)
            .filter(|&e| e <= bin.len())
            .ok_or_else(|| GlbError::TruncatedChunk(format!("bufferView {view_index} runs past the BIN chunk")))?;
        let view_bytes = &bin[view.byte_offset..view_end];
        let stride = view.byte_stride.unwrap_or(elem_size);
        if stride < elem_size {
            return Err(Self::invalid(index, format!("stride {stride} smaller than element size {elem_size}")));
        }
        if acc.count > 0 {
            let needed = acc
                .byte_offset
                .checked_add(stride.checked_mul(acc.count - 1).unwrap_or(usize::MAX))
                .and_then(|v| v.checked_add(elem_size));
            match needed {
                Some(n) if n <= view_bytes.len() => {}
                _ => return Err(Self::invalid(index, "elements run past the end of the bufferView")),
            }
        }
        let start = acc.byte_offset.min(view_bytes.len());
        Ok((acc, &view_bytes[start..], stride))
    }

    fn read_positions(&self, index: usize) -> Result<Vec<[f64; 3]>> {
        let acc = self.doc.accessors.get(index).ok_or_else(|| Self::invalid(index, "does not exist"))?;
        if acc.component_type != COMPONENT_F32 || acc.kind != "VEC3" {
            return Err(GlbError::UnsupportedEncoding(format!(
                "POSITION accessor {index} is {} of component type {}, expected float32 VEC3",
                acc.kind, acc.component_type
            )));
        }
        let (acc, bytes, stride) = self.element_bytes(index, 12)?;
        let mut out = Vec::with_capacity(acc.count);
        for i in 0..acc.count {
            let at = i * stride;
            let f = |k: usize| f32::from_le_bytes(bytes[at + 4 * k..at + 4 * k + 4].try_into().unwrap()) as f64;
            let p = [f(0), f(1), f(2)];
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Self::invalid(index, format!("element {i} is not finite")));
            }
            out.push(p);
        }
        Ok(out)
    }

    fn read_indices(&self, index: usize) -> Result<Vec<u32>> {
        let acc = self.doc.accessors.get(index).ok_or_else(|| Self::invalid(index, "does not exist"))?;
        if acc.kind != "SCALAR" {
            return Err(Self::invalid(index, format!("index accessor has type {}", acc.kind)));
        }
        let size = match acc.component_type {
            COMPONENT_U8 => 1,
            COMPONENT_U16 => 2,
            COMPONENT_U32 => 4,
            other => return Err(Self::invalid(index, format!("index component type {other}"))),
        };
        let (acc, bytes, stride) = self.element_bytes(index, size)?;
        Ok((0..acc.count)
            .map(|i| {
                let at = i * stride;
                match size {
                    1 => bytes[at] as u32,
                    2 => u16::from_le_bytes([bytes[at], bytes[at + 1]]) as u32,
                    _ => read_u32(bytes, at),
                }
            })
            .collect())
    }
}

/// Writes a single-node, single-primitive GLB holding the mesh's positions
/// (as float32) and, when present, its triangle indices (as u32).
pub fn encode_glb(mesh: &Mesh) -> Vec<u8> {
    let mut bin = Vec::new();
    for p in mesh.positions() {
        for v in [p.x, p.y, p.z] {
            bin.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let pos_len = bin.len();
    let (min, max) = f32_bounds(mesh);
    let mut accessors = vec![serde_json::json!({
        "bufferView": 0, "componentType": COMPONENT_F32, "count": mesh.vertex_count(),
        "type": "VEC3", "min": min, "max": max,
    })];
    let mut views = vec![serde_json::json!({ "buffer": 0, "byteOffset": 0, "byteLength": pos_len, "target": 34962 })];
    let mut primitive = serde_json::json!({ "attributes": { "POSITION": 0 }, "mode": MODE_TRIANGLES });
    if let Some(tris) = mesh.indices() {
        for i in tris.iter().flatten() {
            bin.extend_from_slice(&i.to_le_bytes());
        }
        accessors.push(serde_json::json!({
            "bufferView": 1, "componentType": COMPONENT_U32, "count": tris.len() * 3, "type": "SCALAR",
        }));
        views.push(serde_json::json!({
            "buffer": 0, "byteOffset": pos_len, "byteLength": tris.len() * 12, "target": 34963,
        }));
        primitive["indices"] = serde_json::json!(1);
    } else {
        primitive["mode"] = serde_json::json!(0);
    }
    let doc = serde_json::json!({
        "asset": { "version": "2.0", "generator": "headreg" },
        "scene": 0,
        "scenes": [{ "nodes": [0] }],
        "nodes": [{ "mesh": 0 }],
        "meshes": [{ "primitives": [primitive] }],
        "accessors": accessors,
        "bufferViews": views,
        "buffers": [{ "byteLength": bin.len() }],
    });
    assemble_glb(serde_json::to_vec(&doc).expect("json value serializes"), &bin)
}

/// Frames a JSON document and binary payload into a GLB container, padding
/// the JSON chunk with spaces and the BIN chunk with zeros.
pub fn assemble_glb(mut json: Vec<u8>, bin: &[u8]) -> Vec<u8> {
    while json.len() % 4 != 0 {
        json.push(b' ');
    }
    let mut bin = bin.to_vec();
    while bin.len() % 4 != 0 {
        bin.push(0);
    }
    let total = HEADER_LEN + CHUNK_HEADER_LEN + json.len() + if bin.is_empty() { 0 } else { CHUNK_HEADER_LEN + bin.len() };
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
    out.extend_from_slice(&GLB_VERSION.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json);
    if !bin.is_empty() {
        out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
        out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
        out.extend_from_slice(&bin);
    }
    out
}

fn f32_bounds(mesh: &Mesh) -> ([f32; 3], [f32; 3]) {
    let mut min = [f32::MAX; 3];
    let mut max = [f32::MIN; 3];
    for p in mesh.positions() {
        for (i, v) in [p.x as f32, p.y as f32, p.z as f32].into_iter().enumerate() {
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cube, head_ellipsoid, mesh_aabb};
    use proptest::prelude::*;

    #[test]
    fn magic_and_version_checks() {
        assert!(matches!(parse_glb(b"JSON{}{}{}{}{}{}"), Err(GlbError::BadMagic(_))));
        let mut bytes = encode_glb(&cube(1.0));
        bytes[4] = 1;
        assert_eq!(parse_glb(&bytes).unwrap_err(), GlbError::UnsupportedVersion(1));
        assert!(matches!(parse_glb(b"gl"), Err(GlbError::TruncatedChunk(_))));
        assert!(matches!(parse_glb(b"glTF\x02\0\0\0"), Err(GlbError::TruncatedChunk(_))));
    }

    #[test]
    fn truncated_payload_detected() {
        let bytes = encode_glb(&cube(1.0));
        for cut in [13usize, 20, 40, bytes.len() - 1] {
            let mut short = bytes[..cut].to_vec();
            // keep the header's declared length consistent with the cut
            short[8..12].copy_from_slice(&(cut as u32).to_le_bytes());
            assert!(matches!(parse_glb(&short), Err(GlbError::TruncatedChunk(_))), "cut at {cut}");
        }
        assert!(matches!(parse_glb(&bytes[..bytes.len() - 4]), Err(GlbError::TruncatedChunk(_))));
    }

    #[test]
    fn first_chunk_must_be_json() {
        let mut bytes = encode_glb(&cube(1.0));
        bytes[16..20].copy_from_slice(&CHUNK_BIN.to_le_bytes());
        assert!(matches!(parse_glb(&bytes), Err(GlbError::BadChunk(_))));
    }

    fn glb_from_json(doc: serde_json::Value, bin: &[u8]) -> Vec<u8> {
        assemble_glb(serde_json::to_vec(&doc).unwrap(), bin)
    }

    fn tri_bin() -> Vec<u8> {
        [0.0f32, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0].iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn tri_doc() -> serde_json::Value {
        serde_json::json!({
            "asset": {"version": "2.0"},
            "meshes": [{"primitives": [{"attributes": {"POSITION": 0}}]}],
            "accessors": [{"bufferView": 0, "componentType": 5126, "count": 3, "type": "VEC3"}],
            "bufferViews": [{"buffer": 0, "byteLength": 36}],
            "buffers": [{"byteLength": 36}]
        })
    }

    #[test]
    fn mesh_without_nodes_is_used_untransformed() {
        let asset = parse_glb_asset(&glb_from_json(tri_doc(), &tri_bin())).unwrap();
        assert_eq!(asset.mesh.vertex_count(), 3);
        assert!(!asset.mesh.node_transform_applied());
        assert_eq!(asset.mesh.indices().unwrap(), &[[0, 1, 2]]);
    }

    #[test]
    fn node_hierarchy_is_baked() {
        let mut doc = tri_doc();
        doc["scenes"] = serde_json::json!([{"nodes": [0]}]);
        doc["nodes"] = serde_json::json!([
            {"translation": [10.0, 0.0, 0.0], "children": [1]},
            {"mesh": 0, "scale": [2.0, 2.0, 2.0], "rotation": [0.0, 0.0, 0.7071067811865476, 0.7071067811865476]},
            {"mesh": 0, "matrix": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,5,1]}
        ]);
        let asset = parse_glb_asset(&glb_from_json(doc, &tri_bin())).unwrap();
        assert!(asset.mesh.node_transform_applied());
        let p = asset.mesh.positions();
        // only node 0's subtree is in the scene; node 2 is not reached
        assert_eq!(p.len(), 3);
        // (1,0,0) scaled by 2 then rotated +90° about z lands on (0,2,0), then +10 in x.
        assert!((p[1].x - 10.0).abs() < 1e-9 && (p[1].y - 2.0).abs() < 1e-9);
        assert!((p[2].x - 8.0).abs() < 1e-9 && p[2].y.abs() < 1e-9);
    }

    #[test]
    fn matrix_nodes_use_column_major() {
        let mut doc = tri_doc();
        doc["nodes"] = serde_json::json!([{"mesh": 0, "matrix": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,5,1]}]);
        let mesh = parse_glb(&glb_from_json(doc, &tri_bin())).unwrap();
        assert!(mesh.positions().iter().all(|p| p.z == 5.0));
    }

    #[test]
    fn unsupported_encodings() {
        let mut doc = tri_doc();
        doc["accessors"][0]["sparse"] = serde_json::json!({"count": 1});
        assert!(matches!(parse_glb(&glb_from_json(doc, &tri_bin())), Err(GlbError::UnsupportedEncoding(_))));

        let mut doc = tri_doc();
        doc["extensionsRequired"] = serde_json::json!(["KHR_draco_mesh_compression"]);
        assert!(matches!(parse_glb(&glb_from_json(doc, &tri_bin())), Err(GlbError::UnsupportedEncoding(_))));

        let mut doc = tri_doc();
        doc["meshes"][0]["primitives"][0]["extensions"] = serde_json::json!({"KHR_draco_mesh_compression": {}});
        assert!(matches!(parse_glb(&glb_from_json(doc, &tri_bin())), Err(GlbError::UnsupportedEncoding(_))));

        let mut doc = tri_doc();
        doc["accessors"][0]["componentType"] = serde_json::json!(5123);
        assert!(matches!(parse_glb(&glb_from_json(doc, &tri_bin())), Err(GlbError::UnsupportedEncoding(_))));
    }

    #[test]
    fn missing_positions() {
        let mut doc = tri_doc();
        doc["meshes"][0]["primitives"][0]["attributes"] = serde_json::json!({"NORMAL": 0});
        assert_eq!(parse_glb(&glb_from_json(doc, &tri_bin())).unwrap_err(), GlbError::MissingPositions);
        let doc = serde_json::json!({"asset": {"version": "2.0"}});
        assert_eq!(parse_glb(&glb_from_json(doc, &[])).unwrap_err(), GlbError::MissingPositions);
    }

    #[test]
    fn accessor_past_view_is_rejected() {
        let mut doc = tri_doc();
        doc["accessors"][0]["count"] = serde_json::json!(4);
        assert!(matches!(parse_glb(&glb_from_json(doc, &tri_bin())), Err(GlbError::InvalidAccessor { .. })));
        let mut doc = tri_doc();
        doc["bufferViews"][0]["byteLength"] = serde_json::json!(48);
        assert!(matches!(parse_glb(&glb_from_json(doc, &tri_bin())), Err(GlbError::TruncatedChunk(_))));
    }

    #[test]
    fn ignored_content_is_reported() {
        let mut doc = tri_doc();
        doc["materials"] = serde_json::json!([{}]);
        doc["animations"] = serde_json::json!([{}, {}]);
        let asset = parse_glb_asset(&glb_from_json(doc, &tri_bin())).unwrap();
        assert_eq!(asset.warnings.len(), 2);
        assert!(asset.warnings.iter().any(|w| w.contains("2 animations")));
    }

    #[test]
    fn interleaved_stride_is_honoured() {
        let mut bin = Vec::new();
        for p in [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            for v in p {
                bin.extend_from_slice(&v.to_le_bytes());
            }
            bin.extend_from_slice(&[0xAB; 12]);
        }
        let mut doc = tri_doc();
        doc["bufferViews"][0] = serde_json::json!({"buffer": 0, "byteLength": 72, "byteStride": 24});
        doc["buffers"][0]["byteLength"] = serde_json::json!(72);
        let mesh = parse_glb(&glb_from_json(doc, &bin)).unwrap();
        assert_eq!(mesh.positions()[2], Point3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn head_round_trip() {
        let head = head_ellipsoid();
        let once = parse_glb(&encode_glb(&head)).unwrap();
        let twice = parse_glb(&encode_glb(&once)).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.vertex_count(), head.vertex_count());
    }

    proptest! {
        #[test]
        fn encode_parse_round_trips_counts_and_bounds(
            pts in prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3, -1e3f32..1e3), 1..64)
        ) {
            let positions: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x as f64, y as f64, z as f64)).collect();
            let mesh = Mesh::new(positions, None).unwrap();
            let first = parse_glb(&encode_glb(&mesh)).unwrap();
            let second = parse_glb(&encode_glb(&first)).unwrap();
            prop_assert_eq!(first.vertex_count(), mesh.vertex_count());
            prop_assert_eq!(mesh_aabb(&first).unwrap(), mesh_aabb(&mesh).unwrap());
            prop_assert_eq!(mesh_aabb(&second).unwrap(), mesh_aabb(&first).unwrap());
        }
    }
}
