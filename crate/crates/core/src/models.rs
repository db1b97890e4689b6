//! Resolution of `model_ref` strings to meshes.
//!
//! Accepted forms: `builtin:head-ellipsoid`, `builtin:cube`,
//! `builtin:ellipsoid:a,b,c` (semi-axes), or a path to a `.glb` file.
//! Relative paths resolve against the directory of the referring file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::glb::{parse_glb, GlbError};
use crate::mesh::{cube, ellipsoid, head_ellipsoid, Mesh};

pub const HEAD_ELLIPSOID: &str = "builtin:head-ellipsoid";
pub const CUBE: &str = "builtin:cube";
const ELLIPSOID_PREFIX: &str = "builtin:ellipsoid:";
/// Edge length of `builtin:cube`, roughly head sized.
pub const BUILTIN_CUBE_SIDE: f64 = 0.2;
/// Largest GLB accepted from disk or the wire.
pub const MAX_GLB_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown builtin model {0:?}")]
    UnknownBuiltin(String),
    #[error("cannot read model {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("model file {path} is {size} bytes (limit {MAX_GLB_BYTES})")]
    TooLarge { path: PathBuf, size: u64 },
    #[error("model {path}: {source}")]
    Glb { path: PathBuf, source: GlbError },
}

pub fn ellipsoid_ref(axes: [f64; 3]) -> String {
    format!("{ELLIPSOID_PREFIX}{},{},{}", axes[0], axes[1], axes[2])
}

fn parse_builtin(name: &str) -> Result<Mesh, ModelError> {
    if name == HEAD_ELLIPSOID {
        return Ok(head_ellipsoid());
    }
    if name == CUBE {
        return Ok(cube(BUILTIN_CUBE_SIDE));
    }
    if let Some(rest) = name.strip_prefix(ELLIPSOID_PREFIX) {
        let axes: Vec<f64> = rest.split(',').filter_map(|s| s.trim().parse().ok()).collect();
        if axes.len() == 3 && rest.split(',').count() == 3 && axes.iter().all(|a| a.is_finite() && *a > 0.0) {
            return Ok(ellipsoid([axes[0], axes[1], axes[2]]));
        }
    }
    Err(ModelError::UnknownBuiltin(name.to_string()))
}

pub fn load_glb_file(path: &Path) -> Result<Mesh, ModelError> {
    let io = |source| ModelError::Io { path: path.to_path_buf(), source };
    let size = std::fs::metadata(path).map_err(io)?.len();
    if size > MAX_GLB_BYTES as u64 {
        return Err(ModelError::TooLarge { path: path.to_path_buf(), size });
    }
    let bytes = std::fs::read(path).map_err(io)?;
    parse_glb(&bytes).map_err(|source| ModelError::Glb { path: path.to_path_buf(), source })
}

pub fn resolve_model_ref(model_ref: &str, base_dir: Option<&Path>) -> Result<Arc<Mesh>, ModelError> {
    if model_ref.starts_with("builtin:") {
        return parse_builtin(model_ref).map(Arc::new);
    }
    let p = Path::new(model_ref);
    let path = match base_dir {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    };
    load_glb_file(&path).map(Arc::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glb::encode_glb;
    use crate::mesh::mesh_aabb;

    #[test]
    fn builtins() {
        assert_eq!(resolve_model_ref(HEAD_ELLIPSOID, None).unwrap().vertex_count(), 482);
        assert_eq!(resolve_model_ref(CUBE, None).unwrap().vertex_count(), 8);
        let m = resolve_model_ref(&ellipsoid_ref([0.1125, 0.096, 0.1]), None).unwrap();
        let b = mesh_aabb(&m).unwrap();
        assert!((b.max.x - 0.1125).abs() < 1e-12 && (b.max.y - 0.096).abs() < 1e-12);
        for bad in ["builtin:sphere", "builtin:ellipsoid:1,2", "builtin:ellipsoid:1,-2,3", "builtin:ellipsoid:1,2,3,4"] {
            assert!(matches!(resolve_model_ref(bad, None), Err(ModelError::UnknownBuiltin(_))), "{bad}");
        }
    }

    #[test]
    fn glb_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("c.glb"), encode_glb(&cube(1.0))).unwrap();
        assert_eq!(resolve_model_ref("c.glb", Some(dir.path())).unwrap().vertex_count(), 8);
        assert!(matches!(resolve_model_ref("missing.glb", Some(dir.path())), Err(ModelError::Io { .. })));
        std::fs::write(dir.path().join("bad.glb"), b"nope").unwrap();
        assert!(matches!(resolve_model_ref("bad.glb", Some(dir.path())), Err(ModelError::Glb { .. })));
    }
}
