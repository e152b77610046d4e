//! File formats: native clip documents, the BVH subset, matrix documents,
//! run configuration and the generation manifest.
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits, so files round-trip exactly.

pub mod bvh;
pub mod clip;
pub mod documents;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use bvh::{bvh_from_str, read_bvh};
pub use clip::{
    clip_from_str, clip_to_string, read_clip, read_topology, write_clip, write_topology,
    ClipDocument, FrameDocument, LoadedClip, TopologyDocument,
};
pub use documents::{
    read_assignment, read_plan, write_assignment, write_plan, Manifest, MatrixDocument, RunConfig,
};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_json<T: DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads a clip in either format, chosen by extension (`.bvh` or JSON).
pub fn read_motion(path: &Path) -> Result<LoadedClip> {
    let is_bvh = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("bvh"));
    if is_bvh {
        read_bvh(path)
    } else {
        read_clip(path)
    }
}

/// Every `.json` and `.bvh` file in `dir`, sorted by file name.
pub fn motion_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase());
        if path.is_file() && matches!(ext.as_deref(), Some("json" | "bvh")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
