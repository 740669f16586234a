//! Locating the example projects shipped with the repository, and the
//! registration of their trajectory-planner built-ins.

use std::path::PathBuf;

use crate::builtins::Builtins;
use crate::geometry;

/// Workspace-relative corpus root (`corpus/` next to the crates).
pub fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("..")
        .join("corpus")
}

pub fn incident_response_dir() -> PathBuf {
    corpus_root().join("incident_response")
}

pub fn nodes_dir() -> PathBuf {
    corpus_root().join("nodes")
}

/// All `.heb` files of a project directory, sorted by file name.
pub fn heb_files(dir: &std::path::Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().map(|e| e == "heb").unwrap_or(false) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// The standard registry plus the geometry planners used by the
/// incident-response project.
pub fn project_builtins() -> Builtins {
    let mut b = Builtins::standard();
    geometry::register(&mut b, geometry::GeometryConfig::default());
    b
}
