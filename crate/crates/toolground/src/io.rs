//! Reading and writing manifests, worlds, traces and score files.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use toolground_core::registry::ToolRegistry;
use toolground_core::scheduler::Trajectory;
use toolground_core::simenv::SyntheticWorld;

/// Environment variable naming the manifest used when no path is given.
pub const MANIFEST_ENV: &str = "TOOLGROUND_MANIFEST";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("world not found: {}", .0.display())]
    WorldNotFound(PathBuf),
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl IoError {
    fn parse(path: &Path, msg: impl ToString) -> Self {
        IoError::Parse { path: path.to_path_buf(), msg: msg.to_string() }
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => IoError::NotFound(path.to_path_buf()),
        _ => IoError::Io { path: path.to_path_buf(), source: e },
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| IoError::Io { path: path.to_path_buf(), source: e })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::parse(path, e))
}

pub fn load_world(path: &Path) -> Result<SyntheticWorld, IoError> {
    let text = read_text(path).map_err(|e| match e {
        IoError::NotFound(p) => IoError::WorldNotFound(p),
        other => other,
    })?;
    SyntheticWorld::from_json(&text).map_err(|e| IoError::parse(path, e))
}

/// Explicit path, then `$TOOLGROUND_MANIFEST`, then the built-in library.
pub fn load_registry(path: Option<&Path>) -> Result<ToolRegistry, IoError> {
    let env = std::env::var_os(MANIFEST_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    match path.map(Path::to_path_buf).or(env) {
        Some(p) => {
            let text = read_text(&p)?;
            ToolRegistry::from_manifest_str(&text).map_err(|e| IoError::parse(&p, e))
        }
        None => Ok(ToolRegistry::default_library()),
    }
}

/// Parses one JSON document, a JSON array, or one document per line.
pub fn parse_records<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>, IoError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| IoError::parse(path, e));
    }
    if let Ok(one) = serde_json::from_str::<T>(trimmed) {
        return Ok(vec![one]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| IoError::parse(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    parse_records(path, &read_text(path)?)
}

pub fn read_traces(path: &Path) -> Result<Vec<Trajectory>, IoError> {
    read_records(path)
}

/// Pretty-printed trace followed by a newline.
pub fn trace_text(traj: &Trajectory) -> String {
    let mut s = traj.to_json();
    s.push('\n');
    s
}

pub fn write_trace(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    write_text(path, &trace_text(traj))
}

/// One compact JSON document per line.
pub fn to_jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items.iter().filter_map(|i| serde_json::to_string(i).ok()).map(|l| l + "\n").collect()
}
