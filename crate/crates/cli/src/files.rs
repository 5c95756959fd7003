use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use patchmix::io::{load_cloud, CloudFormat};
use patchmix::PointCloud;
use rayon::prelude::*;

/// Missing or empty input; maps to exit code 2.
#[derive(Debug)]
pub struct NoInput(pub String);

impl fmt::Display for NoInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NoInput {}

pub fn require_input(path: Option<&Path>, what: &str) -> anyhow::Result<PathBuf> {
    let path = path.ok_or_else(|| NoInput(format!("no inputs: --{what} not given")))?;
    if !path.exists() {
        return Err(NoInput(format!("no inputs: {} does not exist", path.display())).into());
    }
    Ok(path.to_path_buf())
}

pub fn require_output(path: Option<&Path>) -> anyhow::Result<PathBuf> {
    path.map(Path::to_path_buf)
        .ok_or_else(|| anyhow::anyhow!("--output is required"))
}

/// Files under `path` with one of `extensions`, sorted. A `.list` file names
/// one path per line, relative to the list's directory; any other file is
/// taken as the only input.
pub fn discover(path: &Path, extensions: &[&str]) -> anyhow::Result<Vec<PathBuf>> {
    let files = if path.is_dir() {
        let mut found = Vec::new();
        for entry in std::fs::read_dir(path).with_context(|| format!("listing {}", path.display()))? {
            let p = entry?.path();
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            if p.is_file() && extensions.contains(&ext) {
                found.push(p);
            }
        }
        found.sort();
        found
    } else if path.extension().is_some_and(|e| e == "list") {
        let base = path.parent().unwrap_or(Path::new(""));
        std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect()
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(NoInput(format!("no inputs found in {}", path.display())).into());
    }
    Ok(files)
}

pub const CLOUD_EXTENSIONS: &[&str] = &["ppmx", "xyz", "txt"];

pub struct Loaded {
    pub path: PathBuf,
    pub format: CloudFormat,
    pub cloud: PointCloud,
}

/// Loads clouds in input order. Unreadable files and repeated ids become
/// warnings.
pub fn load_clouds(paths: &[PathBuf], warnings: &mut Vec<String>) -> Vec<Loaded> {
    let results: Vec<_> = paths
        .par_iter()
        .map(|p| {
            let format = CloudFormat::from_path(p)
                .ok_or_else(|| format!("{}: unknown cloud format", p.display()))?;
            load_cloud(p, format)
                .map(|cloud| Loaded {
                    path: p.clone(),
                    format,
                    cloud,
                })
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut ids = BTreeSet::new();
    let mut out = Vec::new();
    for r in results {
        match r {
            Ok(l) => {
                let id = l.cloud.id().unwrap_or_default().to_owned();
                if ids.insert(id.clone()) {
                    out.push(l);
                } else {
                    warnings.push(format!("{}: duplicate sample id {id}, skipped", l.path.display()));
                }
            }
            Err(e) => warnings.push(e),
        }
    }
    out
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn remove_stale(path: &Path) -> anyhow::Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
            Err(e).with_context(|| format!("removing {}", path.display()))
        }
        _ => Ok(()),
    }
}

/// Writes `name\treason` lines, or removes an old failures file when there
/// is nothing to report.
pub fn write_failures(path: &Path, rows: &[(String, String)]) -> anyhow::Result<()> {
    if rows.is_empty() {
        return remove_stale(path);
    }
    let text: String = rows
        .iter()
        .map(|(id, reason)| format!("{id}\t{}\n", reason.replace(['\t', '\n'], " ")))
        .collect();
    write_atomic(path, text.as_bytes())
}
