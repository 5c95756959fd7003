#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use patchmix::io::{save_cloud, CloudFormat};
use patchmix::{PointCloud, ScoreCache, ScoreVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASSES: u32 = 4;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn patchmix<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = Command::new(env!("CARGO_BIN_EXE_patchmix"))
        .args(args)
        .output()
        .expect("spawn patchmix");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Points uniform on the unit sphere.
pub fn sphere_cloud(seed: u64, n: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| loop {
            let v = [
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            ];
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if r > 0.1 && r <= 1.0 {
                break v.map(|c| (c / r) as f32);
            }
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

/// `count` labeled clouds named `s000.ppmx`, `s001.ppmx`, ... with class `i % 4`.
pub fn write_dataset(dir: &Path, count: usize, n: usize) -> Vec<String> {
    std::fs::create_dir_all(dir).unwrap();
    (0..count)
        .map(|i| {
            let id = format!("s{i:03}");
            let cloud = sphere_cloud(1000 + i as u64, n)
                .with_label(i as u32 % CLASSES, Some(CLASSES))
                .unwrap();
            save_cloud(&cloud, &dir.join(format!("{id}.ppmx")), CloudFormat::PpmxBinary).unwrap();
            id
        })
        .collect()
}

/// Random normalized scores for every id.
pub fn write_scores(path: &Path, ids: &[String], patches: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = ScoreCache::new(patches);
    for id in ids {
        let raw: Vec<f64> = (0..patches).map(|_| rng.random::<f64>() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let mut s: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let tail: f64 = s[1..].iter().sum();
        s[0] = 1.0 - tail;
        cache.insert(id.clone(), ScoreVector::new(s).unwrap()).unwrap();
    }
    std::fs::write(path, cache.encode()).unwrap();
}

pub fn write_uniform_scores(path: &Path, ids: &[String], patches: usize) {
    let mut cache = ScoreCache::new(patches);
    for id in ids {
        cache
            .insert(id.clone(), patchmix::uniform_scores(patches).unwrap())
            .unwrap();
    }
    std::fs::write(path, cache.encode()).unwrap();
}

/// Every file under `dir`, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
