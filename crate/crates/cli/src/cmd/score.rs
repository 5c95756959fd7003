use std::path::{Path, PathBuf};

use patchmix::scoring::AttentionExport;
use patchmix::{ScoreCache, ScoreVector};
use rayon::prelude::*;

use crate::args::ScoreArgs;
use crate::files::{discover, require_input, require_output, write_atomic, write_failures, NoInput};
use crate::{Session, Status};

pub fn failures_path(cache: &Path) -> PathBuf {
    let mut name = cache.file_name().unwrap_or_default().to_os_string();
    name.push(".failures.tsv");
    cache.with_file_name(name)
}

pub fn run(args: &ScoreArgs, session: &mut Session) -> anyhow::Result<Status> {
    let dir = args
        .attention
        .clone()
        .or_else(|| session.input(&args.common))
        .or_else(|| session.config.attention.clone());
    let output = require_output(session.output(&args.common).as_deref())?;
    let patches = args.patches.or(session.config.patches);

    let paths = match require_input(dir.as_deref(), "attention").and_then(|d| discover(&d, &["ppma"])) {
        Ok(p) => p,
        Err(e) if e.downcast_ref::<NoInput>().is_some() => {
            // still leave a valid, empty cache behind
            let cache = ScoreCache::new(patches.unwrap_or(0));
            write_atomic(&output, cache.encode().as_bytes())?;
            write_failures(&failures_path(&output), &[])?;
            eprintln!("error: {e}");
            println!("scored 0 samples");
            return Ok(Status::Empty);
        }
        Err(e) => return Err(e),
    };

    let scored: Vec<(String, Result<ScoreVector, String>)> = paths
        .par_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let s = AttentionExport::load(p)
                .and_then(|a| a.scores())
                .map_err(|e| e.to_string());
            (id, s)
        })
        .collect();

    let patches = patches
        .or_else(|| scored.iter().find_map(|(_, s)| s.as_ref().ok().map(ScoreVector::len)))
        .unwrap_or(0);
    let mut cache = ScoreCache::new(patches);
    let mut failures = Vec::new();
    for (id, s) in scored {
        let r = s.and_then(|v| cache.insert(id.clone(), v).map_err(|e| e.to_string()));
        if let Err(reason) = r {
            session.warn(format!("{id}: {reason}"));
            failures.push((id, reason));
        }
    }
    write_atomic(&output, cache.encode().as_bytes())?;
    write_failures(&failures_path(&output), &failures)?;

    let entropy: Vec<f64> = cache.iter().map(|(_, s)| s.entropy()).collect();
    if entropy.is_empty() {
        println!("scored 0 samples ({} failed)", failures.len());
    } else {
        let min = entropy.iter().copied().fold(f64::INFINITY, f64::min);
        let max = entropy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = entropy.iter().sum::<f64>() / entropy.len() as f64;
        println!(
            "scored {} samples ({} failed), P={patches}; entropy min {min:.6} mean {mean:.6} max {max:.6}",
            entropy.len(),
            failures.len()
        );
    }
    Ok(Status::Done)
}
