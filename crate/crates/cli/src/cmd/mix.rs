use std::path::Path;

use anyhow::{bail, Context};
use patchmix::io::encode_ppmx;
use patchmix::mixing::{batch_out_id, encode_manifest, ManifestRecord, Mixer};
use patchmix::rng;
use patchmix::{
    read_score_cache, AssignMode, BatchConfig, LabelSpace, MixLevel, MixParams, MixResult, Pairing,
    PointCloud, TargetMode,
};
use rayon::prelude::*;

use super::{fps_start, resolve_patching};
use crate::args::{AssignArg, LevelArg, MixArgs, PairingArg, TargetModeArg};
use crate::files::{discover, load_clouds, require_input, require_output, write_atomic, write_failures, CLOUD_EXTENSIONS};
use crate::{Session, Status};

pub const MANIFEST_NAME: &str = "manifest.tsv";
pub const FAILURES_NAME: &str = "failures.tsv";

fn class_count(dataset: &[PointCloud], flag: Option<u32>) -> anyhow::Result<u32> {
    if let Some(c) = flag {
        return Ok(c);
    }
    let mut found: Option<u32> = None;
    for c in dataset.iter().filter_map(PointCloud::num_classes) {
        match found {
            Some(f) if f != c => bail!("inputs disagree on the class count ({f} vs {c}); pass --classes"),
            _ => found = Some(c),
        }
    }
    found.context("class count unknown; pass --classes")
}

fn write_results(output: &Path, items: &[(String, MixResult)], raw_target: bool) -> anyhow::Result<()> {
    items
        .par_iter()
        .try_for_each(|(id, r)| write_atomic(&output.join(format!("{id}.ppmx")), &encode_ppmx(&r.mixed)))?;
    let records: Vec<ManifestRecord> = items
        .iter()
        .map(|(id, r)| ManifestRecord::from_result(id, r, raw_target))
        .collect();
    write_atomic(&output.join(MANIFEST_NAME), encode_manifest(&records).as_bytes())
}

pub fn run(args: &MixArgs, session: &mut Session) -> anyhow::Result<Status> {
    let input = require_input(session.input(&args.common).as_deref(), "input")?;
    let output = require_output(session.output(&args.common).as_deref())?;
    let cfg = &session.config;

    let level = match args.level.or(cfg.level).unwrap_or(LevelArg::Patch) {
        LevelArg::Patch => MixLevel::Patch,
        LevelArg::Block => MixLevel::Block,
        LevelArg::Point => MixLevel::Point,
    };
    let target_mode = match args.target_mode.or(cfg.target_mode).unwrap_or(TargetModeArg::Score) {
        TargetModeArg::Score => TargetMode::Score,
        TargetModeArg::Linear => TargetMode::Linear,
    };
    let assign = match args.assign.or(cfg.assign).unwrap_or(AssignArg::Centers) {
        AssignArg::Centers => AssignMode::Centers,
        AssignArg::Full => AssignMode::Full,
    };
    let pairing = match args.pairing.or(cfg.pairing).unwrap_or(PairingArg::Shuffle) {
        PairingArg::Shuffle => Pairing::Shuffle,
        PairingArg::AllPairs => Pairing::AllPairsSample,
    };
    let params = MixParams {
        beta: args.beta.or(cfg.beta).unwrap_or(patchmix::mixing::DEFAULT_BETA),
        target_mode,
        level,
        seed: session.seed,
    };
    params.validate()?;
    let sweep = args.lambda_sweep.clone().or_else(|| cfg.lambda_sweep.clone());
    let count = args.count.or(cfg.count);
    let raw_target = args.raw_target || cfg.raw_target.unwrap_or(false);
    let scores_path = args.scores.clone().or_else(|| cfg.scores.clone());
    if sweep.is_none() && count.is_none() {
        bail!("give --count or --lambda-sweep");
    }
    if let Some(bad) = sweep.iter().flatten().find(|l| !(0.0..=1.0).contains(*l)) {
        bail!("sweep ratio {bad} is outside [0, 1]");
    }
    if level == MixLevel::Patch && target_mode == TargetMode::Score && scores_path.is_none() {
        bail!("score target mode at patch level needs --scores");
    }

    let paths = discover(&input, CLOUD_EXTENSIONS)?;
    let dataset: Vec<PointCloud> = load_clouds(&paths, &mut session.warnings)
        .into_iter()
        .map(|l| l.cloud)
        .collect();
    if dataset.is_empty() {
        bail!("none of the {} inputs could be read", paths.len());
    }
    let (patches, patch_size) = resolve_patching(
        dataset[0].len(),
        args.patch.patches.or(cfg.patches),
        args.patch.patch_size.or(cfg.patch_size),
    )
    .map_err(anyhow::Error::msg)?;
    let cache = match &scores_path {
        Some(p) => {
            let c = read_score_cache(p).with_context(|| format!("reading {}", p.display()))?;
            if level == MixLevel::Patch && c.patches() != patches {
                bail!("score cache has P={} but the clouds give P={patches}", c.patches());
            }
            Some(c)
        }
        None => None,
    };
    let config = BatchConfig {
        patches,
        patch_size,
        fps_start: fps_start(args.patch.fps_start.or(cfg.fps_start), session.seed),
        assign,
        params,
        pairing,
        count: count.unwrap_or(0),
        label_space: LabelSpace::new(class_count(&dataset, args.classes.or(cfg.classes))?)?,
        parallel: session.parallel(),
    };

    let mut failures = Vec::new();
    let items: Vec<(String, MixResult)> = match sweep {
        Some(lambdas) => {
            let mixer = Mixer::new(&dataset, cache.as_ref(), config)?;
            let (i, j) = sweep_pair(&mixer, args.pair.as_ref().or(session.config.pair.as_ref()))?;
            let mut out = Vec::new();
            for (k, &lam) in lambdas.iter().enumerate() {
                let id = format!("sweep_{k:03}");
                match mixer.mix_pair(i, j, Some(lam), &mut rng::stream(session.seed, k as u64)) {
                    Ok(r) => out.push((id, r)),
                    Err(e) => failures.push((id, e.to_string())),
                }
            }
            out
        }
        None => {
            let report = patchmix::batch_mix(&dataset, cache.as_ref(), config)?;
            for f in report.failures {
                failures.push((
                    batch_out_id(f.index),
                    format!("{} + {}: {}", f.source_a, f.source_b, f.reason),
                ));
            }
            report.items.into_iter().map(|it| (it.out_id, it.result)).collect()
        }
    };

    write_results(&output, &items, raw_target)?;
    write_failures(&output.join(FAILURES_NAME), &failures)?;
    for (id, reason) in &failures {
        session.warn(format!("{id}: {reason}"));
    }
    println!("wrote {} mixed samples to {} ({} failed)", items.len(), output.display(), failures.len());
    Ok(Status::Done)
}

fn sweep_pair(mixer: &Mixer<'_>, pair: Option<&Vec<String>>) -> anyhow::Result<(usize, usize)> {
    let find = |id: &str| {
        (0..mixer.len())
            .find(|&i| mixer.sample_id(i) == id)
            .with_context(|| format!("no input sample with id {id}"))
    };
    match pair {
        Some(ids) if ids.len() == 2 => Ok((find(&ids[0])?, find(&ids[1])?)),
        Some(ids) => bail!("--pair takes two ids, got {}", ids.len()),
        None => Ok((0, if mixer.len() > 1 { 1 } else { 0 })),
    }
}
