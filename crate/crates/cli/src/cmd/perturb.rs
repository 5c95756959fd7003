use anyhow::bail;
use patchmix::io::encode_cloud;
use patchmix::patching::DEFAULT_PATCH_SIZE;
use patchmix::perturb::{drop_points, jitter, random_rotate, scale, Axis};
use patchmix::rng;
use rayon::prelude::*;

use crate::args::{AxisArg, PerturbArgs, TransformArg};
use crate::files::{discover, load_clouds, require_input, require_output, write_atomic, CLOUD_EXTENSIONS};
use crate::{Session, Status};

pub fn run(args: &PerturbArgs, session: &mut Session) -> anyhow::Result<Status> {
    let input = require_input(session.input(&args.common).as_deref(), "input")?;
    let output = require_output(session.output(&args.common).as_deref())?;
    let cfg = &session.config;
    let Some(transform) = args.transform.or(cfg.transform) else {
        bail!("--transform is required (jitter, rotate, scale or drop)");
    };
    let sigma = args.sigma.or(cfg.sigma).unwrap_or(0.01);
    let axis = match args.axis.or(cfg.axis).unwrap_or(AxisArg::Z) {
        AxisArg::X => Axis::X,
        AxisArg::Y => Axis::Y,
        AxisArg::Z => Axis::Z,
    };
    let max_angle = args.max_angle.or(cfg.max_angle).unwrap_or(30.0);
    let factor = args.factor.or(cfg.factor).unwrap_or(2.0);
    let ratio = args.ratio.or(cfg.ratio).unwrap_or(0.2);
    let patch_size = args.patch_size.or(cfg.patch_size).unwrap_or(DEFAULT_PATCH_SIZE);
    if patch_size == 0 {
        bail!("--patch-size must be positive");
    }
    let seed = session.seed;

    let paths = discover(&input, CLOUD_EXTENSIONS)?;
    if output.exists() {
        let out = output.canonicalize()?;
        for p in &paths {
            if p.parent().and_then(|d| d.canonicalize().ok()).as_ref() == Some(&out) {
                bail!("output directory {} holds the inputs; choose another", output.display());
            }
        }
    }
    let clouds = load_clouds(&paths, &mut session.warnings);
    let results: Vec<Result<(String, usize), String>> = clouds
        .par_iter()
        .enumerate()
        .map(|(k, l)| {
            let mut r = rng::stream(seed, k as u64);
            let out = match transform {
                TransformArg::Jitter => jitter(&l.cloud, sigma, &mut r),
                TransformArg::Rotate => random_rotate(&l.cloud, axis, max_angle, &mut r).map(|(c, _)| c),
                TransformArg::Scale => scale(&l.cloud, factor),
                TransformArg::Drop => drop_points(&l.cloud, ratio, &mut r),
            }
            .map_err(|e| format!("{}: {e}", l.path.display()))?;
            let name = l.path.file_name().unwrap_or_default();
            write_atomic(&output.join(name), &encode_cloud(&out, l.format)).map_err(|e| format!("{e:#}"))?;
            Ok((l.path.display().to_string(), out.len()))
        })
        .collect();

    let mut written = 0;
    for r in results {
        match r {
            Ok((path, n)) => {
                written += 1;
                if n % patch_size != 0 {
                    session.warn(format!(
                        "{path}: output has N={n} points, not divisible by patch size s={patch_size}"
                    ));
                }
            }
            Err(m) => session.warn(m),
        }
    }
    println!("perturbed {written} of {} clouds", paths.len());
    Ok(Status::Done)
}
