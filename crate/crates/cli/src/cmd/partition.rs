use std::fmt::Write as _;

use patchmix::{partition, PatchSet};
use rayon::prelude::*;

use super::{fps_start, resolve_patching};
use crate::args::PartitionArgs;
use crate::files::{discover, load_clouds, require_input, require_output, write_atomic, CLOUD_EXTENSIONS};
use crate::{Session, Status};

/// `PPMP 1 N=<n> P=<p> s=<s>`, then one `center\tmember member ...` line per patch.
fn encode_patches(ps: &PatchSet) -> String {
    let mut out = format!(
        "PPMP 1 N={} P={} s={}\n",
        ps.cloud().len(),
        ps.num_patches(),
        ps.patch_size()
    );
    for (p, &center) in ps.center_indices().iter().enumerate() {
        let members: Vec<String> = ps.members(p).iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{center}\t{}", members.join(" "));
    }
    out
}

pub fn run(args: &PartitionArgs, session: &mut Session) -> anyhow::Result<Status> {
    let input = require_input(session.input(&args.common).as_deref(), "input")?;
    let output = require_output(session.output(&args.common).as_deref())?;
    let cfg = &session.config;
    let patches = args.patch.patches.or(cfg.patches);
    let size = args.patch.patch_size.or(cfg.patch_size);
    let start = fps_start(args.patch.fps_start.or(cfg.fps_start), session.seed);

    let paths = discover(&input, CLOUD_EXTENSIONS)?;
    let clouds = load_clouds(&paths, &mut session.warnings);
    let results: Vec<_> = clouds
        .par_iter()
        .map(|l| {
            let id = l.cloud.id().unwrap_or_default();
            let ps = resolve_patching(l.cloud.len(), patches, size)
                .map_err(|m| format!("{}: skipped, {m}", l.path.display()))
                .and_then(|(p, s)| {
                    partition(&l.cloud, p, s, start).map_err(|e| format!("{}: {e}", l.path.display()))
                })?;
            write_atomic(&output.join(format!("{id}.patches")), encode_patches(&ps).as_bytes())
                .map_err(|e| format!("{e:#}"))?;
            Ok::<_, String>((id.to_owned(), ps.cloud().len(), ps.num_patches(), ps.patch_size(), ps.mean_patch_radius()))
        })
        .collect();

    let mut summary = String::from("id\tpoints\tpatches\tpatch_size\tmean_radius\n");
    let mut radii = Vec::new();
    for r in results {
        match r {
            Ok((id, n, p, s, radius)) => {
                let _ = writeln!(summary, "{id}\t{n}\t{p}\t{s}\t{radius}");
                radii.push(radius);
            }
            Err(m) => session.warn(m),
        }
    }
    write_atomic(&output.join("summary.tsv"), summary.as_bytes())?;
    let mean = if radii.is_empty() {
        0.0
    } else {
        radii.iter().sum::<f64>() / radii.len() as f64
    };
    println!(
        "partitioned {} of {} clouds; mean patch radius {mean:.6}",
        radii.len(),
        paths.len()
    );
    Ok(Status::Done)
}
