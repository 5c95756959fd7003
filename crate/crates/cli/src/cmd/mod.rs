pub mod mix;
pub mod partition;
pub mod perturb;
pub mod score;
pub mod stats;

use patchmix::patching::DEFAULT_PATCH_SIZE;
use patchmix::FpsStart;

use crate::args::FpsStartArg;

/// `(P, s)` for clouds of `n` points. Either value may be implied by the
/// other; with neither, `s` defaults to 32.
pub fn resolve_patching(n: usize, patches: Option<usize>, size: Option<usize>) -> Result<(usize, usize), String> {
    match (patches, size) {
        (Some(p), Some(s)) if p * s == n => Ok((p, s)),
        (Some(p), Some(s)) => Err(format!("N={n} points cannot form P={p} patches of s={s}")),
        (Some(p), None) if p > 0 && n.is_multiple_of(p) => Ok((p, n / p)),
        (Some(p), None) => Err(format!("N={n} is not divisible by P={p}")),
        (None, s) => {
            let s = s.unwrap_or(DEFAULT_PATCH_SIZE);
            if s > 0 && n.is_multiple_of(s) {
                Ok((n / s, s))
            } else {
                Err(format!("N={n} is not divisible by patch size s={s}"))
            }
        }
    }
}

pub fn fps_start(arg: Option<FpsStartArg>, seed: u64) -> FpsStart {
    match arg {
        Some(FpsStartArg::Random) => FpsStart::Seeded(seed),
        _ => FpsStart::Centroid,
    }
}
