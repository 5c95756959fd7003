use patchmix::assignment::{patch_assignment_centers, point_assignment, AssignMode, Assignment};
use patchmix::cloud::{LabelSpace, Mask, Point, PointCloud, TargetDist};
use patchmix::mixing::{
    batch_mix, block_mask, mix_block_at, mix_patch, mix_patch_at, mix_point_at, patch_mix_with_mask,
    sample_lambda, sample_mask, BatchConfig, MixLevel, MixParams, Pairing, PatchSource, PointSource,
    TargetMode,
};
use patchmix::patching::{partition, FpsStart, PatchSet};
use patchmix::rng;
use patchmix::scoring::{uniform_scores, ScoreCache, ScoreVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()])
            .collect(),
    )
    .unwrap()
}

fn random_scores(rng: &mut ChaCha8Rng, p: usize) -> ScoreVector {
    let raw: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    ScoreVector::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

struct Pair {
    a: PatchSet,
    b: PatchSet,
    asg: Assignment,
    y1: TargetDist,
    y2: TargetDist,
}

fn pair(seed: u64, p: usize, s: usize) -> Pair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = partition(&random_cloud(&mut rng, p * s), p, s, FpsStart::Centroid).unwrap();
    let b = partition(&random_cloud(&mut rng, p * s), p, s, FpsStart::Centroid).unwrap();
    let asg = patch_assignment_centers(&a, &b).unwrap();
    let space = LabelSpace::new(4).unwrap();
    Pair {
        a,
        b,
        asg,
        y1: space.one_hot(1).unwrap(),
        y2: space.one_hot(3).unwrap(),
    }
}

#[test]
fn beta_one_is_uniform_mean() {
    let mut rng = rng::stream(17, 0);
    let n = 100_000;
    let mean = (0..n).map(|_| sample_lambda(1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}

#[test]
fn mask_positions_uniform() {
    let mut rng = rng::stream(4, 0);
    let mut hits = [0usize; 8];
    for _ in 0..10_000 {
        let m = sample_mask(8, 0.5, &mut rng).unwrap();
        assert_eq!(m.count_ones(), 4);
        for (h, b) in hits.iter_mut().zip(m.bits()) {
            *h += *b as usize;
        }
    }
    for h in hits {
        assert!((h as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }
}

#[test]
fn boundary_ratios_collapse() {
    let pr = pair(1, 8, 4);
    let s1 = random_scores(&mut ChaCha8Rng::seed_from_u64(2), 8);
    let s2 = random_scores(&mut ChaCha8Rng::seed_from_u64(3), 8);
    let a = PatchSource { patches: &pr.a, target: &pr.y1, scores: &s1 };
    let b = PatchSource { patches: &pr.b, target: &pr.y2, scores: &s2 };
    let mut rng = rng::stream(0, 0);

    let full = mix_patch_at(a, b, &pr.asg, 1.0, TargetMode::Score, &mut rng).unwrap();
    assert_eq!(full.mixed.points(), pr.a.cloud().points());
    assert_eq!(full.target, pr.y1);
    assert!((full.w1 - 1.0).abs() < 1e-12 && full.w2 == 0.0);

    let none = mix_patch_at(a, b, &pr.asg, 0.0, TargetMode::Score, &mut rng).unwrap();
    assert_eq!(none.target, pr.y2);
    assert_eq!(none.w1, 0.0);
    // every slot holds b's assigned patch
    let mixed = none.mixed.points();
    for slot in 0..8 {
        let q = pr.asg.perm()[slot];
        for (&dst, &src) in pr.a.members(slot).iter().zip(pr.b.members(q)) {
            assert_eq!(mixed[dst], pr.b.cloud().points()[src]);
        }
    }
}

#[test]
fn uniform_scores_reproduce_linear_target() {
    let pr = pair(5, 64, 2);
    let u = uniform_scores(64).unwrap();
    let a = PatchSource { patches: &pr.a, target: &pr.y1, scores: &u };
    let b = PatchSource { patches: &pr.b, target: &pr.y2, scores: &u };
    let mask = Mask::from_indices(64, 0..16);
    let score = patch_mix_with_mask(a, b, &pr.asg, mask.clone(), 0.25, TargetMode::Score).unwrap();
    let linear = patch_mix_with_mask(a, b, &pr.asg, mask, 0.25, TargetMode::Linear).unwrap();
    assert!((score.target.weights()[1] - 0.25).abs() < 1e-12);
    assert!((score.target.weights()[3] - 0.75).abs() < 1e-12);
    for (x, y) in score.target.weights().iter().zip(linear.target.weights()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn same_class_pair_gives_exact_one_hot() {
    let pr = pair(6, 16, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (s1, s2) = (random_scores(&mut rng, 16), random_scores(&mut rng, 16));
    let mut mrng = rng::stream(1, 0);
    for _ in 0..50 {
        let r = mix_patch(
            PatchSource { patches: &pr.a, target: &pr.y1, scores: &s1 },
            PatchSource { patches: &pr.b, target: &pr.y1, scores: &s2 },
            &pr.asg,
            &MixParams::default(),
            &mut mrng,
        );
        match r {
            Ok(r) => assert_eq!(r.target, pr.y1),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn self_mix_reproduces_sample() {
    let pr = pair(8, 8, 4);
    let s = random_scores(&mut ChaCha8Rng::seed_from_u64(9), 8);
    let a = PatchSource { patches: &pr.a, target: &pr.y1, scores: &s };
    let asg = patch_assignment_centers(&pr.a, &pr.a).unwrap();
    let mut rng = rng::stream(2, 0);
    for _ in 0..20 {
        let r = mix_patch(a, a, &asg, &MixParams::default(), &mut rng).unwrap();
        assert_eq!(r.mixed.points(), pr.a.cloud().points());
        assert_eq!(r.target, pr.y1);
    }
}

#[test]
fn selected_patches_are_verbatim() {
    let pr = pair(10, 16, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (s1, s2) = (random_scores(&mut rng, 16), random_scores(&mut rng, 16));
    let mut mrng = rng::stream(3, 0);
    for _ in 0..100 {
        let r = mix_patch(
            PatchSource { patches: &pr.a, target: &pr.y1, scores: &s1 },
            PatchSource { patches: &pr.b, target: &pr.y2, scores: &s2 },
            &pr.asg,
            &MixParams::default(),
            &mut mrng,
        )
        .unwrap();
        assert_eq!(r.mask.count_ones(), (r.lam * 16.0).floor() as usize);
        let w1: f64 = (0..16).filter(|&i| r.mask.get(i)).map(|i| s1.get(i)).sum();
        assert!((r.w1 - w1).abs() < 1e-15);
        for slot in (0..16).filter(|&i| r.mask.get(i)) {
            for &i in pr.a.members(slot) {
                assert_eq!(r.mixed.points()[i], pr.a.cloud().points()[i]);
            }
        }
    }
}

fn point_pair(seed: u64, n: usize) -> (PointCloud, PointCloud, Assignment, TargetDist, TargetDist) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_cloud(&mut rng, n);
    let b = random_cloud(&mut rng, n);
    let asg = point_assignment(&a, &b).unwrap();
    let space = LabelSpace::new(3).unwrap();
    (a, b, asg, space.one_hot(0).unwrap(), space.one_hot(2).unwrap())
}

#[test]
fn block_mask_is_a_ball() {
    let (a, _, _, _, _) = point_pair(12, 200);
    let mut rng = rng::stream(5, 0);
    for _ in 0..50 {
        let lam: f64 = rng.random();
        let m = block_mask(&a, lam, &mut rng).unwrap();
        let k = m.count_ones();
        assert_eq!(k, (lam * 200.0).floor() as usize);
        if k == 0 || k == 200 {
            continue;
        }
        // the seed is the masked point whose farthest masked neighbor is nearest;
        // recover it by checking the ball property for every candidate
        let pts = a.points();
        let d = |x: &Point, y: &Point| (0..3).map(|i| (x[i] - y[i]) as f64).map(|v| v * v).sum::<f64>();
        let is_ball = (0..200).filter(|&s| m.get(s)).any(|s| {
            let inner = (0..200).filter(|&i| m.get(i)).map(|i| d(&pts[i], &pts[s])).fold(0.0, f64::max);
            let outer = (0..200).filter(|&i| !m.get(i)).map(|i| d(&pts[i], &pts[s])).fold(f64::INFINITY, f64::min);
            inner < outer
        });
        assert!(is_ball);
    }
}

#[test]
fn block_and_point_boundaries() {
    let (a, b, asg, y1, y2) = point_pair(13, 24);
    let sa = PointSource { cloud: &a, target: &y1 };
    let sb = PointSource { cloud: &b, target: &y2 };
    let mut rng = rng::stream(6, 0);
    for mix in [mix_block_at, mix_point_at] {
        let one = mix(sa, sb, &asg, 1.0, &mut rng).unwrap();
        assert_eq!(one.mixed.points(), a.points());
        assert_eq!(one.target, y1);
        let zero = mix(sa, sb, &asg, 0.0, &mut rng).unwrap();
        let reordered: Vec<Point> = asg.perm().iter().map(|&j| b.points()[j]).collect();
        assert_eq!(zero.mixed.points(), reordered.as_slice());
        assert_eq!(zero.target, y2);
    }
}

#[test]
fn point_mix_counts_and_uniformity() {
    let mut rng = rng::stream(7, 0);
    let pts: Vec<Point> = (0..1024).map(|i| [i as f32, 0.0, 0.0]).collect();
    let a = PointCloud::new(pts.clone()).unwrap();
    let b = PointCloud::new(pts.iter().map(|p| [p[0], 1.0, 0.0]).collect()).unwrap();
    let space = LabelSpace::new(2).unwrap();
    let (y1, y2) = (space.one_hot(0).unwrap(), space.one_hot(1).unwrap());
    let id = Assignment::identity(1024, 0.0);
    let r = mix_point_at(PointSource { cloud: &a, target: &y1 }, PointSource { cloud: &b, target: &y2 }, &id, 0.5, &mut rng).unwrap();
    assert_eq!(r.mask.count_ones(), 512);
    assert_eq!(r.mixed.points().iter().filter(|p| p[1] == 0.0).count(), 512);
    assert_eq!(r.target.weights(), &[0.5, 0.5]);

    let mut hits = [0usize; 16];
    for _ in 0..10_000 {
        let m = sample_mask(16, 0.5, &mut rng).unwrap();
        for (h, bit) in hits.iter_mut().zip(m.bits()) {
            *h += *bit as usize;
        }
    }
    assert!(hits.iter().all(|h| (*h as f64 / 10_000.0 - 0.5).abs() < 0.02));
}

fn dataset(n: usize, points: usize, seed: u64) -> Vec<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            random_cloud(&mut rng, points)
                .with_label((i % 4) as u32, Some(4))
                .unwrap()
                .with_id(format!("obj_{i:03}"))
        })
        .collect()
}

fn config(count: usize, level: MixLevel, mode: TargetMode, parallel: bool) -> BatchConfig {
    BatchConfig {
        patches: 8,
        patch_size: 4,
        fps_start: FpsStart::Centroid,
        assign: AssignMode::Centers,
        params: MixParams {
            beta: 1.5,
            target_mode: mode,
            level,
            seed: 99,
        },
        pairing: Pairing::Shuffle,
        count,
        label_space: LabelSpace::new(4).unwrap(),
        parallel,
    }
}

fn cache_for(data: &[PointCloud], seed: u64) -> ScoreCache {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = ScoreCache::new(8);
    for d in data {
        c.insert(d.id().unwrap(), random_scores(&mut rng, 8)).unwrap();
    }
    c
}

#[test]
fn batch_zero_count_is_empty() {
    let r = batch_mix(&[], None, config(0, MixLevel::Patch, TargetMode::Score, false)).unwrap();
    assert!(r.items.is_empty() && r.failures.is_empty());
}

#[test]
fn batch_two_samples_pairs_them() {
    let data = dataset(2, 32, 1);
    let cache = cache_for(&data, 2);
    let r = batch_mix(&data, Some(&cache), config(4, MixLevel::Patch, TargetMode::Score, false)).unwrap();
    assert_eq!(r.items.len(), 4);
    for it in &r.items {
        let p = &it.result.provenance;
        assert_ne!(p.source_a, p.source_b);
        assert_eq!(it.result.mixed.len(), 32);
    }
}

#[test]
fn batch_lambda_mean() {
    let data = dataset(100, 32, 3);
    let cache = cache_for(&data, 4);
    let r = batch_mix(&data, Some(&cache), config(1000, MixLevel::Patch, TargetMode::Score, true)).unwrap();
    assert_eq!(r.items.len(), 1000);
    let mean = r.items.iter().map(|i| i.result.lam).sum::<f64>() / 1000.0;
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
}

#[test]
fn batch_missing_scores_are_reported() {
    let data = dataset(4, 32, 5);
    let mut cache = ScoreCache::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for d in &data[..3] {
        cache.insert(d.id().unwrap(), random_scores(&mut rng, 8)).unwrap();
    }
    let r = batch_mix(&data, Some(&cache), config(8, MixLevel::Patch, TargetMode::Score, false)).unwrap();
    assert_eq!(r.items.len() + r.failures.len(), 8);
    assert!(!r.failures.is_empty());
    for f in &r.failures {
        assert!(f.source_a == "obj_003" || f.source_b == "obj_003");
        assert!(f.reason.contains("obj_003"));
    }
}

#[test]
fn batch_parallel_matches_serial() {
    let data = dataset(10, 32, 7);
    let cache = cache_for(&data, 8);
    for level in [MixLevel::Patch, MixLevel::Block, MixLevel::Point] {
        let serial = batch_mix(&data, Some(&cache), config(20, level, TargetMode::Score, false)).unwrap();
        let parallel = batch_mix(&data, Some(&cache), config(20, level, TargetMode::Score, true)).unwrap();
        assert_eq!(serial, parallel);
        for it in &serial.items {
            assert_eq!(it.result.mixed.len(), 32);
            let sum: f64 = it.result.target.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn batch_linear_mode_needs_no_cache() {
    let data = dataset(3, 32, 9);
    let r = batch_mix(&data, None, config(6, MixLevel::Patch, TargetMode::Linear, false)).unwrap();
    assert_eq!(r.items.len(), 6);
    for it in &r.items {
        let frac = it.result.mask.count_ones() as f64 / 8.0;
        let y = it.result.target.weights();
        let (a, b) = (&it.result.provenance.source_a, &it.result.provenance.source_b);
        let la: usize = a.as_ref().unwrap()[4..].parse::<usize>().unwrap() % 4;
        let lb: usize = b.as_ref().unwrap()[4..].parse::<usize>().unwrap() % 4;
        if la != lb {
            assert!((y[la] - frac).abs() < 1e-12);
        }
    }
    let err = batch_mix(&data, None, config(2, MixLevel::Patch, TargetMode::Score, false)).unwrap();
    assert_eq!(err.failures.len(), 2);
}

#[test]
fn batch_rejects_unlabeled_or_ragged_data() {
    let mut data = dataset(3, 32, 10);
    data.push(random_cloud(&mut ChaCha8Rng::seed_from_u64(1), 32));
    assert!(batch_mix(&data, None, config(2, MixLevel::Patch, TargetMode::Linear, false)).is_err());
    let mut data = dataset(3, 32, 10);
    data.push(dataset(1, 64, 11).remove(0));
    assert!(batch_mix(&data, None, config(2, MixLevel::Patch, TargetMode::Linear, false)).is_err());
}
