use nalgebra::DMatrix;
use patchmix::scoring::{
    attention_forward, head_scores, read_score_cache, scores_from_row, significance_scores,
    write_score_cache, AttentionExport, AttentionInputs, HeadProjection, PrecomputedAttention,
    PrecomputedHead, ScoreCache, ScoreVector,
};
use patchmix::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_inputs(rng: &mut ChaCha8Rng, p: usize, h: usize, dh: usize) -> AttentionInputs {
    let d = h * dh;
    let mut m = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let tokens = m(p + 1, d);
    let heads = (0..h)
        .map(|_| HeadProjection {
            query: m(d, dh),
            key: m(d, dh),
            value: m(d, dh),
        })
        .collect();
    AttentionInputs::new(tokens, heads).unwrap()
}

fn single_head(tokens: &[f64], wq: f64, wk: f64, wv: f64) -> AttentionInputs {
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    AttentionInputs::new(
        DMatrix::from_column_slice(tokens.len(), 1, tokens),
        vec![HeadProjection {
            query: one(wq),
            key: one(wk),
            value: one(wv),
        }],
    )
    .unwrap()
}

#[test]
fn three_token_golden() {
    // tokens (1, 2, -1), W_q = 1, W_k = 0.5, W_v = 2; values frozen from an
    // independent 30-digit evaluation of softmax(q k^T) and A V
    let inp = single_head(&[1.0, 2.0, -1.0], 1.0, 0.5, 2.0);
    let st = &attention_forward(&inp).unwrap()[0];
    let a = [
        [0.331_498_960_424_091_5, 0.546_549_387_266_179_6, 0.121_951_652_309_728_86],
        [0.259_496_460_342_419_13, 0.705_384_512_698_241_2, 0.035_119_026_959_339_72],
        [0.231_223_897_622_149_07, 0.140_244_383_166_088_48, 0.628_531_719_211_762_4],
    ];
    for i in 0..3 {
        for j in 0..3 {
            assert!((st.attention[(i, j)] - a[i][j]).abs() < 1e-14);
        }
    }
    let o = [2.605_292_165_293_443_8, 3.270_292_917_559_123_3, -0.233_638_110_514_872_82];
    for i in 0..3 {
        assert!((st.output[(i, 0)] - o[i]).abs() < 1e-13);
    }
    let s = head_scores(st).unwrap();
    assert!((s.get(0) - 0.899_632_435_316_548_4).abs() < 1e-14);
    assert!((s.get(1) - 0.100_367_564_683_451_68).abs() < 1e-14);
    assert_eq!(significance_scores(&inp).unwrap(), s);
}

#[test]
fn zero_query_key_gives_uniform_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut inp = random_inputs(&mut rng, 5, 2, 3);
    let zero = DMatrix::zeros(6, 3);
    let heads: Vec<HeadProjection> = inp
        .heads()
        .iter()
        .map(|h| HeadProjection {
            query: zero.clone(),
            key: zero.clone(),
            value: h.value.clone(),
        })
        .collect();
    inp = AttentionInputs::new(inp.tokens().clone(), heads).unwrap();
    for st in attention_forward(&inp).unwrap() {
        for v in st.attention.iter() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }
}

#[test]
fn uniform_attention_equal_norms_gives_uniform_scores() {
    let s = scores_from_row(&[0.25; 4], &[2.0; 3]).unwrap();
    for v in s.as_slice() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn large_logits_do_not_overflow() {
    let inp = single_head(&[30.0, 20.0, -25.0], 1.0, 1.0, 1.0);
    let st = &attention_forward(&inp).unwrap()[0];
    for row in st.attention.row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_head_aggregation_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inp = random_inputs(&mut rng, 7, 1, 4);
    let st = attention_forward(&inp).unwrap();
    assert_eq!(significance_scores(&inp).unwrap(), head_scores(&st[0]).unwrap());
}

#[test]
fn ppma_roundtrip_both_kinds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // f32-representable values survive the f32 payload exactly
    let inp = random_inputs(&mut rng, 4, 2, 2);
    let tokens = inp.tokens().map(|v| v as f32 as f64);
    let heads = inp
        .heads()
        .iter()
        .map(|h| HeadProjection {
            query: h.query.map(|v| v as f32 as f64),
            key: h.key.map(|v| v as f32 as f64),
            value: h.value.map(|v| v as f32 as f64),
        })
        .collect();
    let export = AttentionExport::Tokens(AttentionInputs::new(tokens, heads).unwrap());
    let bytes = export.encode();
    assert_eq!(bytes.len(), 20 + 4 * (5 * 4 + 2 * 3 * 4 * 2));
    assert_eq!(AttentionExport::decode(&bytes).unwrap(), export);

    let pre = AttentionExport::Precomputed(
        PrecomputedAttention::new(vec![PrecomputedHead {
            cls_row: vec![0.0, 0.2, 0.3, 0.5],
            value_norms: vec![1.0, 1.0, 2.0],
        }])
        .unwrap(),
    );
    let back = AttentionExport::decode(&pre.encode()).unwrap();
    let s = back.scores().unwrap();
    // payload is f32, so compare at f32 resolution
    assert!((s.get(0) - 2.0 / 15.0).abs() < 1e-7);
    assert!((s.get(2) - 10.0 / 15.0).abs() < 1e-7);

    let mut bad = pre.encode();
    bad[6] = 7;
    assert!(matches!(AttentionExport::decode(&bad), Err(Error::Format { .. })));
    let trunc = pre.encode();
    assert!(AttentionExport::decode(&trunc[..trunc.len() - 4]).is_err());
}

#[test]
fn cache_roundtrip_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.ppms");
    let mut cache = ScoreCache::new(2);
    cache.insert("chair_0001", ScoreVector::new(vec![0.4, 0.6]).unwrap()).unwrap();
    write_score_cache(&cache, &path).unwrap();
    assert_eq!(read_score_cache(&path).unwrap(), cache);
    assert!(cache.insert("chair_0001", ScoreVector::new(vec![0.5, 0.5]).unwrap()).is_err());
    assert!(cache.insert("bad\tid", ScoreVector::new(vec![0.5, 0.5]).unwrap()).is_err());
}

#[test]
fn cache_bulk_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cache = ScoreCache::new(64);
    for i in 0..10_000 {
        let raw: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let v = scores_from_row(&std::iter::once(0.0).chain(raw).collect::<Vec<_>>(), &vec![1.0; 64])
            .unwrap();
        assert!((v.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9, "{total}");
        cache.insert(format!("sample_{i:05}"), v).unwrap();
    }
    let back = ScoreCache::decode(&cache.encode()).unwrap();
    assert_eq!(back.len(), 10_000);
    assert_eq!(back, cache);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rows_stochastic_and_scores_normalized(seed in any::<u64>(), p in 1usize..17, h in 1usize..5, dh in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inp = random_inputs(&mut rng, p, h, dh);
        for st in attention_forward(&inp).unwrap() {
            for row in st.attention.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
        let s = significance_scores(&inp).unwrap();
        prop_assert_eq!(s.len(), p);
        prop_assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(s.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn value_scaling_leaves_scores_unchanged(seed in any::<u64>(), k in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inp = random_inputs(&mut rng, 6, 2, 3);
        let scaled = AttentionInputs::new(
            inp.tokens().clone(),
            inp.heads().iter().map(|h| HeadProjection { query: h.query.clone(), key: h.key.clone(), value: &h.value * k }).collect(),
        ).unwrap();
        let a = significance_scores(&inp).unwrap();
        let b = significance_scores(&scaled).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn permuting_patch_tokens_permutes_scores(seed in any::<u64>(), p in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inp = random_inputs(&mut rng, p, 2, 2);
        let mut perm: Vec<usize> = (0..p).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let t = inp.tokens();
        let permuted = DMatrix::from_fn(p + 1, t.ncols(), |i, j| if i == 0 { t[(0, j)] } else { t[(perm[i - 1] + 1, j)] });
        let moved = AttentionInputs::new(permuted, inp.heads().to_vec()).unwrap();
        let a = significance_scores(&inp).unwrap();
        let b = significance_scores(&moved).unwrap();
        for i in 0..p {
            prop_assert!((b.get(i) - a.get(perm[i])).abs() < 1e-12);
        }
    }
}
