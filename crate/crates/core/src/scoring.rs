//! Patch significance scores from a teacher's self-attention layer.
//!
//! For each head, the classification token's attention to patch token `j`
//! is weighted by the norm of that token's value vector and normalized over
//! all patch tokens:
//!
//! ```text
//! S_j = A[0, j] * |V_j| / sum_i A[0, i] * |V_i|      (i, j = 1..=P)
//! ```
//!
//! Per-head vectors are summed and divided by the head count so the result
//! stays a distribution. Token 0 is always the classification token.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Offset, Result};
use crate::io::ByteReader;

/// Tolerance on the sum of a produced score vector.
pub const SCORE_SUM_TOL: f64 = 1e-9;
/// Looser tolerance applied to score vectors read from external files.
pub const CACHE_SUM_TOL: f64 = 1e-6;

/// Non-negative per-patch weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(scores, SCORE_SUM_TOL)
    }

    fn with_tolerance(scores: Vec<f64>, tol: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::param("score vector must cover at least one patch"));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::param(format!(
                "score {i} is {}; scores must be finite and non-negative",
                scores[i]
            )));
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::param(format!("scores sum to {sum}, expected 1")));
        }
        Ok(Self { scores })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.scores[i]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .scores
            .iter()
            .filter(|s| **s > 0.0)
            .map(|s| s * s.ln())
            .sum::<f64>()
    }
}

/// Equal weight on every patch; reproduces count-based targets when mixing.
pub fn uniform_scores(patches: usize) -> Result<ScoreVector> {
    if patches == 0 {
        return Err(Error::param("uniform scores need at least one patch"));
    }
    Ok(ScoreVector {
        scores: vec![1.0 / patches as f64; patches],
    })
}

/// Query/key/value projections for one head, each `d x d_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadProjection {
    pub query: DMatrix<f64>,
    pub key: DMatrix<f64>,
    pub value: DMatrix<f64>,
}

/// Token features and per-head projections of one attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    tokens: DMatrix<f64>,
    heads: Vec<HeadProjection>,
    head_dim: usize,
}

impl AttentionInputs {
    /// `tokens` is `(P + 1) x d` with the classification token in row 0.
    pub fn new(tokens: DMatrix<f64>, heads: Vec<HeadProjection>) -> Result<Self> {
        if tokens.nrows() < 2 {
            return Err(Error::param("need a classification token and at least one patch token"));
        }
        if heads.is_empty() {
            return Err(Error::param("need at least one attention head"));
        }
        let d = tokens.ncols();
        let head_dim = heads[0].query.ncols();
        if head_dim == 0 || head_dim * heads.len() != d {
            return Err(Error::param(format!(
                "model width {d} is not {} heads x {head_dim}",
                heads.len()
            )));
        }
        for (h, w) in heads.iter().enumerate() {
            for (name, m) in [("query", &w.query), ("key", &w.key), ("value", &w.value)] {
                if m.shape() != (d, head_dim) {
                    return Err(Error::param(format!(
                        "head {h} {name} projection is {:?}, expected ({d}, {head_dim})",
                        m.shape()
                    )));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param(format!("head {h} {name} projection is not finite")));
                }
            }
        }
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("token features are not finite"));
        }
        Ok(Self {
            tokens,
            heads,
            head_dim,
        })
    }

    pub fn tokens(&self) -> &DMatrix<f64> {
        &self.tokens
    }

    pub fn heads(&self) -> &[HeadProjection] {
        &self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn num_patches(&self) -> usize {
        self.tokens.nrows() - 1
    }

    pub fn model_dim(&self) -> usize {
        self.tokens.ncols()
    }
}

/// One head's attention matrix, values and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    pub attention: DMatrix<f64>,
    pub values: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

fn softmax_rows(logits: &mut DMatrix<f64>) {
    for mut row in logits.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|v| *v = (*v - max).exp());
        let sum: f64 = row.iter().sum();
        row.apply(|v| *v /= sum);
    }
}

/// Scaled dot-product attention for every head.
pub fn attention_forward(inputs: &AttentionInputs) -> Result<Vec<AttentionState>> {
    let scale = 1.0 / (inputs.head_dim as f64).sqrt();
    inputs
        .heads
        .iter()
        .enumerate()
        .map(|(h, w)| {
            let q = &inputs.tokens * &w.query;
            let k = &inputs.tokens * &w.key;
            let values = &inputs.tokens * &w.value;
            let mut attention = (q * k.transpose()) * scale;
            if attention.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("head {h}: attention logits overflowed")));
            }
            softmax_rows(&mut attention);
            let output = &attention * &values;
            if output.iter().chain(values.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("head {h}: non-finite values or outputs")));
            }
            Ok(AttentionState {
                attention,
                values,
                output,
            })
        })
        .collect()
}

/// Scores from a classification-token attention row (`P + 1` entries, entry 0
/// is the classification token itself and is ignored) and patch value norms
/// (`P` entries).
pub fn scores_from_row(cls_row: &[f64], value_norms: &[f64]) -> Result<ScoreVector> {
    let p = value_norms.len();
    if p == 0 || cls_row.len() != p + 1 {
        return Err(Error::param(format!(
            "attention row has {} entries for {p} patches; expected {}",
            cls_row.len(),
            p + 1
        )));
    }
    if cls_row.iter().chain(value_norms).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param("attention weights and value norms must be finite and non-negative"));
    }
    let weighted: Vec<f64> = cls_row[1..]
        .iter()
        .zip(value_norms)
        .map(|(a, n)| a * n)
        .collect();
    let total: f64 = weighted.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateScores(
            "attention-weighted value norms are all zero".into(),
        ));
    }
    ScoreVector::new(weighted.into_iter().map(|w| w / total).collect())
}

pub fn head_scores(state: &AttentionState) -> Result<ScoreVector> {
    let a = &state.attention;
    if a.nrows() < 2 || a.nrows() != a.ncols() || state.values.nrows() != a.nrows() {
        return Err(Error::param("attention state shapes are inconsistent"));
    }
    let cls_row: Vec<f64> = a.row(0).iter().cloned().collect();
    let norms: Vec<f64> = (1..state.values.nrows())
        .map(|j| state.values.row(j).norm())
        .collect();
    scores_from_row(&cls_row, &norms)
}

/// Mean of per-head score vectors.
pub fn aggregate_heads(per_head: &[ScoreVector]) -> Result<ScoreVector> {
    let first = per_head
        .first()
        .ok_or_else(|| Error::param("no heads to aggregate"))?;
    let p = first.len();
    if per_head.iter().any(|s| s.len() != p) {
        return Err(Error::param("heads disagree on patch count"));
    }
    let mut acc = vec![0.0; p];
    for s in per_head {
        for (a, v) in acc.iter_mut().zip(s.as_slice()) {
            *a += v;
        }
    }
    let h = per_head.len() as f64;
    ScoreVector::new(acc.into_iter().map(|v| v / h).collect())
}

pub fn significance_scores(inputs: &AttentionInputs) -> Result<ScoreVector> {
    let per_head = attention_forward(inputs)?
        .iter()
        .map(head_scores)
        .collect::<Result<Vec<_>>>()?;
    aggregate_heads(&per_head)
}

/// Attention row and value norms exported directly by a teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedHead {
    pub cls_row: Vec<f64>,
    pub value_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedAttention {
    heads: Vec<PrecomputedHead>,
}

impl PrecomputedAttention {
    pub fn new(heads: Vec<PrecomputedHead>) -> Result<Self> {
        let p = heads
            .first()
            .ok_or_else(|| Error::param("need at least one attention head"))?
            .value_norms
            .len();
        if p == 0 {
            return Err(Error::param("need at least one patch"));
        }
        for (h, head) in heads.iter().enumerate() {
            if head.value_norms.len() != p || head.cls_row.len() != p + 1 {
                return Err(Error::param(format!("head {h} has inconsistent lengths")));
            }
        }
        Ok(Self { heads })
    }

    pub fn heads(&self) -> &[PrecomputedHead] {
        &self.heads
    }

    pub fn num_patches(&self) -> usize {
        self.heads[0].value_norms.len()
    }

    pub fn scores(&self) -> Result<ScoreVector> {
        let per_head = self
            .heads
            .iter()
            .map(|h| scores_from_row(&h.cls_row, &h.value_norms))
            .collect::<Result<Vec<_>>>()?;
        aggregate_heads(&per_head)
    }
}

/// Contents of a `ppma` attention export.
#[derive(Debug, Clone, PartialEq)]
pub enum AttentionExport {
    Tokens(AttentionInputs),
    Precomputed(PrecomputedAttention),
}

pub const PPMA_MAGIC: &[u8; 4] = b"PPMA";
pub const PPMA_VERSION: u16 = 1;

impl AttentionExport {
    pub fn num_patches(&self) -> usize {
        match self {
            AttentionExport::Tokens(t) => t.num_patches(),
            AttentionExport::Precomputed(p) => p.num_patches(),
        }
    }

    pub fn scores(&self) -> Result<ScoreVector> {
        match self {
            AttentionExport::Tokens(t) => significance_scores(t),
            AttentionExport::Precomputed(p) => p.scores(),
        }
    }

    /// Serializes to `ppma`. Values are stored as f32.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PPMA_MAGIC);
        out.extend_from_slice(&PPMA_VERSION.to_le_bytes());
        let push = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        match self {
            AttentionExport::Tokens(t) => {
                out.extend_from_slice(&0u16.to_le_bytes());
                for v in [t.num_patches(), t.model_dim(), t.heads.len()] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                push_row_major(&mut out, &t.tokens);
                for h in &t.heads {
                    push_row_major(&mut out, &h.query);
                    push_row_major(&mut out, &h.key);
                    push_row_major(&mut out, &h.value);
                }
            }
            AttentionExport::Precomputed(p) => {
                out.extend_from_slice(&1u16.to_le_bytes());
                for v in [p.num_patches(), 0, p.heads.len()] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                for h in &p.heads {
                    h.cls_row.iter().for_each(|v| push(&mut out, *v));
                    h.value_norms.iter().for_each(|v| push(&mut out, *v));
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != PPMA_MAGIC {
            return Err(Error::format(Offset::Byte(0), "bad magic, expected PPMA"));
        }
        let at = r.pos();
        let version = r.u16()?;
        if version != PPMA_VERSION {
            return Err(Error::format(
                Offset::Byte(at),
                format!("unsupported ppma version {version}"),
            ));
        }
        let kind_at = r.pos();
        let kind = r.u16()?;
        let p = r.u32()? as usize;
        let d = r.u32()? as usize;
        let h = r.u32()? as usize;
        let header_end = r.pos();
        if p == 0 || h == 0 {
            return Err(Error::format(Offset::Byte(8), "patch and head counts must be positive"));
        }
        let export = match kind {
            0 => {
                if d == 0 || !d.is_multiple_of(h) {
                    return Err(Error::format(
                        Offset::Byte(12),
                        format!("model width {d} not divisible by {h} heads"),
                    ));
                }
                let dh = d / h;
                let expected = (p + 1) * d + h * 3 * d * dh;
                check_payload(&r, expected)?;
                let tokens = read_matrix(&mut r, p + 1, d)?;
                let mut heads = Vec::with_capacity(h);
                for _ in 0..h {
                    heads.push(HeadProjection {
                        query: read_matrix(&mut r, d, dh)?,
                        key: read_matrix(&mut r, d, dh)?,
                        value: read_matrix(&mut r, d, dh)?,
                    });
                }
                AttentionExport::Tokens(
                    AttentionInputs::new(tokens, heads)
                        .map_err(|e| Error::format(Offset::Byte(header_end), e.to_string()))?,
                )
            }
            1 => {
                check_payload(&r, h * (2 * p + 1))?;
                let mut heads = Vec::with_capacity(h);
                for _ in 0..h {
                    heads.push(PrecomputedHead {
                        cls_row: read_vec(&mut r, p + 1)?,
                        value_norms: read_vec(&mut r, p)?,
                    });
                }
                AttentionExport::Precomputed(
                    PrecomputedAttention::new(heads)
                        .map_err(|e| Error::format(Offset::Byte(header_end), e.to_string()))?,
                )
            }
            other => {
                return Err(Error::format(
                    Offset::Byte(kind_at),
                    format!("unknown ppma kind {other}"),
                ))
            }
        };
        Ok(export)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.in_file(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

fn push_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes());
        }
    }
}

fn check_payload(r: &ByteReader<'_>, floats: usize) -> Result<()> {
    if r.remaining() != floats * 4 {
        return Err(Error::format(
            Offset::Byte(r.pos()),
            format!(
                "payload length mismatch: expected {} bytes, found {}",
                floats * 4,
                r.remaining()
            ),
        ));
    }
    Ok(())
}

fn read_vec(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| {
            let at = r.pos();
            let v = r.f32()?;
            if !v.is_finite() {
                return Err(Error::format(Offset::Byte(at), "non-finite value"));
            }
            Ok(v as f64)
        })
        .collect()
}

fn read_matrix(r: &mut ByteReader<'_>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_row_slice(rows, cols, &read_vec(r, rows * cols)?))
}

/// Offline store of per-sample score vectors, all of one patch count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreCache {
    patches: usize,
    entries: BTreeMap<String, ScoreVector>,
}

impl ScoreCache {
    pub fn new(patches: usize) -> Self {
        Self {
            patches,
            entries: BTreeMap::new(),
        }
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ScoreVector> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ScoreVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn insert(&mut self, id: impl Into<String>, scores: ScoreVector) -> Result<()> {
        let id = id.into();
        if id.is_empty() || id.contains(['\t', '\n', '\r']) {
            return Err(Error::Cache(format!("invalid sample id {id:?}")));
        }
        if scores.len() != self.patches {
            return Err(Error::Cache(format!(
                "sample {id} has {} scores, cache holds P={}",
                scores.len(),
                self.patches
            )));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::Cache(format!("duplicate sample id {id}")));
        }
        self.entries.insert(id, scores);
        Ok(())
    }

    /// Text form: a `PPMS 1 P=<P>` header, then `<id>\t<s_1> ... <s_P>` per
    /// sample with 17 significant digits.
    pub fn encode(&self) -> String {
        let mut out = format!("PPMS 1 P={}\n", self.patches);
        for (id, s) in &self.entries {
            out.push_str(id);
            out.push('\t');
            let fields: Vec<String> = s.as_slice().iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| Error::Cache("line 1: missing header".into()))?;
        let patches = header
            .strip_prefix("PPMS 1 P=")
            .and_then(|p| p.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Cache(format!("line 1: bad header {header:?}")))?;
        let mut cache = Self::new(patches);
        for (i, line) in lines {
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::Cache(format!("line {lineno}: missing tab separator")))?;
            let values = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Cache(format!("line {lineno}: invalid number")))?;
            if values.len() != patches {
                return Err(Error::Cache(format!(
                    "line {lineno}: {} scores, expected {patches}",
                    values.len()
                )));
            }
            let scores = ScoreVector::with_tolerance(values, CACHE_SUM_TOL)
                .map_err(|e| Error::Cache(format!("line {lineno}: {e}")))?;
            cache
                .insert(id, scores)
                .map_err(|e| Error::Cache(format!("line {lineno}: {e}")))?;
        }
        Ok(cache)
    }
}

pub fn write_score_cache(cache: &ScoreCache, path: &Path) -> Result<()> {
    std::fs::write(path, cache.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_score_cache(path: &Path) -> Result<ScoreCache> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScoreCache::decode(&text)
}
