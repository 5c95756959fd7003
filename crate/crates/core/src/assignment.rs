//! Optimal one-to-one matching between equal-size point sets.
//!
//! With unit mass on every point, the earth mover's distance between two
//! equal-cardinality sets is a linear assignment problem. It is solved
//! exactly here with a shortest-augmenting-path (Hungarian with potentials)
//! solver in `O(n^3)`.
//!
//! Patch-level matching comes in two flavors: [`patch_assignment_full`]
//! scores every patch pair by the optimal matching of their member points,
//! while [`patch_assignment_centers`] matches patch centers only.

use std::fmt;

use rayon::prelude::*;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::patching::{dist2, PatchSet};

/// Largest size accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_LIMIT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Plain L2 distance; the EMD objective.
    #[default]
    Euclidean,
    /// Squared L2. Cheaper, but changes the optimum; opt-in only.
    SquaredEuclidean,
}

impl Metric {
    #[inline]
    pub fn eval(self, a: &Point, b: &Point) -> f64 {
        match self {
            Metric::Euclidean => dist2(a, b).sqrt(),
            Metric::SquaredEuclidean => dist2(a, b),
        }
    }
}

/// Dense square cost matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::param(format!(
                "cost matrix of size {n} needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("cost matrix contains a non-finite entry".into()));
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::new(n, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::param("cost matrix must be square"));
        }
        Self::new(n, rows.concat())
    }

    /// Pairwise distances between two equal-length point lists.
    pub fn between(a: &[Point], b: &[Point], metric: Metric) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::param(format!(
                "point sets differ in size: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        Self::from_fn(a.len(), |i, j| metric.eval(&a[i], &b[j]))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Total cost of a permutation, summed in row order.
    pub fn cost_of(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i)).expect("transpose keeps entries finite")
    }
}

/// A bijection from indices of the first set to indices of the second.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    perm: Vec<usize>,
    cost: f64,
}

impl Assignment {
    /// Validates `perm` as a bijection and records `cost` alongside it.
    pub fn new(perm: Vec<usize>, cost: f64) -> Result<Self> {
        check_permutation(&perm)?;
        if !cost.is_finite() {
            return Err(Error::Numeric(format!("assignment cost {cost} is not finite")));
        }
        Ok(Self { perm, cost })
    }

    pub fn from_costs(costs: &CostMatrix, perm: Vec<usize>) -> Result<Self> {
        if perm.len() != costs.size() {
            return Err(Error::param("permutation length does not match cost matrix"));
        }
        check_permutation(&perm)?;
        let cost = costs.cost_of(&perm);
        Ok(Self { perm, cost })
    }

    pub fn identity(n: usize, cost: f64) -> Self {
        Self {
            perm: (0..n).collect(),
            cost,
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (i, &j) in self.perm.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }

    /// Cache line: `cost perm_0 perm_1 ...`.
    pub fn to_line(&self) -> String {
        let mut s = format!("{}", self.cost);
        for p in &self.perm {
            s.push(' ');
            s.push_str(&p.to_string());
        }
        s
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut toks = line.split_whitespace();
        let cost: f64 = toks
            .next()
            .ok_or_else(|| Error::param("empty assignment line"))?
            .parse()
            .map_err(|_| Error::param("invalid assignment cost"))?;
        let perm = toks
            .map(|t| t.parse::<usize>().map_err(|_| Error::param(format!("invalid index {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(perm, cost)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

fn check_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &j in perm {
        if j >= perm.len() || std::mem::replace(&mut seen[j], true) {
            return Err(Error::param(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

/// Exact minimum-cost perfect matching on a square cost matrix.
///
/// Deterministic for a given matrix. Among several optima, which one is
/// returned is an implementation detail.
pub fn solve(costs: &CostMatrix) -> Assignment {
    let n = costs.size();
    if n == 0 {
        return Assignment::identity(0, 0.0);
    }
    // 1-based arrays; column 0 and row 0 are sentinels.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let cost = costs.cost_of(&perm);
    Assignment { perm, cost }
}

/// Exhaustive search over all permutations; the lexicographically smallest
/// optimum is returned. Refuses sizes above [`BRUTE_FORCE_LIMIT`].
pub fn brute_force_assignment(costs: &CostMatrix) -> Result<Assignment> {
    let n = costs.size();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Guard {
            size: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = costs.cost_of(&perm);
    while next_permutation(&mut perm) {
        let c = costs.cost_of(&perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    Ok(Assignment {
        perm: best,
        cost: best_cost,
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Point-level EMD matching between two clouds of equal size.
pub fn point_assignment(a: &PointCloud, b: &PointCloud) -> Result<Assignment> {
    point_assignment_with(a, b, Metric::Euclidean)
}

pub fn point_assignment_with(a: &PointCloud, b: &PointCloud, metric: Metric) -> Result<Assignment> {
    Ok(solve(&CostMatrix::between(a.points(), b.points(), metric)?))
}

/// Limits and options for [`patch_assignment_full_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullAssignmentOptions {
    pub metric: Metric,
    pub max_patches: usize,
    pub max_patch_size: usize,
    pub parallel: bool,
}

impl Default for FullAssignmentOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Euclidean,
            max_patches: 64,
            max_patch_size: 32,
            parallel: true,
        }
    }
}

fn check_same_shape(a: &PatchSet, b: &PatchSet) -> Result<()> {
    if a.num_patches() != b.num_patches() || a.patch_size() != b.patch_size() {
        return Err(Error::param(format!(
            "patch sets differ in shape: {}x{} vs {}x{}",
            a.num_patches(),
            a.patch_size(),
            b.num_patches(),
            b.patch_size()
        )));
    }
    Ok(())
}

/// Patch-pair cost matrix where entry `(p, q)` is the optimal point-matching
/// cost between patch `p` of `a` and patch `q` of `b`.
pub fn patch_pair_costs(
    a: &PatchSet,
    b: &PatchSet,
    options: &FullAssignmentOptions,
) -> Result<CostMatrix> {
    check_same_shape(a, b)?;
    if a.num_patches() > options.max_patches || a.patch_size() > options.max_patch_size {
        return Err(Error::param(format!(
            "full patch assignment limited to P<={} and s<={}, got P={} s={}",
            options.max_patches,
            options.max_patch_size,
            a.num_patches(),
            a.patch_size()
        )));
    }
    let p = a.num_patches();
    let pa: Vec<Vec<Point>> = (0..p).map(|i| a.patch_points(i)).collect();
    let pb: Vec<Vec<Point>> = (0..p).map(|i| b.patch_points(i)).collect();
    let inner = |k: usize| -> f64 {
        let (i, j) = (k / p, k % p);
        let m = CostMatrix::between(&pa[i], &pb[j], options.metric)
            .expect("patches of equal size with finite points");
        solve(&m).cost()
    };
    let data: Vec<f64> = if options.parallel {
        (0..p * p).into_par_iter().map(inner).collect()
    } else {
        (0..p * p).map(inner).collect()
    };
    CostMatrix::new(p, data)
}

/// Patch-level matching minimizing the total optimal point displacement.
pub fn patch_assignment_full(a: &PatchSet, b: &PatchSet) -> Result<Assignment> {
    patch_assignment_full_with(a, b, &FullAssignmentOptions::default())
}

pub fn patch_assignment_full_with(
    a: &PatchSet,
    b: &PatchSet,
    options: &FullAssignmentOptions,
) -> Result<Assignment> {
    Ok(solve(&patch_pair_costs(a, b, options)?))
}

/// Full point-level cost of pairing patches by `perm`, with each patch pair
/// matched optimally inside.
pub fn induced_full_cost(
    a: &PatchSet,
    b: &PatchSet,
    perm: &[usize],
    options: &FullAssignmentOptions,
) -> Result<f64> {
    check_same_shape(a, b)?;
    if perm.len() != a.num_patches() {
        return Err(Error::param("permutation length does not match patch count"));
    }
    check_permutation(perm)?;
    Ok(perm
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let m = CostMatrix::between(&a.patch_points(i), &b.patch_points(j), options.metric)
                .expect("equal patch sizes");
            solve(&m).cost()
        })
        .sum())
}

/// Patch-level matching over center coordinates only. The returned cost is
/// the center-level cost.
pub fn patch_assignment_centers(a: &PatchSet, b: &PatchSet) -> Result<Assignment> {
    patch_assignment_centers_with(a, b, Metric::Euclidean)
}

pub fn patch_assignment_centers_with(a: &PatchSet, b: &PatchSet, metric: Metric) -> Result<Assignment> {
    if a.num_patches() != b.num_patches() {
        return Err(Error::param(format!(
            "patch counts differ: {} vs {}",
            a.num_patches(),
            b.num_patches()
        )));
    }
    Ok(solve(&CostMatrix::between(&a.centers(), &b.centers(), metric)?))
}

/// Which patch-level matching to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignMode {
    #[default]
    Centers,
    Full,
}

pub fn patch_assignment(a: &PatchSet, b: &PatchSet, mode: AssignMode) -> Result<Assignment> {
    match mode {
        AssignMode::Centers => patch_assignment_centers(a, b),
        AssignMode::Full => patch_assignment_full(a, b),
    }
}
