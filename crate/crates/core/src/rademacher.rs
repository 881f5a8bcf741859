//! Empirical Rademacher complexity of finite vector sets, the set algebra
//! the complexity bounds quantify over, and machine checks of those bounds.
//!
//! For a finite set A of n-vectors,
//!
//! ```text
//! R(A) = E_sigma[ sup_{a in A} (1/n) sum_i sigma_i a_i ],  sigma_i iid +-1
//! ```
//!
//! `rad_exact` averages over all 2^n sign vectors; `rad_mc` estimates the
//! same quantity by Monte Carlo. Both share the 1/n normalization; no other
//! convention is exposed.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::KahanSum;
use crate::rng::Rng;

/// Dimension cutoff for exact enumeration: 2^20 sign vectors keeps a single
/// call sub-second.
pub const EXACT_DIM_CUTOFF: usize = 20;

/// Sign-vector block size for the exact enumeration. Block boundaries are
/// fixed so the blockwise sums combine in a deterministic order and the
/// result is bit-stable across thread counts.
const EXACT_BLOCK: u64 = 1 << 14;

/// Absolute float slack for exact-mode inequality checks; test values are
/// O(1) and the exact mean uses compensated summation, so accumulated error
/// stays well below this.
pub const EXACT_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RadError {
    #[error("vector set must contain at least one vector")]
    EmptySet,
    #[error("vector set dimension must be at least 1")]
    ZeroDim,
    #[error("vector of length {found} in set of dimension {dim}")]
    RaggedVector { dim: usize, found: usize },
    #[error("dimension {dim} exceeds exact-mode cutoff {cutoff}; use rad_mc")]
    DimAboveCutoff { dim: usize, cutoff: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("monte carlo estimation needs at least 2 draws, got {0}")]
    TooFewDraws(u64),
    #[error("coordinate map family has {maps} maps but {constants} Lipschitz constants")]
    MapFamilyShape { maps: usize, constants: usize },
    #[error("coordinate map {index} does not vanish at 0 (phi(0) = {value})")]
    MapNotAnchored { index: usize, value: f64 },
    #[error("negative Lipschitz constant {value} for coordinate map {index}")]
    NegativeLipschitz { index: usize, value: f64 },
}

/// A finite set of real n-vectors. Duplicates are kept; the supremum is
/// unaffected.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl VectorSet {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self, RadError> {
        if dim == 0 {
            return Err(RadError::ZeroDim);
        }
        if vectors.is_empty() {
            return Err(RadError::EmptySet);
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(RadError::RaggedVector {
                    dim,
                    found: v.len(),
                });
            }
        }
        Ok(VectorSet { dim, vectors })
    }

    /// Build from rows, inferring the dimension from the first row.
    pub fn from_rows(vectors: Vec<Vec<f64>>) -> Result<Self, RadError> {
        let dim = vectors.first().map(|v| v.len()).ok_or(RadError::EmptySet)?;
        VectorSet::new(dim, vectors)
    }

    pub fn singleton(v: Vec<f64>) -> Result<Self, RadError> {
        VectorSet::from_rows(vec![v])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // by construction
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Scale every vector by `lambda`.
    pub fn scaled(&self, lambda: f64) -> VectorSet {
        VectorSet {
            dim: self.dim,
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|x| lambda * x).collect())
                .collect(),
        }
    }
}

/// Estimation mode of a [`RadEstimate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadMode {
    Exact,
    MonteCarlo,
}

/// Rademacher complexity value with its sampling error (0 in exact mode).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RadEstimate {
    pub value: f64,
    pub stderr: f64,
    pub mode: RadMode,
    pub draws: u64,
}

#[inline]
fn sup_signed_mean(vectors: &[Vec<f64>], signs: u64, n: usize) -> f64 {
    // sigma_i = +1 when bit i is clear, -1 when set.
    let mut best = f64::NEG_INFINITY;
    for v in vectors {
        let mut dot = 0.0;
        for (i, &a) in v.iter().enumerate() {
            if signs >> i & 1 == 0 {
                dot += a;
            } else {
                dot -= a;
            }
        }
        if dot > best {
            best = dot;
        }
    }
    best / n as f64
}

/// Exact empirical Rademacher complexity by full enumeration of the 2^n
/// sign vectors. Deterministic; parallel over fixed sign-vector blocks with
/// a sequential block-order reduction, so the result does not depend on the
/// thread count.
pub fn rad_exact(a: &VectorSet) -> Result<RadEstimate, RadError> {
    let n = a.dim();
    if n > EXACT_DIM_CUTOFF {
        return Err(RadError::DimAboveCutoff {
            dim: n,
            cutoff: EXACT_DIM_CUTOFF,
        });
    }
    let total: u64 = 1 << n;
    let n_blocks = total.div_ceil(EXACT_BLOCK);
    let block_sums: Vec<f64> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * EXACT_BLOCK;
            let hi = (lo + EXACT_BLOCK).min(total);
            let mut acc = KahanSum::new();
            for signs in lo..hi {
                acc.add(sup_signed_mean(&a.vectors, signs, n));
            }
            acc.value()
        })
        .collect();
    let mut acc = KahanSum::new();
    for s in block_sums {
        acc.add(s);
    }
    Ok(RadEstimate {
        value: acc.value() / total as f64,
        stderr: 0.0,
        mode: RadMode::Exact,
        draws: 0,
    })
}

/// Monte-Carlo estimate of the Rademacher complexity: sample mean of the
/// per-sign supremum over `draws` iid sign vectors. Deterministic given the
/// seed. `stderr` is the sample standard deviation over draws divided by
/// sqrt(draws).
pub fn rad_mc(a: &VectorSet, draws: u64, seed: u64) -> Result<RadEstimate, RadError> {
    if draws < 2 {
        return Err(RadError::TooFewDraws(draws));
    }
    let n = a.dim();
    let mut rng = Rng::seed_from_u64(seed);
    let mut sum = KahanSum::new();
    let mut sumsq = KahanSum::new();
    let mut scratch = vec![1.0f64; n];
    for _ in 0..draws {
        for s in scratch.iter_mut() {
            *s = rng.next_sign();
        }
        let mut best = f64::NEG_INFINITY;
        for v in &a.vectors {
            let mut dot = 0.0;
            for (s, &x) in scratch.iter().zip(v) {
                dot += s * x;
            }
            if dot > best {
                best = dot;
            }
        }
        let val = best / n as f64;
        sum.add(val);
        sumsq.add(val * val);
    }
    let m = draws as f64;
    let mean = sum.value() / m;
    let var = ((sumsq.value() - sum.value() * sum.value() / m) / (m - 1.0)).max(0.0);
    Ok(RadEstimate {
        value: mean,
        stderr: (var / m).sqrt(),
        mode: RadMode::MonteCarlo,
        draws,
    })
}

/// Pairwise set operations from the complexity lemmas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineKind {
    /// {a + b}
    MinkowskiSum,
    /// {a - b}
    MinkowskiDiff,
    /// coordinatewise {max(a, b)}
    CoordMax,
}

/// Combine two sets elementwise over all pairs. Duplicates are kept, so the
/// result has |A| * |B| members.
pub fn combine(a: &VectorSet, b: &VectorSet, kind: CombineKind) -> Result<VectorSet, RadError> {
    if a.dim() != b.dim() {
        return Err(RadError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for va in a.vectors() {
        for vb in b.vectors() {
            let v: Vec<f64> = va
                .iter()
                .zip(vb)
                .map(|(&x, &y)| match kind {
                    CombineKind::MinkowskiSum => x + y,
                    CombineKind::MinkowskiDiff => x - y,
                    CombineKind::CoordMax => x.max(y),
                })
                .collect();
            out.push(v);
        }
    }
    VectorSet::new(a.dim(), out)
}

/// A family of n scalar maps applied coordinatewise, each with a declared
/// Lipschitz constant and anchored at phi(0) = 0.
#[derive(Clone)]
pub struct CoordMapFamily {
    maps: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    lipschitz: Vec<f64>,
}

impl CoordMapFamily {
    /// The anchoring invariant phi_i(0) = 0 is checked by evaluation.
    pub fn new(
        maps: Vec<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
        lipschitz: Vec<f64>,
    ) -> Result<Self, RadError> {
        if maps.len() != lipschitz.len() {
            return Err(RadError::MapFamilyShape {
                maps: maps.len(),
                constants: lipschitz.len(),
            });
        }
        for (i, l) in lipschitz.iter().enumerate() {
            if *l < 0.0 || !l.is_finite() {
                return Err(RadError::NegativeLipschitz {
                    index: i,
                    value: *l,
                });
            }
        }
        for (i, m) in maps.iter().enumerate() {
            let at0 = m(0.0);
            if at0.abs() > 1e-12 {
                return Err(RadError::MapNotAnchored {
                    index: i,
                    value: at0,
                });
            }
        }
        Ok(CoordMapFamily { maps, lipschitz })
    }

    /// Identity maps with Lipschitz constant 1.
    pub fn identity(n: usize) -> Self {
        let maps = (0..n)
            .map(|_| Arc::new(|t: f64| t) as Arc<dyn Fn(f64) -> f64 + Send + Sync>)
            .collect();
        CoordMapFamily {
            maps,
            lipschitz: vec![1.0; n],
        }
    }

    /// phi_i(t) = lambda * t for every coordinate (lambda >= 0).
    pub fn uniform_scale(n: usize, lambda: f64) -> Self {
        assert!(lambda >= 0.0);
        let maps = (0..n)
            .map(|_| Arc::new(move |t: f64| lambda * t) as Arc<dyn Fn(f64) -> f64 + Send + Sync>)
            .collect();
        CoordMapFamily {
            maps,
            lipschitz: vec![lambda; n],
        }
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn lipschitz_constants(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.lipschitz.iter().cloned().fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.maps)
            .map(|(&x, phi)| phi(x))
            .collect()
    }

    /// Check |phi_i(u) - phi_i(u')| <= L_i |u - u'| on random probe pairs.
    pub fn probe_lipschitz(&self, pairs_per_map: usize, range: (f64, f64), seed: u64) -> bool {
        let mut rng = Rng::stream(seed, &[0x70726f6265]); // "probe"
        for (phi, &l) in self.maps.iter().zip(&self.lipschitz) {
            for _ in 0..pairs_per_map {
                let u = rng.range_f64(range.0, range.1);
                let v = rng.range_f64(range.0, range.1);
                if (phi(u) - phi(v)).abs() > l * (u - v).abs() + 1e-12 {
                    return false;
                }
            }
        }
        true
    }
}

impl std::fmt::Debug for CoordMapFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoordMapFamily")
            .field("len", &self.maps.len())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Pointwise transformations of a vector set.
#[derive(Clone)]
pub enum TransformKind {
    /// Add the fixed vector c to every member.
    Translate(Vec<f64>),
    /// Coordinatewise absolute value.
    Abs,
    /// Apply a coordinate map family.
    CoordMaps(CoordMapFamily),
}

pub fn transform(a: &VectorSet, kind: &TransformKind) -> Result<VectorSet, RadError> {
    let out: Vec<Vec<f64>> = match kind {
        TransformKind::Translate(c) => {
            if c.len() != a.dim() {
                return Err(RadError::DimMismatch {
                    left: a.dim(),
                    right: c.len(),
                });
            }
            a.vectors()
                .iter()
                .map(|v| v.iter().zip(c).map(|(&x, &y)| x + y).collect())
                .collect()
        }
        TransformKind::Abs => a
            .vectors()
            .iter()
            .map(|v| v.iter().map(|x| x.abs()).collect())
            .collect(),
        TransformKind::CoordMaps(family) => {
            if family.len() != a.dim() {
                return Err(RadError::DimMismatch {
                    left: a.dim(),
                    right: family.len(),
                });
            }
            a.vectors().iter().map(|v| family.apply(v)).collect()
        }
    };
    VectorSet::new(a.dim(), out)
}

/// One inequality (or equality) check with both sides materialized.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// True when this is an equality check (|lhs - rhs| <= slack) rather
    /// than lhs <= rhs + slack.
    pub equality: bool,
    pub pass: bool,
}

impl InequalityCheck {
    fn le(name: &'static str, lhs: f64, rhs: f64, slack: f64) -> Self {
        InequalityCheck {
            name,
            lhs,
            rhs,
            slack,
            equality: false,
            pass: lhs <= rhs + slack,
        }
    }

    fn eq(name: &'static str, lhs: f64, rhs: f64, slack: f64) -> Self {
        InequalityCheck {
            name,
            lhs,
            rhs,
            slack,
            equality: true,
            pass: (lhs - rhs).abs() <= slack,
        }
    }
}

/// Report from [`verify_lemma_suite`].
#[derive(Clone, Debug, Serialize)]
pub struct LemmaSuiteReport {
    pub mode: RadMode,
    pub checks: Vec<InequalityCheck>,
    pub all_pass: bool,
}

struct RadEvaluator {
    mode: RadMode,
    draws: u64,
    seed: u64,
    next_stream: u64,
}

impl RadEvaluator {
    fn estimate(&mut self, a: &VectorSet) -> Result<RadEstimate, RadError> {
        match self.mode {
            RadMode::Exact => rad_exact(a),
            RadMode::MonteCarlo => {
                // Each estimate draws from its own derived stream so the
                // per-set sign draws are independent.
                let stream = self.next_stream;
                self.next_stream += 1;
                rad_mc(a, self.draws, Rng::stream(self.seed, &[stream]).next_u64())
            }
        }
    }
}

fn combined_slack(mode: RadMode, parts: &[&RadEstimate]) -> f64 {
    match mode {
        RadMode::Exact => EXACT_SLACK,
        RadMode::MonteCarlo => {
            let var: f64 = parts.iter().map(|e| e.stderr * e.stderr).sum();
            3.0 * var.sqrt()
        }
    }
}

/// Run the six set-algebra checks on one instance:
///
/// (a) translation invariance, (b) subadditivity of Minkowski sums,
/// (c) the difference bound, (d) the coordinatewise contraction bound,
/// (e) absolute-value contraction, (f) the coordinatewise-max bound.
///
/// In exact mode each check carries absolute slack [`EXACT_SLACK`]; in
/// Monte-Carlo mode the slack is 3x the root-sum-square of the stderrs of
/// the estimates involved.
pub fn verify_lemma_suite(
    a: &VectorSet,
    b: &VectorSet,
    family: &CoordMapFamily,
    mode: RadMode,
    draws: u64,
    seed: u64,
) -> Result<LemmaSuiteReport, RadError> {
    if a.dim() != b.dim() {
        return Err(RadError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if family.len() != a.dim() {
        return Err(RadError::DimMismatch {
            left: a.dim(),
            right: family.len(),
        });
    }
    let mut ev = RadEvaluator {
        mode,
        draws,
        seed,
        next_stream: 0,
    };

    let rad_a = ev.estimate(a)?;
    let rad_b = ev.estimate(b)?;

    // (a) translation by a seed-derived vector
    let mut crng = Rng::stream(seed, &[0x7472616e73]); // "trans"
    let c: Vec<f64> = (0..a.dim()).map(|_| crng.range_f64(-1.0, 1.0)).collect();
    let translated = transform(a, &TransformKind::Translate(c))?;
    let rad_translated = ev.estimate(&translated)?;

    let sum = combine(a, b, CombineKind::MinkowskiSum)?;
    let rad_sum = ev.estimate(&sum)?;
    let diff = combine(a, b, CombineKind::MinkowskiDiff)?;
    let rad_diff = ev.estimate(&diff)?;
    let mapped = transform(a, &TransformKind::CoordMaps(family.clone()))?;
    let rad_mapped = ev.estimate(&mapped)?;
    let abs_a = transform(a, &TransformKind::Abs)?;
    let rad_abs = ev.estimate(&abs_a)?;
    let vmax = combine(a, b, CombineKind::CoordMax)?;
    let rad_max = ev.estimate(&vmax)?;

    let l_max = family.max_lipschitz();
    let checks = vec![
        InequalityCheck::eq(
            "translation_invariance",
            rad_translated.value,
            rad_a.value,
            combined_slack(mode, &[&rad_translated, &rad_a]),
        ),
        InequalityCheck::le(
            "minkowski_sum_subadditive",
            rad_sum.value,
            rad_a.value + rad_b.value,
            combined_slack(mode, &[&rad_sum, &rad_a, &rad_b]),
        ),
        InequalityCheck::le(
            "minkowski_diff_bound",
            rad_diff.value,
            rad_a.value + rad_b.value,
            combined_slack(mode, &[&rad_diff, &rad_a, &rad_b]),
        ),
        InequalityCheck::le(
            "lipschitz_contraction",
            rad_mapped.value,
            l_max * rad_a.value,
            combined_slack(mode, &[&rad_mapped, &rad_a]),
        ),
        InequalityCheck::le(
            "abs_contraction",
            rad_abs.value,
            rad_a.value,
            combined_slack(mode, &[&rad_abs, &rad_a]),
        ),
        InequalityCheck::le(
            "coord_max_bound",
            rad_max.value,
            rad_a.value + rad_b.value,
            combined_slack(mode, &[&rad_max, &rad_a, &rad_b]),
        ),
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(LemmaSuiteReport {
        mode,
        checks,
        all_pass,
    })
}

/// A random piecewise-linear scalar map through the origin with at most
/// `max_breaks` breakpoints and slopes drawn uniformly in [-l, l]; the true
/// Lipschitz constant (max |slope|) is returned alongside. Used as the
/// contraction-test map family.
pub fn random_lipschitz_map(
    rng: &mut Rng,
    l: f64,
    max_breaks: usize,
) -> (Arc<dyn Fn(f64) -> f64 + Send + Sync>, f64) {
    let k = rng.range_usize(0, max_breaks);
    let mut breaks: Vec<f64> = (0..k).map(|_| rng.range_f64(-2.0, 2.0)).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    // k+1 segment slopes, left to right
    let slopes: Vec<f64> = (0..breaks.len() + 1)
        .map(|_| rng.range_f64(-l, l))
        .collect();
    let actual_l = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let map = move |t: f64| -> f64 {
        // integrate the slope field from 0 to t; phi(0) = 0 by construction
        let (lo, hi, sign) = if t >= 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
        let mut acc = 0.0;
        let mut cursor = lo;
        for (i, &bp) in breaks.iter().enumerate() {
            if bp <= cursor {
                continue;
            }
            if bp >= hi {
                break;
            }
            let seg = slope_at(&breaks, &slopes, 0.5 * (cursor + bp), i);
            acc += seg * (bp - cursor);
            cursor = bp;
        }
        let seg = slope_at(&breaks, &slopes, 0.5 * (cursor + hi), breaks.len());
        acc += seg * (hi - cursor);
        sign * acc
    };
    (Arc::new(map), actual_l)
}

#[inline]
fn slope_at(breaks: &[f64], slopes: &[f64], x: f64, hint: usize) -> f64 {
    // segment index = number of breakpoints strictly below x
    let _ = hint;
    let idx = breaks.partition_point(|&b| b < x);
    slopes[idx]
}
