//! Closed-form bound calculators and their checkers: the robust-clean gap
//! bound, the uniform loss bound a_rho, the robust generalization
//! inequality, the Rademacher lower bounds it implies, and the two
//! theoretical scaling laws the experiments compare against.

use serde::Serialize;
use thiserror::Error;

use crate::matrix::KahanSum;
use crate::pwl::PiecewiseLinear1D;
use crate::rademacher::{rad_exact, RadError, VectorSet};
use crate::rng::Rng;
use crate::robust_loss::{
    robust_sq_loss, LabeledSample, Predictor, RobustLossError, RobustnessConfig, SampleSet,
};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("confidence parameter must lie strictly in (0, 1), got {0}")]
    BadConfidence(f64),
    #[error("predictor has no Lipschitz metadata and none was supplied")]
    MissingLipschitz,
    #[error(transparent)]
    RobustLoss(#[from] RobustLossError),
    #[error(transparent)]
    Rad(#[from] RadError),
}

/// Upper bound on the robust-clean empirical gap:
/// `2 L rho sqrt(r_hat) + L^2 rho^2`.
pub fn gap_bound(l: f64, rho: f64, r_hat: f64) -> f64 {
    2.0 * l * rho * r_hat.sqrt() + l * l * rho * rho
}

/// Uniform bound on the robust squared loss when labels and outputs live in
/// [-1, 1]: `(2 + L rho)^2`.
pub fn a_rho(l: f64, rho: f64) -> f64 {
    let t = 2.0 + l * rho;
    t * t
}

/// Right-hand side of the robust generalization inequality: with
/// probability at least 1 - delta_conf,
/// `T - R <= 2 E[Rad] + a_rho sqrt(2 ln(2/delta_conf) / n)`.
pub fn gen_bound_rhs(
    expected_rad: f64,
    l: f64,
    rho: f64,
    n: usize,
    delta_conf: f64,
) -> Result<f64, BoundsError> {
    check_confidence(delta_conf)?;
    Ok(2.0 * expected_rad + a_rho(l, rho) * deviation_term(n, delta_conf))
}

/// Lower bound on the expected Rademacher complexity implied by a
/// generalization gap of at least gamma:
/// `gamma/2 - (a_rho/2) sqrt(2 ln(2/delta_conf) / n)`.
///
/// May be negative (vacuous); returned as-is.
pub fn rad_lower_bound(
    gamma: f64,
    l: f64,
    rho: f64,
    n: usize,
    delta_conf: f64,
) -> Result<f64, BoundsError> {
    check_confidence(delta_conf)?;
    Ok(0.5 * gamma - 0.5 * a_rho(l, rho) * deviation_term(n, delta_conf))
}

/// The same lower bound under the overfitting assumption, where the gap is
/// `gamma = epsilon - (2 L rho sigma + L^2 rho^2)`.
pub fn rad_lower_bound_overfit(
    epsilon: f64,
    l: f64,
    rho: f64,
    sigma: f64,
    n: usize,
    delta_conf: f64,
) -> Result<f64, BoundsError> {
    let gamma = epsilon - (2.0 * l * rho * sigma + l * l * rho * rho);
    rad_lower_bound(gamma, l, rho, n, delta_conf)
}

fn check_confidence(delta_conf: f64) -> Result<(), BoundsError> {
    if delta_conf > 0.0 && delta_conf < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::BadConfidence(delta_conf))
    }
}

#[inline]
fn deviation_term(n: usize, delta_conf: f64) -> f64 {
    (2.0 * (2.0 / delta_conf).ln() / n as f64).sqrt()
}

/// The two candidate scaling laws for the Lipschitz lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingLaw {
    /// L proportional to sqrt(n d / p): exponents (0.5, -0.5).
    Bubeck,
    /// L proportional to n^(1/d): exponents (1/d, 0).
    Wu,
}

/// Predicted value (up to the constant) and the (alpha, beta) exponent pair
/// of a scaling law.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TheoreticalScaling {
    pub law: ScalingLaw,
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn theoretical_l(law: ScalingLaw, n: usize, p: usize, d: usize) -> TheoreticalScaling {
    assert!(n >= 1 && p >= 1 && d >= 1, "n, p, d must be positive");
    match law {
        ScalingLaw::Bubeck => TheoreticalScaling {
            law,
            value: (n as f64 * d as f64 / p as f64).sqrt(),
            alpha: 0.5,
            beta: -0.5,
        },
        ScalingLaw::Wu => TheoreticalScaling {
            law,
            value: (n as f64).powf(1.0 / d as f64),
            alpha: 1.0 / d as f64,
            beta: 0.0,
        },
    }
}

/// Empirical losses of one predictor on train/test samples.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LossReport {
    /// Clean empirical train error (mean squared residual).
    pub clean_train: f64,
    /// Robust empirical train error.
    pub robust_train: f64,
    /// Robust test error.
    pub robust_test: f64,
    /// Mean absolute residual on train; at most sqrt(clean_train).
    pub residual_abs_mean: f64,
    pub n: usize,
}

pub fn loss_report(
    f: &dyn Predictor,
    train: &SampleSet,
    test: &SampleSet,
    cfg: &RobustnessConfig,
) -> Result<LossReport, BoundsError> {
    let mut clean = KahanSum::new();
    let mut robust = KahanSum::new();
    let mut abs_resid = KahanSum::new();
    for s in train.samples() {
        let r = f.eval(&s.x)[0] - s.y;
        clean.add(r * r);
        abs_resid.add(r.abs());
        robust.add(robust_sq_loss(f, s, cfg)?);
    }
    let n = train.len() as f64;
    let mut test_robust = KahanSum::new();
    for s in test.samples() {
        test_robust.add(robust_sq_loss(f, s, cfg)?);
    }
    Ok(LossReport {
        clean_train: clean.value() / n,
        robust_train: robust.value() / n,
        robust_test: test_robust.value() / test.len() as f64,
        residual_abs_mean: abs_resid.value() / n,
        n: train.len(),
    })
}

/// Outcome of one gap-bound check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapBoundReport {
    pub r_hat: f64,
    pub r_robust: f64,
    pub gap: f64,
    pub bound: f64,
    pub lipschitz: f64,
    pub rho: f64,
    pub pass: bool,
}

const GAP_SLACK: f64 = 1e-10;

/// Check `R - R_hat <= 2 L rho sqrt(R_hat) + L^2 rho^2` on a concrete
/// predictor and sample. With an inner-approximate robust loss the check
/// stays sound: the approximation only lowers R.
pub fn check_gap_bound(
    f: &dyn Predictor,
    set: &SampleSet,
    cfg: &RobustnessConfig,
    lipschitz: Option<f64>,
) -> Result<GapBoundReport, BoundsError> {
    let l = lipschitz
        .or_else(|| f.lipschitz_bound())
        .ok_or(BoundsError::MissingLipschitz)?;
    let mut clean = KahanSum::new();
    let mut robust = KahanSum::new();
    for s in set.samples() {
        let r = f.eval(&s.x)[0] - s.y;
        clean.add(r * r);
        robust.add(robust_sq_loss(f, s, cfg)?);
    }
    let n = set.len() as f64;
    let r_hat = clean.value() / n;
    let r_robust = robust.value() / n;
    let bound = gap_bound(l, cfg.rho, r_hat);
    let gap = r_robust - r_hat;
    Ok(GapBoundReport {
        r_hat,
        r_robust,
        gap,
        bound,
        lipschitz: l,
        rho: cfg.rho,
        pass: gap <= bound + GAP_SLACK,
    })
}

/// A finite instance for exact evaluation of the generalization bound: a
/// finite 1-D domain with a uniform distribution over labeled points, and a
/// finite class of piecewise-linear predictors.
#[derive(Clone, Debug)]
pub struct FiniteInstance {
    pub domain: Vec<(f64, f64)>,
    pub class: Vec<PiecewiseLinear1D>,
    pub rho: f64,
}

/// Frequency of the event {sup_f (T_f - R_f) <= rhs} over resampled
/// training sets, for one confidence level.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverageResult {
    pub delta_conf: f64,
    pub rhs: f64,
    pub expected_rad: f64,
    pub resamples: usize,
    pub hold_frequency: f64,
    pub pass: bool,
}

impl FiniteInstance {
    /// Per-point robust losses for every predictor: losses[f][j] is the
    /// robust loss of predictor f at domain point j.
    fn loss_table(&self) -> Result<Vec<Vec<f64>>, BoundsError> {
        let cfg = RobustnessConfig::exact_pwl(self.rho);
        let mut table = Vec::with_capacity(self.class.len());
        for f in &self.class {
            let mut row = Vec::with_capacity(self.domain.len());
            for &(x, y) in &self.domain {
                let s = LabeledSample { x: vec![x], y };
                row.push(robust_sq_loss(f, &s, &cfg)?);
            }
            table.push(row);
        }
        Ok(table)
    }

    /// Robust test errors T_f: exact expectation under the uniform domain
    /// distribution.
    pub fn exact_test_errors(&self) -> Result<Vec<f64>, BoundsError> {
        let table = self.loss_table()?;
        let m = self.domain.len() as f64;
        Ok(table
            .iter()
            .map(|row| row.iter().sum::<f64>() / m)
            .collect())
    }

    /// Exact expected Rademacher complexity of the robust-loss class over
    /// iid samples of size n: enumerate sample compositions (the complexity
    /// only depends on point multiplicities) weighted by their multinomial
    /// probabilities.
    pub fn exact_expected_rad(&self, n: usize) -> Result<f64, BoundsError> {
        let table = self.loss_table()?;
        let m = self.domain.len();
        let mut total = 0.0;
        let mut weight_sum = 0.0;
        let mut counts = vec![0usize; m];
        self.walk_compositions(&table, n, 0, n, &mut counts, &mut total, &mut weight_sum)?;
        debug_assert!((weight_sum - 1.0).abs() < 1e-9, "weights sum to {weight_sum}");
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk_compositions(
        &self,
        table: &[Vec<f64>],
        n: usize,
        slot: usize,
        remaining: usize,
        counts: &mut Vec<usize>,
        total: &mut f64,
        weight_sum: &mut f64,
    ) -> Result<(), BoundsError> {
        let m = self.domain.len();
        if slot == m - 1 {
            counts[slot] = remaining;
            let weight = multinomial_prob(n, counts, m);
            let rows: Vec<Vec<f64>> = table
                .iter()
                .map(|row| {
                    let mut v = Vec::with_capacity(n);
                    for (j, &k) in counts.iter().enumerate() {
                        for _ in 0..k {
                            v.push(row[j]);
                        }
                    }
                    v
                })
                .collect();
            let set = VectorSet::from_rows(rows)?;
            *total += weight * rad_exact(&set)?.value;
            *weight_sum += weight;
            return Ok(());
        }
        for k in 0..=remaining {
            counts[slot] = k;
            self.walk_compositions(table, n, slot + 1, remaining - k, counts, total, weight_sum)?;
        }
        Ok(())
    }

    /// Simulate resampled training sets and measure how often the uniform
    /// bound event {for all f: T_f - R_f <= rhs(delta)} holds.
    pub fn coverage(
        &self,
        n: usize,
        resamples: usize,
        deltas: &[f64],
        l: f64,
        seed: u64,
    ) -> Result<Vec<CoverageResult>, BoundsError> {
        let table = self.loss_table()?;
        let test_errors = self.exact_test_errors()?;
        let expected_rad = self.exact_expected_rad(n)?;
        let m = self.domain.len();
        let mut rng = Rng::stream(seed, &[0x636f766572]); // "cover"
        let mut rhs_per_delta = Vec::with_capacity(deltas.len());
        for &d in deltas {
            rhs_per_delta.push(gen_bound_rhs(expected_rad, l, self.rho, n, d)?);
        }
        let mut holds = vec![0usize; deltas.len()];
        for _ in 0..resamples {
            // draw n iid uniform domain indices and compute per-f train error
            let mut counts = vec![0usize; m];
            for _ in 0..n {
                counts[rng.below(m)] += 1;
            }
            let mut worst_gap = f64::NEG_INFINITY;
            for (f_idx, row) in table.iter().enumerate() {
                let mut train = 0.0;
                for (j, &k) in counts.iter().enumerate() {
                    train += k as f64 * row[j];
                }
                train /= n as f64;
                worst_gap = worst_gap.max(test_errors[f_idx] - train);
            }
            for (i, &rhs) in rhs_per_delta.iter().enumerate() {
                if worst_gap <= rhs {
                    holds[i] += 1;
                }
            }
        }
        Ok(deltas
            .iter()
            .zip(rhs_per_delta)
            .zip(holds)
            .map(|((&delta_conf, rhs), h)| {
                let freq = h as f64 / resamples as f64;
                CoverageResult {
                    delta_conf,
                    rhs,
                    expected_rad,
                    resamples,
                    hold_frequency: freq,
                    pass: freq >= 1.0 - delta_conf,
                }
            })
            .collect())
    }
}

fn multinomial_prob(n: usize, counts: &[usize], m: usize) -> f64 {
    // n! / (k_1! ... k_m!) / m^n, computed in log space
    let mut log = ln_factorial(n) - (n as f64) * (m as f64).ln();
    for &k in counts {
        log -= ln_factorial(k);
    }
    log.exp()
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}
