//! Power-law exponent estimation for L = C * n^alpha * p^beta.
//!
//! Two routes, matching the experimental protocol: fixed-variable slices
//! (per-p slope of log L on log n and per-n slope of log L on log p,
//! averaged with equal slice weights), and joint ordinary least squares of
//! log L on (1, log n, log p) with t-based standard errors, 95% intervals,
//! and p-values. Natural logs throughout; the base only shifts the
//! intercept.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::bounds::{theoretical_l, ScalingLaw};
use crate::lipestimate::ScalingRecord;
use crate::rng::Rng;
use crate::stats::{students_t_quantile, students_t_two_sided_p};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("joint fit needs at least {needed} records, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("design matrix is rank deficient (collinear log n / log p)")]
    RankDeficient,
    #[error("no slice has at least 2 distinct values of the free variable")]
    NoValidSlices,
    #[error("record {index} has non-positive L_emp {value}; filter zeros first")]
    NonPositive { index: usize, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Slices,
    Joint,
}

/// Exponent estimates with inference. Inference fields are `None` when the
/// method cannot produce them (a single surviving slice, for instance).
#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub method: FitMethod,
    pub alpha: f64,
    pub beta: f64,
    pub log_c: f64,
    pub stderr_alpha: Option<f64>,
    pub stderr_beta: Option<f64>,
    pub ci95_alpha: Option<(f64, f64)>,
    pub ci95_beta: Option<(f64, f64)>,
    pub p_value_alpha: Option<f64>,
    pub p_value_beta: Option<f64>,
    pub r_squared: f64,
    pub n_points: usize,
}

/// One per-slice slope estimate.
#[derive(Clone, Debug, Serialize)]
pub struct SliceEstimate {
    /// The held-fixed variable's value (p for alpha slices, n for beta).
    pub fixed: usize,
    pub slope: f64,
    pub points: usize,
}

/// Aggregated estimate for one exponent from its slice family.
#[derive(Clone, Debug, Serialize)]
pub struct SliceAxis {
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub p_value: Option<f64>,
    pub per_slice: Vec<SliceEstimate>,
}

/// A slice that could not contribute a slope.
#[derive(Clone, Debug, Serialize)]
pub struct ExcludedSlice {
    pub axis: &'static str,
    pub fixed: usize,
    pub points: usize,
    pub distinct: usize,
}

/// Result of the slice-averaging method. Either axis may be unavailable on
/// degenerate grids; `partial` flags that case.
#[derive(Clone, Debug, Serialize)]
pub struct SlicesFit {
    pub alpha: Option<SliceAxis>,
    pub beta: Option<SliceAxis>,
    pub log_c: Option<f64>,
    pub r_squared: Option<f64>,
    pub excluded: Vec<ExcludedSlice>,
    pub n_points: usize,
    pub partial: bool,
}

impl SlicesFit {
    /// Collapse to a [`FitResult`] when both exponents are available.
    pub fn to_fit_result(&self) -> Option<FitResult> {
        let (alpha, beta) = (self.alpha.as_ref()?, self.beta.as_ref()?);
        Some(FitResult {
            method: FitMethod::Slices,
            alpha: alpha.estimate,
            beta: beta.estimate,
            log_c: self.log_c?,
            stderr_alpha: alpha.stderr,
            stderr_beta: beta.stderr,
            ci95_alpha: alpha.ci95,
            ci95_beta: beta.ci95,
            p_value_alpha: alpha.p_value,
            p_value_beta: beta.p_value,
            r_squared: self.r_squared?,
            n_points: self.n_points,
        })
    }
}

fn check_positive(records: &[ScalingRecord]) -> Result<(), FitError> {
    for (i, r) in records.iter().enumerate() {
        if r.l_emp.is_nan() || r.l_emp <= 0.0 {
            return Err(FitError::NonPositive {
                index: i,
                value: r.l_emp,
            });
        }
    }
    Ok(())
}

/// Simple least-squares slope of y on x; needs >= 2 distinct x.
fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        var += (x - mx) * (x - mx);
    }
    cov / var
}

fn axis_from_slopes(slopes: Vec<SliceEstimate>) -> SliceAxis {
    let k = slopes.len();
    let mean = slopes.iter().map(|s| s.slope).sum::<f64>() / k as f64;
    let (stderr, ci95, p_value) = if k >= 2 {
        let var = slopes
            .iter()
            .map(|s| (s.slope - mean) * (s.slope - mean))
            .sum::<f64>()
            / (k - 1) as f64;
        let se = (var / k as f64).sqrt();
        let df = (k - 1) as f64;
        let t = students_t_quantile(0.975, df);
        let ci = (mean - t * se, mean + t * se);
        let p = if se > 0.0 {
            students_t_two_sided_p(mean / se, df)
        } else {
            0.0
        };
        (Some(se), Some(ci), Some(p))
    } else {
        (None, None, None)
    };
    SliceAxis {
        estimate: mean,
        stderr,
        ci95,
        p_value,
        per_slice: slopes,
    }
}

/// Fixed-variable slices and averaging: per fixed p, the slope of log L on
/// log n; per fixed n, the slope of log L on log p; each exponent is the
/// equal-weight mean over its slices. Slices with fewer than 2 distinct
/// free values are excluded and logged.
pub fn fit_slices(records: &[ScalingRecord]) -> Result<SlicesFit, FitError> {
    check_positive(records)?;
    let mut by_p: BTreeMap<usize, Vec<&ScalingRecord>> = BTreeMap::new();
    let mut by_n: BTreeMap<usize, Vec<&ScalingRecord>> = BTreeMap::new();
    for r in records {
        by_p.entry(r.p).or_default().push(r);
        by_n.entry(r.n).or_default().push(r);
    }

    let mut excluded = Vec::new();
    let mut alpha_slopes = Vec::new();
    for (&p, rows) in &by_p {
        let mut distinct: Vec<usize> = rows.iter().map(|r| r.n).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            excluded.push(ExcludedSlice {
                axis: "alpha",
                fixed: p,
                points: rows.len(),
                distinct: distinct.len(),
            });
            continue;
        }
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.l_emp.ln()).collect();
        alpha_slopes.push(SliceEstimate {
            fixed: p,
            slope: ls_slope(&xs, &ys),
            points: rows.len(),
        });
    }
    let mut beta_slopes = Vec::new();
    for (&n, rows) in &by_n {
        let mut distinct: Vec<usize> = rows.iter().map(|r| r.p).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            excluded.push(ExcludedSlice {
                axis: "beta",
                fixed: n,
                points: rows.len(),
                distinct: distinct.len(),
            });
            continue;
        }
        let xs: Vec<f64> = rows.iter().map(|r| (r.p as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.l_emp.ln()).collect();
        beta_slopes.push(SliceEstimate {
            fixed: n,
            slope: ls_slope(&xs, &ys),
            points: rows.len(),
        });
    }

    if alpha_slopes.is_empty() && beta_slopes.is_empty() {
        return Err(FitError::NoValidSlices);
    }
    let alpha = (!alpha_slopes.is_empty()).then(|| axis_from_slopes(alpha_slopes));
    let beta = (!beta_slopes.is_empty()).then(|| axis_from_slopes(beta_slopes));
    let partial = alpha.is_none() || beta.is_none();

    // Intercept and fit quality of the implied model, when both exponents
    // exist.
    let (log_c, r_squared) = if let (Some(a), Some(b)) = (alpha.as_ref(), beta.as_ref()) {
        let mut resid_mean = 0.0;
        for r in records {
            resid_mean +=
                r.l_emp.ln() - a.estimate * (r.n as f64).ln() - b.estimate * (r.p as f64).ln();
        }
        let log_c = resid_mean / records.len() as f64;
        let mean_y = records.iter().map(|r| r.l_emp.ln()).sum::<f64>() / records.len() as f64;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for r in records {
            let y = r.l_emp.ln();
            let y_hat = log_c + a.estimate * (r.n as f64).ln() + b.estimate * (r.p as f64).ln();
            ss_res += (y - y_hat) * (y - y_hat);
            ss_tot += (y - mean_y) * (y - mean_y);
        }
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
        (Some(log_c), Some(r2))
    } else {
        (None, None)
    };

    Ok(SlicesFit {
        alpha,
        beta,
        log_c,
        r_squared,
        excluded,
        n_points: records.len(),
        partial,
    })
}

/// Householder QR of an m x 3 design; returns the packed upper-triangular R
/// and Q^T y.
fn qr_solve_3(design: &mut [[f64; 3]], y: &mut [f64]) -> Result<([f64; 6], [f64; 3]), FitError> {
    let m = design.len();
    let mut r = [0.0f64; 6]; // packed upper triangle: (0,0) (0,1) (0,2) (1,1) (1,2) (2,2)
    let mut v = vec![0.0f64; m];
    for col in 0..3 {
        let mut norm2 = 0.0;
        for row in design.iter().skip(col) {
            norm2 += row[col] * row[col];
        }
        let norm = norm2.sqrt();
        if norm < 1e-12 {
            return Err(FitError::RankDeficient);
        }
        let alpha = if design[col][col] >= 0.0 { -norm } else { norm };
        // Householder vector v = x - alpha e1
        v[col] = design[col][col] - alpha;
        let mut vnorm2 = v[col] * v[col];
        for i in col + 1..m {
            v[i] = design[i][col];
            vnorm2 += v[i] * v[i];
        }
        // apply H = I - 2 v v^T / (v^T v) to the columns and to y
        if vnorm2 > 0.0 {
            for target in col..3 {
                let mut dot = 0.0;
                for i in col..m {
                    dot += v[i] * design[i][target];
                }
                let scale = 2.0 * dot / vnorm2;
                for i in col..m {
                    design[i][target] -= scale * v[i];
                }
            }
            let mut dot = 0.0;
            for i in col..m {
                dot += v[i] * y[i];
            }
            let scale = 2.0 * dot / vnorm2;
            for i in col..m {
                y[i] -= scale * v[i];
            }
        }
        // record the triangular row; entries below the diagonal are zero up
        // to rounding, clear them so later column norms stay clean
        for target in col..3 {
            let idx = match (col, target) {
                (0, 0) => 0,
                (0, 1) => 1,
                (0, 2) => 2,
                (1, 1) => 3,
                (1, 2) => 4,
                (2, 2) => 5,
                _ => unreachable!(),
            };
            r[idx] = design[col][target];
        }
        for row in design.iter_mut().skip(col + 1) {
            row[col] = 0.0;
        }
    }
    Ok((r, [y[0], y[1], y[2]]))
}

/// Joint log-space OLS: log L ~ 1 + log n + log p, solved by Householder QR
/// with t-based inference at n_points - 3 degrees of freedom.
pub fn fit_joint(records: &[ScalingRecord]) -> Result<FitResult, FitError> {
    check_positive(records)?;
    let m = records.len();
    if m < 4 {
        return Err(FitError::TooFewPoints { needed: 4, got: m });
    }
    let mut design: Vec<[f64; 3]> = records
        .iter()
        .map(|r| [1.0, (r.n as f64).ln(), (r.p as f64).ln()])
        .collect();
    let mut y: Vec<f64> = records.iter().map(|r| r.l_emp.ln()).collect();
    let design_copy = design.clone();
    let y_copy = y.clone();
    let (r, qty) = qr_solve_3(&mut design, &mut y)?;

    // back substitution: R beta = Q^T y
    let (r00, r01, r02, r11, r12, r22) = (r[0], r[1], r[2], r[3], r[4], r[5]);
    if r00.abs() < 1e-12 || r11.abs() < 1e-12 || r22.abs() < 1e-12 {
        return Err(FitError::RankDeficient);
    }
    let b2 = qty[2] / r22;
    let b1 = (qty[1] - r12 * b2) / r11;
    let b0 = (qty[0] - r01 * b1 - r02 * b2) / r00;

    // residuals against the untouched copies
    let mut ss_res = 0.0;
    let mut mean_y = 0.0;
    for &yv in &y_copy {
        mean_y += yv;
    }
    mean_y /= m as f64;
    let mut ss_tot = 0.0;
    for (row, &yv) in design_copy.iter().zip(&y_copy) {
        let pred = b0 * row[0] + b1 * row[1] + b2 * row[2];
        ss_res += (yv - pred) * (yv - pred);
        ss_tot += (yv - mean_y) * (yv - mean_y);
    }
    let df = (m - 3) as f64;
    let s2 = (ss_res / df).max(0.0);

    // (X^T X)^{-1} = R^{-1} R^{-T}; invert the 3x3 upper triangle
    let i22 = 1.0 / r22;
    let i11 = 1.0 / r11;
    let i00 = 1.0 / r00;
    let i12 = -r12 * i11 * i22;
    let i01 = -r01 * i00 * i11;
    let i02 = (r01 * r12 - r02 * r11) * i00 * i11 * i22;
    // diag of R^{-1} R^{-T}: row sums of squares of R^{-1}
    let c00 = i00 * i00 + i01 * i01 + i02 * i02;
    let c11 = i11 * i11 + i12 * i12;
    let c22 = i22 * i22;
    let _ = c00;

    let se_alpha = (s2 * c11).sqrt();
    let se_beta = (s2 * c22).sqrt();
    let t975 = students_t_quantile(0.975, df);
    let p_of = |b: f64, se: f64| {
        if se > 0.0 {
            students_t_two_sided_p(b / se, df)
        } else {
            0.0
        }
    };
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(FitResult {
        method: FitMethod::Joint,
        alpha: b1,
        beta: b2,
        log_c: b0,
        stderr_alpha: Some(se_alpha),
        stderr_beta: Some(se_beta),
        ci95_alpha: Some((b1 - t975 * se_alpha, b1 + t975 * se_alpha)),
        ci95_beta: Some((b2 - t975 * se_beta, b2 + t975 * se_beta)),
        p_value_alpha: Some(p_of(b1, se_alpha)),
        p_value_beta: Some(p_of(b2, se_beta)),
        r_squared,
        n_points: m,
    })
}

/// Distance of the fitted exponents to one theoretical law.
#[derive(Clone, Debug, Serialize)]
pub struct LawComparison {
    pub law: ScalingLaw,
    pub alpha_theory: f64,
    pub beta_theory: f64,
    pub alpha_distance: f64,
    pub beta_distance: f64,
}

/// Tabulated comparison of a fit against both candidate laws.
#[derive(Clone, Debug, Serialize)]
pub struct TheoryComparison {
    pub alpha: f64,
    pub beta: f64,
    pub effective_dim: usize,
    pub laws: Vec<LawComparison>,
    pub closer_alpha: ScalingLaw,
    pub closer_beta: ScalingLaw,
}

pub fn compare_to_theory(fit: &FitResult, effective_dim: usize) -> TheoryComparison {
    let laws: Vec<LawComparison> = [ScalingLaw::Bubeck, ScalingLaw::Wu]
        .into_iter()
        .map(|law| {
            // n, p only affect the value, not the exponents
            let t = theoretical_l(law, 1, 1, effective_dim);
            LawComparison {
                law,
                alpha_theory: t.alpha,
                beta_theory: t.beta,
                alpha_distance: (fit.alpha - t.alpha).abs(),
                beta_distance: (fit.beta - t.beta).abs(),
            }
        })
        .collect();
    let closer = |pick: fn(&LawComparison) -> f64| {
        if pick(&laws[0]) <= pick(&laws[1]) {
            laws[0].law
        } else {
            laws[1].law
        }
    };
    TheoryComparison {
        alpha: fit.alpha,
        beta: fit.beta,
        effective_dim,
        laws: laws.clone(),
        closer_alpha: closer(|l| l.alpha_distance),
        closer_beta: closer(|l| l.beta_distance),
    }
}

/// Synthetic grid following L = c * n^alpha * p^beta, with optional
/// iid Gaussian noise on log L. Used for fit validation and CI
/// calibration.
pub fn synthetic_power_law(
    c: f64,
    alpha: f64,
    beta: f64,
    n_grid: &[usize],
    width_p_grid: &[(usize, usize)],
    noise_sigma: f64,
    seed: u64,
) -> Vec<ScalingRecord> {
    let mut rng = Rng::stream(seed, &[0x706f776572]); // "power"
    let mut records = Vec::with_capacity(n_grid.len() * width_p_grid.len());
    for &n in n_grid {
        for &(width, p) in width_p_grid {
            let log_l =
                c.ln() + alpha * (n as f64).ln() + beta * (p as f64).ln()
                    + noise_sigma * rng.next_normal();
            records.push(ScalingRecord {
                n,
                p,
                width,
                seed,
                l_emp: log_l.exp(),
                stopped_epoch: 0,
                best_test_loss: 0.0,
            });
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_10x10() -> (Vec<usize>, Vec<(usize, usize)>) {
        let n_grid: Vec<usize> = (1..=10).map(|k| 1000 * k).collect();
        let width_p: Vec<(usize, usize)> = [2usize, 4, 8, 16, 32, 64, 128, 256, 512, 768]
            .iter()
            .map(|&w| (w, 784 * w + w + w * 10 + 10))
            .collect();
        (n_grid, width_p)
    }

    #[test]
    fn noiseless_recovery_both_methods() {
        let (n_grid, width_p) = grid_10x10();
        let records = synthetic_power_law(2.0, 0.16, 0.03, &n_grid, &width_p, 0.0, 0);
        let joint = fit_joint(&records).unwrap();
        assert!((joint.alpha - 0.16).abs() < 1e-10, "{}", joint.alpha);
        assert!((joint.beta - 0.03).abs() < 1e-10, "{}", joint.beta);
        assert!((joint.log_c - 2.0f64.ln()).abs() < 1e-9);
        assert!((joint.r_squared - 1.0).abs() < 1e-12);
        assert!(joint.stderr_alpha.unwrap() < 1e-10);

        let slices = fit_slices(&records).unwrap();
        let s = slices.to_fit_result().unwrap();
        assert!((s.alpha - 0.16).abs() < 1e-10);
        assert!((s.beta - 0.03).abs() < 1e-10);
        assert!(slices.excluded.is_empty());
        assert!(!slices.partial);
        assert_eq!(slices.alpha.as_ref().unwrap().per_slice.len(), 10);
    }

    #[test]
    fn joint_matches_normal_equations_oracle() {
        // independent route: solve X^T X beta = X^T y by Gaussian
        // elimination and compare
        let (n_grid, width_p) = grid_10x10();
        for seed in 0..10 {
            let records = synthetic_power_law(1.5, 0.2, -0.1, &n_grid, &width_p, 0.3, seed);
            let fit = fit_joint(&records).unwrap();
            let mut xtx = [[0.0f64; 3]; 3];
            let mut xty = [0.0f64; 3];
            for r in &records {
                let row = [1.0, (r.n as f64).ln(), (r.p as f64).ln()];
                let y = r.l_emp.ln();
                for i in 0..3 {
                    for j in 0..3 {
                        xtx[i][j] += row[i] * row[j];
                    }
                    xty[i] += row[i] * y;
                }
            }
            // gaussian elimination with partial pivoting
            let mut a = xtx;
            let mut b = xty;
            for col in 0..3 {
                let piv = (col..3)
                    .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                    .unwrap();
                a.swap(col, piv);
                b.swap(col, piv);
                for row in col + 1..3 {
                    let f = a[row][col] / a[col][col];
                    for k in col..3 {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
            let mut beta = [0.0f64; 3];
            for row in (0..3).rev() {
                let mut acc = b[row];
                for k in row + 1..3 {
                    acc -= a[row][k] * beta[k];
                }
                beta[row] = acc / a[row][row];
            }
            assert!((fit.log_c - beta[0]).abs() < 1e-8, "seed {seed}");
            assert!((fit.alpha - beta[1]).abs() < 1e-8, "seed {seed}");
            assert!((fit.beta - beta[2]).abs() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn scale_invariance_of_exponents() {
        let (n_grid, width_p) = grid_10x10();
        let records = synthetic_power_law(1.0, 0.25, -0.05, &n_grid, &width_p, 0.1, 3);
        let fit = fit_joint(&records).unwrap();
        let scaled: Vec<ScalingRecord> = records
            .iter()
            .map(|r| ScalingRecord {
                l_emp: r.l_emp * 7.5,
                ..r.clone()
            })
            .collect();
        let fit2 = fit_joint(&scaled).unwrap();
        assert!((fit.alpha - fit2.alpha).abs() < 1e-10);
        assert!((fit.beta - fit2.beta).abs() < 1e-10);
        assert!((fit.stderr_alpha.unwrap() - fit2.stderr_alpha.unwrap()).abs() < 1e-10);
        assert!((fit.r_squared - fit2.r_squared).abs() < 1e-10);
        assert!((fit2.log_c - fit.log_c - 7.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn ci_contains_point_estimate() {
        let (n_grid, width_p) = grid_10x10();
        let records = synthetic_power_law(1.0, 0.16, 0.03, &n_grid, &width_p, 0.2, 5);
        let fit = fit_joint(&records).unwrap();
        let (lo, hi) = fit.ci95_alpha.unwrap();
        assert!(lo <= fit.alpha && fit.alpha <= hi);
        let (lo, hi) = fit.ci95_beta.unwrap();
        assert!(lo <= fit.beta && fit.beta <= hi);
        assert!(fit.r_squared >= 0.0 && fit.r_squared <= 1.0);
    }

    #[test]
    fn degenerate_single_p_grid_is_partial() {
        let n_grid: Vec<usize> = vec![100, 200, 400, 800];
        let width_p = vec![(8usize, 1000usize)];
        let records = synthetic_power_law(1.0, 0.3, 0.0, &n_grid, &width_p, 0.0, 0);
        let slices = fit_slices(&records).unwrap();
        assert!(slices.partial);
        assert!(slices.beta.is_none());
        assert!(slices.to_fit_result().is_none());
        let alpha = slices.alpha.as_ref().unwrap();
        assert!((alpha.estimate - 0.3).abs() < 1e-10);
        // beta-axis slices each see a single p value and are logged
        assert!(slices.excluded.iter().all(|e| e.axis == "beta"));
        assert_eq!(slices.excluded.len(), 4);
    }

    #[test]
    fn joint_fit_error_cases() {
        let records = synthetic_power_law(1.0, 0.1, 0.1, &[100], &[(2, 50), (4, 90)], 0.0, 0);
        assert!(matches!(
            fit_joint(&records),
            Err(FitError::TooFewPoints { .. })
        ));
        // collinear design: log p proportional to log n
        let collinear: Vec<ScalingRecord> = [(10usize, 100usize), (100, 10_000), (1000, 1_000_000), (10_000, 100_000_000)]
            .iter()
            .map(|&(n, p)| ScalingRecord {
                n,
                p,
                width: 1,
                seed: 0,
                l_emp: 1.0,
                stopped_epoch: 0,
                best_test_loss: 0.0,
            })
            .collect();
        assert!(matches!(fit_joint(&collinear), Err(FitError::RankDeficient)));
        // zero L_emp must be filtered upstream
        let mut bad = synthetic_power_law(1.0, 0.1, 0.1, &[100, 200], &[(2, 50), (4, 90)], 0.0, 0);
        bad[0].l_emp = 0.0;
        assert!(matches!(fit_joint(&bad), Err(FitError::NonPositive { .. })));
    }

    #[test]
    fn theory_comparison_distances() {
        let fit = FitResult {
            method: FitMethod::Joint,
            alpha: 0.1585,
            beta: 0.0301,
            log_c: 0.0,
            stderr_alpha: None,
            stderr_beta: None,
            ci95_alpha: None,
            ci95_beta: None,
            p_value_alpha: None,
            p_value_beta: None,
            r_squared: 0.308,
            n_points: 100,
        };
        let cmp = compare_to_theory(&fit, 10);
        assert_eq!(cmp.closer_alpha, ScalingLaw::Wu);
        assert_eq!(cmp.closer_beta, ScalingLaw::Wu);
        let wu = cmp.laws.iter().find(|l| l.law == ScalingLaw::Wu).unwrap();
        assert!((wu.alpha_distance - 0.0585).abs() < 1e-12);
        assert!((wu.beta_distance - 0.0301).abs() < 1e-12);
        let bu = cmp.laws.iter().find(|l| l.law == ScalingLaw::Bubeck).unwrap();
        assert!((bu.alpha_distance - 0.3415).abs() < 1e-12);
        assert!((bu.beta_distance - 0.5301).abs() < 1e-12);

        // exact matches have zero distance
        let exact_bubeck = FitResult {
            alpha: 0.5,
            beta: -0.5,
            ..fit.clone()
        };
        let cmp = compare_to_theory(&exact_bubeck, 10);
        assert_eq!(cmp.closer_alpha, ScalingLaw::Bubeck);
        assert_eq!(cmp.laws[0].alpha_distance, 0.0);
        let exact_wu = FitResult {
            alpha: 0.1,
            beta: 0.0,
            ..fit
        };
        let cmp = compare_to_theory(&exact_wu, 10);
        assert_eq!(cmp.closer_alpha, ScalingLaw::Wu);
        assert_eq!(cmp.closer_beta, ScalingLaw::Wu);
    }

    #[test]
    fn noisy_recovery_within_own_ci_most_of_the_time() {
        let (n_grid, width_p) = grid_10x10();
        let (true_a, true_b) = (0.2, -0.1);
        let mut covered_a = 0;
        let mut covered_b = 0;
        let reps = 200;
        for seed in 0..reps {
            let records =
                synthetic_power_law(1.0, true_a, true_b, &n_grid, &width_p, 0.05, seed as u64);
            let fit = fit_joint(&records).unwrap();
            let (lo, hi) = fit.ci95_alpha.unwrap();
            if lo <= true_a && true_a <= hi {
                covered_a += 1;
            }
            let (lo, hi) = fit.ci95_beta.unwrap();
            if lo <= true_b && true_b <= hi {
                covered_b += 1;
            }
        }
        assert!(covered_a >= (reps * 9) / 10, "alpha coverage {covered_a}/{reps}");
        assert!(covered_b >= (reps * 9) / 10, "beta coverage {covered_b}/{reps}");
    }
}
