//! Randomized verification suites: every inequality in the toolkit gets
//! hammered with seeded random instances against exact brute-force oracles.
//! The CLI `verify` command and the acceptance tests both drive these.

use serde::Serialize;

use crate::bounds::check_gap_bound;
use crate::pwl::PiecewiseLinear1D;
use crate::rademacher::{
    rad_exact, rad_mc, random_lipschitz_map, verify_lemma_suite, CoordMapFamily, RadMode,
    VectorSet,
};
use crate::rng::Rng;
use crate::robust_loss::{
    envelope_lipschitz_check, robust_sq_loss, verify_loss_complexity_chain, LabeledSample,
    RobustnessConfig, SampleSet,
};

/// One recorded check with both sides materialized.
#[derive(Clone, Debug, Serialize)]
pub struct TrialCheck {
    pub suite: &'static str,
    pub trial: usize,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteSummary {
    pub suite: &'static str,
    pub trials: usize,
    pub checks: usize,
    pub violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials_per_suite: usize,
    pub summaries: Vec<SuiteSummary>,
    pub checks: Vec<TrialCheck>,
    pub all_pass: bool,
}

/// Options for [`run_verification`].
#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub trials: usize,
    pub seed: u64,
    /// Max vector-set dimension for the exact-enumeration suites.
    pub max_dim: usize,
    /// Max member count for each random vector set.
    pub max_set: usize,
    /// Negative-control hook: understate the declared Lipschitz constants
    /// of the contraction maps so the contraction check must fail.
    pub understate_contraction: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trials: 500,
            seed: 0,
            max_dim: 8,
            max_set: 8,
            understate_contraction: false,
        }
    }
}

fn random_vector_set(rng: &mut Rng, max_dim: usize, max_set: usize, dim: Option<usize>) -> VectorSet {
    let dim = dim.unwrap_or_else(|| rng.range_usize(1, max_dim));
    let count = rng.range_usize(1, max_set);
    let rows: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..dim).map(|_| rng.range_f64(-2.0, 2.0)).collect())
        .collect();
    VectorSet::from_rows(rows).expect("nonempty by construction")
}

/// Lemma suite over random (A, B, Phi) instances in exact mode: translation
/// invariance, Minkowski sum/difference bounds, Lipschitz contraction,
/// absolute-value contraction, and the coordinatewise-max bound.
pub fn run_rademacher_suite(opts: &VerifyOptions, checks: &mut Vec<TrialCheck>) -> SuiteSummary {
    const SUITE: &str = "rademacher_set_algebra";
    let mut violations = 0usize;
    let mut emitted = 0usize;
    for trial in 0..opts.trials {
        let mut rng = Rng::stream(opts.seed, &[1, trial as u64]);
        let a = random_vector_set(&mut rng, opts.max_dim, opts.max_set, None);
        let b = random_vector_set(&mut rng, opts.max_dim, opts.max_set, Some(a.dim()));
        let mut maps = Vec::with_capacity(a.dim());
        let mut constants = Vec::with_capacity(a.dim());
        for _ in 0..a.dim() {
            let l = rng.range_f64(0.2, 3.0);
            let (map, actual) = random_lipschitz_map(&mut rng, l, 5);
            maps.push(map);
            let declared = if opts.understate_contraction {
                actual * 0.2
            } else {
                l
            };
            constants.push(declared);
        }
        let family = CoordMapFamily::new(maps, constants).expect("anchored by construction");
        let report = verify_lemma_suite(&a, &b, &family, RadMode::Exact, 0, rng.next_u64())
            .expect("dims match by construction");
        for check in report.checks {
            if !check.pass {
                violations += 1;
            }
            emitted += 1;
            checks.push(TrialCheck {
                suite: SUITE,
                trial,
                name: check.name.to_string(),
                lhs: check.lhs,
                rhs: check.rhs,
                slack: check.slack,
                pass: check.pass,
            });
        }
    }
    SuiteSummary {
        suite: SUITE,
        trials: opts.trials,
        checks: emitted,
        violations,
    }
}

/// Endpoint lemma: the exact robust squared loss against a brute-force
/// maximum over a 1e5-point grid refined with the kink candidates of f.
pub fn run_endpoint_suite(opts: &VerifyOptions, checks: &mut Vec<TrialCheck>) -> SuiteSummary {
    const SUITE: &str = "endpoint_lemma";
    const GRID_POINTS: usize = 100_000;
    const TOL: f64 = 1e-6;
    let mut violations = 0usize;
    for trial in 0..opts.trials {
        let mut rng = Rng::stream(opts.seed, &[2, trial as u64]);
        let f = PiecewiseLinear1D::random(&mut rng, 5, 3.0);
        let rho = [0.05, 0.1, 0.3][rng.range_usize(0, 2)];
        let sample = LabeledSample {
            x: vec![rng.range_f64(-2.0, 2.0)],
            y: rng.range_f64(-1.0, 1.0),
        };
        let exact = robust_sq_loss(&f, &sample, &RobustnessConfig::exact_pwl(rho))
            .expect("valid config");
        let loss_at = |t: f64| {
            let r = f.eval(t) - sample.y;
            r * r
        };
        let mut oracle = f64::NEG_INFINITY;
        for i in 0..=GRID_POINTS {
            let t = sample.x[0] - rho + 2.0 * rho * i as f64 / GRID_POINTS as f64;
            oracle = oracle.max(loss_at(t));
        }
        for &bp in f.breakpoints() {
            if bp >= sample.x[0] - rho && bp <= sample.x[0] + rho {
                oracle = oracle.max(loss_at(bp));
            }
        }
        let pass = (exact - oracle).abs() <= TOL;
        if !pass {
            violations += 1;
        }
        checks.push(TrialCheck {
            suite: SUITE,
            trial,
            name: "robust_loss_equals_grid_oracle".to_string(),
            lhs: exact,
            rhs: oracle,
            slack: TOL,
            pass,
        });
    }
    SuiteSummary {
        suite: SUITE,
        trials: opts.trials,
        checks: opts.trials,
        violations,
    }
}

/// Envelope Lipschitzness over random probe pairs at slack 1e-10.
pub fn run_envelope_lipschitz_suite(
    opts: &VerifyOptions,
    checks: &mut Vec<TrialCheck>,
) -> SuiteSummary {
    const SUITE: &str = "envelope_lipschitz";
    let mut violations = 0usize;
    for trial in 0..opts.trials {
        let mut rng = Rng::stream(opts.seed, &[3, trial as u64]);
        let f = PiecewiseLinear1D::random(&mut rng, 5, 5.0);
        let rho = rng.range_f64(0.02, 0.8);
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.range_f64(-3.0, 3.0), rng.range_f64(-3.0, 3.0)))
            .collect();
        let report = envelope_lipschitz_check(&f, rho, &pairs);
        if !report.pass {
            violations += 1;
        }
        checks.push(TrialCheck {
            suite: SUITE,
            trial,
            name: "envelope_slope_within_lipschitz".to_string(),
            lhs: report.max_upper_ratio.max(report.max_lower_ratio),
            rhs: report.lipschitz,
            slack: 1e-10,
            pass: report.pass,
        });
    }
    SuiteSummary {
        suite: SUITE,
        trials: opts.trials,
        checks: opts.trials,
        violations,
    }
}

/// Robust-clean gap bound on random instances, plus the exact tightness
/// witness f(x) = x at the origin sample.
pub fn run_gap_bound_suite(opts: &VerifyOptions, checks: &mut Vec<TrialCheck>) -> SuiteSummary {
    const SUITE: &str = "gap_bound";
    let mut violations = 0usize;
    let mut emitted = 0usize;
    for trial in 0..opts.trials {
        let mut rng = Rng::stream(opts.seed, &[4, trial as u64]);
        let f = PiecewiseLinear1D::random(&mut rng, 5, 3.0);
        let n = rng.range_usize(1, 8);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.range_f64(-2.0, 2.0), rng.range_f64(-1.0, 1.0)))
            .collect();
        let set = SampleSet::from_pairs(&pairs).expect("nonempty");
        let rho = rng.range_f64(0.0, 0.8);
        let report = check_gap_bound(&f, &set, &RobustnessConfig::exact_pwl(rho), None)
            .expect("pwl carries Lipschitz metadata");
        if !report.pass {
            violations += 1;
        }
        emitted += 1;
        checks.push(TrialCheck {
            suite: SUITE,
            trial,
            name: "robust_clean_gap_bound".to_string(),
            lhs: report.gap,
            rhs: report.bound,
            slack: 1e-10,
            pass: report.pass,
        });
    }
    // tightness witness: R - R_hat = rho^2 = bound, to relative 1e-12
    let f = PiecewiseLinear1D::linear(1.0, 0.0);
    let set = SampleSet::from_pairs(&[(0.0, 0.0)]).expect("nonempty");
    let rho = 0.7;
    let report = check_gap_bound(&f, &set, &RobustnessConfig::exact_pwl(rho), None)
        .expect("valid witness");
    let rel = (report.gap - report.bound).abs() / report.bound;
    let pass = rel <= 1e-12;
    if !pass {
        violations += 1;
    }
    emitted += 1;
    checks.push(TrialCheck {
        suite: SUITE,
        trial: opts.trials,
        name: "gap_tightness_witness".to_string(),
        lhs: report.gap,
        rhs: report.bound,
        slack: 1e-12,
        pass,
    });
    SuiteSummary {
        suite: SUITE,
        trials: opts.trials,
        checks: emitted,
        violations,
    }
}

/// The robust-loss complexity chain on random clamped families.
pub fn run_chain_suite(opts: &VerifyOptions, checks: &mut Vec<TrialCheck>) -> SuiteSummary {
    const SUITE: &str = "loss_complexity_chain";
    let mut violations = 0usize;
    let mut emitted = 0usize;
    for trial in 0..opts.trials {
        let mut rng = Rng::stream(opts.seed, &[5, trial as u64]);
        let n_pred = rng.range_usize(1, 6);
        let family: Vec<PiecewiseLinear1D> = (0..n_pred)
            .map(|_| PiecewiseLinear1D::random(&mut rng, 4, 2.0).clamped(-1.0, 1.0))
            .collect();
        let n = rng.range_usize(2, opts.max_dim.min(8));
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.range_f64(-2.0, 2.0), rng.range_f64(-1.0, 1.0)))
            .collect();
        let set = SampleSet::from_pairs(&pairs).expect("nonempty");
        let rho = [0.05, 0.1, 0.3][rng.range_usize(0, 2)];
        let report =
            verify_loss_complexity_chain(&family, &set, rho).expect("family in range");
        for check in report.checks {
            if !check.pass {
                violations += 1;
            }
            emitted += 1;
            checks.push(TrialCheck {
                suite: SUITE,
                trial,
                name: check.name.to_string(),
                lhs: check.lhs,
                rhs: check.rhs,
                slack: 1e-12,
                pass: check.pass,
            });
        }
    }
    SuiteSummary {
        suite: SUITE,
        trials: opts.trials,
        checks: emitted,
        violations,
    }
}

/// Run every suite and collect the full per-check report.
pub fn run_verification(opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let summaries = vec![
        run_rademacher_suite(opts, &mut checks),
        run_endpoint_suite(opts, &mut checks),
        run_envelope_lipschitz_suite(opts, &mut checks),
        run_gap_bound_suite(opts, &mut checks),
        run_chain_suite(opts, &mut checks),
    ];
    let all_pass = summaries.iter().all(|s| s.violations == 0);
    VerifyReport {
        seed: opts.seed,
        trials_per_suite: opts.trials,
        summaries,
        checks,
        all_pass,
    }
}

/// Monte-Carlo estimator calibration: random sets of dimension up to
/// `max_dim`, each estimated with `draws` draws and compared to the exact
/// enumeration at 4x the reported standard error.
#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub sets: usize,
    pub draws: u64,
    pub within_tolerance: usize,
    pub worst_sigma_distance: f64,
}

pub fn mc_calibration(sets: usize, max_dim: usize, draws: u64, seed: u64) -> CalibrationReport {
    let mut within = 0usize;
    let mut worst = 0.0f64;
    for trial in 0..sets {
        let mut rng = Rng::stream(seed, &[6, trial as u64]);
        let a = random_vector_set(&mut rng, max_dim, 8, None);
        let exact = rad_exact(&a).expect("dim below cutoff").value;
        let mc = rad_mc(&a, draws, rng.next_u64()).expect("draws above minimum");
        let distance = (mc.value - exact).abs();
        if mc.stderr > 0.0 {
            worst = worst.max(distance / mc.stderr);
        }
        if distance <= 4.0 * mc.stderr {
            within += 1;
        }
    }
    CalibrationReport {
        sets,
        draws,
        within_tolerance: within,
        worst_sigma_distance: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_verification_run_is_clean_and_deterministic() {
        let opts = VerifyOptions {
            trials: 20,
            seed: 7,
            ..VerifyOptions::default()
        };
        let a = run_verification(&opts);
        assert!(a.all_pass, "{:#?}", a.summaries);
        let b = run_verification(&opts);
        assert_eq!(a.checks.len(), b.checks.len());
        for (x, y) in a.checks.iter().zip(&b.checks) {
            assert_eq!(x.lhs.to_bits(), y.lhs.to_bits());
            assert_eq!(x.rhs.to_bits(), y.rhs.to_bits());
        }
    }

    #[test]
    fn understated_contraction_is_detected() {
        let opts = VerifyOptions {
            trials: 20,
            seed: 3,
            understate_contraction: true,
            ..VerifyOptions::default()
        };
        let mut checks = Vec::new();
        let summary = run_rademacher_suite(&opts, &mut checks);
        assert!(
            summary.violations > 0,
            "faulty constants must trip the contraction check"
        );
        // and only the contraction check trips
        assert!(checks
            .iter()
            .filter(|c| !c.pass)
            .all(|c| c.name == "lipschitz_contraction"));
    }

    #[test]
    fn calibration_mostly_within_four_sigma() {
        let report = mc_calibration(25, 10, 20_000, 11);
        assert!(
            report.within_tolerance >= 24,
            "{}/{} within 4 sigma",
            report.within_tolerance,
            report.sets
        );
    }
}
