//! Predictor abstraction, local extremal envelopes, the robust squared
//! loss, loss-vector classes, and the finite-sample checks that tie the
//! robust loss to Rademacher complexity.
//!
//! The robust squared loss of f at (x, y) with radius rho is the worst
//! squared error over the input ball; because z -> (z - y)^2 is convex, the
//! worst case sits at one of the two envelope values, so the loss reduces
//! to max{(f_plus - y)^2, (f_minus - y)^2}.

use serde::Serialize;
use thiserror::Error;

use crate::pwl::PiecewiseLinear1D;
use crate::rademacher::{rad_exact, RadError, VectorSet};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum RobustLossError {
    #[error("input has length {found}, predictor expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("operation requires a scalar predictor, got {0} outputs")]
    NotScalar(usize),
    #[error("exact envelope requires a piecewise-linear predictor")]
    ExactRequiresPwl,
    #[error("grid envelope search is only defined for 1-dimensional inputs")]
    GridRequiresDim1,
    #[error("projected ascent requires gradient support from the predictor")]
    AscentNeedsGradient,
    #[error("invalid robustness config: {0}")]
    BadConfig(&'static str),
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("sample {index} has dimension {found}, expected {expected}")]
    SampleDim {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("predictor range [{lo}, {hi}] exceeds [-1, 1]")]
    RangeOutsideUnit { lo: f64, hi: f64 },
    #[error("label {value} at index {index} outside [-1, 1]")]
    LabelOutsideUnit { index: usize, value: f64 },
    #[error(transparent)]
    Rad(#[from] RadError),
}

/// An evaluable function R^d -> R^C with optional exact metadata.
pub trait Predictor: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_count(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;

    /// Upper bound on the Lipschitz constant, when known exactly.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }

    /// Exposes the exact piecewise-linear form, when the predictor has one.
    fn as_pwl(&self) -> Option<&PiecewiseLinear1D> {
        None
    }

    /// Gradient of output `out` with respect to the input, when available.
    fn input_gradient(&self, _x: &[f64], _out: usize) -> Option<Vec<f64>> {
        None
    }
}

impl Predictor for PiecewiseLinear1D {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_count(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![PiecewiseLinear1D::eval(self, x[0])]
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.lipschitz_constant())
    }

    fn as_pwl(&self) -> Option<&PiecewiseLinear1D> {
        Some(self)
    }

    fn input_gradient(&self, x: &[f64], _out: usize) -> Option<Vec<f64>> {
        Some(vec![self.derivative_at(x[0])])
    }
}

/// f(x) = <w, x>; Lipschitz constant ||w||_2 with equality along w.
#[derive(Clone, Debug)]
pub struct LinearPredictor {
    weights: Vec<f64>,
}

impl LinearPredictor {
    pub fn new(weights: Vec<f64>) -> Self {
        assert!(!weights.is_empty());
        LinearPredictor { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

impl Predictor for LinearPredictor {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn output_count(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![self.weights.iter().zip(x).map(|(w, v)| w * v).sum()]
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.norm())
    }

    fn input_gradient(&self, _x: &[f64], _out: usize) -> Option<Vec<f64>> {
        Some(self.weights.clone())
    }
}

/// Perturbation norm for the input ball. Only the Euclidean ball is
/// supported; in one dimension it coincides with the interval [x-rho, x+rho].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbNorm {
    L2,
}

/// How the supremum over the perturbation ball is computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SupMethod {
    /// Closed-form node-and-endpoint scan; exact, piecewise-linear only.
    ExactPwl,
    /// Dense grid over the interval (1-D only); inner approximation.
    Grid { points: usize },
    /// Projected gradient ascent with random restarts; inner approximation.
    ProjectedAscent {
        steps: usize,
        restarts: usize,
        step_size: f64,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RobustnessConfig {
    pub rho: f64,
    pub norm: PerturbNorm,
    pub sup_method: SupMethod,
}

impl RobustnessConfig {
    pub fn exact_pwl(rho: f64) -> Self {
        RobustnessConfig {
            rho,
            norm: PerturbNorm::L2,
            sup_method: SupMethod::ExactPwl,
        }
    }

    pub fn grid(rho: f64, points: usize) -> Self {
        RobustnessConfig {
            rho,
            norm: PerturbNorm::L2,
            sup_method: SupMethod::Grid { points },
        }
    }

    /// Projected-ascent defaults: 20 steps, step size rho/10, 5 restarts.
    pub fn projected_ascent(rho: f64, seed: u64) -> Self {
        RobustnessConfig {
            rho,
            norm: PerturbNorm::L2,
            sup_method: SupMethod::ProjectedAscent {
                steps: 20,
                restarts: 5,
                step_size: rho / 10.0,
                seed,
            },
        }
    }

    fn validate(&self) -> Result<(), RobustLossError> {
        if self.rho.is_nan() || self.rho < 0.0 {
            return Err(RobustLossError::BadConfig("rho must be nonnegative"));
        }
        match self.sup_method {
            SupMethod::Grid { points } if points < 2 => {
                Err(RobustLossError::BadConfig("grid needs at least 2 points"))
            }
            SupMethod::ProjectedAscent {
                steps,
                restarts,
                step_size,
                ..
            } if self.rho > 0.0 && (steps == 0 || restarts == 0 || step_size.is_nan() || step_size <= 0.0) => Err(
                RobustLossError::BadConfig("ascent parameters must be positive"),
            ),
            _ => Ok(()),
        }
    }
}

/// Result of an envelope computation at one point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
    pub method_used: SupMethod,
    pub certified_exact: bool,
}

/// Local extremal envelope values of f at x over the rho-ball.
///
/// `ExactPwl` returns the true sup/inf. `Grid` and `ProjectedAscent` return
/// inner approximations: every reported value is attained inside the ball,
/// so `lower >= true inf` and `upper <= true sup`.
pub fn envelope(
    f: &dyn Predictor,
    x: &[f64],
    cfg: &RobustnessConfig,
) -> Result<Envelope, RobustLossError> {
    cfg.validate()?;
    if x.len() != f.input_dim() {
        return Err(RobustLossError::InputDim {
            expected: f.input_dim(),
            found: x.len(),
        });
    }
    if f.output_count() != 1 {
        return Err(RobustLossError::NotScalar(f.output_count()));
    }
    let rho = cfg.rho;
    if rho == 0.0 {
        let v = f.eval(x)[0];
        return Ok(Envelope {
            lower: v,
            upper: v,
            method_used: cfg.sup_method,
            certified_exact: true,
        });
    }
    match cfg.sup_method {
        SupMethod::ExactPwl => {
            let pwl = f.as_pwl().ok_or(RobustLossError::ExactRequiresPwl)?;
            let c = x[0];
            Ok(Envelope {
                lower: pwl.min_on_interval(c - rho, c + rho),
                upper: pwl.max_on_interval(c - rho, c + rho),
                method_used: cfg.sup_method,
                certified_exact: true,
            })
        }
        SupMethod::Grid { points } => {
            if f.input_dim() != 1 {
                return Err(RobustLossError::GridRequiresDim1);
            }
            let c = x[0];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..points {
                let t = c - rho + 2.0 * rho * i as f64 / (points - 1) as f64;
                let v = f.eval(&[t])[0];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            Ok(Envelope {
                lower: lo,
                upper: hi,
                method_used: cfg.sup_method,
                certified_exact: false,
            })
        }
        SupMethod::ProjectedAscent {
            steps,
            restarts,
            step_size,
            seed,
        } => {
            if f.input_gradient(x, 0).is_none() {
                return Err(RobustLossError::AscentNeedsGradient);
            }
            let mut lo = f.eval(x)[0];
            let mut hi = lo;
            let d = x.len();
            // One derived stream per (phase, restart): the evaluated point
            // sets nest as the restart budget grows, so a bigger budget can
            // only widen the bracket.
            let run = |maximize: bool, lo: &mut f64, hi: &mut f64| {
                let phase = u64::from(maximize);
                for restart in 0..restarts {
                    let mut rng =
                        Rng::stream(seed, &[0x617363656e74, phase, restart as u64]); // "ascent"
                    let mut delta = vec![0.0f64; d];
                    if restart > 0 {
                        // random start strictly inside the ball
                        let mut norm2 = 0.0;
                        for dv in delta.iter_mut() {
                            *dv = rng.next_normal();
                            norm2 += *dv * *dv;
                        }
                        let scale = rho * rng.next_f64() / norm2.sqrt().max(1e-300);
                        for dv in delta.iter_mut() {
                            *dv *= scale;
                        }
                    }
                    let mut point = vec![0.0f64; d];
                    for _ in 0..steps {
                        for (p, (&xi, &dv)) in point.iter_mut().zip(x.iter().zip(&delta)) {
                            *p = xi + dv;
                        }
                        let v = f.eval(&point)[0];
                        *lo = lo.min(v);
                        *hi = hi.max(v);
                        let grad = f
                            .input_gradient(&point, 0)
                            .expect("gradient support checked above");
                        let dir = if maximize { 1.0 } else { -1.0 };
                        let mut norm2 = 0.0;
                        for (dv, g) in delta.iter_mut().zip(&grad) {
                            *dv += dir * step_size * g;
                            norm2 += *dv * *dv;
                        }
                        let norm = norm2.sqrt();
                        if norm > rho {
                            for dv in delta.iter_mut() {
                                *dv *= rho / norm;
                            }
                        }
                    }
                    for (p, (&xi, &dv)) in point.iter_mut().zip(x.iter().zip(&delta)) {
                        *p = xi + dv;
                    }
                    let v = f.eval(&point)[0];
                    *lo = lo.min(v);
                    *hi = hi.max(v);
                }
            };
            run(true, &mut lo, &mut hi);
            run(false, &mut lo, &mut hi);
            Ok(Envelope {
                lower: lo,
                upper: hi,
                method_used: cfg.sup_method,
                certified_exact: false,
            })
        }
    }
}

/// A labeled point for the regression-style checks.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Finite sample with a shared input dimension.
#[derive(Clone, Debug)]
pub struct SampleSet {
    samples: Vec<LabeledSample>,
    dim: usize,
}

impl SampleSet {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self, RobustLossError> {
        let dim = samples
            .first()
            .map(|s| s.x.len())
            .ok_or(RobustLossError::EmptySampleSet)?;
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(RobustLossError::SampleDim {
                    index: i,
                    expected: dim,
                    found: s.x.len(),
                });
            }
        }
        Ok(SampleSet { samples, dim })
    }

    /// 1-D convenience constructor from (x, y) pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, RobustLossError> {
        SampleSet::new(
            pairs
                .iter()
                .map(|&(x, y)| LabeledSample { x: vec![x], y })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    fn check_labels_unit(&self) -> Result<(), RobustLossError> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.y < -1.0 || s.y > 1.0 {
                return Err(RobustLossError::LabelOutsideUnit {
                    index: i,
                    value: s.y,
                });
            }
        }
        Ok(())
    }
}

/// Worst-case squared error over the perturbation ball. Exact when the
/// envelope is exact; otherwise a sound lower bound on the true robust loss
/// (every candidate value is attained inside the ball and z -> (z-y)^2 is
/// convex).
pub fn robust_sq_loss(
    f: &dyn Predictor,
    sample: &LabeledSample,
    cfg: &RobustnessConfig,
) -> Result<f64, RobustLossError> {
    let env = envelope(f, &sample.x, cfg)?;
    let up = env.upper - sample.y;
    let lo = env.lower - sample.y;
    Ok((up * up).max(lo * lo))
}

/// Which loss vectors to build from a predictor family and a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossVectorKind {
    /// Coordinates f(x_i).
    Eval,
    /// Coordinates (f(x_i) - y_i)^2.
    Clean,
    /// Coordinates sup over the ball of (f(x_i + delta) - y_i)^2.
    Robust,
}

/// One n-vector per predictor, with coordinates indexed by the sample.
pub fn loss_vectors(
    predictors: &[&dyn Predictor],
    set: &SampleSet,
    cfg: &RobustnessConfig,
    kind: LossVectorKind,
) -> Result<VectorSet, RobustLossError> {
    assert!(!predictors.is_empty(), "empty predictor family");
    let mut rows = Vec::with_capacity(predictors.len());
    for f in predictors {
        if f.input_dim() != set.dim() {
            return Err(RobustLossError::InputDim {
                expected: set.dim(),
                found: f.input_dim(),
            });
        }
        if f.output_count() != 1 {
            return Err(RobustLossError::NotScalar(f.output_count()));
        }
        let mut row = Vec::with_capacity(set.len());
        for s in set.samples() {
            let v = match kind {
                LossVectorKind::Eval => f.eval(&s.x)[0],
                LossVectorKind::Clean => {
                    let r = f.eval(&s.x)[0] - s.y;
                    r * r
                }
                LossVectorKind::Robust => robust_sq_loss(*f, s, cfg)?,
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok(VectorSet::from_rows(rows)?)
}

/// One inequality of the robust-loss complexity chain.
#[derive(Clone, Debug, Serialize)]
pub struct ChainCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub factor: f64,
    pub pass: bool,
}

/// Report of [`verify_loss_complexity_chain`].
#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    /// Number of predictors in the original family.
    pub family_size: usize,
    /// Family size after closing under upper/lower envelopes.
    pub closed_size: usize,
    pub rho: f64,
    pub checks: Vec<ChainCheck>,
    pub all_pass: bool,
}

const CHAIN_SLACK: f64 = 1e-12;

/// Finite-sample check of the robust-loss complexity chain.
///
/// The family is closed under envelopes before the right-hand sides are
/// computed: with F0 the given predictors and F their closure under
/// f_plus/f_minus, the three exact-enumeration checks are
///
/// ```text
/// R(l_rho . F0 . S) <= 2 R(l . F . S)
/// R(l . F . S)      <= 4 R(F . S)
/// R(l_rho . F0 . S) <= 8 R(F . S)
/// ```
///
/// The left side keeps the original family: the endpoint decomposition of a
/// robust loss vector lands in the clean losses of the closed family, which
/// is exactly what the right-hand sides enumerate.
pub fn verify_loss_complexity_chain(
    predictors: &[PiecewiseLinear1D],
    set: &SampleSet,
    rho: f64,
) -> Result<ChainReport, RobustLossError> {
    assert!(!predictors.is_empty(), "empty predictor family");
    assert!(rho >= 0.0, "negative radius");
    set.check_labels_unit()?;
    for f in predictors {
        let (lo, hi) = f.global_range();
        if lo < -1.0 - 1e-12 || hi > 1.0 + 1e-12 {
            return Err(RobustLossError::RangeOutsideUnit { lo, hi });
        }
    }

    // Close under envelopes; the envelope of a [-1,1]-bounded L-Lipschitz
    // function stays in the class.
    let mut closed: Vec<PiecewiseLinear1D> = predictors.to_vec();
    for f in predictors {
        closed.push(f.upper_envelope(rho));
        closed.push(f.lower_envelope(rho));
    }

    let cfg = RobustnessConfig::exact_pwl(rho);
    let original_dyn: Vec<&dyn Predictor> =
        predictors.iter().map(|f| f as &dyn Predictor).collect();
    let closed_dyn: Vec<&dyn Predictor> = closed.iter().map(|f| f as &dyn Predictor).collect();

    let robust = loss_vectors(&original_dyn, set, &cfg, LossVectorKind::Robust)?;
    let clean_closed = loss_vectors(&closed_dyn, set, &cfg, LossVectorKind::Clean)?;
    let eval_closed = loss_vectors(&closed_dyn, set, &cfg, LossVectorKind::Eval)?;

    let rad_robust = rad_exact(&robust)?.value;
    let rad_clean = rad_exact(&clean_closed)?.value;
    let rad_eval = rad_exact(&eval_closed)?.value;

    let checks = vec![
        ChainCheck {
            name: "robust_le_2_clean",
            lhs: rad_robust,
            rhs: 2.0 * rad_clean,
            factor: 2.0,
            pass: rad_robust <= 2.0 * rad_clean + CHAIN_SLACK,
        },
        ChainCheck {
            name: "clean_le_4_eval",
            lhs: rad_clean,
            rhs: 4.0 * rad_eval,
            factor: 4.0,
            pass: rad_clean <= 4.0 * rad_eval + CHAIN_SLACK,
        },
        ChainCheck {
            name: "robust_le_8_eval",
            lhs: rad_robust,
            rhs: 8.0 * rad_eval,
            factor: 8.0,
            pass: rad_robust <= 8.0 * rad_eval + CHAIN_SLACK,
        },
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(ChainReport {
        family_size: predictors.len(),
        closed_size: closed.len(),
        rho,
        checks,
        all_pass,
    })
}

/// Report of the envelope-Lipschitzness probe.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeLipschitzReport {
    pub lipschitz: f64,
    pub pairs_checked: usize,
    pub max_upper_ratio: f64,
    pub max_lower_ratio: f64,
    pub violations: usize,
    pub pass: bool,
}

const ENVELOPE_SLACK: f64 = 1e-10;

/// Check that both envelopes of an exactly-known piecewise-linear function
/// satisfy the same Lipschitz bound as the function, over the given probe
/// pairs.
pub fn envelope_lipschitz_check(
    f: &PiecewiseLinear1D,
    rho: f64,
    probe_pairs: &[(f64, f64)],
) -> EnvelopeLipschitzReport {
    let l = f.lipschitz_constant();
    let up = f.upper_envelope(rho);
    let lo = f.lower_envelope(rho);
    let mut max_upper_ratio: f64 = 0.0;
    let mut max_lower_ratio: f64 = 0.0;
    let mut violations = 0usize;
    for &(a, b) in probe_pairs {
        if a == b {
            continue;
        }
        let gap = (a - b).abs();
        let du = (up.eval(a) - up.eval(b)).abs();
        let dl = (lo.eval(a) - lo.eval(b)).abs();
        max_upper_ratio = max_upper_ratio.max(du / gap);
        max_lower_ratio = max_lower_ratio.max(dl / gap);
        if du > l * gap + ENVELOPE_SLACK || dl > l * gap + ENVELOPE_SLACK {
            violations += 1;
        }
    }
    EnvelopeLipschitzReport {
        lipschitz: l,
        pairs_checked: probe_pairs.len(),
        max_upper_ratio,
        max_lower_ratio,
        violations,
        pass: violations == 0,
    }
}
