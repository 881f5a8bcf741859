//! Pairwise finite-difference empirical Lipschitz lower bound.
//!
//! For all sample pairs (i, j) and every class c, the local slope is
//! |out_c(i) - out_c(j)| / ||x_i - x_j||_2; the per-class estimate is the
//! max over pairs and the final estimate the max over classes. Restricted
//! to observed directions, this is a lower bound on the global Lipschitz
//! constant.
//!
//! The pair space is tiled into index-range blocks; each block yields a
//! per-class running max merged with a commutative, tie-deterministic max,
//! so the blocked parallel scan equals the naive double loop exactly and is
//! independent of thread count.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::Mat;
use crate::robust_loss::Predictor;

/// Pairs closer than this in input space are skipped as near-duplicates to
/// avoid division by ~0.
pub const DUPLICATE_THRESHOLD: f64 = 1e-9;

/// Records with an estimate at or below this are treated as exact zeros and
/// dropped from scaling fits.
pub const ZERO_ESTIMATE_THRESHOLD: f64 = 1e-12;

/// Row-range block edge for the pair tiling.
const BLOCK: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum LipError {
    #[error("pairwise estimation needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("outputs have {outputs} rows but inputs have {inputs}")]
    RowMismatch { outputs: usize, inputs: usize },
    #[error("all {pairs} sample pairs were skipped as near-duplicates")]
    AllPairsSkipped { pairs: u64 },
}

/// Result of a pairwise scan.
#[derive(Clone, Debug, Serialize)]
pub struct LipEstimate {
    /// max over classes of the per-class slope maxima.
    pub l_emp: f64,
    pub per_class: Vec<f64>,
    /// Pair attaining each per-class maximum (None if every pair was
    /// skipped for that class).
    pub witness: Vec<Option<(usize, usize)>>,
    pub n_pairs_skipped: u64,
    pub n: usize,
}

#[derive(Clone)]
struct PartialScan {
    best: Vec<f64>,
    witness: Vec<Option<(usize, usize)>>,
    skipped: u64,
}

impl PartialScan {
    fn new(classes: usize) -> Self {
        PartialScan {
            best: vec![0.0; classes],
            witness: vec![None; classes],
            skipped: 0,
        }
    }

    #[inline]
    fn update(&mut self, class: usize, slope: f64, pair: (usize, usize)) {
        // Deterministic tie rule: strictly greater wins; equal slope keeps
        // the lexicographically smaller pair. Makes the merge order (and
        // thus the thread schedule) irrelevant.
        match self.witness[class] {
            None => {
                self.best[class] = slope;
                self.witness[class] = Some(pair);
            }
            Some(current) => {
                if slope > self.best[class] || (slope == self.best[class] && pair < current) {
                    self.best[class] = slope;
                    self.witness[class] = Some(pair);
                }
            }
        }
    }

    fn merge(mut self, other: PartialScan) -> PartialScan {
        for c in 0..self.best.len() {
            if let Some(pair) = other.witness[c] {
                self.update(c, other.best[c], pair);
            }
        }
        self.skipped += other.skipped;
        self
    }
}

#[inline]
fn scan_pair(outputs: &Mat, inputs: &Mat, i: usize, j: usize, acc: &mut PartialScan) {
    let xi = inputs.row(i);
    let xj = inputs.row(j);
    let mut dist2 = 0.0;
    for (a, b) in xi.iter().zip(xj) {
        let d = a - b;
        dist2 += d * d;
    }
    let dist = dist2.sqrt();
    if dist < DUPLICATE_THRESHOLD {
        acc.skipped += 1;
        return;
    }
    let oi = outputs.row(i);
    let oj = outputs.row(j);
    let inv = 1.0 / dist;
    for (c, (a, b)) in oi.iter().zip(oj).enumerate() {
        acc.update(c, (a - b).abs() * inv, (i, j));
    }
}

fn finish(acc: PartialScan, n: usize, total_pairs: u64) -> Result<LipEstimate, LipError> {
    if acc.witness.iter().all(|w| w.is_none()) {
        return Err(LipError::AllPairsSkipped { pairs: total_pairs });
    }
    let l_emp = acc.best.iter().cloned().fold(0.0, f64::max);
    Ok(LipEstimate {
        l_emp,
        per_class: acc.best,
        witness: acc.witness,
        n_pairs_skipped: acc.skipped,
        n,
    })
}

fn validate(outputs: &Mat, inputs: &Mat) -> Result<(), LipError> {
    let n = inputs.rows();
    if n < 2 {
        return Err(LipError::TooFewSamples(n));
    }
    if outputs.rows() != n {
        return Err(LipError::RowMismatch {
            outputs: outputs.rows(),
            inputs: n,
        });
    }
    Ok(())
}

/// Blocked, parallel scan over all unordered pairs. Equals
/// [`pairwise_lip_naive`] exactly on every input.
pub fn pairwise_lip(outputs: &Mat, inputs: &Mat) -> Result<LipEstimate, LipError> {
    validate(outputs, inputs)?;
    let n = inputs.rows();
    let classes = outputs.cols();
    let n_blocks = n.div_ceil(BLOCK);
    // upper-triangular block pairs
    let mut tiles = Vec::with_capacity(n_blocks * (n_blocks + 1) / 2);
    for bi in 0..n_blocks {
        for bj in bi..n_blocks {
            tiles.push((bi, bj));
        }
    }
    let acc = tiles
        .into_par_iter()
        .map(|(bi, bj)| {
            let mut acc = PartialScan::new(classes);
            let i_lo = bi * BLOCK;
            let i_hi = ((bi + 1) * BLOCK).min(n);
            let j_hi = ((bj + 1) * BLOCK).min(n);
            for i in i_lo..i_hi {
                let j_lo = if bi == bj { i + 1 } else { bj * BLOCK };
                for j in j_lo..j_hi {
                    scan_pair(outputs, inputs, i, j, &mut acc);
                }
            }
            acc
        })
        .reduce(|| PartialScan::new(classes), PartialScan::merge);
    finish(acc, n, n as u64 * (n as u64 - 1) / 2)
}

/// Reference implementation: plain double loop over all unordered pairs.
pub fn pairwise_lip_naive(outputs: &Mat, inputs: &Mat) -> Result<LipEstimate, LipError> {
    validate(outputs, inputs)?;
    let n = inputs.rows();
    let mut acc = PartialScan::new(outputs.cols());
    for i in 0..n {
        for j in i + 1..n {
            scan_pair(outputs, inputs, i, j, &mut acc);
        }
    }
    finish(acc, n, n as u64 * (n as u64 - 1) / 2)
}

/// Lower-bound check against a predictor with an exact Lipschitz constant.
#[derive(Clone, Debug, Serialize)]
pub struct LipCheckReport {
    pub l_emp: f64,
    pub l_true: f64,
    pub pass: bool,
}

const LOWER_BOUND_SLACK: f64 = 1e-10;

/// Evaluate the predictor on raw (unsquashed) outputs over the given inputs
/// and check that the empirical estimate never exceeds the exact constant.
pub fn lip_lower_bound_check(f: &dyn Predictor, inputs: &Mat) -> Result<LipCheckReport, LipError> {
    let l_true = f
        .lipschitz_bound()
        .expect("lower-bound check needs exact Lipschitz metadata");
    let rows: Vec<Vec<f64>> = (0..inputs.rows()).map(|i| f.eval(inputs.row(i))).collect();
    let outputs = Mat::from_rows(&rows);
    let est = pairwise_lip(&outputs, inputs)?;
    Ok(LipCheckReport {
        l_emp: est.l_emp,
        l_true,
        pass: est.l_emp <= l_true + LOWER_BOUND_SLACK,
    })
}

/// One grid-cell measurement, as consumed by the scaling fits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRecord {
    pub n: usize,
    pub p: usize,
    pub width: usize,
    pub seed: u64,
    pub l_emp: f64,
    pub stopped_epoch: usize,
    pub best_test_loss: f64,
}

/// A record removed by the zero filter.
#[derive(Clone, Debug, Serialize)]
pub struct DroppedRecord {
    pub n: usize,
    pub width: usize,
    pub seed: u64,
    pub l_emp: f64,
}

/// Drop records whose estimate is zero up to float noise (saturated
/// low-capacity models produce exact 0.00 estimates); returns survivors and
/// the drop log.
pub fn filter_zero_estimates(
    records: &[ScalingRecord],
) -> (Vec<ScalingRecord>, Vec<DroppedRecord>) {
    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = Vec::new();
    for r in records {
        if r.l_emp <= ZERO_ESTIMATE_THRESHOLD {
            dropped.push(DroppedRecord {
                n: r.n,
                width: r.width,
                seed: r.seed,
                l_emp: r.l_emp,
            });
        } else {
            kept.push(r.clone());
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::robust_loss::LinearPredictor;

    fn random_instance(rng: &mut Rng, n: usize, d: usize, c: usize) -> (Mat, Mat) {
        let outputs = Mat::from_rows(
            &(0..n)
                .map(|_| (0..c).map(|_| rng.range_f64(-1.0, 1.0)).collect())
                .collect::<Vec<_>>(),
        );
        let inputs = Mat::from_rows(
            &(0..n)
                .map(|_| (0..d).map(|_| rng.range_f64(0.0, 1.0)).collect())
                .collect::<Vec<_>>(),
        );
        (outputs, inputs)
    }

    #[test]
    fn identical_outputs_give_zero() {
        let outputs = Mat::from_rows(&[vec![0.5, -0.5], vec![0.5, -0.5], vec![0.5, -0.5]]);
        let inputs = Mat::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let est = pairwise_lip(&outputs, &inputs).unwrap();
        assert_eq!(est.l_emp, 0.0);
        assert_eq!(est.n_pairs_skipped, 0);
    }

    #[test]
    fn hand_computed_slopes() {
        // single class, output = first input coordinate
        let inputs = Mat::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        let outputs = Mat::from_rows(&[vec![0.0], vec![3.0]]);
        let est = pairwise_lip(&outputs, &inputs).unwrap();
        assert!((est.l_emp - 0.6).abs() < 1e-15); // 3 / 5
        assert_eq!(est.witness[0], Some((0, 1)));

        let inputs = Mat::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let outputs = Mat::from_rows(&[vec![0.0], vec![1.0]]);
        let est = pairwise_lip(&outputs, &inputs).unwrap();
        assert!((est.l_emp - 1.0).abs() < 1e-15);
    }

    #[test]
    fn blocked_equals_naive_exactly() {
        let mut rng = Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = rng.range_usize(2, 300);
            let (outputs, inputs) = random_instance(&mut rng, n, 5, 3);
            let blocked = pairwise_lip(&outputs, &inputs).unwrap();
            let naive = pairwise_lip_naive(&outputs, &inputs).unwrap();
            assert_eq!(blocked.l_emp.to_bits(), naive.l_emp.to_bits(), "trial {trial}");
            for c in 0..3 {
                assert_eq!(blocked.per_class[c].to_bits(), naive.per_class[c].to_bits());
                assert_eq!(blocked.witness[c], naive.witness[c]);
            }
            assert_eq!(blocked.n_pairs_skipped, naive.n_pairs_skipped);
        }
    }

    #[test]
    fn blocked_result_independent_of_thread_count() {
        let mut rng = Rng::seed_from_u64(8);
        let (outputs, inputs) = random_instance(&mut rng, 600, 4, 2);
        let default_run = pairwise_lip(&outputs, &inputs).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let single_run = pool.install(|| pairwise_lip(&outputs, &inputs).unwrap());
        assert_eq!(default_run.l_emp.to_bits(), single_run.l_emp.to_bits());
        assert_eq!(default_run.witness, single_run.witness);
    }

    #[test]
    fn duplicates_skipped_and_degenerate_detected() {
        let inputs = Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let outputs = Mat::from_rows(&[vec![0.0], vec![1.0]]);
        assert!(matches!(
            pairwise_lip(&outputs, &inputs),
            Err(LipError::AllPairsSkipped { pairs: 1 })
        ));

        // one duplicate pair among valid ones is skipped, not fatal
        let inputs = Mat::from_rows(&[vec![0.0], vec![0.0], vec![1.0]]);
        let outputs = Mat::from_rows(&[vec![0.0], vec![5.0], vec![1.0]]);
        let est = pairwise_lip(&outputs, &inputs).unwrap();
        assert_eq!(est.n_pairs_skipped, 1);
        assert!((est.l_emp - 4.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_samples_rejected() {
        let m = Mat::from_rows(&[vec![1.0]]);
        assert!(matches!(
            pairwise_lip(&m, &m),
            Err(LipError::TooFewSamples(1))
        ));
    }

    #[test]
    fn linear_predictor_attains_norm_on_aligned_pair() {
        let w = vec![3.0, 4.0];
        let f = LinearPredictor::new(w.clone());
        let norm = 5.0;
        let unit: Vec<f64> = w.iter().map(|v| v / norm).collect();
        let mut rows = vec![vec![0.0, 0.0], unit];
        let mut rng = Rng::seed_from_u64(14);
        for _ in 0..20 {
            rows.push(vec![rng.range_f64(-1.0, 1.0), rng.range_f64(-1.0, 1.0)]);
        }
        let inputs = Mat::from_rows(&rows);
        let report = lip_lower_bound_check(&f, &inputs).unwrap();
        assert!(report.pass);
        assert!(
            (report.l_emp - norm).abs() < 1e-9,
            "expected equality along w: {}",
            report.l_emp
        );
    }

    #[test]
    fn pwl_estimates_stay_below_exact_constant() {
        use crate::pwl::PiecewiseLinear1D;
        let mut rng = Rng::seed_from_u64(6);
        for _ in 0..50 {
            let f = PiecewiseLinear1D::random(&mut rng, 5, 2.0);
            let rows: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.range_f64(-3.0, 3.0)]).collect();
            let inputs = Mat::from_rows(&rows);
            let report = lip_lower_bound_check(&f, &inputs).unwrap();
            assert!(report.pass, "{report:?}");
        }
    }

    #[test]
    fn constant_predictor_gives_zero() {
        let f = LinearPredictor::new(vec![0.0, 0.0]);
        let inputs = Mat::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.3, 0.9]]);
        let report = lip_lower_bound_check(&f, &inputs).unwrap();
        assert_eq!(report.l_emp, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn superset_monotone_and_scale_covariant() {
        let mut rng = Rng::seed_from_u64(12);
        let (outputs, inputs) = random_instance(&mut rng, 60, 3, 2);
        let base = pairwise_lip(&outputs, &inputs).unwrap().l_emp;

        // adding rows never lowers the estimate
        let mut more_out: Vec<Vec<f64>> = (0..60).map(|i| outputs.row(i).to_vec()).collect();
        let mut more_in: Vec<Vec<f64>> = (0..60).map(|i| inputs.row(i).to_vec()).collect();
        more_out.push(vec![0.9, -0.9]);
        more_in.push(vec![0.1, 0.2, 0.3]);
        let bigger = pairwise_lip(&Mat::from_rows(&more_out), &Mat::from_rows(&more_in))
            .unwrap()
            .l_emp;
        assert!(bigger >= base);

        // scaling inputs by t scales the estimate by exactly 1/t
        let t = 4.0;
        let scaled_rows: Vec<Vec<f64>> = (0..60)
            .map(|i| inputs.row(i).iter().map(|v| v * t).collect())
            .collect();
        let scaled = pairwise_lip(&outputs, &Mat::from_rows(&scaled_rows))
            .unwrap()
            .l_emp;
        assert!((scaled - base / t).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn zero_filter_behaviour() {
        let rec = |n: usize, width: usize, l: f64| ScalingRecord {
            n,
            p: width * 10,
            width,
            seed: 0,
            l_emp: l,
            stopped_epoch: 5,
            best_test_loss: 0.1,
        };
        let records = vec![rec(100, 2, 0.0), rec(100, 4, 0.5), rec(200, 2, 1e-13)];
        let (kept, dropped) = filter_zero_estimates(&records);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped.len(), 2);
        assert_eq!(dropped[0].width, 2);

        let (kept, dropped) = filter_zero_estimates(&[rec(1, 1, 0.7)]);
        assert_eq!(kept.len(), 1);
        assert!(dropped.is_empty());

        let (kept, dropped) = filter_zero_estimates(&[rec(1, 1, 0.0), rec(2, 2, 0.0)]);
        assert!(kept.is_empty());
        assert_eq!(dropped.len(), 2);
    }
}
