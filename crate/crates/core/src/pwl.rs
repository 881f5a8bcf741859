//! Exact one-dimensional piecewise-linear functions.
//!
//! This family is the exact oracle for everything the robust-loss checks
//! assert: interval extremes, hard clamping, and the local extremal
//! envelopes are all computed in closed form, so inequality checks against
//! them carry no approximation error beyond float rounding.

use serde::Serialize;
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum PwlError {
    #[error("breakpoints must be non-empty")]
    Empty,
    #[error("breakpoints must be strictly increasing (violated at index {0})")]
    NotIncreasing(usize),
    #[error("breakpoints/values length mismatch: {breaks} vs {values}")]
    LengthMismatch { breaks: usize, values: usize },
    #[error("non-finite coordinate in piecewise-linear definition")]
    NonFinite,
}

/// Continuous piecewise-linear function on the real line, defined by node
/// points plus linear extrapolation beyond the first and last node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiecewiseLinear1D {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinear1D {
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        left_slope: f64,
        right_slope: f64,
    ) -> Result<Self, PwlError> {
        if breakpoints.is_empty() {
            return Err(PwlError::Empty);
        }
        if breakpoints.len() != values.len() {
            return Err(PwlError::LengthMismatch {
                breaks: breakpoints.len(),
                values: values.len(),
            });
        }
        if breakpoints
            .iter()
            .chain(values.iter())
            .any(|v| !v.is_finite())
            || !left_slope.is_finite()
            || !right_slope.is_finite()
        {
            return Err(PwlError::NonFinite);
        }
        for i in 1..breakpoints.len() {
            if breakpoints[i] <= breakpoints[i - 1] {
                return Err(PwlError::NotIncreasing(i));
            }
        }
        Ok(PiecewiseLinear1D {
            breakpoints,
            values,
            left_slope,
            right_slope,
        })
    }

    /// f identically equal to `v`.
    pub fn constant(v: f64) -> Self {
        PiecewiseLinear1D {
            breakpoints: vec![0.0],
            values: vec![v],
            left_slope: 0.0,
            right_slope: 0.0,
        }
    }

    /// f(x) = slope * x + intercept.
    pub fn linear(slope: f64, intercept: f64) -> Self {
        PiecewiseLinear1D {
            breakpoints: vec![0.0],
            values: vec![intercept],
            left_slope: slope,
            right_slope: slope,
        }
    }

    /// Random function with at most `max_breaks` interior nodes and all
    /// slopes drawn uniformly in [-l_max, l_max]; the realized Lipschitz
    /// constant is therefore at most `l_max` by construction.
    pub fn random(rng: &mut Rng, max_breaks: usize, l_max: f64) -> Self {
        let k = rng.range_usize(1, max_breaks.max(1));
        let mut breaks: Vec<f64> = (0..k).map(|_| rng.range_f64(-1.5, 1.5)).collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let mut values = Vec::with_capacity(breaks.len());
        values.push(rng.range_f64(-0.8, 0.8));
        for i in 1..breaks.len() {
            let slope = rng.range_f64(-l_max, l_max);
            let dv = slope * (breaks[i] - breaks[i - 1]);
            values.push(values[i - 1] + dv);
        }
        let left_slope = rng.range_f64(-l_max, l_max);
        let right_slope = rng.range_f64(-l_max, l_max);
        PiecewiseLinear1D::new(breaks, values, left_slope, right_slope).unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> (f64, f64) {
        (self.left_slope, self.right_slope)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        let n = bp.len();
        if x <= bp[0] {
            return self.values[0] + self.left_slope * (x - bp[0]);
        }
        if x >= bp[n - 1] {
            return self.values[n - 1] + self.right_slope * (x - bp[n - 1]);
        }
        // index of the segment [bp[i], bp[i+1]] containing x
        let i = bp.partition_point(|&b| b <= x) - 1;
        let t = (x - bp[i]) / (bp[i + 1] - bp[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Slope of the segment containing x (right-continuous at nodes).
    pub fn derivative_at(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        let n = bp.len();
        if x < bp[0] {
            return self.left_slope;
        }
        if x >= bp[n - 1] {
            return self.right_slope;
        }
        let i = bp.partition_point(|&b| b <= x) - 1;
        (self.values[i + 1] - self.values[i]) / (bp[i + 1] - bp[i])
    }

    /// The implied Lipschitz constant: maximum absolute slope over segments
    /// and extrapolation rays. Exact for this family.
    pub fn lipschitz_constant(&self) -> f64 {
        let mut m = self.left_slope.abs().max(self.right_slope.abs());
        for i in 1..self.breakpoints.len() {
            let s = (self.values[i] - self.values[i - 1])
                / (self.breakpoints[i] - self.breakpoints[i - 1]);
            m = m.max(s.abs());
        }
        m
    }

    /// Exact maximum over the closed interval [lo, hi]: the extreme sits at
    /// an endpoint or an interior node.
    pub fn max_on_interval(&self, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "empty interval");
        let mut best = self.eval(lo).max(self.eval(hi));
        let start = self.breakpoints.partition_point(|&b| b <= lo);
        for &b in &self.breakpoints[start..] {
            if b >= hi {
                break;
            }
            best = best.max(self.eval(b));
        }
        best
    }

    /// Exact minimum over the closed interval [lo, hi].
    pub fn min_on_interval(&self, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "empty interval");
        let mut best = self.eval(lo).min(self.eval(hi));
        let start = self.breakpoints.partition_point(|&b| b <= lo);
        for &b in &self.breakpoints[start..] {
            if b >= hi {
                break;
            }
            best = best.min(self.eval(b));
        }
        best
    }

    /// (inf, sup) over the whole line; infinite when an extrapolation ray
    /// escapes.
    pub fn global_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if self.left_slope > 0.0 {
            lo = f64::NEG_INFINITY;
        } else if self.left_slope < 0.0 {
            hi = f64::INFINITY;
        }
        if self.right_slope > 0.0 {
            hi = f64::INFINITY;
        } else if self.right_slope < 0.0 {
            lo = f64::NEG_INFINITY;
        }
        (lo, hi)
    }

    /// g(x) = -f(x).
    pub fn negated(&self) -> Self {
        PiecewiseLinear1D {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| -v).collect(),
            left_slope: -self.left_slope,
            right_slope: -self.right_slope,
        }
    }

    /// g(x) = f(x - dx), i.e. the graph shifted right by dx.
    pub fn shifted(&self, dx: f64) -> Self {
        PiecewiseLinear1D {
            breakpoints: self.breakpoints.iter().map(|b| b + dx).collect(),
            values: self.values.clone(),
            left_slope: self.left_slope,
            right_slope: self.right_slope,
        }
    }

    /// Hard clamp of the output to [lo, hi], materialized exactly: crossing
    /// points with the two levels become nodes and escaping rays flatten.
    /// Clamping is 1-Lipschitz, so the implied Lipschitz constant of the
    /// result never exceeds the original.
    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        assert!(lo < hi, "clamp bounds must be ordered");
        let mut nodes: Vec<f64> = self.breakpoints.clone();
        let bp0 = self.breakpoints[0];
        let bpn = *self.breakpoints.last().unwrap();
        // crossings on the left ray
        if self.left_slope != 0.0 {
            for level in [lo, hi] {
                let x = bp0 + (level - self.values[0]) / self.left_slope;
                if x < bp0 {
                    nodes.push(x);
                }
            }
        }
        // crossings on the right ray
        if self.right_slope != 0.0 {
            for level in [lo, hi] {
                let x = bpn + (level - self.values[self.values.len() - 1]) / self.right_slope;
                if x > bpn {
                    nodes.push(x);
                }
            }
        }
        // crossings inside segments
        for i in 1..self.breakpoints.len() {
            let (x0, x1) = (self.breakpoints[i - 1], self.breakpoints[i]);
            let (v0, v1) = (self.values[i - 1], self.values[i]);
            if v1 != v0 {
                for level in [lo, hi] {
                    let t = (level - v0) / (v1 - v0);
                    if t > 0.0 && t < 1.0 {
                        nodes.push(x0 + t * (x1 - x0));
                    }
                }
            }
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();
        let values: Vec<f64> = nodes.iter().map(|&x| self.eval(x).clamp(lo, hi)).collect();
        // probe one point beyond each end to decide whether the ray clamps
        let left_probe = self.eval(nodes[0] - 1.0);
        let left_slope = if left_probe < lo || left_probe > hi {
            0.0
        } else {
            self.left_slope
        };
        let right_probe = self.eval(nodes[nodes.len() - 1] + 1.0);
        let right_slope = if right_probe < lo || right_probe > hi {
            0.0
        } else {
            self.right_slope
        };
        PiecewiseLinear1D::new(nodes, values, left_slope, right_slope)
            .expect("clamped nodes remain increasing")
            .simplified()
    }

    /// Upper local extremal envelope, materialized exactly:
    /// g(x) = max over |t - x| <= rho of f(t).
    ///
    /// g is the pointwise max of three piecewise-linear pieces: the two
    /// shifted copies f(x - rho) and f(x + rho), and the sliding-window
    /// maximum over interior node values (piecewise constant with steps at
    /// node +- rho). All kinks of g therefore lie on the grid of node
    /// positions shifted by +-rho plus the pairwise crossings of those three
    /// pieces inside each grid cell; g is linear in between, so sampling the
    /// exact window maximum at every candidate point reconstructs g.
    pub fn upper_envelope(&self, rho: f64) -> Self {
        assert!(rho >= 0.0, "negative radius");
        if rho == 0.0 {
            return self.clone();
        }
        let mut grid: Vec<f64> = Vec::with_capacity(2 * self.breakpoints.len());
        for &b in &self.breakpoints {
            grid.push(b - rho);
            grid.push(b + rho);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();

        let g1 = self.shifted(rho); // g1(x) = f(x - rho)
        let g2 = self.shifted(-rho); // g2(x) = f(x + rho)

        let mut nodes = grid.clone();
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            // window-max constant over this cell: interior nodes active for
            // every x in (a, b)
            let mid = 0.5 * (a + b);
            let mut level = f64::NEG_INFINITY;
            for (i, &bp) in self.breakpoints.iter().enumerate() {
                if bp >= mid - rho && bp <= mid + rho {
                    level = level.max(self.values[i]);
                }
            }
            let s1 = g1.derivative_at(mid);
            let s2 = g2.derivative_at(mid);
            let c1 = g1.eval(mid) - s1 * mid;
            let c2 = g2.eval(mid) - s2 * mid;
            let mut push = |x: f64| {
                if x > a && x < b {
                    nodes.push(x);
                }
            };
            if s1 != s2 {
                push((c2 - c1) / (s1 - s2));
            }
            if level.is_finite() {
                if s1 != 0.0 {
                    push((level - c1) / s1);
                }
                if s2 != 0.0 {
                    push((level - c2) / s2);
                }
            }
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup();
        let values: Vec<f64> = nodes
            .iter()
            .map(|&x| self.max_on_interval(x - rho, x + rho))
            .collect();
        // Beyond the outermost candidates the window sits inside one
        // extrapolation ray, where the sup follows the ray's slope.
        PiecewiseLinear1D::new(nodes, values, self.left_slope, self.right_slope)
            .expect("envelope nodes remain increasing")
            .simplified()
    }

    /// Lower local extremal envelope: g(x) = min over |t - x| <= rho of f(t).
    pub fn lower_envelope(&self, rho: f64) -> Self {
        self.negated().upper_envelope(rho).negated()
    }

    /// Drop interior nodes whose adjacent segments have bit-identical
    /// slopes. Purely cosmetic; evaluation is unchanged.
    pub fn simplified(&self) -> Self {
        let n = self.breakpoints.len();
        if n <= 2 {
            return self.clone();
        }
        let slope = |i: usize| -> f64 {
            (self.values[i + 1] - self.values[i]) / (self.breakpoints[i + 1] - self.breakpoints[i])
        };
        let mut keep_b = vec![self.breakpoints[0]];
        let mut keep_v = vec![self.values[0]];
        for i in 1..n - 1 {
            let incoming = slope(i - 1);
            let outgoing = slope(i);
            if incoming != outgoing {
                keep_b.push(self.breakpoints[i]);
                keep_v.push(self.values[i]);
            }
        }
        keep_b.push(self.breakpoints[n - 1]);
        keep_v.push(self.values[n - 1]);
        PiecewiseLinear1D {
            breakpoints: keep_b,
            values: keep_v,
            left_slope: self.left_slope,
            right_slope: self.right_slope,
        }
    }
}
