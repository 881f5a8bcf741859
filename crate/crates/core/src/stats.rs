//! Scalar statistics helpers: log-gamma, regularized incomplete beta, and
//! the Student-t distribution used for regression inference.

/// Natural log of the gamma function (Lanczos approximation, g=7, n=9).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "inc_beta requires positive parameters");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // Use the symmetry relation so the continued fraction converges fast.
    // The comparison is non-strict so the reflected call always takes the
    // direct branch and the recursion terminates.
    if x <= (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - inc_beta(b, a, 1.0 - x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// CDF of the Student-t distribution with `df` degrees of freedom.
pub fn students_t_cdf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = df / (df + t * t);
    let p = 0.5 * inc_beta(0.5 * df, 0.5, x);
    if t >= 0.0 {
        1.0 - p
    } else {
        p
    }
}

/// Two-sided p-value for a t statistic.
pub fn students_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    (2.0 * (1.0 - students_t_cdf(t.abs(), df))).clamp(0.0, 1.0)
}

/// Quantile of the Student-t distribution, by bisection on the CDF.
pub fn students_t_quantile(p: f64, df: f64) -> f64 {
    assert!((0.0..1.0).contains(&p) && p > 0.0, "p must be in (0,1)");
    if (p - 0.5).abs() < 1e-16 {
        return 0.0;
    }
    let mut lo = -1e10;
    let mut hi = 1e10;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if students_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..10u64 {
            let fact: u64 = (1..=n).product();
            let expect = (fact as f64).ln();
            assert!(
                (ln_gamma(n as f64 + 1.0) - expect).abs() < 1e-10,
                "n={n}"
            );
        }
        // Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn t_cdf_symmetry_and_center() {
        for df in [1.0, 3.0, 10.0, 50.0] {
            assert!((students_t_cdf(0.0, df) - 0.5).abs() < 1e-12);
            for t in [0.3, 1.0, 2.5] {
                let a = students_t_cdf(t, df);
                let b = students_t_cdf(-t, df);
                assert!((a + b - 1.0).abs() < 1e-12, "df={df} t={t}");
            }
        }
    }

    #[test]
    fn t_quantiles_match_tables() {
        // Standard two-sided 95% critical values.
        let cases = [
            (1.0, 12.706_204_74),
            (2.0, 4.302_652_73),
            (5.0, 2.570_581_84),
            (9.0, 2.262_157_16),
            (10.0, 2.228_138_85),
            (30.0, 2.042_272_46),
            (100.0, 1.983_971_52),
        ];
        for (df, expect) in cases {
            let q = students_t_quantile(0.975, df);
            assert!((q - expect).abs() < 1e-5, "df={df}: {q} vs {expect}");
        }
    }

    #[test]
    fn t_cdf_matches_density_quadrature() {
        // independent route: Simpson integration of the t density
        fn density(x: f64, df: f64) -> f64 {
            let c = (ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df)).exp()
                / (df * std::f64::consts::PI).sqrt();
            c * (1.0 + x * x / df).powf(-0.5 * (df + 1.0))
        }
        for df in [2.0, 7.0, 25.0] {
            for t in [0.4, 1.3, 2.1] {
                // by symmetry CDF(t) = 1/2 + integral of the density over
                // [0, t]; no tail truncation enters
                let (a, b) = (0.0, t);
                let n = 40_000; // even
                let h = (b - a) / n as f64;
                let mut acc = density(a, df) + density(b, df);
                for i in 1..n {
                    let x = a + i as f64 * h;
                    acc += density(x, df) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                let integral = 0.5 + acc * h / 3.0;
                let cdf = students_t_cdf(t, df);
                assert!(
                    (cdf - integral).abs() < 1e-10,
                    "df={df} t={t}: cdf {cdf} vs quadrature {integral}"
                );
            }
        }
    }

    #[test]
    fn p_value_consistency() {
        // |t| at the 97.5% quantile must give a two-sided p of 0.05.
        for df in [4.0, 20.0, 97.0] {
            let q = students_t_quantile(0.975, df);
            let p = students_t_two_sided_p(q, df);
            assert!((p - 0.05).abs() < 1e-9, "df={df}: p={p}");
        }
    }
}
