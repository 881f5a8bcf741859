//! Property tests for the crate-wide invariants.

use proptest::collection::vec;
use proptest::prelude::*;

use roblab_core::bounds::{a_rho, gap_bound};
use roblab_core::dataset::{parse_idx, IdxTensor, IDX_MAGIC_IMAGES, IDX_MAGIC_LABELS};
use roblab_core::pwl::PiecewiseLinear1D;
use roblab_core::rademacher::{rad_exact, transform, TransformKind, VectorSet};
use roblab_core::robust_loss::{robust_sq_loss, LabeledSample, RobustnessConfig};

fn small_coord() -> impl Strategy<Value = f64> {
    (-100i32..=100).prop_map(|v| v as f64 / 25.0)
}

fn vector_set() -> impl Strategy<Value = VectorSet> {
    (1usize..=6, 1usize..=5).prop_flat_map(|(dim, count)| {
        vec(vec(small_coord(), dim..=dim), count..=count)
            .prop_map(|rows| VectorSet::from_rows(rows).unwrap())
    })
}

fn pwl() -> impl Strategy<Value = PiecewiseLinear1D> {
    (
        vec(-150i32..=150, 1..=5),
        vec(small_coord(), 6),
        small_coord(),
        small_coord(),
    )
        .prop_filter_map("breakpoints must be distinct", |(bs, vals, ls, rs)| {
            let mut breaks: Vec<f64> = bs.iter().map(|&b| b as f64 / 50.0).collect();
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup();
            let values = vals[..breaks.len()].to_vec();
            PiecewiseLinear1D::new(breaks, values, ls, rs).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_round_trip(
        labels in vec(any::<u8>(), 0..40),
        rows in 1u32..5,
        cols in 1u32..5,
        seed_payload in vec(any::<u8>(), 0..200),
    ) {
        let label_tensor = IdxTensor {
            magic: IDX_MAGIC_LABELS,
            dims: vec![labels.len() as u32],
            payload: labels,
        };
        let bytes = label_tensor.to_bytes();
        prop_assert_eq!(parse_idx(&bytes).unwrap().to_bytes(), bytes);

        let count = (seed_payload.len() as u32) / (rows * cols);
        let payload = seed_payload[..(count * rows * cols) as usize].to_vec();
        let image_tensor = IdxTensor {
            magic: IDX_MAGIC_IMAGES,
            dims: vec![count, rows, cols],
            payload,
        };
        let bytes = image_tensor.to_bytes();
        prop_assert_eq!(parse_idx(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn rad_translation_invariance_and_homogeneity(
        set in vector_set(),
        shift in vec(small_coord(), 6),
        lambda in 0u32..8,
    ) {
        let base = rad_exact(&set).unwrap().value;
        let c = shift[..set.dim()].to_vec();
        let translated = transform(&set, &TransformKind::Translate(c)).unwrap();
        prop_assert!((rad_exact(&translated).unwrap().value - base).abs() <= 1e-12);

        let lambda = lambda as f64 / 2.0;
        let scaled = rad_exact(&set.scaled(lambda)).unwrap().value;
        prop_assert!((scaled - lambda * base).abs() <= 1e-12);
    }

    #[test]
    fn rad_nonnegative_and_abs_contracts(set in vector_set()) {
        let base = rad_exact(&set).unwrap().value;
        prop_assert!(base >= -1e-12);
        let abs = transform(&set, &TransformKind::Abs).unwrap();
        prop_assert!(rad_exact(&abs).unwrap().value <= base + 1e-12);
    }

    #[test]
    fn envelope_ordering_and_rho_monotonicity(
        f in pwl(),
        x in small_coord(),
        rho_small in 1u32..10,
        rho_extra in 0u32..10,
    ) {
        let r1 = rho_small as f64 / 10.0;
        let r2 = r1 + rho_extra as f64 / 10.0;
        let cfg1 = RobustnessConfig::exact_pwl(r1);
        let cfg2 = RobustnessConfig::exact_pwl(r2);
        let e1 = roblab_core::robust_loss::envelope(&f, &[x], &cfg1).unwrap();
        let e2 = roblab_core::robust_loss::envelope(&f, &[x], &cfg2).unwrap();
        let fx = f.eval(x);
        prop_assert!(e1.lower <= fx + 1e-12 && fx <= e1.upper + 1e-12);
        prop_assert!(e2.upper >= e1.upper - 1e-12);
        prop_assert!(e2.lower <= e1.lower + 1e-12);
    }

    #[test]
    fn robust_loss_uniform_bound_in_class(
        f in pwl(),
        x in small_coord(),
        y in -20i32..=20,
        rho in 1u32..10,
    ) {
        // clamp into the bounded class, then the robust loss never exceeds
        // (2 + L rho)^2
        let clamped = f.clamped(-1.0, 1.0);
        let rho = rho as f64 / 10.0;
        let l = clamped.lipschitz_constant();
        let sample = LabeledSample { x: vec![x], y: y as f64 / 20.0 };
        let loss = robust_sq_loss(&clamped, &sample, &RobustnessConfig::exact_pwl(rho)).unwrap();
        prop_assert!(loss <= a_rho(l, rho) + 1e-12);
        prop_assert!(loss >= 0.0);
    }

    #[test]
    fn gap_bound_monotone_in_each_argument(
        l in 0u32..40,
        rho in 0u32..40,
        r_hat in 0u32..40,
        bump in 1u32..10,
    ) {
        let (l, rho, r_hat) = (l as f64 / 10.0, rho as f64 / 10.0, r_hat as f64 / 10.0);
        let bump = bump as f64 / 10.0;
        let base = gap_bound(l, rho, r_hat);
        prop_assert!(gap_bound(l + bump, rho, r_hat) >= base);
        prop_assert!(gap_bound(l, rho + bump, r_hat) >= base);
        prop_assert!(gap_bound(l, rho, r_hat + bump) >= base);
    }
}
