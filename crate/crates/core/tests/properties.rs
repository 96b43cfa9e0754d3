use nalgebra::DMatrix;
use proptest::prelude::*;
use sinf::metrics::auroc;
use sinf::patch::{gather_patches, scatter_patches, ChannelMode, PatchLayout};
use sinf::sliced::{
    k_sliced_distance_at, max_k_swd, max_k_swd_from, wasserstein_1d, MaxSwdOptions, SliceBasis,
};
use sinf::spline::{RegularizedMap, RqSpline};

fn spline_strategy() -> impl Strategy<Value = RqSpline> {
    (2usize..10).prop_flat_map(|m| {
        (
            -5.0..5.0f64,
            -5.0..5.0f64,
            prop::collection::vec(0.01..2.0f64, m - 1),
            prop::collection::vec(0.01..2.0f64, m - 1),
            prop::collection::vec(0.05..5.0f64, m),
        )
            .prop_map(|(x0, y0, dx, dy, ds)| {
                let mut xs = vec![x0];
                let mut ys = vec![y0];
                for (a, b) in dx.iter().zip(&dy) {
                    xs.push(xs.last().unwrap() + a);
                    ys.push(ys.last().unwrap() + b);
                }
                RqSpline::new(xs, ys, ds).unwrap()
            })
    })
}

fn matrix(n: usize, d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-5.0..5.0f64, n * d).prop_map(move |v| DMatrix::from_vec(n, d, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spline_is_strictly_monotone_and_invertible(
        s in spline_strategy(),
        a in -10.0..10.0f64,
        gap in 1e-6..1.0f64,
        alpha in (0.0..0.99f64, 0.0..0.99f64),
    ) {
        prop_assert!(s.forward(a + gap) > s.forward(a));
        prop_assert!((s.inverse(s.forward(a)) - a).abs() < 1e-9);
        let r = RegularizedMap::new(s, alpha.0, alpha.1).unwrap();
        prop_assert!(r.forward(a + gap) > r.forward(a));
        prop_assert!(r.derivative(a) > 0.0);
        prop_assert!((r.inverse(r.forward(a)) - a).abs() < 1e-9);
    }

    #[test]
    fn spline_hits_knots_exactly(s in spline_strategy()) {
        for i in 0..s.num_knots() {
            prop_assert_eq!(s.forward(s.xs()[i]), s.ys()[i]);
            prop_assert_eq!(s.derivative(s.xs()[i]), s.derivs()[i]);
        }
    }

    #[test]
    fn gather_then_scatter_is_identity(
        side in 2usize..8,
        channels in 1usize..4,
        q_frac in 0.0..1.0f64,
        shift in (0usize..16, 0usize..16),
        single in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let q = 1 + ((side as f64 - 1.0) * q_frac).round() as usize;
        let q = q.max(1);
        let mode = if single { ChannelMode::SingleChannel } else { ChannelMode::FullDepth };
        let layout = PatchLayout::new(side, channels, q, shift, mode).unwrap();
        let d = side * side * channels;
        let mut rng = sinf::rng::seeded(seed);
        let x = sinf::rng::standard_normal_matrix(3, d, &mut rng);
        let patches = gather_patches(&layout, &x).unwrap();
        let back = scatter_patches(&layout, &patches).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn wasserstein_is_a_symmetric_metric(
        a in prop::collection::vec(-10.0..10.0f64, 1..30),
        seed in any::<u64>(),
    ) {
        let n = a.len();
        let mut rng = sinf::rng::seeded(seed);
        let b: Vec<f64> = sinf::rng::standard_normal_matrix(n, 1, &mut rng).iter().copied().collect();
        let c: Vec<f64> = sinf::rng::standard_normal_matrix(n, 1, &mut rng).iter().map(|v| v * 3.0).collect();
        let ab = wasserstein_1d(&a, &b, 2.0).unwrap();
        prop_assert_eq!(ab, wasserstein_1d(&b, &a, 2.0).unwrap());
        prop_assert_eq!(wasserstein_1d(&a, &a, 2.0).unwrap(), 0.0);
        let bc = wasserstein_1d(&b, &c, 2.0).unwrap();
        let ac = wasserstein_1d(&a, &c, 2.0).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn auroc_is_antisymmetric(
        a in prop::collection::vec(0i32..5, 1..12),
        b in prop::collection::vec(0i32..5, 1..12),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = auroc(&a, &b).unwrap();
        let ba = auroc(&b, &a).unwrap();
        prop_assert!((ab + ba - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn max_k_swd_respects_the_metric_sandwich(x in matrix(40, 3), y in matrix(40, 3), seed in any::<u64>()) {
        let one = max_k_swd(&x, &y, &MaxSwdOptions::new(1).with_seed(seed)).unwrap();
        // Complete the K = 1 optimum to a full basis; the ascent never goes below its start.
        let mut m = sinf::rng::standard_normal_matrix(3, 3, &mut sinf::rng::seeded(seed));
        m.set_column(0, &one.basis.matrix().column(0));
        let start = SliceBasis::new(m.qr().q()).unwrap();
        let three = max_k_swd_from(&x, &y, start, &MaxSwdOptions::new(3).with_seed(seed)).unwrap();
        prop_assert!(three.basis.orthonormality_error() < 1e-8);
        prop_assert!(three.distance >= one.distance / 3f64.sqrt() - 1e-12);
        let best_axis = (0..3)
            .map(|k| {
                let axis = SliceBasis::new(three.basis.matrix().columns(k, 1).into_owned()).unwrap();
                k_sliced_distance_at(&x, &y, &axis, 2.0).unwrap()
            })
            .fold(0.0, f64::max);
        prop_assert!(three.distance <= best_axis + 1e-12);
        let rev = k_sliced_distance_at(&y, &x, &three.basis, 2.0).unwrap();
        prop_assert_eq!(rev, three.distance);
    }
}
