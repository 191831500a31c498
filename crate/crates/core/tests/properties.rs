use faer::Mat;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use ridgeless::bounds::{self, f_r, AssumptionProfile, BoundReport, CertificateOptions};
use ridgeless::estimator::{self, FitOptions, KernelRidge, RidgeConvention};
use ridgeless::kernel::{curvature_constants, KernelSpec, RegMode};
use ridgeless::mnist::{self, IdxData, IdxImages, PairExperiment, PairSplit};
use ridgeless::rng::substream_raw;
use ridgeless::spectra::{self, Convention, SpectrumModel};

fn normal_mat(n: usize, d: usize, seed: u64) -> Mat<f64> {
    let mut rng = substream_raw(seed, 1);
    let v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    Mat::from_fn(n, d, |i, j| v[i * d + j])
}

fn uniform_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream_raw(seed, 2);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_r_is_bounded_and_decreasing_in_r(t in 0.0f64..1e6, r in 1e-6f64..1e6, dr in 1e-6f64..10.0) {
        prop_assert!(f_r(t, r) <= 1.0 / (4.0 * r) * (1.0 + 1e-14));
        if t > 0.0 {
            prop_assert!(f_r(t, r + dr) < f_r(t, r));
        }
    }

    #[test]
    fn normalized_variance_below_pointwise_bound(seed in 0u64..1000, n in 2usize..40, d in 2usize..40, kappa in 0.2f64..5.0) {
        let model = SpectrumModel::kappa(kappa, d).unwrap();
        let x = model.sample(n, Default::default(), &mut substream_raw(seed, 1));
        let c = curvature_constants(&KernelSpec::gaussian(), model.trace_ratio(), model.trace_sq_ratio(), d, RegMode::TraceProxy).unwrap();
        let p = AssumptionProfile::new(1.0, 1.0, 1.0, n, d).unwrap();
        let v = bounds::variance_bound(x.as_ref(), &c, &p, 1.0, true).unwrap();
        prop_assert_eq!(v.terms.len(), n);
        prop_assert!(v.value <= n as f64 / d as f64 / (4.0 * c.r) * (1.0 + 1e-12));
        prop_assert!(v.terms.iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn trace_ratio_increases_with_kappa(d in 2usize..300, k in 0.05f64..10.0, dk in 0.01f64..3.0) {
        let a = SpectrumModel::kappa(k, d).unwrap().trace_ratio();
        let b = SpectrumModel::kappa(k + dk, d).unwrap().trace_ratio();
        prop_assert!(b > a);
    }

    #[test]
    fn empirical_spectra_share_nonzero_part(seed in 0u64..1000, n in 1usize..30, d in 1usize..30) {
        let x = normal_mat(n, d, seed);
        let cols = spectra::empirical_spectrum(x.as_ref(), Convention::ColsOverN).unwrap();
        let rows = spectra::empirical_spectrum(x.as_ref(), Convention::RowsOverD).unwrap();
        prop_assert_eq!(cols.len(), d);
        prop_assert_eq!(rows.len(), n);
        // lambda(Xᵀ X / n) = (d / n) lambda(X Xᵀ / d) on the common part.
        for k in 0..n.min(d) {
            let want = rows[k] * d as f64 / n as f64;
            prop_assert!((cols[k] - want).abs() <= 1e-9 * (1.0 + want));
        }
    }

    #[test]
    fn histogram_counts_everything(values in prop::collection::vec(0.0f64..10.0, 1..200), bins in 1usize..20) {
        let h = spectra::spectrum_histogram(&values, bins).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        prop_assert_eq!(h.edges.len(), bins + 1);
    }

    #[test]
    fn bias_curve_components_are_monotone(mut eigs in prop::collection::vec(0.0f64..50.0, 1..60), diag in 0.0f64..4.0) {
        eigs.sort_by(|a, b| b.total_cmp(a));
        let n = eigs.len();
        let b = bounds::bias_bound(&eigs, diag, 1.5, false, None).unwrap();
        let root = |k: usize| 2.0 * (k as f64 / n as f64).sqrt() * diag.sqrt();
        for k in 1..=n {
            prop_assert!(b.curve[k] - root(k) <= b.curve[k - 1] - root(k - 1) + 1e-12);
            prop_assert!(root(k) >= root(k - 1));
        }
        prop_assert!(b.curve[b.k_star] <= b.curve[0] && b.curve[b.k_star] <= b.curve[n]);
        prop_assert!((b.value - 2.25 * b.curve[b.k_star]).abs() <= 1e-12 * (1.0 + b.value));
    }

    #[test]
    fn interpolation_identity(seed in 0u64..10_000, n in 2usize..40) {
        let d = 2 * n + 10;
        let x = normal_mat(n, d, seed);
        let y = uniform_vec(n, seed);
        let st = estimator::fit(x.as_ref(), &y, &KernelSpec::gaussian(), 0.0, RidgeConvention::Plain, FitOptions::default()).unwrap();
        prop_assert!(st.relative_residual() <= 1e-6);
        let p = estimator::predict(&st, x.as_ref()).unwrap();
        let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in p.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-6 * ymax);
        }
    }

    #[test]
    fn fit_is_linear_in_y(seed in 0u64..10_000, n in 2usize..30, lambda in prop_oneof![Just(0.0), 1e-3f64..1.0]) {
        let x = normal_mat(n, n + 5, seed);
        let y1 = uniform_vec(n, seed);
        let y2 = uniform_vec(n, seed + 1);
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let mut kr = KernelRidge::new(&KernelSpec::gaussian(), x.as_ref()).unwrap();
        let opts = FitOptions::default();
        let a1 = kr.fit(&y1, lambda, RidgeConvention::Plain, opts).unwrap();
        let a2 = kr.fit(&y2, lambda, RidgeConvention::Plain, opts).unwrap();
        let a3 = kr.fit(&sum, lambda, RidgeConvention::Plain, opts).unwrap();
        for k in 0..n {
            let want = a1.coefficients()[k] + a2.coefficients()[k];
            prop_assert!((a3.coefficients()[k] - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn ridge_path_converges_to_interpolant(seed in 0u64..10_000, n in 3usize..30) {
        let x = normal_mat(n, n + 20, seed);
        let y = uniform_vec(n, seed);
        let xt = normal_mat(7, n + 20, seed + 7);
        let mut kr = KernelRidge::new(&KernelSpec::gaussian(), x.as_ref()).unwrap();
        let opts = FitOptions::default();
        let interp = kr.fit(&y, 0.0, RidgeConvention::Plain, opts).unwrap();
        let p0 = estimator::predict(&interp, xt.as_ref()).unwrap();
        let mut last = f64::INFINITY;
        for lambda in [1e-2, 1e-4, 1e-6] {
            let st = kr.fit(&y, lambda, RidgeConvention::Plain, opts).unwrap();
            let p = estimator::predict(&st, xt.as_ref()).unwrap();
            let gap = p.iter().zip(&p0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(gap < last);
            last = gap;
        }
        prop_assert!(last < 1e-4);
    }

    #[test]
    fn idx_round_trip(count in 0usize..5, rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000, labels in prop::collection::vec(0u8..10, 0..50)) {
        let mut rng = substream_raw(seed, 3);
        let images = IdxImages { rows, cols, pixels: (0..count * rows * cols).map(|_| rng.random()).collect() };
        let mut a = Vec::new();
        mnist::write_idx_images(&mut a, &images).unwrap();
        prop_assert_eq!(mnist::parse_idx(&a).unwrap(), IdxData::Images(images));
        let mut b = Vec::new();
        mnist::write_idx_labels(&mut b, &labels).unwrap();
        prop_assert_eq!(mnist::parse_idx(&b).unwrap(), IdxData::Labels(labels));
    }
}

#[test]
fn bound_report_json_round_trips_exactly() {
    let x = normal_mat(25, 12, 5);
    let model = SpectrumModel::kappa(0.7, 12).unwrap();
    let spec = KernelSpec::gaussian();
    let c = curvature_constants(
        &spec,
        model.trace_ratio(),
        model.trace_sq_ratio(),
        12,
        RegMode::TraceProxy,
    )
    .unwrap();
    let p = AssumptionProfile::new(0.1, 3.0, 1.0, 25, 12).unwrap();
    for normalized in [true, false] {
        let opts = CertificateOptions {
            normalized,
            ..Default::default()
        };
        let r = bounds::certificate(x.as_ref(), &spec, &c, &p, &opts).unwrap();
        assert_eq!(r.phi, r.v + r.b);
        let back: BoundReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.residual_omitted);
    }
}

#[test]
fn swapping_pair_labels_negates_predictions() {
    let x = normal_mat(30, 40, 1);
    let xt = normal_mat(12, 40, 2);
    let y: Vec<f64> = (0..30).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
    let yt: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let neg = |v: &[f64]| v.iter().map(|a| -a).collect::<Vec<_>>();
    let a = PairSplit {
        i: 3,
        j: 5,
        x: x.clone(),
        y: y.clone(),
        xt: xt.clone(),
        yt: yt.clone(),
    };
    let b = PairSplit {
        i: 5,
        j: 3,
        x,
        y: neg(&y),
        xt,
        yt: neg(&yt),
    };
    let exp = PairExperiment {
        lambdas: vec![0.0, 0.1, 1.0],
        ..Default::default()
    };
    let ra = mnist::run_split(&a, &exp).unwrap();
    let rb = mnist::run_split(&b, &exp).unwrap();
    for (p, q) in ra.iter().zip(&rb) {
        assert!((p.error_pct - q.error_pct).abs() < 1e-10);
    }

    let spec = KernelSpec::gaussian();
    let sa = estimator::fit(
        a.x.as_ref(),
        &a.y,
        &spec,
        0.0,
        RidgeConvention::Plain,
        FitOptions::default(),
    )
    .unwrap();
    let sb = estimator::fit(
        b.x.as_ref(),
        &b.y,
        &spec,
        0.0,
        RidgeConvention::Plain,
        FitOptions::default(),
    )
    .unwrap();
    let pa = estimator::predict(&sa, a.xt.as_ref()).unwrap();
    let pb = estimator::predict(&sb, b.xt.as_ref()).unwrap();
    for (u, v) in pa.iter().zip(&pb) {
        assert_eq!(*u, -*v);
    }
}

#[test]
fn scaled_convention_matches_plain_with_n_lambda() {
    let x = normal_mat(20, 30, 9);
    let y = uniform_vec(20, 9);
    let spec = KernelSpec::gaussian();
    let s = estimator::fit(
        x.as_ref(),
        &y,
        &spec,
        0.01,
        RidgeConvention::Scaled,
        FitOptions::default(),
    )
    .unwrap();
    let p = estimator::fit(
        x.as_ref(),
        &y,
        &spec,
        0.2,
        RidgeConvention::Plain,
        FitOptions::default(),
    )
    .unwrap();
    for (a, b) in s.coefficients().iter().zip(p.coefficients()) {
        assert!((a - b).abs() < 1e-12);
    }
}
