use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use trimap::basis::{hermite, hermite_norm_squared};
use trimap::bod::{joint_sample, prior_transform};
use trimap::conditioning::condition;
use trimap::diagnostics::{bias_bound, kl_variance_direct, log_normalizing_constant};
use trimap::direct::{build_direct, DirectBuildConfig, Integration};
use trimap::inverse::{build_inverse, InverseBuildConfig};
use trimap::map::{Direction, MapTemplate, TriangularMap};
use trimap::mcmc::{preconditioned_sample, AdaptiveConfig};
use trimap::quadrature::{gauss_hermite_1d, sample_reference};
use trimap::solver::{invert_at, push_inverse};
use trimap::stats::{batch_moment_errors, moments};
use trimap::target::{BananaTarget, GaussianTarget, ScaledTarget};

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let one = with_threads(1, || sample_reference(5000, 3, 8).unwrap());
    let four = with_threads(4, || sample_reference(5000, 3, 8).unwrap());
    assert_eq!(one, four);

    let joint = joint_sample(3000, 1).unwrap();
    let config = InverseBuildConfig::new(MapTemplate::total_order(2));
    let a = with_threads(1, || build_inverse(&joint, &config).unwrap().0);
    let b = with_threads(3, || build_inverse(&joint, &config).unwrap().0);
    assert_eq!(a.params(), b.params());

    let target = BananaTarget::default();
    let config = DirectBuildConfig::new(MapTemplate::monotone(2), Integration::GaussHermite { order: 6 });
    let a = with_threads(1, || build_direct(&target, &config).unwrap().0);
    let b = with_threads(4, || build_direct(&target, &config).unwrap().0);
    assert_eq!(a.params(), b.params());
}

#[test]
fn gauss_hermite_is_exact_for_products() {
    for order in [1usize, 3, 6, 10] {
        let rule = gauss_hermite_1d(order).unwrap();
        for i in 0..order * 2 {
            for j in 0..(2 * order - i) {
                // Compared in the orthonormal basis so rounding in large
                // polynomial values does not dominate.
                let scale = (hermite_norm_squared(i) * hermite_norm_squared(j)).sqrt();
                let v = rule.integrate(|x| hermite(i, x[0]) * hermite(j, x[0])) / scale;
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() <= 1e-12, "order {order}: <He{i}, He{j}> = {v}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Bracketing succeeds for monotone components with bounded `b`, and the
    /// root solve reproduces the reference point.
    #[test]
    fn monotone_maps_always_invert(
        seed in 0u64..10_000,
        r in prop::collection::vec(-4.0f64..4.0, 3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = TriangularMap::identity(3, Direction::Direct, &MapTemplate::monotone(1)).unwrap();
        let params: Vec<f64> = map.params().iter().map(|c| c + rng.random_range(-1.0..1.0)).collect();
        map.set_params(&params).unwrap();
        let x = invert_at(&map, &r, 1e-12).unwrap();
        let t = map.evaluate(&x).unwrap();
        for (a, b) in t.iter().zip(&r) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_variance_ignores_target_scale(log_scale in -30.0f64..30.0) {
        let target = BananaTarget { curvature: 0.8 };
        let rule = Integration::GaussHermite { order: 6 }.rule(2).unwrap();
        let mut map = TriangularMap::identity(2, Direction::Direct, &MapTemplate::total_order(2)).unwrap();
        let p: Vec<f64> = map.params().iter().enumerate().map(|(i, c)| c + 0.01 * i as f64).collect();
        map.set_params(&p).unwrap();
        let scaled = ScaledTarget { inner: target, log_scale };
        let a = kl_variance_direct(&map, &target, &rule).unwrap();
        let b = kl_variance_direct(&map, &scaled, &rule).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        let shift = log_normalizing_constant(&map, &scaled, &rule).unwrap() - log_normalizing_constant(&map, &target, &rule).unwrap();
        prop_assert!((shift - log_scale).abs() < 1e-10);
    }
}

#[test]
fn planted_constant_is_recovered_by_the_exact_map() {
    let target = GaussianTarget::new(vec![1.0], &[vec![4.0]]).unwrap().normalized().with_log_offset(3.2);
    let rule = gauss_hermite_1d(8).unwrap();
    let mut map = TriangularMap::identity(1, Direction::Direct, &MapTemplate::total_order(1)).unwrap();
    map.set_params(&[1.0, 2.0]).unwrap();
    let beta = log_normalizing_constant(&map, &target, &rule).unwrap().exp();
    assert!((beta - 3.2f64.exp()).abs() < 1e-10 * 3.2f64.exp());
}

#[test]
fn bias_bound_covers_the_actual_bias() {
    // Slightly wrong linear map for N(1, 4): the pushforward is N(1.1, 1.9^2).
    let target = GaussianTarget::new(vec![1.0], &[vec![4.0]]).unwrap();
    let rule = gauss_hermite_1d(20).unwrap();
    let mut map = TriangularMap::identity(1, Direction::Direct, &MapTemplate::total_order(1)).unwrap();
    map.set_params(&[1.1, 1.9]).unwrap();
    let g = |y: &[f64]| vec![y[0]];
    let b = bias_bound(&map, &target, g, &rule, Some(5.0)).unwrap();
    // E_pi[y] = 1, E_pi_tilde[y] = 1.1; both sides analytic.
    assert!(b.bound >= 0.1, "{b:?}");
}

#[test]
fn prior_pushforward_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = 1_000_000;
    let (mut a, mut b): (Vec<f64>, Vec<f64>) = (0..m)
        .map(|_| prior_transform(&[rng.sample(StandardNormal), rng.sample(StandardNormal)]))
        .unzip();
    for (v, lo, hi) in [(&mut a, 0.4, 1.2), (&mut b, 0.01, 0.31)] {
        v.sort_by(f64::total_cmp);
        let d = v
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = (x - lo) / (hi - lo);
                (f - i as f64 / m as f64).abs().max(((i + 1) as f64 / m as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.005, "sup distance {d}");
    }
}

#[test]
fn preconditioned_chain_is_exact_for_a_gaussian() {
    // A deliberately poor map still yields exact target samples.
    let target = GaussianTarget::new(vec![2.0, -1.0], &[vec![1.0, 0.6], vec![0.6, 2.0]]).unwrap();
    let mut map = TriangularMap::identity(2, Direction::Direct, &MapTemplate::total_order(1)).unwrap();
    map.set_params(&[1.5, 0.8, -0.5, 1.2, 0.3]).unwrap();
    let r = preconditioned_sample(&map, &target, &AdaptiveConfig::new(200_000, 5_000, 3)).unwrap();
    for (j, mean) in [2.0, -1.0].iter().enumerate() {
        let col = r.samples.column(j);
        let m = moments(&col);
        let se = batch_moment_errors(&col, 40);
        assert!((m.mean - mean).abs() < 4.0 * se.mean, "coordinate {j}: {} vs {mean}", m.mean);
    }
}

#[test]
fn conditioning_is_pure_and_exact_for_gaussians() {
    let cov = [vec![2.0, 0.8, 0.3], vec![0.8, 1.0, 0.2], vec![0.3, 0.2, 1.5]];
    let target = GaussianTarget::new(vec![0.0; 3], &cov).unwrap();
    let l = target.cholesky_factor();
    let mut map = TriangularMap::identity(3, Direction::Direct, &MapTemplate::total_order(1)).unwrap();
    // Component k terms in order [1, x_k, ..., x_1].
    let params = vec![0.0, l[0][0], 0.0, l[1][1], l[1][0], 0.0, l[2][2], l[2][1], l[2][0]];
    map.set_params(&params).unwrap();
    let y = [1.0, -0.5];
    let c1 = condition(&map, 2, &y, 1e-13).unwrap();
    let c2 = condition(&map, 2, &y, 1e-13).unwrap();
    assert_eq!(c1.x_star(), c2.x_star());
    // Analytic conditional of the last coordinate.
    let s11 = nalgebra::Matrix2::new(2.0, 0.8, 0.8, 1.0);
    let s21 = nalgebra::RowVector2::new(0.3, 0.2);
    let gain = s21 * s11.try_inverse().unwrap();
    let mean = (gain * nalgebra::Vector2::new(y[0], y[1]))[0];
    let var = 1.5 - (gain * s21.transpose())[0];
    let s = c1.sample(100_000, 2).unwrap();
    let m = moments(&s.column(0));
    assert!((m.mean - mean).abs() < 4.0 * (var / 1e5).sqrt(), "{} vs {mean}", m.mean);
    assert!((m.variance - var).abs() < 4.0 * var * (2.0 / 1e5f64).sqrt(), "{} vs {var}", m.variance);
}

#[test]
fn batch_inversion_reports_each_point() {
    let mut map = TriangularMap::identity(2, Direction::Direct, &MapTemplate::monotone(2)).unwrap();
    let p: Vec<f64> = map.params().iter().enumerate().map(|(i, c)| c + 0.05 * (i as f64).sin()).collect();
    map.set_params(&p).unwrap();
    let pts = sample_reference(500, 2, 4).unwrap();
    let batch = push_inverse(&map, &pts, 1e-12).unwrap();
    assert!(batch.failures.is_empty());
    assert_eq!(batch.indices, (0..500).collect::<Vec<_>>());
    assert!(batch.residuals.iter().all(|r| *r < 1e-9));
}
