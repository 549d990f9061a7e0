use ace_core::ace::{ace, ace_with, interaction_ace, weighted_ace, Difference};
use ace_core::experiments::{bias_variance, r2};
use ace_core::learners::{fit_linear_booster, fit_ols, fit_tree, Dataset, FnPredictor};
use ace_core::randkit::split_rng;
use ndarray::{Array1, Array2, ArrayView1};
use proptest::prelude::*;

fn matrix(n: usize, p: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * p).prop_map(move |v| Array2::from_shape_vec((n, p), v).unwrap())
}

fn linear(beta: Vec<f64>) -> FnPredictor<impl Fn(ArrayView1<f64>) -> f64 + Sync> {
    let p = beta.len();
    FnPredictor::new(p, move |r: ArrayView1<f64>| 0.7 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
}

fn has_spread(x: &Array2<f64>) -> bool {
    x.columns().into_iter().all(|c| c.std(1.0) > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ace_of_linear_predictor_is_its_slope(
        x in matrix(30, 3),
        beta in prop::collection::vec(-5.0f64..5.0, 3),
        h in 0.01f64..1.0,
    ) {
        prop_assume!(has_spread(&x));
        let m = linear(beta.clone());
        for scheme in [Difference::Forward, Difference::Central] {
            let rep = ace_with(&m, x.view(), h, scheme).unwrap();
            for k in 0..3 {
                prop_assert!((rep.ace[k] - beta[k]).abs() < 1e-8);
            }
        }
        for k in 0..3 {
            let w = weighted_ace(&m, x.view(), k, h, 1e-3).unwrap();
            prop_assert!((w.ace[0] - beta[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn ace_ignores_row_order(x in matrix(25, 2), shift in 1usize..25) {
        prop_assume!(has_spread(&x));
        let m = FnPredictor::new(2, |r: ArrayView1<f64>| r[0].sin() * r[1] + r[1].powi(2));
        let rolled = Array2::from_shape_fn((25, 2), |(i, j)| x[[(i + shift) % 25, j]]);
        let a = ace(&m, x.view(), 0.1).unwrap();
        let b = ace(&m, rolled.view(), 0.1).unwrap();
        for k in 0..2 {
            prop_assert!((a.ace[k] - b.ace[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn additive_models_have_no_interaction(x in matrix(20, 3), c in -4.0f64..4.0) {
        prop_assume!(has_spread(&x));
        let add = FnPredictor::new(3, |r: ArrayView1<f64>| r[0].exp() + r[1].powi(3) - r[2]);
        prop_assert!(interaction_ace(&add, x.view(), (0, 1), 0.1).unwrap().value.abs() < 1e-8);
        let bil = FnPredictor::new(3, move |r: ArrayView1<f64>| c * r[0] * r[2] + r[1]);
        let v = interaction_ace(&bil, x.view(), (0, 2), 0.1).unwrap().value;
        prop_assert!((v - c).abs() < 1e-8);
    }

    #[test]
    fn mse_is_bias_squared_plus_variance(est in matrix(7, 3), truth in prop::collection::vec(-2.0f64..2.0, 3)) {
        let t = Array1::from(truth);
        let rep = bias_variance(est.view(), t.view()).unwrap();
        for k in 0..3 {
            prop_assert_eq!(rep.mse[k], rep.bias[k].powi(2) + rep.variance[k]);
            prop_assert!(rep.variance[k] >= 0.0);
            let mean = est.column(k).mean().unwrap();
            prop_assert!((rep.bias[k] - (t[k] - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn booster_increments_telescope(x in matrix(40, 3), seed in 0u64..1000) {
        prop_assume!(has_spread(&x));
        let mut rng = split_rng(seed, 0);
        let y = Array1::from_shape_fn(40, |i| x[[i, 0]] - 0.5 * x[[i, 2]] + 0.1 * rng.normal());
        let d = Dataset::with_default_names(x, y).unwrap();
        let fit = fit_linear_booster(&d, 60, 0.3).unwrap();
        let total = fit.increments.iter().fold(Array1::<f64>::zeros(3), |acc, inc| acc + inc);
        let last = fit.trajectory.last().unwrap();
        for k in 0..3 {
            prop_assert!((total[k] - last[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn tree_predictions_stay_within_response_range(x in matrix(40, 2), y in prop::collection::vec(-10.0f64..10.0, 40), seed in 0u64..100) {
        let y = Array1::from(y);
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        let d = Dataset::with_default_names(x.clone(), y).unwrap();
        let tree = fit_tree(&d, Some(6), 3, 1.0, &mut split_rng(seed, 0)).unwrap();
        let probe = x.mapv(|v| v * 2.0);
        for v in tree.predict(probe.view()).unwrap() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal(x in matrix(30, 2), y in prop::collection::vec(-5.0f64..5.0, 30)) {
        prop_assume!(has_spread(&x));
        let corr = {
            let (a, b) = (x.column(0), x.column(1));
            let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
            let cov = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>();
            cov / (a.std(0.0) * b.std(0.0) * 30.0)
        };
        prop_assume!(corr.abs() < 0.99);
        let y = Array1::from(y);
        let d = Dataset::with_default_names(x.clone(), y.clone()).unwrap();
        let m = fit_ols(&d).unwrap();
        let resid = &y - &m.predict(x.view()).unwrap();
        prop_assert!(resid.sum().abs() < 1e-8);
        for k in 0..2 {
            prop_assert!(resid.dot(&x.column(k)).abs() < 1e-7);
        }
    }

    #[test]
    fn r2_of_exact_prediction_is_one(y in prop::collection::vec(-5.0f64..5.0, 10)) {
        let y = Array1::from(y);
        prop_assume!(y.std(0.0) > 1e-6);
        prop_assert!((r2(y.view(), y.view()).unwrap() - 1.0).abs() < 1e-12);
        let mean = Array1::from_elem(y.len(), y.mean().unwrap());
        prop_assert!(r2(y.view(), mean.view()).unwrap().abs() < 1e-12);
    }
}
