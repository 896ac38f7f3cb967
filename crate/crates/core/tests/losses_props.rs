use proptest::prelude::*;

use vln_core::losses::{
    action_loss, expected_score, inflection_weights, pal_grad, pal_loss, progress_loss, CurveKind, CurveSpec,
    LossConfig,
};
use vln_core::num::Tensor;

fn curve() -> impl Strategy<Value = CurveSpec> {
    (prop::sample::select(CurveKind::ALL.to_vec()), 0.1f64..3.0).prop_map(|(k, s)| CurveSpec::new(k, s).unwrap())
}

fn distribution(n: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, n).prop_map(|z| {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    })
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum()
}

proptest! {
    #[test]
    fn target_has_unique_peak_and_decays(alpha in distribution(1..12), c in curve()) {
        let e = expected_score(&Tensor::vector(alpha.clone()).unwrap(), &c).unwrap();
        let beta = e.beta.values();
        prop_assert!((beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let k = e.k_star;
        prop_assert!(beta.iter().enumerate().all(|(i, b)| i == k || *b < beta[k]));
        for i in k + 1..beta.len() {
            prop_assert!(beta[i] <= beta[i - 1]);
        }
        for i in (0..k).rev() {
            prop_assert!(beta[i] <= beta[i + 1]);
        }
    }

    #[test]
    fn peak_loss_is_nonnegative_and_zero_at_target(alpha in distribution(2..10), c in curve()) {
        let row = Tensor::matrix(1, alpha.len(), alpha.clone()).unwrap();
        prop_assert!(pal_loss(&row, &c).unwrap() >= 0.0);
        let beta = expected_score(&Tensor::vector(alpha).unwrap(), &c).unwrap().beta;
        let at_target = Tensor::matrix(1, beta.len(), beta.values().to_vec()).unwrap();
        prop_assert!(pal_loss(&at_target, &c).unwrap() < 1e-30);
    }

    #[test]
    fn wider_gaussian_is_flatter(n in 2usize..12, k in 0usize..12, s1 in 0.1f64..3.0, ds in 0.01f64..3.0) {
        let k = k % n;
        let mut alpha = vec![0.0; n];
        alpha[k] = 1.0;
        let a = Tensor::vector(alpha).unwrap();
        let narrow = expected_score(&a, &CurveSpec::gaussian(s1)).unwrap().beta;
        let wide = expected_score(&a, &CurveSpec::gaussian(s1 + ds)).unwrap().beta;
        prop_assert!(entropy(wide.values()) >= entropy(narrow.values()) - 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_differences(rows in 1usize..4, n in 2usize..8, seed in any::<u64>(), c in curve()) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let alphas: Vec<f64> = (0..rows * n).map(|_| next()).collect();
        let t = Tensor::matrix(rows, n, alphas.clone()).unwrap();
        let g = pal_grad(&t, &c).unwrap();
        let eps = 1e-6;
        for i in 0..alphas.len() {
            let mut p = alphas.clone();
            p[i] += eps;
            let mut m = alphas.clone();
            m[i] -= eps;
            // Skip nudges that move a row's argmax; the targets are piecewise constant.
            let tp = Tensor::matrix(rows, n, p).unwrap();
            let tm = Tensor::matrix(rows, n, m).unwrap();
            let targets = |x: &Tensor| vln_core::losses::pal_targets(x, &c).unwrap();
            prop_assume!(targets(&tp) == targets(&t) && targets(&tm) == targets(&t));
            let fd = (pal_loss(&tp, &c).unwrap() - pal_loss(&tm, &c).unwrap()) / (2.0 * eps);
            prop_assert!((fd - g.values()[i]).abs() < 1e-8, "{} vs {}", fd, g.values()[i]);
        }
    }

    #[test]
    fn action_loss_matches_weighted_log_likelihood(
        probs in prop::collection::vec(distribution(4), 1..10),
        picks in prop::collection::vec(0usize..4, 10),
        w in 1.0f64..5.0,
    ) {
        let t = probs.len();
        let teacher = &picks[..t];
        let dists = Tensor::from_rows(&probs).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for s in 0..t {
            let ws = if s == 0 || teacher[s] != teacher[s - 1] { w } else { 1.0 };
            num -= ws * probs[s][teacher[s]].ln();
            den += ws;
        }
        let got = action_loss(&dists, teacher, w).unwrap();
        prop_assert!((got - num / den).abs() < 1e-10 * (1.0 + got.abs()));
        prop_assert!(inflection_weights(teacher, w).iter().all(|x| *x == 1.0 || *x == w));
    }

    #[test]
    fn progress_loss_is_mse(p in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let target: Vec<f64> = (1..=p.len()).map(|i| i as f64 / p.len() as f64).collect();
        let mse = p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64;
        prop_assert!((progress_loss(&p, &target).unwrap() - mse).abs() < 1e-14);
        prop_assert_eq!(progress_loss(&target, &target).unwrap(), 0.0);
    }

    #[test]
    fn lambda_is_monotone_and_capped(total in 1usize..1000, a in 0usize..2000, b in 0usize..2000) {
        let cfg = LossConfig::default();
        let (lo, hi) = (a.min(b), a.max(b));
        let l_lo = cfg.lambda_at(lo, total).unwrap();
        let l_hi = cfg.lambda_at(hi, total).unwrap();
        prop_assert!(l_lo <= l_hi);
        prop_assert!((0.0..=cfg.lambda_max).contains(&l_hi));
    }
}
