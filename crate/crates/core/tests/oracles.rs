//! Regression outputs checked against nalgebra least squares.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use knotroot::adf::{fit_adf, maic_scores};
use knotroot::lars::{weighted_lars, PenaltyWeights};
use knotroot::linalg::Matrix;
use knotroot::prng::SeedStream;
use knotroot::DetrendedSeries;

fn walk(seed: u64, n: usize, phi: f64) -> Vec<f64> {
    let e = SeedStream::new(seed).standard_normal(n);
    let mut y = vec![0.0; n + 1];
    let mut u = 0.0;
    for t in 1..=n {
        u = phi * u + e[t - 1];
        y[t] = y[t - 1] + u;
    }
    y
}

/// Rows `t = start..=T` of `[y_{t-1}, dy_{t-1..t-p}]` against `dy_t`.
fn design(y: &[f64], p: usize, start: usize) -> (DMatrix<f64>, DVector<f64>) {
    let t_len = y.len() - 1;
    let n = t_len + 1 - start;
    let dy = |s: usize| y[s] - y[s - 1];
    let x = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { y[start + r - 1] } else { dy(start + r - c) });
    let resp = DVector::from_fn(n, |r, _| dy(start + r));
    (x, resp)
}

fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    x.clone().svd(true, true).solve(y, 1e-14).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn adf_fit_matches_svd_least_squares() {
    for seed in 0..40u64 {
        let p = (seed % 6) as usize;
        let y = walk(seed, 80 + seed as usize, 0.5);
        let fit = fit_adf(&DetrendedSeries::raw(y.clone()), p, true).unwrap();
        let (x, resp) = design(&y, p, p + 1);
        let b = lstsq(&x, &resp);
        let r = &resp - &x * &b;
        assert!(close(fit.rho_hat, b[0], 1e-9));
        for j in 0..p {
            assert!(close(fit.delta_hat[j], b[j + 1], 1e-9));
        }
        assert_eq!(fit.residuals.len(), y.len() - 1 - p);
        for (a, e) in fit.residuals.iter().zip(r.iter()) {
            assert!(close(*a, *e, 1e-9));
        }
        let t_len = (y.len() - 1 - p) as f64;
        assert!(close(fit.sigma2_hat, r.norm_squared() / t_len, 1e-9));
    }
}

#[test]
fn maic_scores_match_direct_fits() {
    for seed in 0..20u64 {
        let y = walk(100 + seed, 120, -0.3);
        let t_len = y.len() - 1;
        let k_max = 2 + (seed % 7) as usize;
        let scores = maic_scores(&y, k_max).unwrap();
        assert_eq!(scores.len(), k_max + 1);
        for p in 0..=k_max {
            let (x, resp) = design(&y, p, k_max + 1);
            let b = lstsq(&x, &resp);
            let n = (t_len - k_max) as f64;
            let s2 = (&resp - &x * &b).norm_squared() / n;
            let level_sq = x.column(0).norm_squared();
            let tau = b[0] * b[0] * level_sq / s2;
            let expected = s2.ln() + 2.0 * (tau + p as f64) / n;
            assert!(close(scores[p], expected, 1e-9), "p={p}: {} vs {expected}", scores[p]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_path_ends_at_least_squares(seed in 0u64..10_000, k in 1usize..6, gamma in 0.5f64..2.0) {
        let s = SeedStream::new(seed);
        let n = 40;
        let z = s.split(0).standard_normal(n * k);
        let resp = s.split(1).standard_normal(n);
        let w2: Vec<f64> = s.split(2).uniform(k - 1).iter().map(|u| 0.1 + u).collect();
        let weights = PenaltyWeights::new(0.3 + s.split(3).uniform(1)[0], w2, gamma, gamma).unwrap();
        let x = Matrix { rows: n, cols: k, data: z.clone() };
        let path = weighted_lars(&resp, &x, &weights, false).unwrap();
        let end = path.end_coefficients.expect("full path reaches zero penalty");
        let xm = DMatrix::from_row_slice(n, k, &z);
        let b = lstsq(&xm, &DVector::from_vec(resp));
        for j in 0..k {
            prop_assert!(close(end[j], b[j], 1e-8), "coef {j}: {} vs {}", end[j], b[j]);
        }
        prop_assert!(path.knots.windows(2).all(|w| w[0].lambda >= w[1].lambda));
    }
}
