//! ADF(p) regressions: OLS fits, bootstrap residuals, variance profiles and
//! (RS)MAIC lag-order selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, lstsq, Matrix};
use crate::series::{diff_values, DetrendedSeries};

/// Default bandwidth (fraction of the sample) for the RSMAIC volatility rescaling.
pub const DEFAULT_BANDWIDTH: f64 = 0.1;

/// OLS fit of `dy_t = rho y_{t-1} + sum_j delta_j dy_{t-j} + e_t`, t = p+1..T.
#[derive(Debug, Clone, PartialEq)]
pub struct AdfFit {
    pub p: usize,
    /// Zero when the level regressor is excluded.
    pub rho_hat: f64,
    pub delta_hat: Vec<f64>,
    /// Residuals over the effective sample, length `T - p`.
    pub residuals: Vec<f64>,
    /// Sum of squared residuals divided by the effective sample size.
    pub sigma2_hat: f64,
    /// Time index of the first residual (`p + 1`).
    pub effective_start: usize,
    pub include_level: bool,
}

/// Regressor matrix and response of the ADF(p) regression for rows
/// `t = start..=T`, with columns `[y_{t-1}], dy_{t-1}, ..., dy_{t-p}`.
pub(crate) fn adf_design(
    y: &[f64],
    dy: &[f64],
    p: usize,
    start: usize,
    include_level: bool,
) -> (Matrix, Vec<f64>) {
    let t_len = y.len() - 1;
    let offset = usize::from(include_level);
    let cols = p + offset;
    let rows = t_len + 1 - start;
    let mut x = Matrix::zeros(rows, cols);
    let mut resp = Vec::with_capacity(rows);
    for (r, t) in (start..=t_len).enumerate() {
        if include_level {
            x.set(r, 0, y[t - 1]);
        }
        for j in 1..=p {
            // dy is 0-based: dy[s - 1] = y_s - y_{s-1}
            x.set(r, offset + j - 1, dy[t - j - 1]);
        }
        resp.push(dy[t - 1]);
    }
    (x, resp)
}

fn check_sample(t_len: usize, p: usize) -> Result<()> {
    let available = t_len.saturating_sub(p);
    if available < p + 2 {
        return Err(Error::InsufficientSample {
            p,
            available,
            need: p + 2,
        });
    }
    Ok(())
}

/// OLS estimation of the ADF(p) regression on already adjusted data.
pub fn fit_adf(yd: &DetrendedSeries, p: usize, include_level: bool) -> Result<AdfFit> {
    fit_adf_values(&yd.values, p, include_level)
}

pub(crate) fn fit_adf_values(y: &[f64], p: usize, include_level: bool) -> Result<AdfFit> {
    if y.len() < 2 {
        return Err(Error::SeriesTooShort {
            need: 2,
            got: y.len(),
        });
    }
    let t_len = y.len() - 1;
    check_sample(t_len, p)?;
    let dy = diff_values(y);
    let (x, resp) = adf_design(y, &dy, p, p + 1, include_level);
    let beta = if x.cols == 0 {
        Vec::new()
    } else {
        lstsq(&x, &resp)?
    };
    let fitted = x.mul_vec(&beta);
    let residuals: Vec<f64> = resp.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let n = residuals.len() as f64;
    let sigma2_hat = residuals.iter().map(|e| e * e).sum::<f64>() / n;
    let (rho_hat, delta_hat) = if include_level {
        (beta[0], beta[1..].to_vec())
    } else {
        (0.0, beta)
    };
    Ok(AdfFit {
        p,
        rho_hat,
        delta_hat,
        residuals,
        sigma2_hat,
        effective_start: p + 1,
        include_level,
    })
}

/// ADF(q) fit plus the full-length residual sequence `t = 1..T` used as
/// wild bootstrap innovations. Pre-sample differences are zero.
pub fn residuals_for_bootstrap(yd: &DetrendedSeries, q: usize) -> Result<(AdfFit, Vec<f64>)> {
    residuals_for_bootstrap_values(&yd.values, q)
}

pub(crate) fn residuals_for_bootstrap_values(y: &[f64], q: usize) -> Result<(AdfFit, Vec<f64>)> {
    let fit = fit_adf_values(y, q, true)?;
    let dy = diff_values(y);
    let resid = (1..y.len())
        .map(|t| {
            let mut e = dy[t - 1] - fit.rho_hat * y[t - 1];
            for (j, d) in fit.delta_hat.iter().enumerate() {
                let lag = j + 1;
                if t > lag {
                    e -= d * dy[t - lag - 1];
                }
            }
            e
        })
        .collect();
    Ok((fit, resid))
}

/// Estimated variance profile: cumulated squared residuals normalised to one,
/// linearly interpolated between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    /// `cum[k] = sum_{t<=k} u_t^2 / total`, `cum[0] = 0`.
    cum: Vec<f64>,
}

impl VarianceProfile {
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.cum.len() - 1;
        let x = s.clamp(0.0, 1.0) * n as f64;
        let k = x.floor() as usize;
        if k >= n {
            return 1.0;
        }
        let frac = x - k as f64;
        self.cum[k] + frac * (self.cum[k + 1] - self.cum[k])
    }

    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.cum.len() <= 1
    }

    /// Evaluate on `points` equally spaced values of `s` in [0, 1].
    pub fn grid(&self, points: usize) -> Vec<(f64, f64)> {
        let last = points.saturating_sub(1).max(1) as f64;
        (0..points)
            .map(|i| {
                let s = i as f64 / last;
                (s, self.eval(s))
            })
            .collect()
    }
}

/// `eta(s) = (sum_{t<=floor(sT)} u_t^2 + (sT - floor(sT)) u_{floor(sT)+1}^2) / sum_t u_t^2`.
pub fn variance_profile(residuals: &[f64]) -> Result<VarianceProfile> {
    let total: f64 = residuals.iter().map(|u| u * u).sum();
    if residuals.is_empty() || total == 0.0 {
        return Err(Error::AllZeroResiduals);
    }
    let mut cum = Vec::with_capacity(residuals.len() + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for u in residuals {
        acc += u * u;
        cum.push(acc / total);
    }
    *cum.last_mut().unwrap() = 1.0;
    Ok(VarianceProfile { cum })
}

/// Gaussian-kernel estimate of the local standard deviation of `increments`:
/// `s_t^2 = sum_s K((t-s)/(hT)) x_s^2 / sum_s K((t-s)/(hT))`.
pub fn kernel_volatility(increments: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0 && bandwidth <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "bandwidth must lie in (0, 1], got {bandwidth}"
        )));
    }
    let n = increments.len();
    if n < 5 {
        return Err(Error::SeriesTooShort { need: 5, got: n });
    }
    let sq: Vec<f64> = increments.iter().map(|x| x * x).collect();
    let mean_sq = sq.iter().sum::<f64>() / n as f64;
    if mean_sq == 0.0 {
        return Err(Error::AllZeroResiduals);
    }
    let floor = 1e-12 * mean_sq;
    let h = bandwidth * n as f64;
    let weights: Vec<f64> = (0..n)
        .map(|d| {
            let z = d as f64 / h;
            libm::exp(-0.5 * z * z)
        })
        .collect();
    let out = (0..n)
        .map(|t| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (s, x2) in sq.iter().enumerate() {
                let w = weights[t.abs_diff(s)];
                num += w * x2;
                den += w;
            }
            (num / den).max(floor).sqrt()
        })
        .collect();
    Ok(out)
}

/// Lag-order rule for ADF regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LagRule {
    Maic,
    Rsmaic { bandwidth: f64 },
    Fixed(usize),
}

impl Default for LagRule {
    fn default() -> Self {
        LagRule::Rsmaic {
            bandwidth: DEFAULT_BANDWIDTH,
        }
    }
}

/// Outcome of a lag-order search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub criterion: LagRule,
    pub k_max: usize,
    pub chosen: usize,
    /// Criterion value for each candidate `p = 0..=k_max` (empty for fixed lags).
    pub scores: Vec<f64>,
}

/// Maximum lag `floor(12 (100 / T)^{1/4})`.
pub fn kmax_rule(t_len: usize) -> usize {
    (12.0 * (100.0 / t_len as f64).powf(0.25)).floor() as usize
}

/// Largest lag order for which an ADF(p) fit still has a spare degree of freedom.
pub fn max_feasible_lag(t_len: usize) -> usize {
    t_len.saturating_sub(2) / 2
}

pub fn select_lag(yd: &DetrendedSeries, rule: LagRule, k_max: usize) -> Result<LagSelection> {
    select_lag_values(&yd.values, rule, k_max)
}

pub(crate) fn select_lag_values(y: &[f64], rule: LagRule, k_max: usize) -> Result<LagSelection> {
    match rule {
        LagRule::Fixed(k) => Ok(LagSelection {
            criterion: rule,
            k_max,
            chosen: k,
            scores: Vec::new(),
        }),
        LagRule::Maic => maic_select(y, k_max),
        LagRule::Rsmaic { bandwidth } => {
            let dy = diff_values(y);
            let scales = kernel_volatility(&dy, bandwidth)?;
            let mut sel = rsmaic_select_with_scales(y, k_max, &scales)?;
            sel.criterion = rule;
            Ok(sel)
        }
    }
}

/// Cumulate `dy_t / s_t` from zero.
pub fn rescale_by_volatility(y: &[f64], scales: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    out.push(0.0);
    let mut acc = 0.0;
    for (w, s) in y.windows(2).zip(scales) {
        acc += (w[1] - w[0]) / s;
        out.push(acc);
    }
    out
}

/// MAIC applied to the series rescaled by the supplied local volatilities.
/// The returned selection is labelled `Maic`; [`select_lag`] relabels it.
pub fn rsmaic_select_with_scales(y: &[f64], k_max: usize, scales: &[f64]) -> Result<LagSelection> {
    if scales.len() + 1 != y.len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} volatility scales, got {}",
            y.len() - 1,
            scales.len()
        )));
    }
    maic_select(&rescale_by_volatility(y, scales), k_max)
}

/// MAIC over the common sample `t = k_max+1..T`; ties go to the smallest `p`.
pub fn maic_select(y: &[f64], k_max: usize) -> Result<LagSelection> {
    let scores = match maic_scores(y, k_max) {
        Ok(s) => s,
        Err(_) if k_max == 0 => vec![f64::NAN],
        Err(e) => return Err(e),
    };
    let mut chosen = 0;
    for (p, s) in scores.iter().enumerate() {
        if *s < scores[chosen] {
            chosen = p;
        }
    }
    Ok(LagSelection {
        criterion: LagRule::Maic,
        k_max,
        chosen,
        scores,
    })
}

/// `MAIC(p) = ln(s2_p) + 2 (tau_T(p) + p) / (T - k_max)` with
/// `tau_T(p) = rho_p^2 sum y_{t-1}^2 / s2_p`, for `p = 0..=k_max`.
pub fn maic_scores(y: &[f64], k_max: usize) -> Result<Vec<f64>> {
    if y.len() < 2 {
        return Err(Error::SeriesTooShort {
            need: 2,
            got: y.len(),
        });
    }
    let t_len = y.len() - 1;
    check_sample(t_len, k_max)?;
    let dy = diff_values(y);
    let (x, resp) = adf_design(y, &dy, k_max, k_max + 1, true);
    let n = resp.len() as f64;
    let k = x.cols;
    let g = x.gram();
    let xy = x.t_mul(&resp);
    let yy: f64 = resp.iter().map(|v| v * v).sum();
    let sum_level_sq = g.get(0, 0);

    let mut scores = Vec::with_capacity(k);
    for p in 0..=k_max {
        let m = p + 1;
        let mut sub = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                sub.set(i, j, g.get(i, j));
            }
        }
        let l = cholesky(&sub)?;
        let beta = cholesky_solve(&l, &xy[..m]);
        let explained: f64 = beta.iter().zip(&xy[..m]).map(|(b, c)| b * c).sum();
        let ssr = (yy - explained).max(0.0);
        let s2 = ssr / n;
        if s2 <= 0.0 {
            return Err(Error::AllZeroResiduals);
        }
        let tau = beta[0] * beta[0] * sum_level_sq / s2;
        scores.push(libm::log(s2) + 2.0 * (tau + p as f64) / n);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::SeedStream;
    use crate::series::{detrend_fd, DetrendSpec, Series};

    fn random_walk(seed: u64, t_len: usize) -> Vec<f64> {
        let e = SeedStream::new(seed).standard_normal(t_len);
        let mut y = vec![0.0];
        for v in e {
            y.push(y.last().unwrap() + v);
        }
        y
    }

    #[test]
    fn exact_level_relation() {
        // dy_t = 0.5 y_{t-1}
        let mut y = vec![1.0];
        for _ in 0..10 {
            let last = *y.last().unwrap();
            y.push(last * 1.5);
        }
        let fit = fit_adf_values(&y, 0, true).unwrap();
        assert!((fit.rho_hat - 0.5).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn residual_length_and_start() {
        let y = random_walk(3, 60);
        let fit = fit_adf_values(&y, 4, true).unwrap();
        assert_eq!(fit.residuals.len(), 60 - 4);
        assert_eq!(fit.effective_start, 5);
        assert_eq!(fit.delta_hat.len(), 4);
        assert!(fit.sigma2_hat > 0.0);
    }

    #[test]
    fn too_many_lags_is_an_error() {
        let y = random_walk(1, 10);
        // T = 10: p = 5 leaves 5 rows for 6 regressors plus one spare
        assert!(matches!(
            fit_adf_values(&y, 5, true),
            Err(Error::InsufficientSample { .. })
        ));
        assert!(fit_adf_values(&y, 4, true).is_ok());
    }

    #[test]
    fn sieve_fit_without_level() {
        let y = random_walk(5, 80);
        let fit = fit_adf_values(&y, 2, false).unwrap();
        assert_eq!(fit.rho_hat, 0.0);
        assert_eq!(fit.delta_hat.len(), 2);
    }

    #[test]
    fn bootstrap_residuals_zero_padding() {
        let y = random_walk(9, 40);
        let yd = detrend_fd(&Series::new(y).unwrap(), DetrendSpec::Constant).unwrap();
        let (fit0, e0) = residuals_for_bootstrap(&yd, 0).unwrap();
        assert_eq!(e0.len(), 40);
        for t in 1..=40 {
            let want = yd.values[t] - yd.values[t - 1] - fit0.rho_hat * yd.values[t - 1];
            assert!((e0[t - 1] - want).abs() < 1e-12);
        }
        let (fit2, e2) = residuals_for_bootstrap(&yd, 2).unwrap();
        let dy1 = yd.values[1] - yd.values[0];
        assert!((e2[0] - (dy1 - fit2.rho_hat * yd.values[0])).abs() < 1e-12);
        let dy2 = yd.values[2] - yd.values[1];
        let want = dy2 - fit2.rho_hat * yd.values[1] - fit2.delta_hat[0] * dy1;
        assert!((e2[1] - want).abs() < 1e-12);
        // rows t >= q+1 coincide with the OLS residuals
        for (a, b) in e2[2..].iter().zip(&fit2.residuals) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn variance_profile_examples() {
        let vp = variance_profile(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((vp.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((vp.eval(0.625) - 0.625).abs() < 1e-15);
        assert_eq!(vp.eval(0.0), 0.0);
        assert_eq!(vp.eval(1.0), 1.0);
        let vp = variance_profile(&[0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(vp.eval(0.5), 0.0);
        assert_eq!(
            variance_profile(&[0.0, 0.0]),
            Err(Error::AllZeroResiduals)
        );
    }

    #[test]
    fn variance_profile_fractional_term_is_squared() {
        // u = (1, 2): eta(0.75) = (1 + 0.5 * 4) / 5
        let vp = variance_profile(&[1.0, 2.0]).unwrap();
        assert!((vp.eval(0.75) - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_volatility_constant_magnitude() {
        let x: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 3.0 } else { -3.0 }).collect();
        let s = kernel_volatility(&x, 0.1).unwrap();
        assert!(s.iter().all(|v| (v * v - 9.0).abs() < 1e-10));
        assert!(kernel_volatility(&x, 0.0).is_err());
        assert!(kernel_volatility(&x, -1.0).is_err());
        assert!(kernel_volatility(&x[..4], 0.1).is_err());
    }

    #[test]
    fn kernel_volatility_tracks_a_variance_step() {
        let n = 2000;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for seed in 0..100 {
            let e = SeedStream::new(77).split(seed).standard_normal(n);
            let x: Vec<f64> = e
                .iter()
                .enumerate()
                .map(|(t, v)| if t < n / 2 { *v } else { 2.0 * v })
                .collect();
            let s = kernel_volatility(&x, 0.1).unwrap();
            lo.push(s[n / 10].powi(2));
            hi.push(s[9 * n / 10].powi(2));
        }
        for v in &lo {
            assert!((0.8..=1.25).contains(v), "early variance {v}");
        }
        for v in &hi {
            assert!((3.2..=5.0).contains(v), "late variance {v}");
        }
    }

    #[test]
    fn maic_prefers_no_lags_for_white_noise_increments() {
        let mut zero = 0;
        for seed in 0..100 {
            let y = random_walk(1000 + seed, 500);
            let sel = maic_select(&y, kmax_rule(500)).unwrap();
            if sel.chosen == 0 {
                zero += 1;
            }
        }
        // 69 of 100 for this seed set
        assert!(zero > 50, "p = 0 chosen in {zero} of 100 draws");
    }

    #[test]
    fn maic_single_candidate() {
        let y = random_walk(2, 30);
        assert_eq!(maic_select(&y, 0).unwrap().chosen, 0);
        assert_eq!(maic_select(&[0.0; 30], 0).unwrap().chosen, 0);
    }

    #[test]
    fn rsmaic_with_constant_scales_matches_maic() {
        for seed in 0..20 {
            let y = random_walk(300 + seed, 200);
            let a = maic_select(&y, 8).unwrap();
            let b = rsmaic_select_with_scales(&y, 8, &vec![2.5; 200]).unwrap();
            assert_eq!(a.chosen, b.chosen);
        }
    }

    #[test]
    fn maic_is_scale_equivariant() {
        for seed in 0..20 {
            let y = random_walk(500 + seed, 150);
            let scaled: Vec<f64> = y.iter().map(|v| 7.3 * v).collect();
            assert_eq!(
                maic_select(&y, 6).unwrap().chosen,
                maic_select(&scaled, 6).unwrap().chosen
            );
        }
    }

    #[test]
    fn maic_matches_direct_fits() {
        let y = random_walk(42, 120);
        let k_max = 5;
        let scores = maic_scores(&y, k_max).unwrap();
        let dy = diff_values(&y);
        for p in 0..=k_max {
            let (x, resp) = adf_design(&y, &dy, p, k_max + 1, true);
            let b = lstsq(&x, &resp).unwrap();
            let fitted = x.mul_vec(&b);
            let n = resp.len() as f64;
            let s2 = resp.iter().zip(&fitted).map(|(a, f)| (a - f).powi(2)).sum::<f64>() / n;
            let lvl: f64 = x.column(0).iter().map(|v| v * v).sum();
            let want = s2.ln() + 2.0 * (b[0] * b[0] * lvl / s2 + p as f64) / n;
            assert!((scores[p] - want).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn kmax_rule_values() {
        assert_eq!(kmax_rule(206), 10);
        assert_eq!(kmax_rule(100), 12);
        assert_eq!(kmax_rule(500), 8);
    }
}
