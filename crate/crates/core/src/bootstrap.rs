//! Sieve wild bootstrap for the activation-knot statistics.

use rayon::prelude::*;
use serde::Serialize;

use crate::adf::{residuals_for_bootstrap_values, select_lag_values, LagRule};
use crate::error::{Error, Result};
use crate::knot::{statistic_pipeline, Method, Provenance, StatisticKind, TestConfig, TestResult};
use crate::prng::SeedStream;
use crate::series::{detrend_values, Series};

/// Attempts per replicate before it is recorded as failed.
pub const MAX_ATTEMPTS: usize = 10;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Distribution of the wild bootstrap multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Multiplier {
    #[default]
    Gaussian,
    Rademacher,
    Mammen,
}

impl Multiplier {
    pub fn parse(s: &str) -> Option<Multiplier> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Some(Multiplier::Gaussian),
            "rademacher" => Some(Multiplier::Rademacher),
            "mammen" => Some(Multiplier::Mammen),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Multiplier::Gaussian => "gaussian",
            Multiplier::Rademacher => "rademacher",
            Multiplier::Mammen => "mammen",
        }
    }
}

/// Mammen two-point law: `(low, high, P(low))`.
pub fn mammen_points() -> (f64, f64, f64) {
    let s5 = 5f64.sqrt();
    (-(s5 - 1.0) / 2.0, (s5 + 1.0) / 2.0, (s5 + 1.0) / (2.0 * s5))
}

/// `n` i.i.d. multipliers with mean zero and unit variance.
pub fn draw_multipliers(kind: Multiplier, n: usize, stream: &SeedStream) -> Vec<f64> {
    match kind {
        Multiplier::Gaussian => stream.standard_normal(n),
        Multiplier::Rademacher => {
            let mut rng = stream.rng();
            (0..n)
                .map(|_| if rng.next_u32() & 1 == 0 { -1.0 } else { 1.0 })
                .collect()
        }
        Multiplier::Mammen => {
            let (low, high, p_low) = mammen_points();
            stream
                .uniform(n)
                .into_iter()
                .map(|u| if u < p_low { low } else { high })
                .collect()
        }
    }
}

/// AR(q) filter `u_t = sum_j delta_j u_{t-j} + e_t` with zero pre-sample values.
pub fn recolour(innovations: &[f64], delta: &[f64]) -> Vec<f64> {
    let mut u = Vec::with_capacity(innovations.len());
    for (t, e) in innovations.iter().enumerate() {
        let mut v = *e;
        for (j, d) in delta.iter().enumerate() {
            if t > j {
                v += d * u[t - j - 1];
            }
        }
        u.push(v);
    }
    u
}

/// `y*_t = sum_{i<=t} u*_i` with `y*_0 = 0`, where `u*` is the recoloured
/// series of `multipliers * residuals`.
pub fn bootstrap_sample(residuals: &[f64], delta: &[f64], multipliers: &[f64]) -> Result<Series> {
    if residuals.len() != multipliers.len() {
        return Err(Error::InvalidConfig(format!(
            "{} residuals but {} multipliers",
            residuals.len(),
            multipliers.len()
        )));
    }
    let eps: Vec<f64> = residuals.iter().zip(multipliers).map(|(e, x)| e * x).collect();
    let u = recolour(&eps, delta);
    let mut y = Vec::with_capacity(u.len() + 1);
    y.push(0.0);
    let mut acc = 0.0;
    for v in u {
        acc += v;
        y.push(acc);
    }
    Series::new(y)
}

/// Lag order of the recolouring filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QRule {
    /// Same as the lag order of the observed statistic.
    #[default]
    Auto,
    Zero,
    Fixed(usize),
}

/// Lag order for the statistic on each bootstrap sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PStar {
    /// Re-selected on every bootstrap sample with the test's lag rule.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    #[serde(rename = "B")]
    pub b: usize,
    pub q: QRule,
    pub p_star: PStar,
    pub multiplier: Multiplier,
    pub seed: u64,
    pub alpha: f64,
    /// Divide each bootstrap knot by its own OLS error variance.
    pub scale_bootstrap_sigma: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: 4999,
            q: QRule::Auto,
            p_star: PStar::Auto,
            multiplier: Multiplier::Gaussian,
            seed: 1,
            alpha: 0.05,
            scale_bootstrap_sigma: true,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::InvalidConfig("B must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    fn p_star_label(&self) -> String {
        match self.p_star {
            PStar::Auto => "auto".into(),
            PStar::Fixed(k) => k.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Observed statistic with the bootstrap p-value and critical value filled in.
    pub observed: TestResult,
    /// Successful bootstrap statistics in replicate order.
    pub replicates: Vec<f64>,
    pub cv: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Recolouring lag order actually used.
    pub q: usize,
    /// Replicates that failed after every retry.
    pub failed: usize,
    pub config: BootstrapConfig,
}

/// `ceil((1 - alpha) B)`-th order statistic of the replicates.
pub fn critical_value(replicates: &[f64], alpha: f64) -> f64 {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    crate::limit::order_statistic_quantile(&sorted, 1.0 - alpha)
}

/// `#{tau*_b >= tau} / B`.
pub fn bootstrap_p_value(replicates: &[f64], statistic: f64) -> f64 {
    replicates.iter().filter(|r| **r >= statistic).count() as f64 / replicates.len() as f64
}

/// Bootstrap the `tau` statistic.
pub fn run_bootstrap_test(y: &Series, test_cfg: &TestConfig, bs_cfg: &BootstrapConfig) -> Result<BootstrapResult> {
    run_bootstrap_kind(y, test_cfg, bs_cfg, StatisticKind::Tau)
}

/// Bootstrap either statistic; the enrichment provider is re-invoked on each
/// bootstrap sample.
pub fn run_bootstrap_kind(
    y: &Series,
    test_cfg: &TestConfig,
    bs_cfg: &BootstrapConfig,
    kind: StatisticKind,
) -> Result<BootstrapResult> {
    let stream = SeedStream::new(bs_cfg.seed);
    run_bootstrap_with(y, test_cfg, bs_cfg, kind, &stream, &|n, s| {
        draw_multipliers(bs_cfg.multiplier, n, s)
    })
}

/// Bootstrap with an explicit root stream and multiplier generator.
/// Attempt `k` of replicate `b` draws from `stream.split(b).split(k)`.
pub fn run_bootstrap_with(
    y: &Series,
    test_cfg: &TestConfig,
    bs_cfg: &BootstrapConfig,
    kind: StatisticKind,
    stream: &SeedStream,
    multipliers: &(dyn Fn(usize, &SeedStream) -> Vec<f64> + Sync),
) -> Result<BootstrapResult> {
    test_cfg.validate()?;
    bs_cfg.validate()?;
    let t_len = y.t();
    let k_max = test_cfg.k_max.resolve(t_len);
    let (observed, p, j) = statistic_pipeline(y.values(), test_cfg, kind, None, k_max, true)?;

    let q = match bs_cfg.q {
        QRule::Auto => p,
        QRule::Zero => 0,
        QRule::Fixed(k) => k,
    };
    let yd = detrend_values(y.values(), test_cfg.detrend)?;
    let (sieve, residuals) = residuals_for_bootstrap_values(&yd.values, q)?;
    let lag_override = match bs_cfg.p_star {
        PStar::Auto => None,
        PStar::Fixed(k) => Some(LagRule::Fixed(k)),
    };

    let outcomes: Vec<std::result::Result<f64, Error>> = (0..bs_cfg.b)
        .into_par_iter()
        .map(|b| {
            let rep = stream.split(b as u64);
            let mut last = Error::InvalidConfig("no attempt made".into());
            for attempt in 0..MAX_ATTEMPTS {
                let xi = multipliers(residuals.len(), &rep.split(attempt as u64));
                let outcome = bootstrap_sample(&residuals, &sieve.delta_hat, &xi).and_then(|ys| {
                    statistic_pipeline(
                        ys.values(),
                        test_cfg,
                        kind,
                        lag_override,
                        k_max,
                        bs_cfg.scale_bootstrap_sigma,
                    )
                });
                match outcome {
                    Ok((ks, _, _)) if ks.statistic.is_finite() => return Ok(ks.statistic),
                    Ok(_) => last = Error::AllZeroResiduals,
                    Err(e) => last = e,
                }
            }
            Err(last)
        })
        .collect();

    let mut replicates = Vec::with_capacity(bs_cfg.b);
    let mut failed = 0;
    let mut last_error = None;
    for o in outcomes {
        match o {
            Ok(v) => replicates.push(v),
            Err(e) => {
                failed += 1;
                last_error = Some(e);
            }
        }
    }
    if failed as f64 > MAX_FAILURE_RATE * bs_cfg.b as f64 || replicates.is_empty() {
        return Err(Error::TooManyFailures {
            failed,
            total: bs_cfg.b,
            last: last_error.map(|e| e.to_string()).unwrap_or_default(),
        });
    }

    let cv = critical_value(&replicates, bs_cfg.alpha);
    let p_value = bootstrap_p_value(&replicates, observed.statistic);
    let mut critical_values = std::collections::BTreeMap::new();
    critical_values.insert(format!("{}", bs_cfg.alpha), cv);
    let result = TestResult {
        kind,
        statistic: observed.statistic,
        lambda0: observed.lambda0,
        p_value: Some(p_value),
        critical_values,
        lag_p: p,
        k_max,
        sigma2_hat: observed.sigma2_hat,
        t: t_len,
        detrend: test_cfg.detrend,
        method: Method::WildBootstrap,
        enrichment: j,
        provenance: Provenance {
            seed: Some(stream.seed()),
            b: Some(bs_cfg.b),
            q: Some(q),
            p_star: Some(bs_cfg.p_star_label()),
        },
    };
    Ok(BootstrapResult {
        reject: observed.statistic >= cv,
        observed: result,
        replicates,
        cv,
        p_value,
        q,
        failed,
        config: *bs_cfg,
    })
}

/// Lag order the test would choose on `y`, exposed for reporting.
pub fn observed_lag(y: &Series, test_cfg: &TestConfig) -> Result<usize> {
    let yd = detrend_values(y.values(), test_cfg.detrend)?;
    Ok(select_lag_values(&yd.values, test_cfg.lag, test_cfg.k_max.resolve(y.t()))?.chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knot::tau_statistic;
    use crate::series::DetrendSpec;
    use proptest::prelude::*;

    fn walk(seed: u64, t_len: usize) -> Series {
        let e = SeedStream::new(seed).standard_normal(t_len);
        let mut y = vec![0.0];
        for v in e {
            y.push(y.last().unwrap() + v);
        }
        Series::new(y).unwrap()
    }

    #[test]
    fn multiplier_moments() {
        let g = draw_multipliers(Multiplier::Gaussian, 1_000_000, &SeedStream::new(1));
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / g.len() as f64;
        assert!(mean.abs() < 0.005 && (var - 1.0).abs() < 0.01);

        let r = draw_multipliers(Multiplier::Rademacher, 10_000, &SeedStream::new(2));
        assert!(r.iter().all(|x| *x == 1.0 || *x == -1.0));
        let plus = r.iter().filter(|x| **x > 0.0).count();
        assert!((4700..5300).contains(&plus));

        let (lo, hi, p) = mammen_points();
        let m1 = p * lo + (1.0 - p) * hi;
        let m2 = p * lo * lo + (1.0 - p) * hi * hi;
        let m3 = p * lo.powi(3) + (1.0 - p) * hi.powi(3);
        assert!(m1.abs() < 1e-15 && (m2 - 1.0).abs() < 1e-15 && (m3 - 1.0).abs() < 1e-14);
        let m = draw_multipliers(Multiplier::Mammen, 1000, &SeedStream::new(3));
        assert!(m.iter().all(|x| *x == lo || *x == hi));
    }

    #[test]
    fn recolour_examples() {
        assert_eq!(recolour(&[1.0, 2.0, 3.0], &[]), vec![1.0, 2.0, 3.0]);
        assert_eq!(recolour(&[1.0, 0.0, 0.0], &[0.5]), vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn recolour_matches_impulse_response_convolution() {
        let delta = [0.4, -0.3, 0.2];
        let e = SeedStream::new(4).standard_normal(200);
        let mut psi = vec![1.0];
        for k in 1..e.len() {
            let v: f64 = (1..=delta.len().min(k)).map(|j| delta[j - 1] * psi[k - j]).sum();
            psi.push(v);
        }
        let u = recolour(&e, &delta);
        for t in 0..e.len() {
            let conv: f64 = (0..=t).map(|k| psi[k] * e[t - k]).sum();
            assert!((u[t] - conv).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_sample_examples() {
        let e = [0.5, -1.0, 2.0];
        let zero = bootstrap_sample(&e, &[0.3], &[0.0; 3]).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let ones = bootstrap_sample(&e, &[], &[1.0; 3]).unwrap();
        assert_eq!(ones.values(), &[0.0, 0.5, -0.5, 1.5]);
        let xi = [0.3, -2.0, 1.1];
        let s = bootstrap_sample(&e, &[0.7, -0.2], &xi).unwrap();
        let u = recolour(&[0.15, 2.0, 2.2], &[0.7, -0.2]);
        let d: Vec<f64> = s.values().windows(2).map(|w| w[1] - w[0]).collect();
        for (a, b) in d.iter().zip(&u) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(bootstrap_sample(&e, &[], &[1.0; 2]).is_err());
    }

    #[test]
    fn order_statistic_and_p_value() {
        let reps = [4.0, 2.0, 1.0, 3.0];
        assert_eq!(critical_value(&reps, 0.25), 3.0);
        assert_eq!(bootstrap_p_value(&reps, 2.5), 0.5);
        assert!(2.5 < critical_value(&reps, 0.25));
    }

    #[test]
    fn p_value_granularity() {
        let reps: Vec<f64> = (0..4999).map(|i| i as f64).collect();
        let p = bootstrap_p_value(&reps, 4950.0);
        assert_eq!(p, 49.0 / 4999.0);
        // reported empirical p-values are whole multiples of 1/4999
        for (k, reported) in [
            (49.0f64, 0.00980196039207842f64),
            (1490.0, 0.298059611922385),
            (100.0, 0.02000400080016),
            (81.0, 0.0162032406481296),
            (24.0, 0.00480096019203841),
        ] {
            assert!((k / 4999.0 - reported).abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn decision_triple_agrees(
            reps in proptest::collection::vec(0.0f64..10.0, 1..300),
            stat in 0.0f64..10.0,
            alpha in 0.01f64..0.5,
        ) {
            let b = reps.len() as f64;
            let cv = critical_value(&reps, alpha);
            let p = bootstrap_p_value(&reps, stat);
            if stat >= cv {
                prop_assert!(p <= alpha + 1.0 / b + 1e-12);
            } else {
                prop_assert!(p > alpha);
            }
        }
    }

    fn small_cfg(seed: u64, b: usize) -> BootstrapConfig {
        BootstrapConfig {
            b,
            seed,
            ..BootstrapConfig::default()
        }
    }

    #[test]
    fn thread_count_does_not_change_the_result() {
        let y = walk(12, 120);
        let cfg = TestConfig::default();
        let bs = small_cfg(77, 99);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_bootstrap_test(&y, &cfg, &bs).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(a.replicates.len(), 99);
        assert!(a.replicates.iter().all(|r| r.is_finite() && *r >= 0.0));
    }

    #[test]
    fn unit_multipliers_give_a_point_mass() {
        let y = walk(13, 100);
        let cfg = TestConfig::new(DetrendSpec::None, LagRule::Fixed(0));
        let bs = BootstrapConfig {
            q: QRule::Zero,
            ..small_cfg(1, 20)
        };
        let res = run_bootstrap_with(
            &y,
            &cfg,
            &bs,
            StatisticKind::Tau,
            &SeedStream::new(1),
            &|n, _| vec![1.0; n],
        )
        .unwrap();
        let (_, resid) = residuals_for_bootstrap_values(y.values(), 0).unwrap();
        let mut cum = vec![0.0];
        for e in &resid {
            cum.push(cum.last().unwrap() + e);
        }
        let want = tau_statistic(&Series::new(cum).unwrap(), &cfg).unwrap().statistic;
        for r in &res.replicates {
            assert_eq!(r.to_bits(), res.replicates[0].to_bits());
        }
        assert!((res.replicates[0] - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn p_value_is_scale_invariant() {
        let y = walk(14, 90);
        let cfg = TestConfig::new(DetrendSpec::Constant, LagRule::Maic);
        let bs = small_cfg(5, 49);
        let a = run_bootstrap_test(&y, &cfg, &bs).unwrap();
        let b = run_bootstrap_test(&y.scaled(250.0).unwrap(), &cfg, &bs).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn result_fields() {
        let y = walk(15, 80);
        let res = run_bootstrap_test(&y, &TestConfig::default(), &small_cfg(3, 39)).unwrap();
        assert_eq!(res.observed.method, Method::WildBootstrap);
        assert_eq!(res.observed.provenance.b, Some(39));
        assert_eq!(res.observed.p_value, Some(res.p_value));
        assert_eq!(res.reject, res.observed.statistic >= res.cv);
        let k = (res.p_value * 39.0).round();
        assert!((res.p_value - k / 39.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        let y = walk(16, 50);
        let cfg = TestConfig::default();
        assert!(run_bootstrap_test(&y, &cfg, &small_cfg(1, 0)).is_err());
        let bad_alpha = BootstrapConfig {
            alpha: 1.0,
            ..small_cfg(1, 10)
        };
        assert!(run_bootstrap_test(&y, &cfg, &bad_alpha).is_err());
    }
}
