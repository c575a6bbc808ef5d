//! Activation-knot statistics `tau` and `tau_breve`.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::adf::{
    adf_design, fit_adf_values, kmax_rule, max_feasible_lag, select_lag_values, AdfFit, LagRule,
};
use crate::error::{Error, Result};
use crate::lars::{first_level_knot, weighted_lars, PenaltyWeights, SolutionPath};
use crate::series::{detrend_values, diff_values, DetrendSpec, DetrendedSeries, Series};

/// Supplies the auxiliary statistic `J` that multiplies the level weight.
///
/// The statistic itself is defined elsewhere; the test only needs a positive
/// scalar computed from the data.
pub trait EnrichmentProvider: Send + Sync {
    fn name(&self) -> &str;
    fn enrichment(&self, y: &[f64], yd: &DetrendedSeries) -> Result<f64>;
}

impl fmt::Debug for dyn EnrichmentProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EnrichmentProvider({})", self.name())
    }
}

/// Enrichment returning a fixed value; useful for diagnostics.
#[derive(Debug, Clone)]
pub struct ConstantEnrichment(pub f64);

impl EnrichmentProvider for ConstantEnrichment {
    fn name(&self) -> &str {
        "constant"
    }
    fn enrichment(&self, _y: &[f64], _yd: &DetrendedSeries) -> Result<f64> {
        Ok(self.0)
    }
}

/// Maximum lag order for lag selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KMax {
    /// `floor(12 (100/T)^{1/4})`, capped at the largest feasible lag.
    #[default]
    Auto,
    Fixed(usize),
}

impl KMax {
    pub fn resolve(&self, t_len: usize) -> usize {
        match *self {
            KMax::Auto => kmax_rule(t_len).min(max_feasible_lag(t_len)),
            KMax::Fixed(k) => k,
        }
    }
}

#[derive(Clone)]
pub struct TestConfig {
    pub detrend: DetrendSpec,
    pub gamma1: f64,
    pub gamma2: f64,
    pub lag: LagRule,
    pub k_max: KMax,
    pub enrichment: Option<Arc<dyn EnrichmentProvider>>,
}

impl fmt::Debug for TestConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestConfig")
            .field("detrend", &self.detrend)
            .field("gamma1", &self.gamma1)
            .field("gamma2", &self.gamma2)
            .field("lag", &self.lag)
            .field("k_max", &self.k_max)
            .field("enrichment", &self.enrichment.as_ref().map(|e| e.name().to_string()))
            .finish()
    }
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            detrend: DetrendSpec::Constant,
            gamma1: 1.0,
            gamma2: 1.0,
            lag: LagRule::default(),
            k_max: KMax::Auto,
            enrichment: None,
        }
    }
}

impl TestConfig {
    pub fn new(detrend: DetrendSpec, lag: LagRule) -> Self {
        TestConfig {
            detrend,
            lag,
            ..TestConfig::default()
        }
    }

    pub fn with_enrichment(mut self, provider: Arc<dyn EnrichmentProvider>) -> Self {
        self.enrichment = Some(provider);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.5) {
            return Err(Error::InvalidConfig(format!(
                "gamma1 must exceed 1/2, got {}",
                self.gamma1
            )));
        }
        if !(self.gamma2 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma2 must be positive, got {}",
                self.gamma2
            )));
        }
        if let LagRule::Rsmaic { bandwidth } = self.lag {
            if !(bandwidth > 0.0 && bandwidth <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "bandwidth must lie in (0, 1], got {bandwidth}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    Tau,
    TauBreve,
}

impl StatisticKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatisticKind::Tau => "tau",
            StatisticKind::TauBreve => "tau-breve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Asymptotic,
    WildBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Provenance {
    pub seed: Option<u64>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub q: Option<usize>,
    pub p_star: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub kind: StatisticKind,
    pub statistic: f64,
    /// First activation knot of the lagged level.
    pub lambda0: f64,
    pub p_value: Option<f64>,
    /// Critical values keyed by nominal level, e.g. `"0.05"`.
    pub critical_values: BTreeMap<String, f64>,
    pub lag_p: usize,
    pub k_max: usize,
    pub sigma2_hat: f64,
    /// Sample size `T`.
    pub t: usize,
    pub detrend: DetrendSpec,
    pub method: Method,
    pub enrichment: Option<f64>,
    pub provenance: Provenance,
}

/// Knot statistic on adjusted data at a given lag order.
#[derive(Debug, Clone)]
pub struct KnotStatistic {
    pub statistic: f64,
    pub lambda0: f64,
    pub sigma2_hat: f64,
    pub fit: AdfFit,
    pub path: SolutionPath,
}

/// `T^{gamma1-1} lambda0 / sigma2` (or without the variance scaling) for
/// the ADF(p) regression of `yd`, with the level weight multiplied by `j`.
pub fn knot_statistic(
    yd: &[f64],
    p: usize,
    gamma1: f64,
    gamma2: f64,
    j: f64,
    scale_by_sigma2: bool,
) -> Result<KnotStatistic> {
    let fit = fit_adf_values(yd, p, true)?;
    let mut weights = PenaltyWeights::from_ols(fit.rho_hat, &fit.delta_hat, gamma1, gamma2)?;
    weights.w1 *= j;
    let dy = diff_values(yd);
    let (x, resp) = adf_design(yd, &dy, p, p + 1, true);
    let path = weighted_lars(&resp, &x, &weights, true)?;
    let lambda0 = first_level_knot(&path)?;
    let t_len = (yd.len() - 1) as f64;
    let mut statistic = t_len.powf(gamma1 - 1.0) * lambda0;
    if scale_by_sigma2 {
        if fit.sigma2_hat <= 0.0 {
            return Err(Error::AllZeroResiduals);
        }
        statistic /= fit.sigma2_hat;
    }
    Ok(KnotStatistic {
        statistic,
        lambda0,
        sigma2_hat: fit.sigma2_hat,
        fit,
        path,
    })
}

/// Full pipeline on raw data values: detrend, pick the lag, compute the
/// statistic. Shared by the observed-data and bootstrap paths.
pub(crate) fn statistic_pipeline(
    y: &[f64],
    cfg: &TestConfig,
    kind: StatisticKind,
    lag_override: Option<LagRule>,
    k_max: usize,
    scale_by_sigma2: bool,
) -> Result<(KnotStatistic, usize, Option<f64>)> {
    let yd = detrend_values(y, cfg.detrend)?;
    let rule = lag_override.unwrap_or(cfg.lag);
    let p = select_lag_values(&yd.values, rule, k_max)?.chosen;
    let j = match kind {
        StatisticKind::Tau => None,
        StatisticKind::TauBreve => {
            let provider = cfg.enrichment.as_ref().ok_or(Error::EnrichmentUnavailable)?;
            let j = provider.enrichment(y, &yd)?;
            if !(j.is_finite() && j > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "enrichment statistic must be positive and finite, got {j}"
                )));
            }
            Some(j)
        }
    };
    let ks = knot_statistic(
        &yd.values,
        p,
        cfg.gamma1,
        cfg.gamma2,
        j.unwrap_or(1.0),
        scale_by_sigma2,
    )?;
    Ok((ks, p, j))
}

fn run_statistic(y: &Series, cfg: &TestConfig, kind: StatisticKind) -> Result<TestResult> {
    cfg.validate()?;
    let t_len = y.t();
    let k_max = cfg.k_max.resolve(t_len);
    let (ks, p, j) = statistic_pipeline(y.values(), cfg, kind, None, k_max, true)?;
    Ok(TestResult {
        kind,
        statistic: ks.statistic,
        lambda0: ks.lambda0,
        p_value: None,
        critical_values: BTreeMap::new(),
        lag_p: p,
        k_max,
        sigma2_hat: ks.sigma2_hat,
        t: t_len,
        detrend: cfg.detrend,
        method: Method::Asymptotic,
        enrichment: j,
        provenance: Provenance::default(),
    })
}

/// The `tau` statistic: first activation knot of the lagged level on the
/// adaptive Lasso path, scaled by `T^{gamma1-1}` and the OLS error variance.
pub fn tau_statistic(y: &Series, cfg: &TestConfig) -> Result<TestResult> {
    run_statistic(y, cfg, StatisticKind::Tau)
}

/// `tau` with the level weight enriched as `w1 * J`.
pub fn tau_breve_statistic(y: &Series, cfg: &TestConfig) -> Result<TestResult> {
    if cfg.enrichment.is_none() {
        return Err(Error::EnrichmentUnavailable);
    }
    run_statistic(y, cfg, StatisticKind::TauBreve)
}
