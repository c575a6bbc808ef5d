//! Local-to-unity autoregressions with ARMA(1,1)-type errors and smooth
//! logistic shifts in the unconditional variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prng::SeedStream;
use crate::series::Series;

/// Pre-sample length discarded when burn-in is enabled.
pub const BURN_IN: usize = 50;

/// Slope of the logistic variance transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// `25 / T`.
    LocalDrift,
    Fixed(f64),
}

/// `sigma_t^2 = s1^2 + (s2^2 - s1^2) / (1 + exp(-g (t - floor(kappa T))))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySpec {
    pub s1_sq: f64,
    pub s2_sq: f64,
    pub kappa: f64,
    pub gamma_mode: GammaMode,
    /// `sigma_t = s1` throughout.
    pub constant: bool,
}

impl Default for VolatilitySpec {
    fn default() -> Self {
        VolatilitySpec::constant()
    }
}

impl VolatilitySpec {
    pub fn constant() -> Self {
        VolatilitySpec {
            s1_sq: 1.0,
            s2_sq: 1.0,
            kappa: 0.5,
            gamma_mode: GammaMode::LocalDrift,
            constant: true,
        }
    }

    pub fn shift(s2_sq: f64, kappa: f64) -> Self {
        VolatilitySpec {
            s1_sq: 1.0,
            s2_sq,
            kappa,
            gamma_mode: GammaMode::LocalDrift,
            constant: false,
        }
    }

    /// Late upward shift: `kappa = 0.8`, `s2^2 = 4`.
    pub fn late_up() -> Self {
        VolatilitySpec::shift(4.0, 0.8)
    }

    /// Early downward shift: `kappa = 0.2`, `s2^2 = 0.25`.
    pub fn early_down() -> Self {
        VolatilitySpec::shift(0.25, 0.2)
    }

    pub fn label(&self) -> String {
        if self.constant {
            "constant".into()
        } else if *self == VolatilitySpec::late_up() {
            "late-up".into()
        } else if *self == VolatilitySpec::early_down() {
            "early-down".into()
        } else {
            format!("custom({},{})", self.s2_sq, self.kappa)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s1_sq > 0.0 && self.s2_sq > 0.0 && self.s1_sq.is_finite() && self.s2_sq.is_finite()) {
            return Err(Error::InvalidConfig("regime variances must be positive".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "kappa must lie in (0, 1), got {}",
                self.kappa
            )));
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidConfig("transition slope must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `sigma_t` for `t = 0..=T`.
pub fn volatility_path(spec: &VolatilitySpec, t_len: usize) -> Vec<f64> {
    if spec.constant {
        return vec![spec.s1_sq.sqrt(); t_len + 1];
    }
    let g = match spec.gamma_mode {
        GammaMode::LocalDrift => 25.0 / t_len as f64,
        GammaMode::Fixed(g) => g,
    };
    let mid = (spec.kappa * t_len as f64).floor();
    (0..=t_len)
        .map(|t| {
            let s = 1.0 / (1.0 + libm::exp(-g * (t as f64 - mid)));
            (spec.s1_sq + (spec.s2_sq - spec.s1_sq) * s).sqrt()
        })
        .collect()
}

/// `y_t = (1 + c/T) y_{t-1} + v_t`, `v_t = phi v_{t-1} + theta e_{t-1} + sigma_t e_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(rename = "T")]
    pub t: usize,
    pub c: f64,
    pub phi: f64,
    pub theta: f64,
    pub vol: VolatilitySpec,
    /// Run the error recursion for [`BURN_IN`] pre-sample periods.
    pub burn_in: bool,
}

impl DgpSpec {
    pub fn random_walk(t: usize) -> Self {
        DgpSpec {
            t,
            c: 0.0,
            phi: 0.0,
            theta: 0.0,
            vol: VolatilitySpec::constant(),
            burn_in: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::InvalidConfig("T must be at least 2".into()));
        }
        if !(self.c <= 0.0) {
            return Err(Error::InvalidConfig(format!("c must be <= 0, got {}", self.c)));
        }
        if !(self.phi.abs() < 1.0 && self.theta.abs() < 1.0) {
            return Err(Error::InvalidConfig(
                "error coefficients must lie in (-1, 1)".into(),
            ));
        }
        self.vol.validate()
    }

    /// Number of standard normal draws consumed.
    pub fn innovations_len(&self) -> usize {
        self.t + 1 + if self.burn_in { BURN_IN } else { 0 }
    }
}

/// Draw a path from the stream's standard normals.
pub fn generate(spec: &DgpSpec, stream: &SeedStream) -> Result<Series> {
    let eps = stream.standard_normal(spec.innovations_len());
    generate_with_innovations(spec, &eps)
}

/// Draw a path from supplied innovations `e` (length [`DgpSpec::innovations_len`]).
/// Pre-sample `v` and `e` are zero; burn-in periods use `sigma_0`.
pub fn generate_with_innovations(spec: &DgpSpec, eps: &[f64]) -> Result<Series> {
    spec.validate()?;
    if eps.len() != spec.innovations_len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} innovations, got {}",
            spec.innovations_len(),
            eps.len()
        )));
    }
    let sigma = volatility_path(&spec.vol, spec.t);
    let burn = eps.len() - (spec.t + 1);
    let mut v_prev = 0.0;
    let mut e_prev = 0.0;
    let mut v = Vec::with_capacity(spec.t + 1);
    for (i, e) in eps.iter().enumerate() {
        let s = sigma[i.saturating_sub(burn)];
        let vt = spec.phi * v_prev + spec.theta * e_prev + s * e;
        if i >= burn {
            v.push(vt);
        }
        v_prev = vt;
        e_prev = *e;
    }
    let rho = 1.0 + spec.c / spec.t as f64;
    let mut y = Vec::with_capacity(spec.t + 1);
    y.push(0.0);
    for vt in &v[1..] {
        let prev = *y.last().expect("y_0 pushed");
        y.push(rho * prev + vt);
    }
    Series::new(y)
}
