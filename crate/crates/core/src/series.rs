//! Time-series container, first-difference detrending and differencing.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// A univariate series `y_0, ..., y_T` (length `T + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    label: Option<String>,
}

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::SeriesTooShort {
                need: 2,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Series {
            values,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Number of observations, `T + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The sample size `T` (index of the last observation).
    pub fn t(&self) -> usize {
        self.values.len() - 1
    }

    pub fn scaled(&self, a: f64) -> Result<Series> {
        Series::new(self.values.iter().map(|v| a * v).collect())
    }
}

/// Deterministic component removed before testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetrendSpec {
    None,
    #[default]
    Constant,
    Trend,
}

impl DetrendSpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetrendSpec::None => "none",
            DetrendSpec::Constant => "constant",
            DetrendSpec::Trend => "trend",
        }
    }

    pub fn parse(s: &str) -> Option<DetrendSpec> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Some(DetrendSpec::None),
            "constant" | "const" | "c" => Some(DetrendSpec::Constant),
            "trend" | "ct" => Some(DetrendSpec::Trend),
            _ => None,
        }
    }
}

impl fmt::Display for DetrendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Output of [`detrend_fd`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetrendedSeries {
    pub values: Vec<f64>,
    pub spec: DetrendSpec,
    /// `[]` for `None`, `[mu]` for `Constant`, `[mu, beta]` for `Trend`.
    pub theta_hat: Vec<f64>,
}

impl DetrendedSeries {
    /// Wrap values that are already adjusted (no deterministic terms).
    pub fn raw(values: Vec<f64>) -> Self {
        DetrendedSeries {
            values,
            spec: DetrendSpec::None,
            theta_hat: Vec::new(),
        }
    }

    pub fn t(&self) -> usize {
        self.values.len() - 1
    }
}

/// First-difference detrending: the intercept is the initial value and the
/// slope is the mean first difference `(y_T - y_0) / T`.
pub fn detrend_fd(y: &Series, spec: DetrendSpec) -> Result<DetrendedSeries> {
    detrend_values(y.values(), spec)
}

pub(crate) fn detrend_values(y: &[f64], spec: DetrendSpec) -> Result<DetrendedSeries> {
    let need = if spec == DetrendSpec::Trend { 3 } else { 2 };
    if y.len() < need {
        return Err(Error::SeriesTooShort { need, got: y.len() });
    }
    let mu = y[0];
    let (values, theta_hat) = match spec {
        DetrendSpec::None => (y.to_vec(), Vec::new()),
        DetrendSpec::Constant => (y.iter().map(|v| v - mu).collect(), vec![mu]),
        DetrendSpec::Trend => {
            let t_len = y.len() - 1;
            let beta = (y[t_len] - mu) / t_len as f64;
            let mut out: Vec<f64> = y
                .iter()
                .enumerate()
                .map(|(t, v)| v - mu - beta * t as f64)
                .collect();
            out[0] = 0.0;
            out[t_len] = 0.0;
            (out, vec![mu, beta])
        }
    };
    Ok(DetrendedSeries {
        values,
        spec,
        theta_hat,
    })
}

/// First differences `y_t - y_{t-1}`, `t = 1..T`.
pub fn diff(y: &Series) -> Vec<f64> {
    diff_values(y.values())
}

pub(crate) fn diff_values(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}
