//! Monte Carlo designs and their flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! dgp.T = 100, 250
//! dgp.c = 0, local          # local: -7 (constant) or -13.5 (trend)
//! dgp.errors = iid, ar(0.4), ma(-0.8)
//! dgp.vol = constant, late-up, early-down, custom(4, 0.8)
//! dgp.burn_in = false
//! test.detrend = constant, trend
//! test.statistics = tau, tau*, tau*(q=0), tau-breve, tau-breve*
//! test.lag = rsmaic          # maic | rsmaic | fixed(K)
//! test.bandwidth = 0.1
//! test.kmax = auto           # auto | K
//! test.gamma1 = 1
//! test.gamma2 = 1
//! test.q = auto              # auto | 0 | K, default for bootstrap statistics
//! test.p_star = auto         # auto | K
//! test.multiplier = gaussian
//! mc.reps = 1000
//! mc.B = 199
//! mc.level = 0.05
//! mc.seed = 1
//! mc.size_adjust = true
//! mc.limit_steps = 2000
//! mc.limit_reps = 100000
//! mc.limit_seed = 1
//! ```

use serde::Serialize;
use std::fmt;

use crate::adf::{LagRule, DEFAULT_BANDWIDTH};
use crate::bootstrap::{Multiplier, PStar, QRule};
use crate::error::{Error, Result};
use crate::knot::{KMax, StatisticKind};
use crate::series::DetrendSpec;
use crate::sim::dgp::VolatilitySpec;

/// Non-centrality of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CSpec {
    Value(f64),
    /// `-7` under constant adjustment, `-13.5` under trend adjustment.
    Local,
}

impl CSpec {
    pub fn resolve(&self, detrend: DetrendSpec) -> f64 {
        match *self {
            CSpec::Value(c) => c,
            CSpec::Local => match detrend {
                DetrendSpec::Trend => -13.5,
                _ => -7.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorSpec {
    Iid,
    Ar(f64),
    Ma(f64),
}

impl ErrorSpec {
    /// `(phi, theta)`.
    pub fn coefficients(&self) -> (f64, f64) {
        match *self {
            ErrorSpec::Iid => (0.0, 0.0),
            ErrorSpec::Ar(phi) => (phi, 0.0),
            ErrorSpec::Ma(theta) => (0.0, theta),
        }
    }
}

impl fmt::Display for ErrorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorSpec::Iid => write!(f, "iid"),
            ErrorSpec::Ar(v) => write!(f, "ar({v})"),
            ErrorSpec::Ma(v) => write!(f, "ma({v})"),
        }
    }
}

/// One statistic evaluated in every Monte Carlo replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestSpec {
    pub name: String,
    pub kind: StatisticKind,
    pub bootstrap: bool,
    /// Recolouring order for bootstrap statistics; `None` uses the design default.
    pub q: Option<QRule>,
}

impl TestSpec {
    pub fn parse(token: &str) -> Option<TestSpec> {
        let token = token.trim();
        let (head, q) = match token.split_once('(') {
            Some((head, rest)) => {
                let inner = rest.strip_suffix(')')?.trim();
                let value = inner.strip_prefix("q=")?.trim();
                (head.trim(), Some(parse_q(value)?))
            }
            None => (token, None),
        };
        let (base, bootstrap) = match head.strip_suffix('*') {
            Some(b) => (b, true),
            None => (head, false),
        };
        let kind = match base {
            "tau" => StatisticKind::Tau,
            "tau-breve" => StatisticKind::TauBreve,
            _ => return None,
        };
        if q.is_some() && !bootstrap {
            return None;
        }
        Some(TestSpec {
            name: token.replace(' ', ""),
            kind,
            bootstrap,
            q,
        })
    }
}

fn parse_q(v: &str) -> Option<QRule> {
    match v {
        "auto" | "p" => Some(QRule::Auto),
        "0" => Some(QRule::Zero),
        k => k.parse().ok().map(QRule::Fixed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McDesign {
    pub t_values: Vec<usize>,
    pub c_values: Vec<CSpec>,
    pub errors: Vec<ErrorSpec>,
    pub vols: Vec<VolatilitySpec>,
    pub detrends: Vec<DetrendSpec>,
    pub burn_in: bool,
    pub tests: Vec<TestSpec>,
    pub lag: LagRule,
    pub k_max: KMax,
    pub gamma1: f64,
    pub gamma2: f64,
    pub q: QRule,
    pub p_star: PStar,
    pub multiplier: Multiplier,
    pub reps: usize,
    pub b: usize,
    pub level: f64,
    pub seed: u64,
    pub size_adjust: bool,
    pub limit_steps: usize,
    pub limit_reps: usize,
    pub limit_seed: u64,
}

impl Default for McDesign {
    fn default() -> Self {
        McDesign {
            t_values: vec![100],
            c_values: vec![CSpec::Value(0.0)],
            errors: vec![ErrorSpec::Iid],
            vols: vec![VolatilitySpec::constant()],
            detrends: vec![DetrendSpec::Constant],
            burn_in: false,
            tests: vec![
                TestSpec::parse("tau").expect("valid"),
                TestSpec::parse("tau*").expect("valid"),
            ],
            lag: LagRule::default(),
            k_max: KMax::Auto,
            gamma1: 1.0,
            gamma2: 1.0,
            q: QRule::Auto,
            p_star: PStar::Auto,
            multiplier: Multiplier::Gaussian,
            reps: 1000,
            b: 199,
            level: 0.05,
            seed: 1,
            size_adjust: true,
            limit_steps: 2000,
            limit_reps: 100_000,
            limit_seed: 1,
        }
    }
}

impl McDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.reps == 0 {
            return bad("mc.reps must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("mc.level must lie in (0, 1), got {}", self.level));
        }
        if self.tests.iter().any(|t| t.bootstrap) && self.b == 0 {
            return bad("mc.B must be at least 1".into());
        }
        if [
            self.t_values.len(),
            self.c_values.len(),
            self.errors.len(),
            self.vols.len(),
            self.detrends.len(),
            self.tests.len(),
        ]
        .contains(&0)
        {
            return bad("every grid dimension needs at least one entry".into());
        }
        if self.t_values.iter().any(|t| *t < 10) {
            return bad("dgp.T values must be at least 10".into());
        }
        for c in &self.c_values {
            if let CSpec::Value(v) = c {
                if !(*v <= 0.0) {
                    return bad(format!("dgp.c must be <= 0, got {v}"));
                }
            }
        }
        for e in &self.errors {
            let (phi, theta) = e.coefficients();
            if !(phi.abs() < 1.0 && theta.abs() < 1.0) {
                return bad(format!("error coefficients must lie in (-1, 1): {e}"));
            }
        }
        for v in &self.vols {
            v.validate()?;
        }
        if !(self.gamma1 > 0.5 && self.gamma2 > 0.0) {
            return bad("test.gamma1 must exceed 1/2 and test.gamma2 must be positive".into());
        }
        if self.limit_steps < 1000 || self.limit_reps < 1000 {
            return bad("mc.limit_steps and mc.limit_reps must be at least 1000".into());
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal design.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let lag = match self.lag {
            LagRule::Maic => "maic".to_string(),
            LagRule::Rsmaic { .. } => "rsmaic".to_string(),
            LagRule::Fixed(k) => format!("fixed({k})"),
        };
        let bandwidth = match self.lag {
            LagRule::Rsmaic { bandwidth } => bandwidth,
            _ => DEFAULT_BANDWIDTH,
        };
        let q = |q: QRule| match q {
            QRule::Auto => "auto".to_string(),
            QRule::Zero => "0".to_string(),
            QRule::Fixed(k) => k.to_string(),
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("dgp.T", join(self.t_values.iter().map(|t| t.to_string()).collect()));
        put(
            "dgp.c",
            join(
                self.c_values
                    .iter()
                    .map(|c| match c {
                        CSpec::Value(v) => format!("{v}"),
                        CSpec::Local => "local".into(),
                    })
                    .collect(),
            ),
        );
        put("dgp.errors", join(self.errors.iter().map(|e| e.to_string()).collect()));
        put(
            "dgp.vol",
            join(
                self.vols
                    .iter()
                    .map(|v| {
                        if v.constant {
                            "constant".into()
                        } else {
                            format!("custom({}, {})", v.s2_sq, v.kappa)
                        }
                    })
                    .collect(),
            ),
        );
        put("dgp.burn_in", self.burn_in.to_string());
        put(
            "test.detrend",
            join(self.detrends.iter().map(|d| d.to_string()).collect()),
        );
        put(
            "test.statistics",
            join(self.tests.iter().map(|t| t.name.clone()).collect()),
        );
        put("test.lag", lag);
        put("test.bandwidth", format!("{bandwidth}"));
        put(
            "test.kmax",
            match self.k_max {
                KMax::Auto => "auto".into(),
                KMax::Fixed(k) => k.to_string(),
            },
        );
        put("test.gamma1", format!("{}", self.gamma1));
        put("test.gamma2", format!("{}", self.gamma2));
        put("test.q", q(self.q));
        put(
            "test.p_star",
            match self.p_star {
                PStar::Auto => "auto".into(),
                PStar::Fixed(k) => k.to_string(),
            },
        );
        put("test.multiplier", self.multiplier.as_str().into());
        put("mc.reps", self.reps.to_string());
        put("mc.B", self.b.to_string());
        put("mc.level", format!("{}", self.level));
        put("mc.seed", self.seed.to_string());
        put("mc.size_adjust", self.size_adjust.to_string());
        put("mc.limit_steps", self.limit_steps.to_string());
        put("mc.limit_reps", self.limit_reps.to_string());
        put("mc.limit_seed", self.limit_seed.to_string());
        out
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Split a list on commas that are not inside parentheses.
fn split_list(v: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in v.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                items.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    items.push(cur.trim().to_string());
    items.retain(|s| !s.is_empty());
    items
}

fn call_args<'a>(item: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let inner = item.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| err(line, format!("`{key}`: cannot parse `{v}`")))
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(line, format!("`{key}`: expected true or false"))),
    }
}

fn finite(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(line, key, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(err(line, format!("`{key}`: value must be finite")))
    }
}

/// Parse a design file; unspecified keys keep their defaults.
pub fn parse_design(text: &str) -> Result<McDesign> {
    let mut d = McDesign::default();
    let mut bandwidth = DEFAULT_BANDWIDTH;
    let mut lag_kind = String::from("rsmaic");
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or_default().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(err(line, format!("duplicate key `{key}`")));
        }
        match key {
            "dgp.T" => {
                d.t_values = split_list(value)
                    .iter()
                    .map(|v| num(line, key, v))
                    .collect::<Result<_>>()?
            }
            "dgp.c" => {
                d.c_values = split_list(value)
                    .iter()
                    .map(|v| match v.as_str() {
                        "local" => Ok(CSpec::Local),
                        v => finite(line, key, v).map(CSpec::Value),
                    })
                    .collect::<Result<_>>()?
            }
            "dgp.errors" => {
                d.errors = split_list(value)
                    .iter()
                    .map(|v| {
                        if v == "iid" {
                            return Ok(ErrorSpec::Iid);
                        }
                        if let Some(a) = call_args(v, "ar") {
                            if a.len() == 1 {
                                return finite(line, key, a[0]).map(ErrorSpec::Ar);
                            }
                        }
                        if let Some(a) = call_args(v, "ma") {
                            if a.len() == 1 {
                                return finite(line, key, a[0]).map(ErrorSpec::Ma);
                            }
                        }
                        Err(err(line, format!("unknown error process `{v}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "dgp.vol" => {
                d.vols = split_list(value)
                    .iter()
                    .map(|v| match v.as_str() {
                        "constant" => Ok(VolatilitySpec::constant()),
                        "late-up" => Ok(VolatilitySpec::late_up()),
                        "early-down" => Ok(VolatilitySpec::early_down()),
                        other => match call_args(other, "custom") {
                            Some(a) if a.len() == 2 => Ok(VolatilitySpec::shift(
                                finite(line, key, a[0])?,
                                finite(line, key, a[1])?,
                            )),
                            _ => Err(err(line, format!("unknown volatility `{other}`"))),
                        },
                    })
                    .collect::<Result<_>>()?
            }
            "dgp.burn_in" => d.burn_in = boolean(line, key, value)?,
            "test.detrend" => {
                d.detrends = split_list(value)
                    .iter()
                    .map(|v| {
                        DetrendSpec::parse(v)
                            .ok_or_else(|| err(line, format!("unknown detrend `{v}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "test.statistics" => {
                d.tests = split_list(value)
                    .iter()
                    .map(|v| {
                        TestSpec::parse(v).ok_or_else(|| err(line, format!("unknown statistic `{v}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "test.lag" => lag_kind = value.to_string(),
            "test.bandwidth" => bandwidth = finite(line, key, value)?,
            "test.kmax" => {
                d.k_max = match value {
                    "auto" => KMax::Auto,
                    v => KMax::Fixed(num(line, key, v)?),
                }
            }
            "test.gamma1" => d.gamma1 = finite(line, key, value)?,
            "test.gamma2" => d.gamma2 = finite(line, key, value)?,
            "test.q" => {
                d.q = parse_q(value).ok_or_else(|| err(line, format!("bad q `{value}`")))?
            }
            "test.p_star" => {
                d.p_star = match value {
                    "auto" => PStar::Auto,
                    v => PStar::Fixed(num(line, key, v)?),
                }
            }
            "test.multiplier" => {
                d.multiplier = Multiplier::parse(value)
                    .ok_or_else(|| err(line, format!("unknown multiplier `{value}`")))?
            }
            "mc.reps" => d.reps = num(line, key, value)?,
            "mc.B" => d.b = num(line, key, value)?,
            "mc.level" => d.level = finite(line, key, value)?,
            "mc.seed" => d.seed = num(line, key, value)?,
            "mc.size_adjust" => d.size_adjust = boolean(line, key, value)?,
            "mc.limit_steps" => d.limit_steps = num(line, key, value)?,
            "mc.limit_reps" => d.limit_reps = num(line, key, value)?,
            "mc.limit_seed" => d.limit_seed = num(line, key, value)?,
            other => return Err(err(line, format!("unknown key `{other}`"))),
        }
    }
    d.lag = match lag_kind.as_str() {
        "maic" => LagRule::Maic,
        "rsmaic" => {
            if !(bandwidth > 0.0 && bandwidth <= 1.0) {
                return Err(err(0, "test.bandwidth must lie in (0, 1]"));
            }
            LagRule::Rsmaic { bandwidth }
        }
        other => match call_args(other, "fixed") {
            Some(a) if a.len() == 1 => LagRule::Fixed(num(0, "test.lag", a[0])?),
            _ => return Err(err(0, format!("unknown lag rule `{other}`"))),
        },
    };
    d.validate().map_err(|e| match e {
        Error::InvalidConfig(m) => err(0, m),
        other => other,
    })?;
    Ok(d)
}

/// Desk-scale preset: size and local power at T = 100 and 250.
pub const DESK_PRESET: &str = "\
dgp.T = 100, 250
dgp.c = 0, local
dgp.errors = iid
dgp.vol = constant
test.detrend = constant
test.statistics = tau, tau*
mc.reps = 1000
mc.B = 199
";

/// Full grid of the reference simulation study.
pub const FULL_GRID: &str = "\
dgp.T = 75, 100, 150, 250, 500, 1000
dgp.c = 0, local
dgp.errors = iid, ar(-0.8), ar(-0.4), ar(0.4), ar(0.8), ma(-0.8), ma(-0.4), ma(0.4), ma(0.8)
dgp.vol = constant, early-down, late-up
test.detrend = constant, trend
test.statistics = tau, tau*
mc.reps = 5000
mc.B = 499
";
