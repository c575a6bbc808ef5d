//! Null distribution of `tau` from the discretised limit functional
//! `(W_c(1)^2 - 1)^2 / (4 int_0^1 W_c(r)^2 dr)`, critical-value tables and
//! their on-disk cache format.

use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::knot::TestResult;
use crate::prng::SeedStream;
use crate::series::{detrend_values, DetrendSpec};

pub const HEADLINE_PROBS: [f64; 3] = [0.90, 0.95, 0.99];
const TABLE_MAGIC: &str = "# knotroot limit table v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSimConfig {
    pub steps: usize,
    pub reps: usize,
    pub detrend: DetrendSpec,
    pub c: f64,
    pub seed: u64,
}

impl Default for LimitSimConfig {
    fn default() -> Self {
        LimitSimConfig {
            steps: 2000,
            reps: 100_000,
            detrend: DetrendSpec::Constant,
            c: 0.0,
            seed: 1,
        }
    }
}

impl LimitSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1000 {
            return Err(Error::InvalidConfig(format!(
                "steps must be at least 1000, got {}",
                self.steps
            )));
        }
        if self.reps < 1000 {
            return Err(Error::InvalidConfig(format!(
                "reps must be at least 1000, got {}",
                self.reps
            )));
        }
        if !(self.c <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "non-centrality must be <= 0, got {}",
                self.c
            )));
        }
        Ok(())
    }

    fn canonical(&self) -> String {
        format!(
            "detrend={} c={} steps={} reps={} seed={}",
            self.detrend, self.c, self.steps, self.reps, self.seed
        )
    }

    /// FNV-1a digest of the canonical configuration string.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.canonical().as_bytes())
    }
}

pub(crate) fn fnv1a64(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in data {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Sorted limit sample plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitTable {
    pub config: LimitSimConfig,
    sample: Vec<f64>,
}

impl LimitTable {
    pub fn from_sample(config: LimitSimConfig, mut sample: Vec<f64>) -> Self {
        sample.sort_by(f64::total_cmp);
        LimitTable { config, sample }
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    /// Empirical quantile: the `ceil(u n)`-th order statistic.
    pub fn quantile(&self, u: f64) -> f64 {
        order_statistic_quantile(&self.sample, u)
    }

    pub fn headline(&self) -> Vec<(f64, f64)> {
        HEADLINE_PROBS.iter().map(|&u| (u, self.quantile(u))).collect()
    }

    /// Fraction of the limit sample at or above `stat`.
    pub fn p_value(&self, stat: f64) -> f64 {
        let below = self.sample.partition_point(|v| *v < stat);
        (self.sample.len() - below) as f64 / self.sample.len() as f64
    }
}

/// `ceil(u n)`-th smallest element of a sorted sample.
pub fn order_statistic_quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    // guard against u * n landing a hair above an integer
    let k = ((u * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[k - 1]
}

/// `(W(1)^2 - 1)^2 / (4 int W^2)` with a left Riemann sum; `path[0] = W(0)`.
pub fn limit_functional(path: &[f64]) -> f64 {
    let steps = path.len() - 1;
    let w1 = path[steps];
    let integral: f64 = path[..steps].iter().map(|w| w * w).sum::<f64>() / steps as f64;
    let num = w1 * w1 - 1.0;
    num * num / (4.0 * integral)
}

/// Discretised Ornstein-Uhlenbeck path on `steps` increments driven by the
/// given standard normals, with the detrending projection applied.
pub fn ou_path(normals: &[f64], c: f64, detrend: DetrendSpec) -> Vec<f64> {
    let steps = normals.len();
    let dt = 1.0 / steps as f64;
    let decay = libm::exp(c * dt);
    let sd = dt.sqrt();
    let mut path = Vec::with_capacity(steps + 1);
    path.push(0.0);
    let mut w = 0.0;
    for z in normals {
        w = decay * w + sd * z;
        path.push(w);
    }
    match detrend {
        DetrendSpec::None => path,
        spec => detrend_values(&path, spec).map(|d| d.values).unwrap_or(path),
    }
}

/// Draw `reps` values of the limit functional. Replicate `r` uses the
/// stream `(seed, [r])`, so the result does not depend on thread count.
pub fn simulate_limit_null(cfg: &LimitSimConfig) -> Result<LimitTable> {
    cfg.validate()?;
    let root = SeedStream::new(cfg.seed);
    let sample: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let z = root.split(r as u64).standard_normal(cfg.steps);
            limit_functional(&ou_path(&z, cfg.c, cfg.detrend))
        })
        .collect();
    Ok(LimitTable::from_sample(*cfg, sample))
}

/// Right-sided decision against a limit table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub reject: bool,
    pub p_value: f64,
    pub critical_value: f64,
    pub level: f64,
    /// Smallest non-zero p-value the table can express.
    pub granularity: f64,
}

pub fn asymptotic_decision(stat: &TestResult, level: f64, table: &LimitTable) -> Result<Decision> {
    if stat.detrend != table.config.detrend {
        return Err(Error::DetrendMismatch {
            statistic: stat.detrend.to_string(),
            table: table.config.detrend.to_string(),
        });
    }
    if table.config.c != 0.0 {
        return Err(Error::InvalidConfig(
            "critical values require a table simulated at c = 0".into(),
        ));
    }
    decide(stat.statistic, level, table)
}

pub fn decide(statistic: f64, level: f64, table: &LimitTable) -> Result<Decision> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {level}")));
    }
    let critical_value = table.quantile(1.0 - level);
    Ok(Decision {
        reject: statistic >= critical_value,
        p_value: table.p_value(statistic),
        critical_value,
        level,
        granularity: 1.0 / table.sample.len() as f64,
    })
}

/// Serialise a table: header, headline quantiles, then every order statistic
/// as a `(probability, value)` pair.
pub fn write_table(table: &LimitTable) -> String {
    let cfg = &table.config;
    let mut out = String::new();
    let _ = writeln!(out, "{TABLE_MAGIC}");
    let _ = writeln!(out, "# config {}", cfg.canonical());
    let _ = writeln!(out, "# hash {:016x}", cfg.hash());
    for (u, q) in table.headline() {
        let _ = writeln!(out, "quantile {u} {q}");
    }
    let n = table.sample.len();
    for (i, v) in table.sample.iter().enumerate() {
        let _ = writeln!(out, "order {} {v}", (i + 1) as f64 / n as f64);
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_config(line_no: usize, text: &str) -> Result<LimitSimConfig> {
    let mut detrend = None;
    let mut c = None;
    let mut steps = None;
    let mut reps = None;
    let mut seed = None;
    for token in text.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, format!("malformed config token `{token}`")))?;
        let bad = |_| parse_err(line_no, format!("bad value for `{key}`"));
        match key {
            "detrend" => {
                detrend = Some(
                    DetrendSpec::parse(value)
                        .ok_or_else(|| parse_err(line_no, "unknown detrend kind"))?,
                )
            }
            "c" => c = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "steps" => steps = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "reps" => reps = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            other => return Err(parse_err(line_no, format!("unknown config key `{other}`"))),
        }
    }
    let missing = |k: &str| parse_err(line_no, format!("config is missing `{k}`"));
    Ok(LimitSimConfig {
        detrend: detrend.ok_or_else(|| missing("detrend"))?,
        c: c.ok_or_else(|| missing("c"))?,
        steps: steps.ok_or_else(|| missing("steps"))?,
        reps: reps.ok_or_else(|| missing("reps"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

/// Parse a table written by [`write_table`], checking the hash and the
/// consistency of every line.
pub fn parse_table(text: &str) -> Result<LimitTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == TABLE_MAGIC => {}
        _ => return Err(parse_err(1, "missing table header")),
    }
    let (n2, cfg_line) = lines.next().ok_or_else(|| parse_err(2, "missing config line"))?;
    let cfg_text = cfg_line
        .strip_prefix("# config ")
        .ok_or_else(|| parse_err(n2, "expected `# config ...`"))?;
    let config = parse_config(n2, cfg_text)?;
    let (n3, hash_line) = lines.next().ok_or_else(|| parse_err(3, "missing hash line"))?;
    let hash_text = hash_line
        .strip_prefix("# hash ")
        .ok_or_else(|| parse_err(n3, "expected `# hash ...`"))?;
    let hash = u64::from_str_radix(hash_text.trim(), 16)
        .map_err(|_| parse_err(n3, "hash is not hexadecimal"))?;
    if hash != config.hash() {
        return Err(parse_err(n3, "hash does not match the configuration"));
    }
    if config.reps == 0 || config.reps > 100_000_000 {
        return Err(parse_err(n2, "implausible replication count"));
    }

    let mut headline = Vec::new();
    let mut sample = Vec::with_capacity(config.reps.min(1 << 20));
    for (no, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or_default();
        let prob: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(no, "missing probability"))?;
        let value: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(no, "missing value"))?;
        if parts.next().is_some() {
            return Err(parse_err(no, "trailing fields"));
        }
        if !(value.is_finite() && prob.is_finite()) {
            return Err(parse_err(no, "non-finite entry"));
        }
        match tag {
            "quantile" => headline.push((no, prob, value)),
            "order" => {
                let i = sample.len() + 1;
                if i > config.reps {
                    return Err(parse_err(no, "more order statistics than replications"));
                }
                let want = i as f64 / config.reps as f64;
                if (prob - want).abs() > 1e-9 {
                    return Err(parse_err(no, "order statistic probability out of sequence"));
                }
                if sample.last().is_some_and(|last: &f64| value < *last) {
                    return Err(parse_err(no, "order statistics are not sorted"));
                }
                sample.push(value);
            }
            other => return Err(parse_err(no, format!("unknown record `{other}`"))),
        }
    }
    if sample.len() != config.reps {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {} order statistics, found {}", config.reps, sample.len()),
        ));
    }
    let table = LimitTable { config, sample };
    for (no, prob, value) in headline {
        if !(0.0..=1.0).contains(&prob) || table.quantile(prob) != value {
            return Err(parse_err(no, "headline quantile disagrees with the sample"));
        }
    }
    Ok(table)
}

/// File name of a cached table inside `dir`.
pub fn cache_path(dir: &Path, cfg: &LimitSimConfig) -> PathBuf {
    dir.join(format!(
        "limit-{}-{:016x}.txt",
        cfg.detrend,
        cfg.hash()
    ))
}

/// Load the table for `cfg` from `dir`, simulating and storing it on a miss
/// (or when the cached file is unreadable).
pub fn load_or_simulate(dir: &Path, cfg: &LimitSimConfig) -> Result<LimitTable> {
    let path = cache_path(dir, cfg);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(table) = parse_table(&text) {
            if table.config == *cfg {
                return Ok(table);
            }
        }
    }
    let table = simulate_limit_null(cfg)?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, write_table(&table))?;
    std::fs::rename(&tmp, &path)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knot::{Method, Provenance, StatisticKind};
    use std::collections::BTreeMap;

    fn small_cfg(seed: u64) -> LimitSimConfig {
        LimitSimConfig {
            steps: 1000,
            reps: 2000,
            detrend: DetrendSpec::Constant,
            c: 0.0,
            seed,
        }
    }

    fn result(stat: f64, detrend: DetrendSpec) -> TestResult {
        TestResult {
            kind: StatisticKind::Tau,
            statistic: stat,
            lambda0: stat,
            p_value: None,
            critical_values: BTreeMap::new(),
            lag_p: 0,
            k_max: 0,
            sigma2_hat: 1.0,
            t: 100,
            detrend,
            method: Method::Asymptotic,
            enrichment: None,
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn functional_vanishes_when_endpoint_is_unit() {
        let path = [0.0, 0.3, -0.2, 0.5, 1.0];
        assert_eq!(limit_functional(&path), 0.0);
        let path = [0.0, -0.4, -1.0];
        assert_eq!(limit_functional(&path), 0.0);
    }

    #[test]
    fn trend_projection_pins_the_endpoint() {
        let z = SeedStream::new(3).standard_normal(1000);
        let p = ou_path(&z, -5.0, DetrendSpec::Trend);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[1000], 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(simulate_limit_null(&LimitSimConfig {
            reps: 10,
            ..LimitSimConfig::default()
        })
        .is_err());
        assert!(simulate_limit_null(&LimitSimConfig {
            steps: 999,
            ..LimitSimConfig::default()
        })
        .is_err());
        assert!(simulate_limit_null(&LimitSimConfig {
            c: 1.0,
            ..LimitSimConfig::default()
        })
        .is_err());
    }

    #[test]
    fn decisions_and_p_values() {
        let table = simulate_limit_null(&small_cfg(5)).unwrap();
        let q90 = table.quantile(0.90);
        let d = asymptotic_decision(&result(q90 * 0.5, DetrendSpec::Constant), 0.10, &table).unwrap();
        assert!(!d.reject);
        let max = *table.sample().last().unwrap();
        let d = asymptotic_decision(&result(max, DetrendSpec::Constant), 0.05, &table).unwrap();
        assert!(d.reject);
        assert_eq!(d.p_value, 1.0 / 2000.0);
        let d = asymptotic_decision(&result(0.0, DetrendSpec::Constant), 0.05, &table).unwrap();
        assert_eq!(d.p_value, 1.0);
        assert!(matches!(
            asymptotic_decision(&result(1.0, DetrendSpec::Trend), 0.05, &table),
            Err(Error::DetrendMismatch { .. })
        ));
    }

    #[test]
    fn decision_is_monotone() {
        let table = simulate_limit_null(&small_cfg(6)).unwrap();
        let top = *table.sample().last().unwrap();
        let mut rejected = false;
        for i in 0..=400 {
            let stat = top * i as f64 / 400.0;
            let d = decide(stat, 0.05, &table).unwrap();
            assert!(!(rejected && !d.reject));
            rejected = d.reject;
        }
        assert!(rejected);
    }

    #[test]
    fn table_round_trip_and_corruption() {
        let table = simulate_limit_null(&small_cfg(7)).unwrap();
        let text = write_table(&table);
        assert_eq!(parse_table(&text).unwrap(), table);
        let bad_hash = text.replacen("# hash ", "# hash f", 1);
        assert!(parse_table(&bad_hash).is_err());
        let truncated: String = text.lines().take(100).collect::<Vec<_>>().join("\n");
        assert!(parse_table(&truncated).is_err());
        assert!(parse_table("").is_err());
    }

    #[test]
    fn cache_replays() {
        let dir = std::env::temp_dir().join(format!("knotroot-cache-{}", std::process::id()));
        let cfg = small_cfg(8);
        let a = load_or_simulate(&dir, &cfg).unwrap();
        assert!(cache_path(&dir, &cfg).exists());
        let b = load_or_simulate(&dir, &cfg).unwrap();
        assert_eq!(a, b);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn thread_count_does_not_change_the_sample() {
        let cfg = small_cfg(9);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_limit_null(&cfg).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| simulate_limit_null(&cfg).unwrap());
        assert_eq!(one, four);
    }
}
