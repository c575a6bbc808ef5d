//! Monte Carlo harness: rejection rates, size-adjusted power and reports.
//!
//! Replication `r` of every cell draws its data from `(seed, [0, r])` and its
//! bootstrap multipliers from `(seed, [1, r])`. Cells therefore share common
//! random numbers, which makes size adjustment and comparisons between
//! statistics use matched draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::bootstrap::{draw_multipliers, run_bootstrap_with, BootstrapConfig};
use crate::error::{Error, Result};
use crate::knot::{statistic_pipeline, EnrichmentProvider, StatisticKind, TestConfig};
use crate::limit::{fnv1a64, load_or_simulate, order_statistic_quantile, simulate_limit_null, LimitSimConfig, LimitTable};
use crate::prng::SeedStream;
use crate::series::DetrendSpec;
use crate::sim::design::{CSpec, ErrorSpec, McDesign, TestSpec};
use crate::sim::dgp::{generate, DgpSpec, VolatilitySpec};

/// One point of the design grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McCell {
    pub detrend: DetrendSpec,
    pub t: usize,
    pub errors: ErrorSpec,
    pub vol: VolatilitySpec,
    pub c: CSpec,
}

impl McCell {
    pub fn c_value(&self) -> f64 {
        self.c.resolve(self.detrend)
    }

    pub fn dgp(&self, burn_in: bool) -> DgpSpec {
        let (phi, theta) = self.errors.coefficients();
        DgpSpec {
            t: self.t,
            c: self.c_value(),
            phi,
            theta,
            vol: self.vol,
            burn_in,
        }
    }

    fn at_null(&self) -> McCell {
        McCell {
            c: CSpec::Value(0.0),
            ..*self
        }
    }
}

/// Grid cells ordered by detrending, `T`, error process, volatility, `c`.
pub fn cells(design: &McDesign) -> Vec<McCell> {
    let mut out = Vec::new();
    for &detrend in &design.detrends {
        for &t in &design.t_values {
            for &errors in &design.errors {
                for &vol in &design.vols {
                    for &c in &design.c_values {
                        out.push(McCell {
                            detrend,
                            t,
                            errors,
                            vol,
                            c,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Rejection frequency of one statistic in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub detrend: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub c: f64,
    pub errors: String,
    pub vol: String,
    pub test: String,
    /// Replications that produced a statistic.
    pub reps: usize,
    pub failures: usize,
    pub rejections: usize,
    pub rate: f64,
    /// `sqrt(rate (1 - rate) / reps)`.
    pub se: f64,
    /// Power against the matched-null empirical critical value.
    pub size_adjusted: Option<f64>,
    pub se_adjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub design: McDesign,
    pub rows: Vec<McRow>,
}

#[derive(Clone, Default)]
pub struct McOptions {
    pub enrichment: Option<Arc<dyn EnrichmentProvider>>,
    /// Directory of cached limit tables.
    pub limit_cache: Option<PathBuf>,
    /// Directory of per-cell results; finished cells are replayed from it.
    pub cell_cache: Option<PathBuf>,
    /// Pre-computed limit tables, used when their configuration matches.
    pub tables: Vec<LimitTable>,
}

/// Statistic and decision of one test in one replication; `None` on failure.
pub type Draw = Option<(f64, bool)>;

fn mc_se(rate: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        (rate * (1.0 - rate) / n as f64).sqrt()
    }
}

impl McDesign {
    fn test_config(&self, detrend: DetrendSpec, enrichment: &Option<Arc<dyn EnrichmentProvider>>) -> TestConfig {
        TestConfig {
            detrend,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            lag: self.lag,
            k_max: self.k_max,
            enrichment: enrichment.clone(),
        }
    }

    fn bootstrap_config(&self, test: &TestSpec) -> BootstrapConfig {
        BootstrapConfig {
            b: self.b,
            q: test.q.unwrap_or(self.q),
            p_star: self.p_star,
            multiplier: self.multiplier,
            seed: self.seed,
            alpha: self.level,
            scale_bootstrap_sigma: true,
        }
    }

    pub fn limit_config(&self, detrend: DetrendSpec) -> LimitSimConfig {
        LimitSimConfig {
            steps: self.limit_steps,
            reps: self.limit_reps,
            detrend,
            c: 0.0,
            seed: self.limit_seed,
        }
    }
}

fn limit_table(design: &McDesign, detrend: DetrendSpec, opts: &McOptions) -> Result<LimitTable> {
    let cfg = design.limit_config(detrend);
    if let Some(t) = opts.tables.iter().find(|t| t.config == cfg) {
        return Ok(t.clone());
    }
    match &opts.limit_cache {
        Some(dir) => load_or_simulate(dir, &cfg),
        None => simulate_limit_null(&cfg),
    }
}

/// Per-replication draws for `tests` in `cell`: `[rep][test]`.
pub fn simulate_cell(
    design: &McDesign,
    cell: &McCell,
    tests: &[TestSpec],
    table: Option<&LimitTable>,
    opts: &McOptions,
) -> Result<Vec<Vec<Draw>>> {
    if tests.iter().any(|t| t.kind == StatisticKind::TauBreve) && opts.enrichment.is_none() {
        return Err(Error::EnrichmentUnavailable);
    }
    let root = SeedStream::new(design.seed);
    let data_root = root.split(0);
    let boot_root = root.split(1);
    let dgp = cell.dgp(design.burn_in);
    let test_cfg = design.test_config(cell.detrend, &opts.enrichment);
    let critical = table.map(|t| t.quantile(1.0 - design.level));
    let draws: Vec<Result<Vec<Draw>>> = (0..design.reps)
        .into_par_iter()
        .map(|r| {
            let y = generate(&dgp, &data_root.split(r as u64))?;
            let k_max = test_cfg.k_max.resolve(y.t());
            let mut row = Vec::with_capacity(tests.len());
            for test in tests {
                if test.bootstrap {
                    let bs = design.bootstrap_config(test);
                    let outcome = run_bootstrap_with(
                        &y,
                        &test_cfg,
                        &bs,
                        test.kind,
                        &boot_root.split(r as u64),
                        &|n, s| draw_multipliers(bs.multiplier, n, s),
                    );
                    match outcome {
                        Ok(res) => row.push(Some((res.observed.statistic, res.reject))),
                        Err(Error::EnrichmentUnavailable) => return Err(Error::EnrichmentUnavailable),
                        Err(_) => row.push(None),
                    }
                } else {
                    match statistic_pipeline(y.values(), &test_cfg, test.kind, None, k_max, true) {
                        Ok((ks, _, _)) => {
                            let reject = critical.is_some_and(|cv| ks.statistic >= cv);
                            row.push(Some((ks.statistic, reject)));
                        }
                        Err(Error::EnrichmentUnavailable) => return Err(Error::EnrichmentUnavailable),
                        Err(_) => row.push(None),
                    }
                }
            }
            Ok(row)
        })
        .collect();
    draws.into_iter().collect()
}

fn cell_key(design: &McDesign, cell: &McCell) -> u64 {
    let text = format!(
        "cell v1|{cell:?}|{:?}|{:?}|{:?}|{}|{}|{:?}|{:?}|{:?}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
        design.tests,
        design.lag,
        design.k_max,
        design.gamma1,
        design.gamma2,
        design.q,
        design.p_star,
        design.multiplier,
        design.reps,
        design.b,
        design.level,
        design.seed,
        design.size_adjust,
        design.limit_steps,
        design.limit_reps,
        design.limit_seed,
        design.burn_in,
    );
    fnv1a64(text.as_bytes())
}

fn cell_cache_path(dir: &Path, design: &McDesign, cell: &McCell) -> PathBuf {
    dir.join(format!("cell-{:016x}.json", cell_key(design, cell)))
}

/// Rows for one cell, computing size-adjusted power for asymptotic tests
/// from the matched null draws.
pub fn run_cell(design: &McDesign, cell: &McCell, opts: &McOptions) -> Result<Vec<McRow>> {
    if let Some(dir) = &opts.cell_cache {
        let path = cell_cache_path(dir, design, cell);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(rows) = serde_json::from_str::<Vec<McRow>>(&text) {
                return Ok(rows);
            }
        }
    }
    let needs_table = design.tests.iter().any(|t| !t.bootstrap);
    let table = if needs_table {
        Some(limit_table(design, cell.detrend, opts)?)
    } else {
        None
    };
    let draws = simulate_cell(design, cell, &design.tests, table.as_ref(), opts)?;

    let asymptotic: Vec<TestSpec> = design.tests.iter().filter(|t| !t.bootstrap).cloned().collect();
    let null_draws = if design.size_adjust && !asymptotic.is_empty() {
        if cell.c_value() == 0.0 {
            None
        } else {
            Some(simulate_cell(design, &cell.at_null(), &asymptotic, table.as_ref(), opts)?)
        }
    } else {
        None
    };

    let mut rows = Vec::with_capacity(design.tests.len());
    let mut asym_index = 0;
    for (j, test) in design.tests.iter().enumerate() {
        let stats: Vec<(f64, bool)> = draws.iter().filter_map(|row| row[j]).collect();
        let n = stats.len();
        let rejections = stats.iter().filter(|s| s.1).count();
        let rate = if n == 0 { f64::NAN } else { rejections as f64 / n as f64 };
        let (size_adjusted, se_adjusted) = if design.size_adjust && !test.bootstrap {
            let mut null: Vec<f64> = match &null_draws {
                Some(nd) => nd.iter().filter_map(|row| row[asym_index]).map(|s| s.0).collect(),
                None => stats.iter().map(|s| s.0).collect(),
            };
            asym_index += 1;
            if null.is_empty() || n == 0 {
                (None, None)
            } else {
                null.sort_by(f64::total_cmp);
                let cv = order_statistic_quantile(&null, 1.0 - design.level);
                let hits = stats.iter().filter(|s| s.0 > cv).count();
                let adj = hits as f64 / n as f64;
                (Some(adj), Some(mc_se(adj, n)))
            }
        } else {
            (None, None)
        };
        rows.push(McRow {
            detrend: cell.detrend.to_string(),
            t: cell.t,
            c: cell.c_value(),
            errors: cell.errors.to_string(),
            vol: cell.vol.label(),
            test: test.name.clone(),
            reps: n,
            failures: design.reps - n,
            rejections,
            rate,
            se: mc_se(rate, n),
            size_adjusted,
            se_adjusted,
        });
    }

    if let Some(dir) = &opts.cell_cache {
        std::fs::create_dir_all(dir)?;
        let path = cell_cache_path(dir, design, cell);
        let tmp = path.with_extension("tmp");
        let json = serde_json::to_string_pretty(&rows).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, &path)?;
    }
    Ok(rows)
}

/// Run every cell of the design in grid order.
pub fn run_mc(design: &McDesign, opts: &McOptions) -> Result<McReport> {
    design.validate()?;
    let mut rows = Vec::new();
    for cell in cells(design) {
        rows.extend(run_cell(design, &cell, opts)?);
    }
    Ok(McReport {
        design: design.clone(),
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl McReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "detrend,T,c,errors,vol,test,reps,failures,rejections,rate,se,size_adjusted,se_adjusted\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.4},{:.4},{},{}",
                r.detrend,
                r.t,
                r.c,
                r.errors,
                r.vol,
                r.test,
                r.reps,
                r.failures,
                r.rejections,
                r.rate,
                r.se,
                fmt_opt(r.size_adjusted),
                fmt_opt(r.se_adjusted)
            );
        }
        out
    }

    /// Aligned Markdown table.
    pub fn to_markdown(&self) -> String {
        let header = [
            "detrend", "T", "c", "errors", "vol", "test", "rate", "se", "size-adj", "se-adj", "failures",
        ];
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.detrend.clone(),
                    r.t.to_string(),
                    format!("{}", r.c),
                    r.errors.clone(),
                    r.vol.clone(),
                    r.test.clone(),
                    format!("{:.4}", r.rate),
                    format!("{:.4}", r.se),
                    fmt_opt(r.size_adjusted),
                    fmt_opt(r.se_adjusted),
                    r.failures.to_string(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|j| body.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: Vec<String>| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut out = line(header.iter().map(|h| h.to_string()).collect());
        out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect()));
        for r in body {
            out.push_str(&line(r));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::design::parse_design;

    fn tiny(extra: &str) -> McDesign {
        parse_design(&format!(
            "dgp.T = 60\nmc.reps = 40\nmc.B = 19\nmc.limit_steps = 1000\nmc.limit_reps = 2000\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn grid_shape() {
        let d = tiny("dgp.c = 0, local\ndgp.vol = constant, late-up\n");
        let d = McDesign {
            t_values: vec![60, 80],
            ..d
        };
        assert_eq!(cells(&d).len(), 8);
    }

    #[test]
    fn report_has_one_row_per_cell_and_test() {
        let d = tiny("dgp.c = 0, local\ntest.statistics = tau, tau*, tau*(q=0)\n");
        let report = run_mc(&d, &McOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 6);
        for r in &report.rows {
            assert!(r.rate >= 0.0 && r.rate <= 1.0);
            assert_eq!(r.reps + r.failures, 40);
        }
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 7);
        let md = report.to_markdown();
        assert_eq!(md.lines().count(), 8);
        let widths: Vec<usize> = md.lines().map(str::len).collect();
        assert!(widths.iter().all(|w| *w == widths[0]));
    }

    #[test]
    fn null_size_adjustment_is_self_referential() {
        let d = tiny("test.statistics = tau\n");
        let report = run_mc(&d, &McOptions::default()).unwrap();
        let adj = report.rows[0].size_adjusted.unwrap();
        assert!(adj <= d.level + 1e-12);
        assert!(adj >= d.level - 1.0 / 40.0);
    }

    #[test]
    fn rerun_is_identical_and_cache_replays() {
        let d = tiny("dgp.c = local\n");
        let dir = std::env::temp_dir().join(format!("knotroot-mc-{}", std::process::id()));
        let opts = McOptions {
            cell_cache: Some(dir.clone()),
            ..McOptions::default()
        };
        let a = run_mc(&d, &opts).unwrap();
        let b = run_mc(&d, &opts).unwrap();
        let c = run_mc(&d, &McOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn tau_breve_requires_a_provider() {
        let d = tiny("test.statistics = tau-breve\n");
        assert_eq!(run_mc(&d, &McOptions::default()), Err(Error::EnrichmentUnavailable));
    }
}
