//! Weighted LARS with the Lasso modification.
//!
//! Solves the path of
//!
//! ```text
//! min_b  sum_t (y_t - x_t'b)^2 + 2 lambda sum_j f_j |b_j|,   f_j = w_j^gamma
//! ```
//!
//! by running plain LARS on the rescaled design `x_j / f_j` and mapping the
//! coefficients back. The design is neither centred nor standardised. With
//! this normalisation a knot satisfies `lambda = max_j |x_j' r| / f_j`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, Matrix};

/// Smallest admissible |OLS estimate| for an adaptive weight.
pub const DEGENERATE_ESTIMATE: f64 = 1e-14;

/// Adaptive penalty weights; column 0 is the lagged level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyWeights {
    pub w1: f64,
    pub w2: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl PenaltyWeights {
    pub fn new(w1: f64, w2: Vec<f64>, gamma1: f64, gamma2: f64) -> Result<Self> {
        let pw = PenaltyWeights {
            w1,
            w2,
            gamma1,
            gamma2,
        };
        pw.validate()?;
        Ok(pw)
    }

    /// `w1 = 1/|rho_hat|`, `w2_j = 1/|delta_hat_j|`.
    pub fn from_ols(rho_hat: f64, delta_hat: &[f64], gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(rho_hat.abs() >= DEGENERATE_ESTIMATE) {
            return Err(Error::DegenerateWeight { column: 0 });
        }
        let mut w2 = Vec::with_capacity(delta_hat.len());
        for (j, d) in delta_hat.iter().enumerate() {
            if !(d.abs() >= DEGENERATE_ESTIMATE) {
                return Err(Error::DegenerateWeight { column: j + 1 });
            }
            w2.push(1.0 / d.abs());
        }
        PenaltyWeights::new(1.0 / rho_hat.abs(), w2, gamma1, gamma2)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0) {
            return Err(Error::InvalidConfig(
                "penalty exponents must be positive".into(),
            ));
        }
        let all = std::iter::once(self.w1).chain(self.w2.iter().copied());
        for (column, w) in all.enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::DegenerateWeight { column });
            }
        }
        Ok(())
    }

    /// Per-column penalty factors `[w1^gamma1, w2_1^gamma2, ...]`.
    pub fn factors(&self) -> Vec<f64> {
        std::iter::once(self.w1.powf(self.gamma1))
            .chain(self.w2.iter().map(|w| w.powf(self.gamma2)))
            .collect()
    }

    pub fn scaled(&self, k: f64) -> PenaltyWeights {
        PenaltyWeights {
            w1: self.w1 * k,
            w2: self.w2.iter().map(|w| w * k).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Enter,
    Leave,
}

/// One breakpoint of the solution path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnotEvent {
    pub lambda: f64,
    pub variable: usize,
    pub direction: Direction,
    /// Coefficients on the original scale at this knot.
    pub coefficients: Vec<f64>,
    /// Active set after the event, sorted.
    pub active_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionPath {
    pub knots: Vec<KnotEvent>,
    pub level_column: usize,
    /// Two or more variables competed for the same event; resolved by
    /// lowest column index.
    pub ties: bool,
    /// Coefficients at `lambda = 0` when the path was followed to the end.
    pub end_coefficients: Option<Vec<f64>>,
}

/// Lasso path for `responses ~ design` under the adaptive penalty.
/// Column 0 of `design` is treated as the lagged level.
pub fn weighted_lars(
    responses: &[f64],
    design: &Matrix,
    weights: &PenaltyWeights,
    stop_at_level_entry: bool,
) -> Result<SolutionPath> {
    weights.validate()?;
    if design.cols != weights.w2.len() + 1 {
        return Err(Error::InvalidConfig(format!(
            "design has {} columns but weights describe {}",
            design.cols,
            weights.w2.len() + 1
        )));
    }
    if design.rows != responses.len() {
        return Err(Error::InvalidConfig("response length mismatch".into()));
    }
    let gram = design.gram();
    let xty = design.t_mul(responses);
    let stop = if stop_at_level_entry { Some(0) } else { None };
    lasso_path_gram(&gram, &xty, &weights.factors(), stop)
}

/// LARS-Lasso on sufficient statistics `G = X'X`, `c = X'y` with per-column
/// penalty factors. Stops after the first entry of `stop_column` if given.
pub fn lasso_path_gram(
    gram: &Matrix,
    xty: &[f64],
    factors: &[f64],
    stop_column: Option<usize>,
) -> Result<SolutionPath> {
    let k = gram.rows;
    // rescaled problem
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g.set(i, j, gram.get(i, j) / (factors[i] * factors[j]));
        }
    }
    let c0: Vec<f64> = xty.iter().zip(factors).map(|(c, f)| c / f).collect();
    cholesky(&g)?;

    let to_original = |b: &[f64]| -> Vec<f64> {
        b.iter().zip(factors).map(|(v, f)| v / f).collect()
    };

    let mut beta = vec![0.0; k];
    let mut active: Vec<usize> = Vec::new();
    let mut is_active = vec![false; k];
    let mut ties = false;
    let mut knots = Vec::new();

    let lambda_max = c0.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if lambda_max == 0.0 {
        return Ok(SolutionPath {
            knots,
            level_column: 0,
            ties,
            end_coefficients: Some(vec![0.0; k]),
        });
    }
    let tie_tol = 1e-12 * lambda_max;
    let mut first = 0;
    for j in 1..k {
        if c0[j].abs() > c0[first].abs() + tie_tol {
            first = j;
        }
    }
    if (0..k).any(|j| j != first && (c0[j].abs() - lambda_max).abs() <= tie_tol) {
        ties = true;
    }
    active.push(first);
    is_active[first] = true;
    let mut lambda = lambda_max;
    knots.push(KnotEvent {
        lambda,
        variable: first,
        direction: Direction::Enter,
        coefficients: vec![0.0; k],
        active_set: vec![first],
    });
    if stop_column == Some(first) {
        return Ok(SolutionPath {
            knots,
            level_column: 0,
            ties,
            end_coefficients: None,
        });
    }

    let mut just_dropped: Option<usize> = None;
    // each variable can enter and leave a bounded number of times in practice
    let max_steps = 50 * (k + 1);
    for _ in 0..max_steps {
        // current correlations
        let c: Vec<f64> = (0..k)
            .map(|j| c0[j] - (0..k).map(|i| g.get(j, i) * beta[i]).sum::<f64>())
            .collect();
        let m = active.len();
        let mut g_aa = Matrix::zeros(m, m);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                g_aa.set(a, b, g.get(i, j));
            }
        }
        let signs: Vec<f64> = active
            .iter()
            .map(|&i| {
                if beta[i] != 0.0 {
                    beta[i].signum()
                } else {
                    c[i].signum()
                }
            })
            .collect();
        let l = cholesky(&g_aa)?;
        let d = cholesky_solve(&l, &signs);
        let a: Vec<f64> = (0..k)
            .map(|j| active.iter().zip(&d).map(|(&i, di)| g.get(j, i) * di).sum())
            .collect();

        // (step, is_entry, variable)
        let mut candidates: Vec<(f64, bool, usize)> = Vec::new();
        for j in 0..k {
            if is_active[j] {
                continue;
            }
            // a just-dropped variable sits on the boundary; only a later crossing counts
            let floor = if just_dropped == Some(j) { 1e-10 * lambda_max } else { 0.0 };
            for gamma in [
                (lambda - c[j]) / (1.0 - a[j]),
                (lambda + c[j]) / (1.0 + a[j]),
            ] {
                if gamma.is_finite() && gamma > floor && gamma <= lambda {
                    candidates.push((gamma, true, j));
                }
            }
        }
        for (pos, &i) in active.iter().enumerate() {
            if d[pos] != 0.0 && beta[i] != 0.0 {
                let gamma = -beta[i] / d[pos];
                if gamma > 0.0 && gamma <= lambda {
                    candidates.push((gamma, false, i));
                }
            }
        }
        let best = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        if !best.is_finite() || best >= lambda {
            // no further events: walk to the OLS end point
            for (pos, &i) in active.iter().enumerate() {
                beta[i] += lambda * d[pos];
            }
            return Ok(SolutionPath {
                knots,
                level_column: 0,
                ties,
                end_coefficients: Some(to_original(&beta)),
            });
        }
        let near: Vec<&(f64, bool, usize)> = candidates
            .iter()
            .filter(|c| c.0 <= best + 1e-10 * lambda_max)
            .collect();
        let mut vars: Vec<usize> = near.iter().map(|c| c.2).collect();
        vars.sort_unstable();
        vars.dedup();
        if vars.len() > 1 {
            ties = true;
        }
        let chosen = **near.iter().min_by_key(|c| c.2).unwrap();
        let (gamma, entering, var) = (chosen.0, chosen.1, chosen.2);

        for (pos, &i) in active.iter().enumerate() {
            beta[i] += gamma * d[pos];
        }
        lambda -= gamma;
        if entering {
            active.push(var);
            is_active[var] = true;
            just_dropped = None;
        } else {
            beta[var] = 0.0;
            active.retain(|&i| i != var);
            is_active[var] = false;
            just_dropped = Some(var);
        }
        let mut sorted = active.clone();
        sorted.sort_unstable();
        knots.push(KnotEvent {
            lambda,
            variable: var,
            direction: if entering {
                Direction::Enter
            } else {
                Direction::Leave
            },
            coefficients: to_original(&beta),
            active_set: sorted,
        });
        if entering && stop_column == Some(var) {
            return Ok(SolutionPath {
                knots,
                level_column: 0,
                ties,
                end_coefficients: None,
            });
        }
        if active.is_empty() {
            // cannot happen for a full-rank problem with lambda > 0
            return Err(Error::RankDeficient);
        }
    }
    Err(Error::InvalidConfig(
        "LARS did not terminate within the step limit".into(),
    ))
}

/// Lambda of the earliest event at which the level column enters.
pub fn first_level_knot(path: &SolutionPath) -> Result<f64> {
    path.knots
        .iter()
        .find(|e| e.direction == Direction::Enter && e.variable == path.level_column)
        .map(|e| e.lambda)
        .ok_or(Error::LevelNeverActivates)
}
