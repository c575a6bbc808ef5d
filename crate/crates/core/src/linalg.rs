//! Small dense least-squares kernels (row-major, a handful of columns).

use crate::error::{Error, Result};

/// Relative pivot threshold below which a design counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// `X'X`.
    pub fn gram(&self) -> Matrix {
        let k = self.cols;
        let mut g = Matrix::zeros(k, k);
        for r in 0..self.rows {
            let row = &self.data[r * k..(r + 1) * k];
            for i in 0..k {
                let xi = row[i];
                for j in i..k {
                    g.data[i * k + j] += xi * row[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                g.data[i * k + j] = g.data[j * k + i];
            }
        }
        g
    }

    /// `X'y`.
    pub fn t_mul(&self, y: &[f64]) -> Vec<f64> {
        let k = self.cols;
        let mut out = vec![0.0; k];
        for (r, yr) in y.iter().enumerate().take(self.rows) {
            let row = &self.data[r * k..(r + 1) * k];
            for (o, x) in out.iter_mut().zip(row) {
                *o += x * yr;
            }
        }
        out
    }

    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(b)
                    .map(|(x, c)| x * c)
                    .sum()
            })
            .collect()
    }
}

/// Least squares via Householder QR. Returns the coefficient vector.
pub fn lstsq(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (n, k) = (x.rows, x.cols);
    if n < k {
        return Err(Error::RankDeficient);
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..k).map(|c| x.column(c)).collect();
    let mut b = y.to_vec();
    let col_norm_max = a
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if col_norm_max == 0.0 {
        return Err(Error::RankDeficient);
    }
    let mut diag = vec![0.0; k];
    for j in 0..k {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * col_norm_max {
            return Err(Error::RankDeficient);
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[j] = alpha;
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j + 1) {
                let dot: f64 = v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum();
                let f = 2.0 * dot / vnorm2;
                for (cv, vv) in col[j..].iter_mut().zip(&v) {
                    *cv -= f * vv;
                }
            }
            let dot: f64 = v.iter().zip(&b[j..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (bv, vv) in b[j..].iter_mut().zip(&v) {
                *bv -= f * vv;
            }
        }
    }
    // back substitution on R (diag on the diagonal, a[c][r] above it)
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = b[j];
        for c in j + 1..k {
            s -= a[c][j] * beta[c];
        }
        beta[j] = s / diag[j];
    }
    Ok(beta)
}

/// Cholesky factor `L` (lower, row-major) of a symmetric positive definite matrix.
pub fn cholesky(g: &Matrix) -> Result<Matrix> {
    let k = g.rows;
    let mut l = Matrix::zeros(k, k);
    let scale = (0..k).map(|i| g.get(i, i).abs()).fold(0.0, f64::max);
    for i in 0..k {
        for j in 0..=i {
            let mut s = g.get(i, j);
            for m in 0..j {
                s -= l.get(i, m) * l.get(j, m);
            }
            if i == j {
                if s <= RANK_TOL * RANK_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::RankDeficient);
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `L L' x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let k = l.rows;
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for m in 0..i {
            s -= l.get(i, m) * z[m];
        }
        z[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = z[i];
        for m in i + 1..k {
            s -= l.get(m, i) * x[m];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
