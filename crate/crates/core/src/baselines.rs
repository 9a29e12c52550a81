//! Linear, ridge and lasso regression from flattened input windows to
//! flattened target windows.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Diagonal jitter that keeps the normal equations solvable.
pub const JITTER: f64 = 1e-10;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;
pub const DEFAULT_LASSO_LAMBDA: f64 = 0.01;
pub const LASSO_MAX_ITER: usize = 1000;
pub const LASSO_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("regularization strength must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("normal equations could not be solved")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "lowercase")]
pub enum Regularization {
    None,
    L2(f64),
    L1(f64),
}

/// `y = W x + b`, with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub regularization: Regularization,
}

impl LinearMap {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            regularization: Regularization::None,
        }
    }

    pub fn weight(&self, o: usize, i: usize) -> f64 {
        self.weights[o * self.in_dim + i]
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.in_dim == 0
            || self.out_dim == 0
            || self.in_dim.checked_mul(self.out_dim) != Some(self.weights.len())
            || self.bias.len() != self.out_dim
        {
            return Err(BaselineError::ShapeMismatch("linear map dimensions".into()));
        }
        Ok(())
    }

    fn from_matrix(w: &DMatrix<f64>, bias: Vec<f64>, regularization: Regularization) -> Self {
        // w is in_dim x out_dim
        let (d, m) = w.shape();
        let mut weights = Vec::with_capacity(d * m);
        for o in 0..m {
            weights.extend(w.column(o).iter());
        }
        Self {
            in_dim: d,
            out_dim: m,
            weights,
            bias,
            regularization,
        }
    }
}

/// Coordinate-descent outcome, worst case over output columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LassoReport {
    pub iterations: usize,
    pub converged: bool,
}

fn check_xy(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(), BaselineError> {
    if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 || x.nrows() != y.nrows() {
        return Err(BaselineError::ShapeMismatch(format!(
            "X {:?} vs Y {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<(), BaselineError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(BaselineError::InvalidLambda(lambda));
    }
    Ok(())
}

/// Normal equations on `[X 1]`, penalizing only the weight rows.
fn solve_augmented(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    regularization: Regularization,
) -> Result<LinearMap, BaselineError> {
    check_xy(x, y)?;
    let (n, d) = x.shape();
    let z = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[(i, j)] } else { 1.0 });
    let mut a = z.transpose() * &z;
    for j in 0..=d {
        a[(j, j)] += JITTER + if j < d { lambda } else { 0.0 };
    }
    let rhs = z.transpose() * y;
    let sol = match a.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a.lu().solve(&rhs).ok_or(BaselineError::Singular)?,
    };
    let w = sol.rows(0, d).into_owned();
    let bias = sol.row(d).iter().copied().collect();
    Ok(LinearMap::from_matrix(&w, bias, regularization))
}

pub fn ols_fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LinearMap, BaselineError> {
    solve_augmented(x, y, 0.0, Regularization::None)
}

pub fn ridge_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<LinearMap, BaselineError> {
    check_lambda(lambda)?;
    solve_augmented(x, y, lambda, Regularization::L2(lambda))
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

struct CenteredGram {
    gram: DMatrix<f64>,
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
    cross: DMatrix<f64>,
}

/// `G = Xc' Xc / n` and `C = Xc' Yc / n` on column-centred data.
fn centered_gram(x: &DMatrix<f64>, y: &DMatrix<f64>) -> CenteredGram {
    let n = x.nrows() as f64;
    let x_mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let y_mean: Vec<f64> = y.column_iter().map(|c| c.sum() / n).collect();
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - x_mean[j]);
    let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - y_mean[j]);
    let xt = xc.transpose();
    CenteredGram {
        gram: &xt * &xc / n,
        cross: &xt * &yc / n,
        x_mean,
        y_mean,
    }
}

/// Smallest penalty at which every lasso weight is zero.
pub fn lasso_lambda_max(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64, BaselineError> {
    check_xy(x, y)?;
    Ok(centered_gram(x, y).cross.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Cyclic coordinate descent for one output column of
/// `(1/2n) |yc - Xc w|^2 + lambda |w|_1`. `trace` receives the objective
/// (up to a constant) after every sweep.
fn lasso_column(
    gram: &DMatrix<f64>,
    c: &[f64],
    lambda: f64,
    max_iter: usize,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> (Vec<f64>, usize, bool) {
    let d = c.len();
    let mut w = vec![0.0; d];
    // q = G w, kept current as coordinates move
    let mut q = vec![0.0; d];
    for sweep in 1..=max_iter {
        let mut max_change = 0.0f64;
        for j in 0..d {
            let gjj = gram[(j, j)];
            let new = if gjj > 0.0 {
                let partial = c[j] - (q[j] - gjj * w[j]);
                soft_threshold(partial, lambda) / gjj
            } else {
                0.0
            };
            let delta = new - w[j];
            if delta != 0.0 {
                for (qk, g) in q.iter_mut().zip(gram.column(j).iter()) {
                    *qk += delta * g;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            let quad: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() * 0.5;
            let lin: f64 = w.iter().zip(c).map(|(a, b)| a * b).sum();
            let l1: f64 = w.iter().map(|v| v.abs()).sum();
            t.push(quad - lin + lambda * l1);
        }
        if max_change < tol {
            return (w, sweep, true);
        }
    }
    (w, max_iter, false)
}

pub fn lasso_fit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(LinearMap, LassoReport), BaselineError> {
    check_xy(x, y)?;
    check_lambda(lambda)?;
    let g = centered_gram(x, y);
    let cols: Vec<(Vec<f64>, usize, bool)> = (0..y.ncols())
        .into_par_iter()
        .map(|o| {
            let c: Vec<f64> = g.cross.column(o).iter().copied().collect();
            lasso_column(&g.gram, &c, lambda, max_iter, tol, None)
        })
        .collect();
    let d = x.ncols();
    let mut weights = Vec::with_capacity(d * y.ncols());
    let mut bias = Vec::with_capacity(y.ncols());
    let mut report = LassoReport {
        iterations: 0,
        converged: true,
    };
    for (o, (w, iters, ok)) in cols.into_iter().enumerate() {
        let shift: f64 = w.iter().zip(&g.x_mean).map(|(a, b)| a * b).sum();
        bias.push(g.y_mean[o] - shift);
        weights.extend(w);
        report.iterations = report.iterations.max(iters);
        report.converged &= ok;
    }
    Ok((
        LinearMap {
            in_dim: d,
            out_dim: y.ncols(),
            weights,
            bias,
            regularization: Regularization::L1(lambda),
        },
        report,
    ))
}

pub fn linmap_predict(map: &LinearMap, x: &[f64]) -> Result<Vec<f64>, BaselineError> {
    map.validate()?;
    if x.len() != map.in_dim {
        return Err(BaselineError::ShapeMismatch(format!(
            "input of {} for map expecting {}",
            x.len(),
            map.in_dim
        )));
    }
    Ok(map
        .weights
        .chunks_exact(map.in_dim)
        .zip(&map.bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect())
}
