//! White-box linear models: ordinary least squares, ridge, lasso and
//! polynomial-expanded least squares. The intercept is never penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PrimeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &[Vec<f64>], y: &[f64]) -> Result<Centered> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(PrimeError::Data(format!("{n} feature rows for {} targets", y.len())));
    }
    let p = x[0].len();
    let x_mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    Ok(Centered {
        x: DMatrix::from_fn(n, p, |i, j| x[i][j] - x_mean[j]),
        y: DVector::from_fn(n, |i, _| y[i] - y_mean),
        x_mean,
        y_mean,
    })
}

fn intercept_for(c: &Centered, beta: &[f64]) -> f64 {
    c.y_mean - c.x_mean.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
}

/// Indices of centered columns lying (numerically) in the span of earlier ones.
fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let rest = v.norm();
        if norm == 0.0 || rest <= 1e-10 * norm {
            dependent.push(j);
        } else {
            basis.push(v / rest);
        }
    }
    dependent
}

/// Ordinary least squares with intercept, solved by QR on centered data.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<LinearModel> {
    let c = center(x, y)?;
    let (n, p) = c.x.shape();
    if p == 0 {
        return Ok(LinearModel {
            coefficients: Vec::new(),
            intercept: c.y_mean,
        });
    }
    if n <= p {
        return Err(PrimeError::Data(format!("least squares needs more rows ({n}) than features ({p})")));
    }
    let dependent = dependent_columns(&c.x);
    if !dependent.is_empty() {
        return Err(PrimeError::RankDeficient(
            dependent
                .iter()
                .map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
                .collect(),
        ));
    }
    let qr = c.x.clone().qr();
    let qty = qr.q().transpose() * &c.y;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| PrimeError::RankDeficient(Vec::new()))?;
    let beta: Vec<f64> = beta.iter().copied().collect();
    Ok(LinearModel {
        intercept: intercept_for(&c, &beta),
        coefficients: beta,
    })
}

/// Minimizes `||y - Xb - b0||^2 + alpha ||b||^2` through the regularized
/// normal equations.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], alpha: f64) -> Result<LinearModel> {
    if !(alpha >= 0.0) {
        return Err(PrimeError::invalid("alpha", format!("{alpha} is negative")));
    }
    let c = center(x, y)?;
    let p = c.x.ncols();
    let gram = c.x.transpose() * &c.x + DMatrix::identity(p, p) * alpha;
    let rhs = c.x.transpose() * &c.y;
    let beta = gram
        .cholesky()
        .ok_or_else(|| PrimeError::RankDeficient(dependent_columns(&c.x).iter().map(|j| format!("x{j}")).collect()))?
        .solve(&rhs);
    let beta: Vec<f64> = beta.iter().copied().collect();
    Ok(LinearModel {
        intercept: intercept_for(&c, &beta),
        coefficients: beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop once no coefficient moves by more than this in a full sweep.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Smallest alpha at which every lasso coefficient is zero: `max |X'(y - mean y)| / n`.
pub fn lasso_critical_alpha(x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let c = center(x, y)?;
    let n = c.x.nrows() as f64;
    Ok((c.x.transpose() * &c.y).amax() / n)
}

/// Cyclic coordinate descent on `(1/2n) ||y - Xb - b0||^2 + alpha ||b||_1`.
pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], alpha: f64, opts: LassoOptions) -> Result<LinearModel> {
    if !(alpha >= 0.0) {
        return Err(PrimeError::invalid("alpha", format!("{alpha} is negative")));
    }
    let c = center(x, y)?;
    let (n, p) = c.x.shape();
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| c.x.column(j).norm_squared() / nf).collect();
    let mut beta = vec![0.0; p];
    let mut resid = c.y.clone();
    let mut max_change = 0.0;
    for _ in 0..opts.max_iter {
        max_change = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = c.x.column(j);
            let rho = col.dot(&resid) / nf + col_sq[j] * beta[j];
            let new = soft_threshold(rho, alpha) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                resid.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < opts.tol {
            return Ok(LinearModel {
                intercept: intercept_for(&c, &beta),
                coefficients: beta,
            });
        }
    }
    Err(PrimeError::NotConverged {
        iterations: opts.max_iter,
        max_change,
        gap: duality_gap(&c, &beta, &resid, alpha),
    })
}

fn duality_gap(c: &Centered, beta: &[f64], resid: &DVector<f64>, alpha: f64) -> f64 {
    let n = c.x.nrows() as f64;
    let primal = resid.norm_squared() / (2.0 * n) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>();
    let corr = (c.x.transpose() * resid).amax() / n;
    let scale = if corr > alpha && corr > 0.0 { alpha / corr } else { 1.0 };
    let u = resid * (scale / n);
    let dual = u.dot(&c.y) - n / 2.0 * u.norm_squared();
    primal - dual
}

/// Monomials of total degree 1..=degree over `p` variables, in graded
/// lexicographic order; each term lists its variable indices with repetition.
pub fn monomial_terms(p: usize, degree: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, start: usize, left: usize, p: usize, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for v in start..p {
            prefix.push(v);
            extend(prefix, v, left - 1, p, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in 1..=degree {
        extend(&mut Vec::with_capacity(d), 0, d, p, &mut out);
    }
    out
}

pub fn term_name(term: &[usize], names: &[String]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < term.len() {
        let v = term[i];
        let power = term[i..].iter().take_while(|&&t| t == v).count();
        let base = names.get(v).cloned().unwrap_or_else(|| format!("x{v}"));
        parts.push(if power == 1 { base } else { format!("{base}^{power}") });
        i += power;
    }
    parts.join("*")
}

fn expand_row(row: &[f64], terms: &[Vec<usize>]) -> Vec<f64> {
    terms.iter().map(|t| t.iter().map(|&v| row[v]).product()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub degree: usize,
    pub terms: Vec<Vec<usize>>,
    pub linear: LinearModel,
}

impl PolynomialModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.linear.predict(&expand_row(x, &self.terms))
    }

    pub fn term_names(&self, names: &[String]) -> Vec<String> {
        self.terms.iter().map(|t| term_name(t, names)).collect()
    }
}

/// Expands every feature to all monomials up to `degree` and fits OLS.
pub fn fit_polynomial(x: &[Vec<f64>], y: &[f64], degree: usize, names: &[String]) -> Result<PolynomialModel> {
    if degree == 0 {
        return Err(PrimeError::invalid("degree", "degree must be at least 1"));
    }
    let p = x.first().map_or(0, Vec::len);
    let terms = monomial_terms(p, degree);
    let expanded: Vec<Vec<f64>> = x.iter().map(|r| expand_row(r, &terms)).collect();
    let term_names: Vec<String> = terms.iter().map(|t| term_name(t, names)).collect();
    let linear = fit_ols(&expanded, y, &term_names)?;
    Ok(PolynomialModel { degree, terms, linear })
}
