//! Small dense least-squares solvers used by the spectroscopy fits.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no oscillation found in the data (peak-to-peak {spread:.3e})")]
    NoOscillation { spread: f64 },
    #[error("fit did not converge after {restarts} restarts (best residual {best_residual:.3e})")]
    NonConvergence { restarts: usize, best_residual: f64 },
    #[error("singular normal equations")]
    Singular,
}

/// Outcome of a nonlinear least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// One-sigma parameter errors from `s² (JᵀJ)⁻¹`.
    pub errors: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Box constraints, applied by clamping after each accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn clamp(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F>(model: &F, p: &[f64], xs: &[f64], scales: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64], f64) -> f64,
{
    let n = xs.len();
    let m = p.len();
    let mut j = DMatrix::zeros(n, m);
    let mut q = p.to_vec();
    for k in 0..m {
        let h = 1e-6 * p[k].abs().max(scales[k]);
        q[k] = p[k] + h;
        let up: Vec<f64> = xs.iter().map(|&x| model(&q, x)).collect();
        q[k] = p[k] - h;
        let dn: Vec<f64> = xs.iter().map(|&x| model(&q, x)).collect();
        q[k] = p[k];
        for i in 0..n {
            j[(i, k)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    j
}

/// Levenberg–Marquardt on `y ≈ model(p, x)` with Marquardt diagonal scaling.
///
/// `scales` gives a typical magnitude per parameter for finite-difference steps.
pub fn levenberg_marquardt<F>(
    model: F,
    xs: &[f64],
    ys: &[f64],
    p0: &[f64],
    scales: &[f64],
    bounds: &Bounds,
    max_iter: usize,
) -> Result<LmFit, FitError>
where
    F: Fn(&[f64], f64) -> f64,
{
    let m = p0.len();
    if xs.len() <= m {
        return Err(FitError::TooFewSamples {
            needed: m + 1,
            got: xs.len(),
        });
    }
    let resid = |p: &[f64]| -> Vec<f64> {
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| y - model(p, x))
            .collect()
    };
    let mut p = p0.to_vec();
    bounds.clamp(&mut p);
    let mut r = resid(&p);
    let mut cost = sse(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let j = jacobian(&model, &p, xs, scales);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(delta) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            bounds.clamp(&mut trial);
            let rt = resid(&trial);
            let ct = sse(&rt);
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                let step = delta
                    .iter()
                    .zip(&p)
                    .map(|(d, v)| d.abs() / v.abs().max(1e-12))
                    .fold(0.0, f64::max);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-14 || step < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // no downhill step at any damping: stationary point
            converged = true;
        }
        if converged {
            break;
        }
    }
    let errors = parameter_errors(&model, &p, xs, scales, cost)?;
    Ok(LmFit {
        params: p,
        errors,
        sse: cost,
        iterations: it,
        converged,
    })
}

fn parameter_errors<F>(
    model: &F,
    p: &[f64],
    xs: &[f64],
    scales: &[f64],
    cost: f64,
) -> Result<Vec<f64>, FitError>
where
    F: Fn(&[f64], f64) -> f64,
{
    let m = p.len();
    let dof = (xs.len() - m) as f64;
    let j = jacobian(model, p, xs, scales);
    let jtj = j.transpose() * &j;
    let Some(cov) = jtj.try_inverse() else {
        return Ok(vec![f64::INFINITY; m]);
    };
    let s2 = cost / dof;
    Ok((0..m).map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt()).collect())
}

/// Ordinary linear least squares `y ≈ Σ c_k·basis_k(x)` with one-sigma errors.
pub fn linear_least_squares(
    basis: &[Vec<f64>],
    ys: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, f64), FitError> {
    let m = basis.len();
    let n = ys.len();
    if n <= m {
        return Err(FitError::TooFewSamples {
            needed: m + 1,
            got: n,
        });
    }
    let a = DMatrix::from_fn(n, m, |i, k| basis[k][i]);
    let y = DVector::from_column_slice(ys);
    let ata = a.transpose() * &a;
    let cov = ata.clone().try_inverse().ok_or(FitError::Singular)?;
    let c = &cov * (a.transpose() * &y);
    let r = &y - &a * &c;
    let cost = r.norm_squared();
    let s2 = cost / (n - m) as f64;
    let errs = (0..m).map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt()).collect();
    Ok((c.iter().copied().collect(), errs, cost))
}
