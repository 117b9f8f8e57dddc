//! Proximal machinery for the ℓ₁-regularized least-squares problem
//! `min_a ½‖g − K a‖² + λ‖a‖₁`: soft-thresholding, ISTA, and an independent
//! cyclic coordinate-descent solver used as an oracle.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::linalg::{self, norm2};

pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// `S_θ(y)`: shrink toward zero by `θ`, zeroing `|y| ≤ θ`.
#[inline]
pub fn soft_threshold_scalar(y: f64, theta: f64) -> f64 {
    if y > theta {
        y - theta
    } else if y < -theta {
        y + theta
    } else {
        0.0
    }
}

pub fn soft_threshold(y: ArrayView1<f64>, theta: f64) -> Result<Array1<f64>> {
    check_theta(theta)?;
    Ok(y.mapv(|v| soft_threshold_scalar(v, theta)))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("threshold must be >= 0, got {theta}")));
    }
    Ok(())
}

fn check_shapes(k: ArrayView2<f64>, a: ArrayView1<f64>, g: ArrayView1<f64>, ctx: &'static str) -> Result<()> {
    if a.len() != k.ncols() {
        return Err(Error::shape(ctx, format!("solution length {}", k.ncols()), a.len()));
    }
    if g.len() != k.nrows() {
        return Err(Error::shape(ctx, format!("data length {}", k.nrows()), g.len()));
    }
    Ok(())
}

/// `½‖g − K a‖₂² + λ‖a‖₁`.
pub fn bp_objective(a: ArrayView1<f64>, k: ArrayView2<f64>, g: ArrayView1<f64>, lambda: f64) -> Result<f64> {
    check_shapes(k, a, g, "bp_objective")?;
    Ok(objective_unchecked(a, k, g, lambda))
}

fn objective_unchecked(a: ArrayView1<f64>, k: ArrayView2<f64>, g: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &g - &k.dot(&a);
    0.5 * r.dot(&r) + lambda * a.iter().map(|x| x.abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstaConfig {
    pub lambda: f64,
    pub step: f64,
    pub max_iter: usize,
    /// Stop once `‖a_{n+1} − a_n‖₂ < tol`.
    pub tol: f64,
}

impl IstaConfig {
    /// Step `1/‖K‖₂²`, the largest step with guaranteed descent.
    pub fn for_operator(k: ArrayView2<f64>, lambda: f64) -> Result<Self> {
        let norm = linalg::spectral_norm_power(k, linalg::POWER_ITERATION_TOL, linalg::POWER_ITERATION_MAX_ITER)?;
        if norm == 0.0 {
            return Err(Error::Domain("operator is identically zero".into()));
        }
        Ok(Self {
            lambda,
            step: 1.0 / (norm * norm),
            max_iter: 10_000,
            tol: 1e-10,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.step > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "ISTA needs lambda, step and tol > 0 (got {}, {}, {})",
                self.lambda, self.step, self.tol
            )));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.step * self.lambda
    }
}

/// One ISTA update `S_{τλ}(a − τ Kᵀ(K a − g))`.
pub fn ista_step(a: ArrayView1<f64>, k: ArrayView2<f64>, g: ArrayView1<f64>, config: &IstaConfig) -> Result<Array1<f64>> {
    check_shapes(k, a, g, "ista_step")?;
    check_theta(config.threshold())?;
    Ok(ista_step_unchecked(a, k, g, config.step, config.threshold()))
}

fn ista_step_unchecked(a: ArrayView1<f64>, k: ArrayView2<f64>, g: ArrayView1<f64>, step: f64, theta: f64) -> Array1<f64> {
    let residual = &k.dot(&a) - &g;
    let grad = k.t().dot(&residual);
    let mut next = Array1::zeros(a.len());
    Zip::from(&mut next)
        .and(&a)
        .and(&grad)
        .for_each(|n, &x, &d| *n = soft_threshold_scalar(x - step * d, theta));
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start point followed by one value per iteration.
    pub objective_trace: Vec<f64>,
    pub lambda: f64,
    pub step: f64,
}

/// Runs ISTA from `a₁ = 0`. Not converging within `max_iter` is reported in
/// the result rather than treated as an error; on the Fermi kernel this is
/// the expected outcome.
pub fn ista_solve(k: ArrayView2<f64>, g: ArrayView1<f64>, config: &IstaConfig) -> Result<SolveReport> {
    ista_solve_inner(k, g, config, true)
}

/// [`ista_solve`] without the objective trace, for bulk evaluation.
pub fn ista_solve_quiet(k: ArrayView2<f64>, g: ArrayView1<f64>, config: &IstaConfig) -> Result<SolveReport> {
    ista_solve_inner(k, g, config, false)
}

fn ista_solve_inner(k: ArrayView2<f64>, g: ArrayView1<f64>, config: &IstaConfig, trace: bool) -> Result<SolveReport> {
    config.validate()?;
    let mut a = Array1::zeros(k.ncols());
    check_shapes(k, a.view(), g, "ista_solve")?;
    let theta = config.threshold();
    let mut objective_trace = Vec::new();
    if trace {
        objective_trace.push(objective_unchecked(a.view(), k, g, config.lambda));
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let next = ista_step_unchecked(a.view(), k, g, config.step, theta);
        iterations += 1;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "ISTA iterate became non-finite at iteration {iterations}; step {} is too large",
                config.step
            )));
        }
        let change = norm2((&next - &a).view());
        a = next;
        if trace {
            objective_trace.push(objective_unchecked(a.view(), k, g, config.lambda));
        }
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        solution: a,
        iterations,
        converged,
        objective_trace,
        lambda: config.lambda,
        step: config.step,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSolveReport {
    /// One solution per column of the input.
    pub solutions: Array2<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

/// ISTA on every column of `g` at once, in the Gram form
/// `a ← S_{τλ}(a − τ(KᵀK a − Kᵀg))`. A column stops updating once its own
/// step falls below `tol`, so each column follows the same iteration count
/// and stopping rule as [`ista_solve`].
pub fn ista_solve_batch(k: ArrayView2<f64>, g: ArrayView2<f64>, config: &IstaConfig) -> Result<BatchSolveReport> {
    config.validate()?;
    if g.nrows() != k.nrows() {
        return Err(Error::shape("ista_solve_batch", k.nrows(), g.nrows()));
    }
    let n = g.ncols();
    let theta = config.threshold();
    let gram = k.t().dot(&k);
    let kg = k.t().dot(&g);
    let mut a = Array2::<f64>::zeros((k.ncols(), n));
    let mut iterations = vec![0; n];
    let mut converged = vec![false; n];
    let mut active = n;
    let mut it = 0;
    while it < config.max_iter && active > 0 {
        it += 1;
        let grad = gram.dot(&a) - &kg;
        for j in 0..n {
            if converged[j] {
                continue;
            }
            let mut change = 0.0;
            for i in 0..a.nrows() {
                let old = a[[i, j]];
                let new = soft_threshold_scalar(old - config.step * grad[[i, j]], theta);
                if !new.is_finite() {
                    return Err(Error::Numeric(format!(
                        "ISTA iterate became non-finite at iteration {it}; step {} is too large",
                        config.step
                    )));
                }
                change += (new - old) * (new - old);
                a[[i, j]] = new;
            }
            iterations[j] = it;
            if change.sqrt() < config.tol {
                converged[j] = true;
                active -= 1;
            }
        }
    }
    Ok(BatchSolveReport {
        solutions: a,
        iterations,
        converged,
    })
}

/// Cyclic coordinate descent with exact per-coordinate minimization.
///
/// Keeps the residual `r = g − K a` up to date; coordinate `j` moves to
/// `S_λ(k_jᵀ r + ‖k_j‖² a_j) / ‖k_j‖²`. Stops when a full sweep changes no
/// coordinate by more than `tol`.
pub fn cd_oracle(k: ArrayView2<f64>, g: ArrayView1<f64>, lambda: f64, tol: f64, max_sweeps: usize) -> Result<Array1<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    let n = k.ncols();
    let mut a = Array1::<f64>::zeros(n);
    check_shapes(k, a.view(), g, "cd_oracle")?;
    let col_sq: Vec<f64> = k.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut r = g.to_owned();
    for _ in 0..max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = k.column(j);
            let rho = col.dot(&r) + col_sq[j] * a[j];
            let new = soft_threshold_scalar(rho, lambda) / col_sq[j];
            let delta = new - a[j];
            if delta != 0.0 {
                r.scaled_add(-delta, &col);
                a[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if !max_change.is_finite() {
            return Err(Error::Numeric("coordinate descent produced a non-finite update".into()));
        }
        if max_change < tol {
            return Ok(a);
        }
    }
    Err(Error::NotConverged {
        method: "coordinate descent",
        iterations: max_sweeps,
    })
}

/// Largest violation of the optimality condition `0 ∈ Kᵀ(K a − g) + λ ∂‖a‖₁`.
///
/// For `a_j = 0` the violation is `max(0, |c_j| − λ)`, otherwise `|c_j + λ sign(a_j)|`,
/// with `c = Kᵀ(K a − g)`.
pub fn optimality_violation(k: ArrayView2<f64>, g: ArrayView1<f64>, lambda: f64, a: ArrayView1<f64>) -> Result<f64> {
    check_shapes(k, a, g, "optimality_violation")?;
    let c = k.t().dot(&(&k.dot(&a) - &g));
    Ok(c.iter()
        .zip(a.iter())
        .map(|(&cj, &aj)| {
            if aj == 0.0 {
                (cj.abs() - lambda).max(0.0)
            } else {
                (cj + lambda * aj.signum()).abs()
            }
        })
        .fold(0.0, f64::max))
}
