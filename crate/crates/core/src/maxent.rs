//! Maximum entropy: minimize `χ²/2 + α S` over normalized positive spectra,
//! where `χ² = ‖g − K a‖² / σ²` and `S = Σ Δω_j a_j log(a_j / d_j)` is the
//! Kullback–Leibler divergence from the default model `d`.
//!
//! The solver works in the log-parametrization `a = d e^u / Z(u)` with
//! `Z = Σ Δω_j d_j e^{u_j}`, so every iterate is strictly positive and has
//! unit mass. In these coordinates, with `p = a ⊙ Δω`, `q = Kᵀ(K a − g)/σ²`
//! and `v = u − p·u`, the gradient is
//!
//! ```text
//! ∇F = a ⊙ q − p (a·q) + α p ⊙ v
//! ```
//!
//! which is the gradient with respect to `log a` projected onto the tangent
//! space of the normalization constraint. Steps are Levenberg-damped Newton
//! steps on the exact Hessian.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::{FrequencyGrid, KernelMatrix};
use crate::linalg::{cholesky, cholesky_solve, norm2};
use crate::table::{fmt17, Table};
use crate::train::SpectralPredictor;

/// `‖g − K a‖² / σ²` (diagonal covariance `σ² I`).
pub fn chi2(a: ArrayView1<f64>, k: ArrayView2<f64>, g: ArrayView1<f64>, sigma: f64) -> Result<f64> {
    if a.len() != k.ncols() || g.len() != k.nrows() {
        return Err(Error::shape(
            "chi2",
            format!("{} x {}", k.nrows(), k.ncols()),
            format!("g {} / a {}", g.len(), a.len()),
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    let r = &g - &k.dot(&a);
    Ok(r.dot(&r) / (sigma * sigma))
}

/// `Σ_j Δω_j a_j log(a_j / d_j)`, with `0 log 0 = 0`.
pub fn kl_entropy(a: ArrayView1<f64>, d: ArrayView1<f64>, freq: &FrequencyGrid) -> Result<f64> {
    if a.len() != d.len() || a.len() != freq.count() {
        return Err(Error::shape("kl_entropy", freq.count(), format!("a {} / d {}", a.len(), d.len())));
    }
    if let Some(j) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Domain(format!("default model must be positive, d[{j}] = {}", d[j])));
    }
    if let Some(j) = a.iter().position(|&x| !(x >= 0.0)) {
        return Err(Error::Domain(format!("spectrum must be nonnegative, a[{j}] = {}", a[j])));
    }
    Ok(a.iter()
        .zip(d.iter())
        .zip(freq.weights())
        .map(|((&x, &dj), &w)| if x == 0.0 { 0.0 } else { w * x * (x / dj).ln() })
        .sum())
}

#[derive(Debug, Clone, Copy)]
pub struct MaxEntProblem<'a> {
    pub g: ArrayView1<'a, f64>,
    pub kernel: &'a KernelMatrix,
    pub sigma: f64,
    pub alpha: f64,
    pub default_model: ArrayView1<'a, f64>,
}

impl MaxEntProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        let (nt, nw) = (self.kernel.n_tau(), self.kernel.n_omega());
        if self.g.len() != nt || self.default_model.len() != nw {
            return Err(Error::shape(
                "maxent problem",
                format!("g {nt}, d {nw}"),
                format!("g {}, d {}", self.g.len(), self.default_model.len()),
            ));
        }
        if !self.kernel.is_weighted() {
            return Err(Error::Domain("maxent needs a weighted kernel".into()));
        }
        if !(self.alpha > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Domain(format!(
                "alpha and sigma must be > 0, got {} and {}",
                self.alpha, self.sigma
            )));
        }
        check_default_model(self.default_model, self.kernel.freq_grid())
    }
}

fn check_default_model(d: ArrayView1<f64>, freq: &FrequencyGrid) -> Result<()> {
    if let Some(j) = d.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("default model must be positive, d[{j}] = {}", d[j])));
    }
    let mass = freq.integrate(d);
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!("default model must have unit mass, got {mass}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Converged once the projected gradient norm drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntResult {
    pub spectrum: Array1<f64>,
    pub chi2: f64,
    pub entropy: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub alpha_used: f64,
}

/// State of one iterate: `u` is kept so that `a = d e^u` has unit mass.
struct Iterate {
    u: Array1<f64>,
    a: Array1<f64>,
    p: Array1<f64>,
    residual: Array1<f64>,
    chi2: f64,
    entropy: f64,
}

impl Iterate {
    fn new(mut u: Array1<f64>, prob: &MaxEntProblem) -> Result<Self> {
        let d = prob.default_model;
        let w = prob.kernel.freq_grid().weights_array();
        let shift = u.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        u.mapv_inplace(|x| x - shift);
        let z: f64 = u.iter().zip(d.iter()).zip(w.iter()).map(|((&ui, &di), &wi)| wi * di * ui.exp()).sum();
        let log_z = z.ln();
        u.mapv_inplace(|x| x - log_z);
        let a = &d * &u.mapv(f64::exp);
        if a.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::Numeric("maxent iterate left the positive orthant".into()));
        }
        let p = &a * &w;
        let residual = &prob.kernel.matrix().dot(&a) - &prob.g;
        let chi2 = residual.dot(&residual) / (prob.sigma * prob.sigma);
        let entropy = p.dot(&u);
        Ok(Self {
            u,
            a,
            p,
            residual,
            chi2,
            entropy,
        })
    }

    fn objective(&self, alpha: f64) -> f64 {
        0.5 * self.chi2 + alpha * self.entropy
    }

    fn gradient(&self, prob: &MaxEntProblem) -> (Array1<f64>, Array1<f64>) {
        let q = prob.kernel.matrix().t().dot(&self.residual) / (prob.sigma * prob.sigma);
        let aq = self.a.dot(&q);
        let ubar = self.p.dot(&self.u);
        let mut grad = &self.a * &q - &(&self.p * aq);
        grad.zip_mut_with(&(&self.p * &self.u.mapv(|x| x - ubar)), |gi, &s| *gi += prob.alpha * s);
        (grad, q)
    }

    fn hessian(&self, prob: &MaxEntProblem, q: &Array1<f64>) -> Array2<f64> {
        let n = self.a.len();
        let k = prob.kernel.matrix();
        let inv_var = 1.0 / (prob.sigma * prob.sigma);
        let ka = k.dot(&self.a);
        // K J_a with J_a = diag(a) − a pᵀ.
        let mut m = k.to_owned();
        for (j, mut col) in m.columns_mut().into_iter().enumerate() {
            col *= self.a[j];
            col.scaled_add(-self.p[j], &ka);
        }
        let mut h = m.t().dot(&m) * inv_var;

        let qa = &self.a * q;
        let qdota = self.a.dot(q);
        let ubar = self.p.dot(&self.u);
        let v = self.u.mapv(|x| x - ubar);
        let pv = &self.p * &v;
        let alpha = prob.alpha;
        for i in 0..n {
            for j in 0..n {
                let mut x = -self.p[i] * qa[j] - qa[i] * self.p[j] + 2.0 * qdota * self.p[i] * self.p[j];
                x += alpha * (-self.p[i] * self.p[j] - pv[i] * self.p[j] - self.p[i] * pv[j]);
                h[[i, j]] += x;
            }
            h[[i, i]] += qa[i] - qdota * self.p[i] + alpha * self.p[i] * (1.0 + v[i]);
        }
        h
    }
}

/// Minimizes `χ²/2 + α S` from the default model, or from `warm_start` when given.
///
/// A run that exhausts `max_iter` or can no longer make progress returns its
/// best iterate with `converged = false`.
pub fn maxent_solve(prob: &MaxEntProblem, opts: &SolverOptions, warm_start: Option<ArrayView1<f64>>) -> Result<MaxEntResult> {
    prob.validate()?;
    let n = prob.kernel.n_omega();
    let u0 = match warm_start {
        Some(a) => {
            if a.len() != n || a.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Domain("warm start must be a positive spectrum of matching length".into()));
            }
            Array1::from_shape_fn(n, |j| (a[j] / prob.default_model[j]).ln())
        }
        None => Array1::zeros(n),
    };
    let mut it = Iterate::new(u0, prob)?;
    let mut f = it.objective(prob.alpha);
    let mut trace = vec![f];
    let (mut grad, mut q) = it.gradient(prob);
    let mut gnorm = norm2(grad.view());
    let mut lm = 0.0;
    let mut converged = gnorm < opts.tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let h = it.hessian(prob, &q);
        let scale = (0..n).map(|i| h[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        if lm == 0.0 {
            lm = 1e-6 * scale;
        }
        let mut accepted = false;
        while lm <= 1e12 * scale {
            let mut damped = h.clone();
            for i in 0..n {
                damped[[i, i]] += lm;
            }
            let Some(l) = cholesky(damped.view()) else {
                lm *= 10.0;
                continue;
            };
            let mut step = cholesky_solve(l.view(), (-&grad).view());
            let big = step.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if big > 5.0 {
                step *= 5.0 / big;
            }
            let candidate = match Iterate::new(&it.u + &step, prob) {
                Ok(c) => c,
                Err(_) => {
                    lm *= 10.0;
                    continue;
                }
            };
            let f_new = candidate.objective(prob.alpha);
            let (g_new, q_new) = candidate.gradient(prob);
            let g_new_norm = norm2(g_new.view());
            let decrease = f_new < f;
            let flat = f_new <= f + 1e-14 * f.abs() && g_new_norm < gnorm;
            if decrease || flat {
                it = candidate;
                f = f_new;
                grad = g_new;
                q = q_new;
                gnorm = g_new_norm;
                lm = (lm / 5.0).max(1e-15 * scale);
                accepted = true;
                break;
            }
            lm *= 4.0;
        }
        trace.push(f);
        if !f.is_finite() {
            return Err(Error::Numeric("maxent objective became non-finite".into()));
        }
        converged = gnorm < opts.tol;
        if !accepted {
            break;
        }
    }

    Ok(MaxEntResult {
        spectrum: it.a,
        chi2: it.chi2,
        entropy: it.entropy,
        objective_trace: trace,
        converged,
        iterations,
        gradient_norm: gnorm,
        alpha_used: prob.alpha,
    })
}

/// `10^6, 10^5.75, …, 10^-3`: descending, four points per decade.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=36).map(|k| 10f64.powf(6.0 - 0.25 * k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub result: MaxEntResult,
    /// `(α, χ², converged)` for every solve performed, in grid order.
    pub path: Vec<(f64, f64, bool)>,
    /// True when some α met `χ² ≤ N_τ`; otherwise the closest α was taken.
    pub discrepancy_met: bool,
}

/// Solves along `alphas` (descending, warm-started) and returns the largest α
/// whose solution satisfies `χ² ≤ N_τ`, or the α minimizing `|χ² − N_τ|` when
/// none does.
pub fn select_alpha(
    g: ArrayView1<f64>,
    kernel: &KernelMatrix,
    sigma: f64,
    default_model: ArrayView1<f64>,
    alphas: &[f64],
    opts: &SolverOptions,
) -> Result<AlphaSelection> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("alpha grid must be strictly descending".into()));
    }
    let target = kernel.n_tau() as f64;
    let mut path = Vec::new();
    let mut best: Option<(f64, MaxEntResult)> = None;
    let mut warm: Option<Array1<f64>> = None;
    let mut last_err = None;
    for &alpha in alphas {
        let prob = MaxEntProblem {
            g,
            kernel,
            sigma,
            alpha,
            default_model,
        };
        let res = match maxent_solve(&prob, opts, warm.as_ref().map(|w| w.view())) {
            Ok(r) => r,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        path.push((alpha, res.chi2, res.converged));
        warm = Some(res.spectrum.clone());
        if res.chi2 <= target {
            return Ok(AlphaSelection {
                alpha,
                result: res,
                path,
                discrepancy_met: true,
            });
        }
        let closer = best
            .as_ref()
            .is_none_or(|(_, b)| (res.chi2 - target).abs() < (b.chi2 - target).abs());
        if closer {
            best = Some((alpha, res));
        }
    }
    match best {
        Some((alpha, result)) => Ok(AlphaSelection {
            alpha,
            result,
            path,
            discrepancy_met: false,
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Numeric("every maxent solve failed".into()))),
    }
}

/// Solves every α of a descending grid with warm starts, keeping all results.
pub fn alpha_path(
    g: ArrayView1<f64>,
    kernel: &KernelMatrix,
    sigma: f64,
    default_model: ArrayView1<f64>,
    alphas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<MaxEntResult>> {
    let mut warm: Option<Array1<f64>> = None;
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let prob = MaxEntProblem {
            g,
            kernel,
            sigma,
            alpha,
            default_model,
        };
        let res = maxent_solve(&prob, opts, warm.as_ref().map(|w| w.view()))?;
        warm = Some(res.spectrum.clone());
        out.push(res);
    }
    Ok(out)
}

pub const DEFAULT_FLOOR: f64 = 1e-4;

/// Turns a raw network output into a usable default model: clamp negatives
/// to zero, smooth with a row-normalized Gaussian of width
/// `smoothing_width` on the frequency grid, add `floor · max`, and
/// renormalize to unit mass.
pub fn neural_default(raw: ArrayView1<f64>, freq: &FrequencyGrid, smoothing_width: f64, floor: f64) -> Result<Array1<f64>> {
    if raw.len() != freq.count() {
        return Err(Error::shape("neural_default", freq.count(), raw.len()));
    }
    if !(smoothing_width > 0.0) || !(floor > 0.0) {
        return Err(Error::Domain("smoothing width and floor must be > 0".into()));
    }
    let clamped = raw.mapv(|x| if x.is_finite() { x.max(0.0) } else { 0.0 });
    if clamped.iter().all(|&x| x == 0.0) {
        return Err(Error::Domain("network output has no positive entries; no usable default model".into()));
    }
    let w = freq.points();
    let n = w.len();
    let mut smooth = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let kern = (-0.5 * ((w[i] - w[j]) / smoothing_width).powi(2)).exp();
            num += kern * clamped[j];
            den += kern;
        }
        smooth[i] = num / den;
    }
    let peak = smooth.fold(0.0f64, |m, &x| m.max(x));
    smooth.mapv_inplace(|x| x + floor * peak);
    let mass = freq.integrate(smooth.view());
    smooth /= mass;
    Ok(smooth)
}

/// How [`rlista_plus`] and the flat-default baseline pick α.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaChoice {
    Fixed(f64),
    /// Discrepancy principle over a descending grid.
    Auto(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntSettings {
    pub sigma: f64,
    pub alpha: AlphaChoice,
    /// Defaults to twice the grid spacing when `None`.
    pub smoothing_width: Option<f64>,
    pub floor: f64,
    pub solver: SolverOptions,
}

impl MaxEntSettings {
    pub fn auto(sigma: f64) -> Self {
        Self {
            sigma,
            alpha: AlphaChoice::Auto(default_alpha_grid()),
            smoothing_width: None,
            floor: DEFAULT_FLOOR,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralMaxEntResult {
    pub result: MaxEntResult,
    pub default_model: Array1<f64>,
    pub network_output: Array1<f64>,
}

/// MaxEnt with a given default model and the α rule from `settings`.
pub fn maxent_with_default(g: ArrayView1<f64>, kernel: &KernelMatrix, default_model: ArrayView1<f64>, settings: &MaxEntSettings) -> Result<MaxEntResult> {
    match &settings.alpha {
        AlphaChoice::Fixed(alpha) => maxent_solve(
            &MaxEntProblem {
                g,
                kernel,
                sigma: settings.sigma,
                alpha: *alpha,
                default_model,
            },
            &settings.solver,
            None,
        ),
        AlphaChoice::Auto(grid) => Ok(select_alpha(g, kernel, settings.sigma, default_model, grid, &settings.solver)?.result),
    }
}

/// MaxEnt with the flat default model.
pub fn flat_maxent(g: ArrayView1<f64>, kernel: &KernelMatrix, settings: &MaxEntSettings) -> Result<MaxEntResult> {
    let d = kernel.freq_grid().flat_density();
    maxent_with_default(g, kernel, d.view(), settings)
}

/// Network forward pass, then [`neural_default`], then MaxEnt with that default.
pub fn rlista_plus<P: SpectralPredictor + ?Sized>(g: ArrayView1<f64>, kernel: &KernelMatrix, network: &P, settings: &MaxEntSettings) -> Result<NeuralMaxEntResult> {
    if network.n_tau() != kernel.n_tau() || network.n_omega() != kernel.n_omega() {
        return Err(Error::shape(
            "rlista_plus",
            format!("network for {} x {}", kernel.n_tau(), kernel.n_omega()),
            format!("{} x {}", network.n_tau(), network.n_omega()),
        ));
    }
    let freq = kernel.freq_grid();
    let raw = network.predict(g)?;
    let width = settings.smoothing_width.unwrap_or(2.0 * freq.weights()[0]);
    let default_model = neural_default(raw.view(), freq, width, settings.floor)?;
    let result = maxent_with_default(g, kernel, default_model.view(), settings)?;
    Ok(NeuralMaxEntResult {
        result,
        default_model,
        network_output: raw,
    })
}

/// `omega,a,default` rows with the solve summary in the header.
pub fn result_table(result: &MaxEntResult, freq: &FrequencyGrid, default_model: ArrayView1<f64>) -> Table {
    let mut t = Table::new(["omega", "a", "default"]);
    t.meta("alpha", fmt17(result.alpha_used))
        .meta("chi2", fmt17(result.chi2))
        .meta("entropy", fmt17(result.entropy))
        .meta("converged", result.converged)
        .meta("iterations", result.iterations)
        .meta("gradient_norm", fmt17(result.gradient_norm));
    for (j, &w) in freq.points().iter().enumerate() {
        t.push(vec![fmt17(w), fmt17(result.spectrum[j]), fmt17(default_model[j])]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GridSpec;
    use crate::rng::SeededRng;
    use crate::synthdata::{sample_spectrum, SpectrumConfig};

    fn kernel() -> KernelMatrix {
        GridSpec::default().kernel().unwrap()
    }

    fn two_peaks(k: &KernelMatrix) -> Array1<f64> {
        let w = k.freq_grid().points();
        let mut a = Array1::from_shape_fn(64, |j| {
            (-0.5 * ((w[j] + 1.0) / 0.6).powi(2)).exp() + 0.5 * (-0.5 * ((w[j] - 3.0) / 0.8).powi(2)).exp()
        });
        let m = k.freq_grid().integrate(a.view());
        a /= m;
        a
    }

    #[test]
    fn chi2_cases() {
        let k = kernel();
        let a = two_peaks(&k);
        let g = k.forward_map(a.view()).unwrap();
        assert_eq!(chi2(a.view(), k.matrix(), g.view(), 0.1).unwrap(), 0.0);
        let mut g2 = g.clone();
        g2[5] += 0.01;
        assert!((chi2(a.view(), k.matrix(), g2.view(), 0.01).unwrap() - 1.0).abs() < 1e-9);
        let c1 = chi2(a.view(), k.matrix(), g2.view(), 0.02).unwrap();
        assert!((c1 - 0.25).abs() < 1e-9);
        assert!(chi2(a.view(), k.matrix(), g.view(), 0.0).is_err());
    }

    #[test]
    fn kl_cases() {
        let k = kernel();
        let freq = k.freq_grid();
        let flat = freq.flat_density();
        assert_eq!(kl_entropy(flat.view(), flat.view(), freq).unwrap(), 0.0);
        let a = two_peaks(&k);
        assert!(kl_entropy(a.view(), flat.view(), freq).unwrap() > 0.0);
        assert!(kl_entropy(a.view(), a.view(), freq).unwrap().abs() < 1e-15);
        let mut zero_d = flat.clone();
        zero_d[3] = 0.0;
        assert!(matches!(kl_entropy(a.view(), zero_d.view(), freq), Err(Error::Domain(_))));
        let mut sparse = Array1::zeros(64);
        sparse[10] = 1.0 / freq.weights()[10];
        assert!(kl_entropy(sparse.view(), flat.view(), freq).unwrap().is_finite());
    }

    #[test]
    fn huge_alpha_returns_default() {
        let k = kernel();
        let a = two_peaks(&k);
        let g = k.forward_map(a.view()).unwrap();
        let d = k.freq_grid().flat_density();
        let prob = MaxEntProblem { g: g.view(), kernel: &k, sigma: 1.0, alpha: 1e8, default_model: d.view() };
        let res = maxent_solve(&prob, &SolverOptions::default(), None).unwrap();
        let diff = (&res.spectrum - &d).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff <= 1e-3, "{diff}");
    }

    #[test]
    fn noiseless_default_is_the_solution() {
        let k = kernel();
        let d = two_peaks(&k);
        let g = k.forward_map(d.view()).unwrap();
        let prob = MaxEntProblem { g: g.view(), kernel: &k, sigma: 1e-3, alpha: 10.0, default_model: d.view() };
        let res = maxent_solve(&prob, &SolverOptions::default(), None).unwrap();
        assert!(res.converged);
        let diff = (&res.spectrum - &d).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn solution_beats_random_probes() {
        let k = kernel();
        let freq = k.freq_grid();
        let truth = two_peaks(&k);
        let mut rng = SeededRng::new(3);
        let g = k.forward_map(truth.view()).unwrap().mapv(|x| x + 1e-3 * rng.standard_normal());
        let d = freq.flat_density();
        let alpha = 30.0;
        let prob = MaxEntProblem { g: g.view(), kernel: &k, sigma: 1e-3, alpha, default_model: d.view() };
        let res = maxent_solve(&prob, &SolverOptions::default(), None).unwrap();
        assert!(res.converged, "gradient {}", res.gradient_norm);
        let f = |a: &Array1<f64>| {
            0.5 * chi2(a.view(), k.matrix(), g.view(), 1e-3).unwrap() + alpha * kl_entropy(a.view(), d.view(), freq).unwrap()
        };
        let best = f(&res.spectrum);
        assert!(best <= f(&d));
        let cfg = SpectrumConfig::default();
        for i in 0..10_000 {
            let probe = if i % 2 == 0 {
                sample_spectrum(&mut rng, &cfg, freq).mapv(|x| x + 1e-6)
            } else {
                let scale = 10f64.powf(rng.uniform_in(-4.0, -1.0));
                res.spectrum.mapv(|x| x * (scale * rng.standard_normal()).exp())
            };
            let m = freq.integrate(probe.view());
            let probe = probe / m;
            assert!(f(&probe) >= best - 1e-9 * best.abs());
        }
    }

    #[test]
    fn chi2_decreases_along_alpha_path() {
        let k = kernel();
        let truth = two_peaks(&k);
        let mut rng = SeededRng::new(8);
        let g = k.forward_map(truth.view()).unwrap().mapv(|x| x + 1e-3 * rng.standard_normal());
        let d = k.freq_grid().flat_density();
        let path = alpha_path(g.view(), &k, 1e-3, d.view(), &default_alpha_grid(), &SolverOptions::default()).unwrap();
        for w in path.windows(2) {
            assert!(w[1].chi2 <= w[0].chi2 + 1e-8, "{} -> {}", w[0].chi2, w[1].chi2);
        }
        for r in &path {
            assert!(r.spectrum.iter().all(|&x| x > 0.0));
            assert!((k.freq_grid().integrate(r.spectrum.view()) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn alpha_selection_rules() {
        let k = kernel();
        let truth = two_peaks(&k);
        let mut rng = SeededRng::new(9);
        let g = k.forward_map(truth.view()).unwrap().mapv(|x| x + 1e-3 * rng.standard_normal());
        let d = k.freq_grid().flat_density();
        let one = select_alpha(g.view(), &k, 1e-3, d.view(), &[5.0], &SolverOptions::default()).unwrap();
        assert_eq!(one.alpha, 5.0);
        let grid = default_alpha_grid();
        let sel = select_alpha(g.view(), &k, 1e-3, d.view(), &grid, &SolverOptions::default()).unwrap();
        assert!(sel.discrepancy_met);
        assert!(sel.result.chi2 <= 64.0);
        for &(alpha, chi2, _) in &sel.path {
            if alpha > sel.alpha {
                assert!(chi2 > 64.0);
            }
        }
        assert!(select_alpha(g.view(), &k, 1e-3, d.view(), &[], &SolverOptions::default()).is_err());
        assert!(select_alpha(g.view(), &k, 1e-3, d.view(), &[1.0, 2.0], &SolverOptions::default()).is_err());
    }

    #[test]
    fn neural_default_cases() {
        let k = kernel();
        let freq = k.freq_grid();
        let flat = Array1::from_elem(64, 0.3);
        let out = neural_default(flat.view(), freq, 2.0 * freq.weights()[0], 1e-4).unwrap();
        let expect = freq.flat_density();
        assert!((&out - &expect).iter().all(|x| x.abs() < 1e-14));

        let mut spike = Array1::zeros(64);
        spike[32] = 5.0;
        let width = 0.6;
        let out = neural_default(spike.view(), freq, width, 1e-4).unwrap();
        assert!((freq.integrate(out.view()) - 1.0).abs() < 1e-12);
        let w = freq.points();
        let bump = Array1::from_shape_fn(64, |j| (-0.5 * ((w[j] - w[32]) / width).powi(2)).exp());
        let ratio = out[32] / bump[32];
        for j in 26..=38 {
            assert!((out[j] - ratio * (bump[j] + 1e-4)).abs() < 1e-3 * out[32], "j={j}");
        }

        let mut signed = Array1::from_elem(64, -1.0);
        signed[10] = 2.0;
        let out = neural_default(signed.view(), freq, 0.5, 1e-4).unwrap();
        assert!(out.iter().all(|&x| x > 0.0));
        assert!(neural_default(Array1::from_elem(64, -1.0).view(), freq, 0.5, 1e-4).is_err());
    }

    struct Fixed(Array1<f64>);

    impl SpectralPredictor for Fixed {
        fn predict_batch(&self, g: ArrayView2<f64>) -> Result<Array2<f64>> {
            let mut out = Array2::zeros((self.0.len(), g.ncols()));
            for mut c in out.columns_mut() {
                c.assign(&self.0);
            }
            Ok(out)
        }
        fn parameter_count(&self) -> usize {
            0
        }
        fn n_tau(&self) -> usize {
            64
        }
        fn n_omega(&self) -> usize {
            self.0.len()
        }
    }

    #[test]
    fn perfect_network_reproduces_truth() {
        let k = kernel();
        let truth = two_peaks(&k);
        let g = k.forward_map(truth.view()).unwrap();
        let mut settings = MaxEntSettings::auto(1e-3);
        settings.smoothing_width = Some(1e-3 * k.freq_grid().weights()[0]);
        let out = rlista_plus(g.view(), &k, &Fixed(truth.clone()), &settings).unwrap();
        let diff = (&out.result.spectrum - &truth).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff <= 1e-3, "{diff}");
    }

    #[test]
    fn flat_network_matches_flat_maxent() {
        let k = kernel();
        let truth = two_peaks(&k);
        let g = k.forward_map(truth.view()).unwrap();
        let settings = MaxEntSettings::auto(1e-3);
        let flat = flat_maxent(g.view(), &k, &settings).unwrap();
        let via = rlista_plus(g.view(), &k, &Fixed(Array1::from_elem(64, 1.0)), &settings).unwrap();
        assert_eq!(flat.alpha_used, via.result.alpha_used);
        let diff = (&flat.spectrum - &via.result.spectrum).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff < 1e-8, "{diff}");
    }
}
