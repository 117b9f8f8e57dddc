//! Discretization grids, the fermionic kernel and the forward map `g = K a`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Fermionic kernel `e^{-τω} / (1 + e^{-βω})`.
///
/// Evaluated in the overflow-free form: for `ω < 0` the numerator and
/// denominator are multiplied by `e^{βω}`, giving `e^{(β-τ)ω} / (1 + e^{βω})`.
pub fn fermi_kernel(tau: f64, omega: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be positive and finite, got {beta}")));
    }
    if !(0.0..=beta).contains(&tau) {
        return Err(Error::Domain(format!("tau = {tau} outside [0, {beta}]")));
    }
    if !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be finite, got {omega}")));
    }
    Ok(fermi_kernel_unchecked(tau, omega, beta))
}

#[inline]
fn fermi_kernel_unchecked(tau: f64, omega: f64, beta: f64) -> f64 {
    if omega >= 0.0 {
        (-tau * omega).exp() / (1.0 + (-beta * omega).exp())
    } else {
        ((beta - tau) * omega).exp() / (1.0 + (beta * omega).exp())
    }
}

/// Parameters of a uniform discretization. This is what configs and file
/// headers store; the grids themselves are always rebuilt from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub beta: f64,
    pub n_tau: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            beta: 10.0,
            n_tau: 64,
            omega_min: -8.0,
            omega_max: 8.0,
            n_omega: 64,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<(TimeGrid, FrequencyGrid)> {
        build_grids(self.beta, self.n_tau, self.omega_min, self.omega_max, self.n_omega)
    }

    /// Weighted kernel matrix on this discretization.
    pub fn kernel(&self) -> Result<KernelMatrix> {
        let (t, w) = self.build()?;
        let mut k = build_kernel_matrix(&t, &w, true);
        k.spec = Some(*self);
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    beta: f64,
    points: Vec<f64>,
}

impl TimeGrid {
    /// Arbitrary imaginary-time points; they must be strictly increasing and lie in `[0, β]`.
    pub fn from_points(beta: f64, points: Vec<f64>) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        if points.is_empty() {
            return Err(Error::Config("time grid needs at least one point".into()));
        }
        if points.iter().any(|t| !(0.0..=beta).contains(t)) {
            return Err(Error::Config(format!("time points must lie in [0, {beta}]")));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("time points must be strictly increasing".into()));
        }
        Ok(Self { beta, points })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyGrid {
    pub fn from_points(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Config(format!(
                "frequency grid needs matching nonempty points/weights, got {}/{}",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|w| !w.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("frequency points must be finite and strictly increasing".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("quadrature weights must be positive".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn weights_array(&self) -> Array1<f64> {
        Array1::from(self.weights.clone())
    }

    /// `Σ_j a_j Δω_j`.
    pub fn integrate(&self, a: ArrayView1<f64>) -> f64 {
        a.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// The constant density with unit mass on this grid.
    pub fn flat_density(&self) -> Array1<f64> {
        let total: f64 = self.weights.iter().sum();
        Array1::from_elem(self.count(), 1.0 / total)
    }
}

/// Uniform grids: `τ_i` spans `[0, β]`, `ω_j` spans `[ω_min, ω_max]`, and every
/// frequency carries the plain rectangle weight `(ω_max - ω_min) / (N_ω - 1)`.
pub fn build_grids(
    beta: f64,
    n_tau: usize,
    omega_min: f64,
    omega_max: f64,
    n_omega: usize,
) -> Result<(TimeGrid, FrequencyGrid)> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    if n_tau < 2 || n_omega < 2 {
        return Err(Error::Config(format!(
            "grid counts must be at least 2, got n_tau = {n_tau}, n_omega = {n_omega}"
        )));
    }
    if !(omega_min < omega_max) || !omega_min.is_finite() || !omega_max.is_finite() {
        return Err(Error::Config(format!(
            "need omega_min < omega_max, got [{omega_min}, {omega_max}]"
        )));
    }
    let last_t = (n_tau - 1) as f64;
    let mut taus: Vec<f64> = (0..n_tau).map(|i| beta * i as f64 / last_t).collect();
    taus[n_tau - 1] = beta;

    // Convex-combination form keeps symmetric windows exactly antisymmetric.
    let last_w = (n_omega - 1) as f64;
    let omegas: Vec<f64> = (0..n_omega)
        .map(|j| (omega_min * (last_w - j as f64) + omega_max * j as f64) / last_w)
        .collect();
    let dw = (omega_max - omega_min) / last_w;

    Ok((
        TimeGrid::from_points(beta, taus)?,
        FrequencyGrid::from_points(omegas, vec![dw; n_omega])?,
    ))
}

/// Discretized kernel, `N_τ × N_ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: Array2<f64>,
    time: TimeGrid,
    freq: FrequencyGrid,
    weighted: bool,
    spec: Option<GridSpec>,
}

pub fn build_kernel_matrix(time: &TimeGrid, freq: &FrequencyGrid, weighted: bool) -> KernelMatrix {
    let beta = time.beta();
    let entries = Array2::from_shape_fn((time.count(), freq.count()), |(i, j)| {
        let k = fermi_kernel_unchecked(time.points()[i], freq.points()[j], beta);
        if weighted {
            k * freq.weights()[j]
        } else {
            k
        }
    });
    KernelMatrix {
        entries,
        time: time.clone(),
        freq: freq.clone(),
        weighted,
        spec: None,
    }
}

impl KernelMatrix {
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn freq_grid(&self) -> &FrequencyGrid {
        &self.freq
    }

    /// The uniform discretization this matrix was built from, if any.
    pub fn grid_spec(&self) -> Option<GridSpec> {
        self.spec
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn n_tau(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_omega(&self) -> usize {
        self.entries.ncols()
    }

    /// `g = K a`. Only defined for the weighted kernel, where `a` holds
    /// density values and the quadrature is already inside `K`.
    pub fn forward_map(&self, spectrum: ArrayView1<f64>) -> Result<Array1<f64>> {
        if !self.weighted {
            return Err(Error::Domain(
                "forward_map needs a weighted kernel (quadrature weights folded in)".into(),
            ));
        }
        if spectrum.len() != self.n_omega() {
            return Err(Error::shape("forward_map", self.n_omega(), spectrum.len()));
        }
        Ok(self.entries.dot(&spectrum))
    }

    /// Largest singular value, by power iteration (tolerance 1e-10, 10 000 iterations).
    pub fn spectral_norm(&self) -> Result<f64> {
        linalg::spectral_norm_power(
            self.entries.view(),
            linalg::POWER_ITERATION_TOL,
            linalg::POWER_ITERATION_MAX_ITER,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn kernel_at_origin_is_half() {
        assert_eq!(fermi_kernel(0.0, 0.0, 10.0).unwrap(), 0.5);
    }

    #[test]
    fn endpoint_rows_sum_to_one() {
        for &w in &[-70.0, -3.3, -1e-9, 0.0, 0.25, 8.0, 70.0] {
            let s = fermi_kernel(0.0, w, 10.0).unwrap() + fermi_kernel(10.0, w, 10.0).unwrap();
            assert!((s - 1.0).abs() <= 2.0 * f64::EPSILON, "omega {w}: {s}");
        }
    }

    #[test]
    fn reflection_symmetry() {
        let a = fermi_kernel(2.5, 3.0, 10.0).unwrap();
        let b = fermi_kernel(7.5, -3.0, 10.0).unwrap();
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
    }

    #[test]
    fn extreme_frequencies_stay_finite() {
        for &w in &[-70.0, 70.0] {
            for &t in &[0.0, 5.0, 10.0] {
                let k = fermi_kernel(t, w, 10.0).unwrap();
                assert!(k.is_finite() && (0.0..=1.0).contains(&k));
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(fermi_kernel(-0.1, 0.0, 10.0), Err(Error::Domain(_))));
        assert!(matches!(fermi_kernel(10.5, 0.0, 10.0), Err(Error::Domain(_))));
        assert!(matches!(fermi_kernel(0.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(fermi_kernel(0.0, 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn small_uniform_grids() {
        let (t, w) = build_grids(10.0, 3, -1.0, 1.0, 3).unwrap();
        assert_eq!(t.points(), &[0.0, 5.0, 10.0]);
        assert_eq!(w.points(), &[-1.0, 0.0, 1.0]);
        assert_eq!(w.weights(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn degenerate_window_is_rejected() {
        assert!(matches!(build_grids(10.0, 2, 0.0, 0.0, 2), Err(Error::Config(_))));
        assert!(matches!(build_grids(10.0, 1, -1.0, 1.0, 2), Err(Error::Config(_))));
        assert!(matches!(build_grids(0.0, 2, -1.0, 1.0, 2), Err(Error::Config(_))));
    }

    #[test]
    fn default_grid_spacing() {
        let (t, w) = GridSpec::default().build().unwrap();
        assert_eq!(t.count(), 64);
        assert_eq!(*t.points().last().unwrap(), 10.0);
        assert_eq!(w.points()[0], -8.0);
        assert_eq!(w.points()[63], 8.0);
        for &dw in w.weights() {
            assert!((dw - 16.0 / 63.0).abs() < 1e-15);
        }
    }

    #[test]
    fn one_by_one_weighted_kernel() {
        let t = TimeGrid::from_points(10.0, vec![0.0]).unwrap();
        let w = FrequencyGrid::from_points(vec![0.0], vec![1.0]).unwrap();
        let k = build_kernel_matrix(&t, &w, true);
        assert_eq!(k.matrix()[[0, 0]], 0.5);
    }

    #[test]
    fn forward_map_basics() {
        let k = GridSpec::default().kernel().unwrap();
        let zero = Array1::zeros(64);
        assert!(k.forward_map(zero.view()).unwrap().iter().all(|&g| g == 0.0));

        let j = 40;
        let dw = k.freq_grid().weights()[j];
        let mut spike = Array1::zeros(64);
        spike[j] = 1.0 / dw;
        let g = k.forward_map(spike.view()).unwrap();
        for (i, &tau) in k.time_grid().points().iter().enumerate() {
            let expect = fermi_kernel(tau, k.freq_grid().points()[j], 10.0).unwrap();
            assert!((g[i] - expect).abs() < 1e-15);
        }
        assert!(matches!(
            k.forward_map(Array1::zeros(3).view()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn unweighted_kernel_refuses_forward_map() {
        let (t, w) = GridSpec::default().build().unwrap();
        let k = build_kernel_matrix(&t, &w, false);
        assert!(matches!(k.forward_map(Array1::zeros(64).view()), Err(Error::Domain(_))));
    }
}
