//! Learned optimizers: ISTA unrolled to a fixed depth with per-layer weights.
//!
//! Both variants start from `a₁ = 0` and apply, for `n = 1..L`,
//!
//! ```text
//! z_n     = W_t[n] a_n + W_e[n] g
//! LISTA:  a_{n+1} = S_θn(z_n)
//! RLISTA: a_{n+1} = (1 − η) a_n + η S_θn(z_n)
//! ```
//!
//! All routines work on batches stored column-wise (`N_ω × B` spectra,
//! `N_τ × B` Green's functions); a single sample is a batch of one.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::kernel::{GridSpec, KernelMatrix};
use crate::prox::soft_threshold_scalar;
use crate::train::{GradientTensors, SpectralPredictor, TrainConfig, Trainable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Lista,
    Rlista,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Lista => "lista",
            Variant::Rlista => "rlista",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lista" => Ok(Variant::Lista),
            "rlista" => Ok(Variant::Rlista),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected lista or rlista)"))),
        }
    }
}

pub const DEFAULT_ETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `N_ω × N_ω`
    pub w_t: Array2<f64>,
    /// `N_ω × N_τ`
    pub w_e: Array2<f64>,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledNetParams {
    pub variant: Variant,
    /// Relaxation factor; only read by RLISTA.
    pub eta: f64,
    pub layers: Vec<Layer>,
    /// Discretization the network was built for, when known.
    pub grid: Option<GridSpec>,
}

impl UnrolledNetParams {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn n_omega(&self) -> usize {
        self.layers[0].w_t.nrows()
    }

    pub fn n_tau(&self) -> usize {
        self.layers[0].w_e.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network depth must be at least 1".into()));
        }
        if self.variant == Variant::Rlista && !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!(
                "RLISTA relaxation factor must satisfy 0 < eta < 1, got {}",
                self.eta
            )));
        }
        let (nw, nt) = (self.n_omega(), self.n_tau());
        for (n, layer) in self.layers.iter().enumerate() {
            if layer.w_t.dim() != (nw, nw) || layer.w_e.dim() != (nw, nt) {
                return Err(Error::shape(
                    "unrolled layer",
                    format!("W_t {nw}x{nw}, W_e {nw}x{nt}"),
                    format!("layer {n}: W_t {:?}, W_e {:?}", layer.w_t.dim(), layer.w_e.dim()),
                ));
            }
            if !(layer.theta >= 0.0) {
                return Err(Error::Config(format!("layer {n} has negative threshold {}", layer.theta)));
            }
        }
        Ok(())
    }
}

/// Every layer at the ISTA weights `W_t = I − τKᵀK`, `W_e = τKᵀ`, `θ = τλ`
/// with `τ = 1/‖K‖₂²`. Untrained LISTA then computes exactly `L` ISTA steps.
pub fn init_params(kernel: &KernelMatrix, lambda: f64, variant: Variant, depth: usize, eta: f64) -> Result<UnrolledNetParams> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be > 0, got {lambda}")));
    }
    let norm = kernel.spectral_norm()?;
    let step = 1.0 / (norm * norm);
    let k = kernel.matrix();
    let w_e = standard(k.t().to_owned() * step);
    let w_t = Array2::<f64>::eye(kernel.n_omega()) - k.t().dot(&k) * step;
    let layer = Layer {
        w_t,
        w_e,
        theta: step * lambda,
    };
    let params = UnrolledNetParams {
        variant,
        eta: if variant == Variant::Rlista { eta } else { 1.0 },
        layers: vec![layer; depth],
        grid: kernel.grid_spec(),
    };
    params.validate()?;
    Ok(params)
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Array2<f64>,
    /// `z_n` for `n = 1..L`.
    pub pre_activations: Vec<Array2<f64>>,
    /// `a_{n+1}` for `n = 1..L`; the last entry is the output.
    pub activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace of a network with at least one layer")
    }

    /// Output of a single-sample trace.
    pub fn output_vector(&self) -> Array1<f64> {
        self.output().column(0).to_owned()
    }
}

pub fn forward(params: &UnrolledNetParams, g: ArrayView1<f64>) -> Result<ForwardTrace> {
    forward_batch(params, g.insert_axis(Axis(1)))
}

pub fn forward_batch(params: &UnrolledNetParams, g: ArrayView2<f64>) -> Result<ForwardTrace> {
    if params.layers.is_empty() {
        return Err(Error::Config("network depth must be at least 1".into()));
    }
    if g.nrows() != params.n_tau() {
        return Err(Error::shape("unrolled forward", format!("{} imaginary-time points", params.n_tau()), g.nrows()));
    }
    let batch = g.ncols();
    let mut a = Array2::<f64>::zeros((params.n_omega(), batch));
    let mut pre_activations = Vec::with_capacity(params.depth());
    let mut activations = Vec::with_capacity(params.depth());
    for (n, layer) in params.layers.iter().enumerate() {
        let mut z = layer.w_e.dot(&g);
        if n > 0 {
            z += &layer.w_t.dot(&a);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite pre-activation in layer {}", n + 1)));
        }
        let theta = layer.theta;
        let next = match params.variant {
            Variant::Lista => z.mapv(|v| soft_threshold_scalar(v, theta)),
            Variant::Rlista => {
                let eta = params.eta;
                let mut out = Array2::zeros(z.raw_dim());
                Zip::from(&mut out)
                    .and(&a)
                    .and(&z)
                    .for_each(|o, &prev, &zv| *o = (1.0 - eta) * prev + eta * soft_threshold_scalar(zv, theta));
                out
            }
        };
        pre_activations.push(z);
        activations.push(next.clone());
        a = next;
    }
    Ok(ForwardTrace {
        input: g.to_owned(),
        pre_activations,
        activations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub w_t: Array2<f64>,
    pub w_e: Array2<f64>,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledGrads {
    pub layers: Vec<LayerGrad>,
}

/// Mean over the batch of `‖output − target‖² / N_ω`.
pub fn mse_loss(output: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    let (rows, batch) = output.dim();
    let diff = &output - &target;
    diff.iter().map(|d| d * d).sum::<f64>() / (rows * batch) as f64
}

pub fn backward(params: &UnrolledNetParams, trace: &ForwardTrace, a_true: ArrayView1<f64>) -> Result<UnrolledGrads> {
    backward_batch(params, trace, a_true.insert_axis(Axis(1)))
}

/// Reverse-mode gradients of [`mse_loss`] with respect to every `W_t`, `W_e`
/// and `θ`. The soft-threshold is differentiated almost everywhere:
/// `∂S/∂z = 1` and `∂S/∂θ = −sign(z)` when `|z| > θ`, both zero otherwise.
pub fn backward_batch(params: &UnrolledNetParams, trace: &ForwardTrace, a_true: ArrayView2<f64>) -> Result<UnrolledGrads> {
    if trace.pre_activations.len() != params.depth() || trace.activations.len() != params.depth() {
        return Err(Error::shape("unrolled backward", format!("trace of depth {}", params.depth()), trace.activations.len()));
    }
    let out = trace.output();
    if a_true.dim() != out.dim() {
        return Err(Error::shape("unrolled backward", format!("target {:?}", out.dim()), format!("{:?}", a_true.dim())));
    }
    let (nw, batch) = out.dim();
    let scale = 2.0 / (nw * batch) as f64;
    let mut delta = (out - &a_true) * scale;
    let residual = params.variant == Variant::Rlista;
    let eta = if residual { params.eta } else { 1.0 };

    let mut grads = Vec::with_capacity(params.depth());
    for n in (0..params.depth()).rev() {
        let layer = &params.layers[n];
        let z = &trace.pre_activations[n];
        let theta = layer.theta;
        let mut dz = Array2::<f64>::zeros(z.raw_dim());
        let mut dtheta = 0.0;
        Zip::from(&mut dz).and(z).and(&delta).for_each(|dzv, &zv, &d| {
            if zv.abs() > theta {
                *dzv = eta * d;
                dtheta -= eta * d * zv.signum();
            }
        });
        let w_e = standard(dz.dot(&trace.input.t()));
        let w_t = if n > 0 {
            standard(dz.dot(&trace.activations[n - 1].t()))
        } else {
            Array2::zeros((nw, nw))
        };
        grads.push(LayerGrad { w_t, w_e, theta: dtheta });
        if n > 0 {
            let mut prev = layer.w_t.t().dot(&dz);
            if residual {
                prev.scaled_add(1.0 - eta, &delta);
            }
            delta = prev;
        }
    }
    grads.reverse();
    Ok(UnrolledGrads { layers: grads })
}

pub(crate) fn standard(m: Array2<f64>) -> Array2<f64> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

/// Learnable scalars: `L (N_ω² + N_ω N_τ + 1)`; `η` is a fixed hyperparameter.
pub fn parameter_count(params: &UnrolledNetParams) -> usize {
    let (nw, nt) = (params.n_omega(), params.n_tau());
    params.depth() * (nw * nw + nw * nt + 1)
}

impl SpectralPredictor for UnrolledNetParams {
    fn predict_batch(&self, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        let trace = forward_batch(self, g)?;
        Ok(trace.activations.into_iter().last().expect("depth >= 1"))
    }

    fn parameter_count(&self) -> usize {
        parameter_count(self)
    }

    fn n_tau(&self) -> usize {
        UnrolledNetParams::n_tau(self)
    }

    fn n_omega(&self) -> usize {
        UnrolledNetParams::n_omega(self)
    }
}

impl GradientTensors for UnrolledGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len());
        for l in &self.layers {
            out.push(l.w_t.as_slice().expect("standard layout"));
            out.push(l.w_e.as_slice().expect("standard layout"));
            out.push(std::slice::from_ref(&l.theta));
        }
        out
    }
}

impl Trainable for UnrolledNetParams {
    type Grad = UnrolledGrads;

    fn loss_and_grad(&self, g: ArrayView2<f64>, a_true: ArrayView2<f64>) -> Result<(f64, UnrolledGrads)> {
        let trace = forward_batch(self, g)?;
        let loss = mse_loss(trace.output().view(), a_true);
        let grads = backward_batch(self, &trace, a_true)?;
        Ok((loss, grads))
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.w_t.as_slice_mut().expect("standard layout"));
            out.push(l.w_e.as_slice_mut().expect("standard layout"));
            out.push(std::slice::from_mut(&mut l.theta));
        }
        out
    }

    fn lr_scales(&self, config: &TrainConfig) -> Option<Vec<f64>> {
        Some(
            self.layers
                .iter()
                .flat_map(|_| [1.0, 1.0, config.threshold_lr_scale])
                .collect(),
        )
    }

    fn project(&mut self) {
        for l in &mut self.layers {
            l.theta = l.theta.max(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{ista_step, IstaConfig};
    use crate::rng::SeededRng;

    fn default_kernel() -> KernelMatrix {
        GridSpec::default().kernel().unwrap()
    }

    fn some_greens(k: &KernelMatrix) -> Array1<f64> {
        let a = k.freq_grid().flat_density();
        k.forward_map(a.view()).unwrap()
    }

    #[test]
    fn huge_thresholds_zero_the_output() {
        let k = default_kernel();
        let g = some_greens(&k);
        for variant in [Variant::Lista, Variant::Rlista] {
            let mut p = init_params(&k, 1e-3, variant, 4, 0.5).unwrap();
            for l in &mut p.layers {
                l.theta = 1e6;
            }
            let trace = forward(&p, g.view()).unwrap();
            assert!(trace.output().iter().all(|&x| x == 0.0));
            let grads = backward(&p, &trace, k.freq_grid().flat_density().view()).unwrap();
            if variant == Variant::Lista {
                for lg in &grads.layers {
                    assert!(lg.w_t.iter().chain(lg.w_e.iter()).all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn depth_one_matches_ista_step() {
        let k = default_kernel();
        let g = some_greens(&k);
        let lambda = 1e-3;
        let p = init_params(&k, lambda, Variant::Lista, 1, 0.5).unwrap();
        let cfg = IstaConfig::for_operator(k.matrix(), lambda).unwrap();
        let ista = ista_step(Array1::zeros(64).view(), k.matrix(), g.view(), &cfg).unwrap();
        let out = forward(&p, g.view()).unwrap().output_vector();
        for (x, y) in out.iter().zip(ista.iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!((p.layers[0].theta - lambda * cfg.step).abs() < 1e-18);
    }

    #[test]
    fn eta_one_rlista_equals_lista() {
        let k = default_kernel();
        let g = some_greens(&k);
        let lista = init_params(&k, 1e-3, Variant::Lista, 5, 0.5).unwrap();
        let mut rlista = lista.clone();
        rlista.variant = Variant::Rlista;
        rlista.eta = 1.0;
        let a = forward(&lista, g.view()).unwrap();
        let b = forward(&rlista, g.view()).unwrap();
        let bits = |m: &Array2<f64>| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.output()), bits(b.output()));
    }

    #[test]
    fn perfect_output_has_zero_gradient() {
        let k = default_kernel();
        let g = some_greens(&k);
        let p = init_params(&k, 1e-3, Variant::Rlista, 3, 0.5).unwrap();
        let trace = forward(&p, g.view()).unwrap();
        let target = trace.output_vector();
        let grads = backward(&p, &trace, target.view()).unwrap();
        for t in grads.tensors() {
            assert!(t.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn parameter_counts() {
        let k = default_kernel();
        let p1 = init_params(&k, 1e-3, Variant::Lista, 1, 0.5).unwrap();
        assert_eq!(parameter_count(&p1), 8193);
        let p6 = init_params(&k, 1e-3, Variant::Lista, 6, 0.5).unwrap();
        assert_eq!(parameter_count(&p6), 49158);
    }

    #[test]
    fn validation_errors() {
        let k = default_kernel();
        assert!(init_params(&k, 1e-3, Variant::Rlista, 3, 1.5).is_err());
        assert!(init_params(&k, 1e-3, Variant::Rlista, 3, 0.0).is_err());
        assert!(init_params(&k, 1e-3, Variant::Lista, 0, 0.5).is_err());
        let p = init_params(&k, 1e-3, Variant::Lista, 2, 0.5).unwrap();
        assert!(matches!(forward(&p, Array1::zeros(10).view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn nan_input_names_the_layer() {
        let k = default_kernel();
        let p = init_params(&k, 1e-3, Variant::Lista, 2, 0.5).unwrap();
        let mut g = some_greens(&k);
        g[3] = f64::NAN;
        let err = forward(&p, g.view()).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn batch_matches_single_samples() {
        let k = default_kernel();
        let p = init_params(&k, 1e-3, Variant::Rlista, 3, 0.5).unwrap();
        let mut rng = SeededRng::new(1);
        let g = Array2::from_shape_fn((64, 5), |_| rng.uniform());
        let batch = p.predict_batch(g.view()).unwrap();
        for j in 0..5 {
            let single = forward(&p, g.column(j)).unwrap().output_vector();
            for (x, y) in single.iter().zip(batch.column(j).iter()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
