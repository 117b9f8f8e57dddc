//! Fully-connected baselines: dense layers with rectified hidden units and a
//! rectified output (spectra are nonnegative). FCN-2 has one hidden layer,
//! FCN-3 two, and all hidden layers share one width.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::train::{GradientTensors, SpectralPredictor, Trainable};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnParams {
    pub layers: Vec<Dense>,
}

impl FcnParams {
    /// He-initialized hidden layers; the output layer starts small with its
    /// bias at `output_bias` so that no rectified output unit starts dead.
    pub fn new(n_tau: usize, n_omega: usize, hidden: &[usize], output_bias: f64, seed: u64) -> Result<Self> {
        if hidden.iter().any(|&w| w == 0) || n_tau == 0 || n_omega == 0 {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut sizes = vec![n_tau];
        sizes.extend_from_slice(hidden);
        sizes.push(n_omega);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let (std, b) = if i == last {
                    (0.1 / (fan_in as f64).sqrt(), output_bias)
                } else {
                    ((2.0 / fan_in as f64).sqrt(), 0.0)
                };
                Dense {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| std * rng.standard_normal()),
                    bias: Array1::from_elem(fan_out, b),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(n_tau: usize, n_omega: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![n_tau];
        sizes.extend_from_slice(hidden);
        sizes.push(n_omega);
        Self {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weights: Array2::zeros((w[1], w[0])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        }
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.bias.len()).collect()
    }

    /// Depth in the FCN-n naming (number of weight layers).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Learnable scalars of a dense network with the given layer sizes.
pub fn dense_parameter_count(n_tau: usize, n_omega: usize, hidden: &[usize]) -> usize {
    let mut sizes = vec![n_tau];
    sizes.extend_from_slice(hidden);
    sizes.push(n_omega);
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Smallest shared hidden width whose parameter count reaches `target`.
pub fn width_for_parameter_target(n_tau: usize, n_omega: usize, hidden_layers: usize, target: usize) -> usize {
    let count = |w: usize| dense_parameter_count(n_tau, n_omega, &vec![w; hidden_layers]);
    let mut hi = 1;
    while count(hi) < target {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if count(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if count(lo.max(1)) >= target {
        lo.max(1)
    } else {
        hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnTrace {
    pub input: Array2<f64>,
    /// Pre-activations of every layer.
    pub pre_activations: Vec<Array2<f64>>,
    /// Rectified activations of every layer; the last is the output.
    pub activations: Vec<Array2<f64>>,
}

pub fn fcn_forward_batch(params: &FcnParams, g: ArrayView2<f64>) -> Result<FcnTrace> {
    let first = &params.layers[0];
    if g.nrows() != first.weights.ncols() {
        return Err(Error::shape("fcn forward", first.weights.ncols(), g.nrows()));
    }
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    for (n, layer) in params.layers.iter().enumerate() {
        let x = if n == 0 { g } else { activations[n - 1].view() };
        let z = layer.weights.dot(&x) + &layer.bias.view().insert_axis(Axis(1));
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite pre-activation in dense layer {}", n + 1)));
        }
        activations.push(z.mapv(|v| v.max(0.0)));
        pre_activations.push(z);
    }
    Ok(FcnTrace {
        input: g.to_owned(),
        pre_activations,
        activations,
    })
}

pub fn fcn_forward(params: &FcnParams, g: ArrayView1<f64>) -> Result<Array1<f64>> {
    let trace = fcn_forward_batch(params, g.insert_axis(Axis(1)))?;
    Ok(trace.activations.last().unwrap().column(0).to_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnGrads {
    pub layers: Vec<DenseGrad>,
}

/// Gradients of the batch-mean `‖output − target‖² / N_ω`.
pub fn fcn_backward_batch(params: &FcnParams, trace: &FcnTrace, a_true: ArrayView2<f64>) -> Result<FcnGrads> {
    let out = trace.activations.last().unwrap();
    if out.dim() != a_true.dim() {
        return Err(Error::shape("fcn backward", format!("{:?}", out.dim()), format!("{:?}", a_true.dim())));
    }
    let (nw, batch) = out.dim();
    let mut delta = (out - &a_true) * (2.0 / (nw * batch) as f64);
    let mut grads = Vec::with_capacity(params.layers.len());
    for n in (0..params.layers.len()).rev() {
        Zip::from(&mut delta)
            .and(&trace.pre_activations[n])
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0
                }
            });
        let x = if n == 0 { &trace.input } else { &trace.activations[n - 1] };
        grads.push(DenseGrad {
            weights: crate::unrolled::standard(delta.dot(&x.t())),
            bias: delta.sum_axis(Axis(1)),
        });
        if n > 0 {
            delta = params.layers[n].weights.t().dot(&delta);
        }
    }
    grads.reverse();
    Ok(FcnGrads { layers: grads })
}

pub fn fcn_backward(params: &FcnParams, trace: &FcnTrace, a_true: ArrayView1<f64>) -> Result<FcnGrads> {
    fcn_backward_batch(params, trace, a_true.insert_axis(Axis(1)))
}

impl SpectralPredictor for FcnParams {
    fn predict_batch(&self, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(fcn_forward_batch(self, g)?.activations.pop().unwrap())
    }

    fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn n_tau(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    fn n_omega(&self) -> usize {
        self.layers.last().unwrap().bias.len()
    }
}

impl GradientTensors for FcnGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }
}

impl Trainable for FcnParams {
    type Grad = FcnGrads;

    fn loss_and_grad(&self, g: ArrayView2<f64>, a_true: ArrayView2<f64>) -> Result<(f64, FcnGrads)> {
        let trace = fcn_forward_batch(self, g)?;
        let loss = crate::unrolled::mse_loss(trace.activations.last().unwrap().view(), a_true);
        let grads = fcn_backward_batch(self, &trace, a_true)?;
        Ok((loss, grads))
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()])
            .collect()
    }
}
