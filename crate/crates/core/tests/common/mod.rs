#![allow(dead_code)]

use anacont::fcn::{fcn_backward_batch, fcn_forward_batch, FcnParams};
use anacont::rng::SeededRng;
use anacont::unrolled::{backward_batch, forward_batch, mse_loss, Layer, UnrolledNetParams, Variant};
use ndarray::Array2;

pub const FD_STEP: f64 = 1e-6;
/// Pre-activations closer than this to a kink make a draw degenerate.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.standard_normal())
}

pub fn random_unrolled(rng: &mut SeededRng, variant: Variant, depth: usize, n: usize) -> UnrolledNetParams {
    let layers = (0..depth)
        .map(|_| Layer {
            w_t: Array2::eye(n) + random_matrix(rng, n, n, 0.15),
            w_e: random_matrix(rng, n, n, 0.3),
            theta: rng.uniform_in(0.05, 0.3),
        })
        .collect();
    UnrolledNetParams {
        variant,
        eta: 0.5,
        layers,
        grid: None,
    }
}

pub fn random_fcn(rng: &mut SeededRng, n: usize, hidden: &[usize]) -> FcnParams {
    let mut p = FcnParams::new(n, n, hidden, 0.1, rng.next_u64()).unwrap();
    for l in &mut p.layers {
        l.weights.mapv_inplace(|w| w + 0.05 * rng.standard_normal());
        l.bias.mapv_inplace(|b| b + 0.1 * rng.standard_normal());
    }
    p
}

fn near_kink_unrolled(p: &UnrolledNetParams, g: &Array2<f64>) -> bool {
    let trace = forward_batch(p, g.view()).unwrap();
    trace
        .pre_activations
        .iter()
        .zip(&p.layers)
        .any(|(z, l)| z.iter().any(|&v| (v.abs() - l.theta).abs() < KINK_MARGIN))
}

fn near_kink_fcn(p: &FcnParams, g: &Array2<f64>) -> bool {
    let trace = fcn_forward_batch(p, g.view()).unwrap();
    trace.pre_activations.iter().any(|z| z.iter().any(|&v| v.abs() < KINK_MARGIN))
}

/// `|fd - analytic| / max(|fd|, |analytic|, 1e-3 * largest analytic entry)`.
fn relative_errors(analytic: &[f64], fd: &[f64]) -> f64 {
    let floor = 1e-3 * analytic.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Worst relative error between backpropagated and central-difference
/// gradients over every parameter; also returns how many draws were rejected
/// as degenerate before a usable one was found.
pub fn unrolled_gradient_error(seed: u64, variant: Variant, depth: usize, n: usize, batch: usize) -> (f64, usize) {
    let mut rng = SeededRng::new(seed);
    let mut rejected = 0;
    let (p, g, a) = loop {
        let p = random_unrolled(&mut rng, variant, depth, n);
        let g = random_matrix(&mut rng, n, batch, 1.0);
        let a = random_matrix(&mut rng, n, batch, 0.5);
        if !near_kink_unrolled(&p, &g) {
            break (p, g, a);
        }
        rejected += 1;
        assert!(rejected < 1000, "could not draw a non-degenerate instance");
    };
    let loss = |q: &UnrolledNetParams| mse_loss(forward_batch(q, g.view()).unwrap().output().view(), a.view());
    let grads = backward_batch(&p, &forward_batch(&p, g.view()).unwrap(), a.view()).unwrap();
    let mut analytic = Vec::new();
    let mut fd = Vec::new();
    for (li, lg) in grads.layers.iter().enumerate() {
        for (which, gm) in [(0, &lg.w_t), (1, &lg.w_e)] {
            for ((r, c), &an) in gm.indexed_iter() {
                let bump = |d: f64| {
                    let mut q = p.clone();
                    let m = if which == 0 { &mut q.layers[li].w_t } else { &mut q.layers[li].w_e };
                    m[(r, c)] += d;
                    loss(&q)
                };
                analytic.push(an);
                fd.push((bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP));
            }
        }
        let bump = |d: f64| {
            let mut q = p.clone();
            q.layers[li].theta += d;
            loss(&q)
        };
        analytic.push(lg.theta);
        fd.push((bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP));
    }
    (relative_errors(&analytic, &fd), rejected)
}

pub fn fcn_gradient_error(seed: u64, n: usize, hidden: &[usize], batch: usize) -> (f64, usize) {
    let mut rng = SeededRng::new(seed);
    let mut rejected = 0;
    let (p, g, a) = loop {
        let p = random_fcn(&mut rng, n, hidden);
        let g = random_matrix(&mut rng, n, batch, 1.0);
        let a = random_matrix(&mut rng, n, batch, 0.5);
        if !near_kink_fcn(&p, &g) {
            break (p, g, a);
        }
        rejected += 1;
        assert!(rejected < 1000, "could not draw a non-degenerate instance");
    };
    let loss = |q: &FcnParams| {
        let t = fcn_forward_batch(q, g.view()).unwrap();
        mse_loss(t.activations.last().unwrap().view(), a.view())
    };
    let grads = fcn_backward_batch(&p, &fcn_forward_batch(&p, g.view()).unwrap(), a.view()).unwrap();
    let mut analytic = Vec::new();
    let mut fd = Vec::new();
    for (li, lg) in grads.layers.iter().enumerate() {
        for ((r, c), &an) in lg.weights.indexed_iter() {
            let bump = |d: f64| {
                let mut q = p.clone();
                q.layers[li].weights[(r, c)] += d;
                loss(&q)
            };
            analytic.push(an);
            fd.push((bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP));
        }
        for (r, &an) in lg.bias.iter().enumerate() {
            let bump = |d: f64| {
                let mut q = p.clone();
                q.layers[li].bias[r] += d;
                loss(&q)
            };
            analytic.push(an);
            fd.push((bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP));
        }
    }
    (relative_errors(&analytic, &fd), rejected)
}
