//! Synthetic spectra, their Green's functions, and dataset persistence.
//!
//! Spectra are Gaussian mixtures normalized to unit mass on the frequency
//! grid. A single-peak spectrum gets one sharp peak; multi-peak spectra are
//! built from broad peaks. For each sample the draws happen in a fixed order from that
//! sample's own stream ([`SeededRng::for_item`]): peak count, then
//! `(center, width, weight)` per peak, then one normal per imaginary-time
//! point for the noise. Generation is therefore identical whether samples are
//! produced serially or in parallel, and the first `n` samples of a larger
//! dataset equal a dataset of size `n`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::{fmt_f64, Container};
use crate::error::{Error, Result};
use crate::kernel::{FrequencyGrid, GridSpec, KernelMatrix};
use crate::rng::SeededRng;
use crate::Execution;

pub const MAX_PEAKS: usize = 8;
/// Mixture weights are drawn uniformly from this interval before normalization,
/// so that no peak of a multi-peak sample is vanishingly small.
const WEIGHT_RANGE: (f64, f64) = (0.2, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub peak_count_min: usize,
    pub peak_count_max: usize,
    /// Center range of the peaks of a multi-peak spectrum.
    pub center_min: f64,
    pub center_max: f64,
    /// Center range of the lone peak of a single-peak spectrum.
    pub sharp_center_min: f64,
    pub sharp_center_max: f64,
    /// Width range of the lone peak of a single-peak spectrum.
    pub sharp_width_min: f64,
    pub sharp_width_max: f64,
    /// Width range of every peak of a multi-peak spectrum.
    pub broad_width_min: f64,
    pub broad_width_max: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            peak_count_min: 1,
            peak_count_max: 4,
            center_min: -5.0,
            center_max: 5.0,
            sharp_center_min: -0.5,
            sharp_center_max: 0.5,
            sharp_width_min: 0.1,
            sharp_width_max: 0.4,
            broad_width_min: 0.4,
            broad_width_max: 1.5,
            noise_sigma: 1e-3,
            seed: 42,
        }
    }
}

impl SpectrumConfig {
    /// Same config restricted to `lo..=hi` peaks (used for the strata).
    pub fn with_peaks(mut self, lo: usize, hi: usize) -> Self {
        self.peak_count_min = lo;
        self.peak_count_max = hi;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, freq: &FrequencyGrid) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.peak_count_min < 1 || self.peak_count_max > MAX_PEAKS || self.peak_count_min > self.peak_count_max {
            return bad(format!(
                "peak count range [{}, {}] must lie within [1, {MAX_PEAKS}]",
                self.peak_count_min, self.peak_count_max
            ));
        }
        for (lo, hi) in [
            (self.sharp_width_min, self.sharp_width_max),
            (self.broad_width_min, self.broad_width_max),
        ] {
            if !(lo > 0.0) || lo > hi || !hi.is_finite() {
                return bad(format!("width range [{lo}, {hi}] must be positive and ordered"));
            }
        }
        let lo = freq.points()[0];
        let hi = *freq.points().last().unwrap();
        let mut ranges = Vec::new();
        if self.peak_count_min == 1 {
            ranges.push((self.sharp_center_min, self.sharp_center_max, self.sharp_width_max));
        }
        if self.peak_count_max > 1 {
            ranges.push((self.center_min, self.center_max, self.broad_width_max));
        }
        for (c_lo, c_hi, width) in ranges {
            if !(c_lo <= c_hi) {
                return bad(format!("center range [{c_lo}, {c_hi}] is empty"));
            }
            let margin = 2.0 * width;
            if c_lo - margin < lo || c_hi + margin > hi {
                return bad(format!(
                    "centers [{c_lo}, {c_hi}] must stay {margin} (twice the largest width) inside the grid [{lo}, {hi}]"
                ));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    pub spectrum: Array1<f64>,
    pub greens_clean: Array1<f64>,
    pub greens_noisy: Array1<f64>,
    pub peak_count: usize,
}

/// Draws one Gaussian-mixture spectrum. Returns the spectrum and its peak count.
pub fn sample_spectrum_with_count(
    rng: &mut SeededRng,
    config: &SpectrumConfig,
    freq: &FrequencyGrid,
) -> (Array1<f64>, usize) {
    let k = rng.integer_in(config.peak_count_min, config.peak_count_max);
    let (center_min, center_max, width_min, width_max) = if k == 1 {
        (config.sharp_center_min, config.sharp_center_max, config.sharp_width_min, config.sharp_width_max)
    } else {
        (config.center_min, config.center_max, config.broad_width_min, config.broad_width_max)
    };
    let peaks: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            let center = rng.uniform_in(center_min, center_max);
            let width = rng.uniform_in(width_min, width_max);
            let weight = rng.uniform_in(WEIGHT_RANGE.0, WEIGHT_RANGE.1);
            (center, width, weight)
        })
        .collect();
    let total_weight: f64 = peaks.iter().map(|p| p.2).sum();
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let mut a = Array1::from_shape_fn(freq.count(), |j| {
        let w = freq.points()[j];
        peaks
            .iter()
            .map(|&(c, s, m)| m / total_weight / (norm * s) * (-0.5 * ((w - c) / s).powi(2)).exp())
            .sum::<f64>()
    });
    let mass = freq.integrate(a.view());
    a /= mass;
    (a, k)
}

pub fn sample_spectrum(rng: &mut SeededRng, config: &SpectrumConfig, freq: &FrequencyGrid) -> Array1<f64> {
    sample_spectrum_with_count(rng, config, freq).0
}

/// Pairs a spectrum with its clean and noisy Green's functions.
pub fn make_sample(
    spectrum: Array1<f64>,
    peak_count: usize,
    kernel: &KernelMatrix,
    noise_sigma: f64,
    rng: &mut SeededRng,
) -> Result<SpectrumSample> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::Domain(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let greens_clean = kernel.forward_map(spectrum.view())?;
    let greens_noisy = if noise_sigma == 0.0 {
        greens_clean.clone()
    } else {
        greens_clean.mapv(|g| g + noise_sigma * rng.standard_normal())
    };
    Ok(SpectrumSample {
        spectrum,
        greens_clean,
        greens_noisy,
        peak_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<SpectrumSample>,
    pub config: SpectrumConfig,
    pub grid: GridSpec,
}

pub fn generate_dataset(n: usize, config: &SpectrumConfig, grid: &GridSpec, exec: Execution) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let (_, freq) = grid.build()?;
    config.validate(&freq)?;
    let kernel = grid.kernel()?;
    let one = |i: usize| {
        let mut rng = SeededRng::for_item(config.seed, i as u64);
        let (a, k) = sample_spectrum_with_count(&mut rng, config, &freq);
        make_sample(a, k, &kernel, config.noise_sigma, &mut rng)
    };
    let samples = match exec {
        Execution::Serial => (0..n).map(one).collect::<Result<Vec<_>>>()?,
        Execution::Parallel => (0..n).into_par_iter().map(one).collect::<Result<Vec<_>>>()?,
    };
    Ok(Dataset {
        samples,
        config: *config,
        grid: *grid,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Noisy Green's functions as columns, `N_τ × n`.
    pub fn greens_matrix(&self) -> Array2<f64> {
        columns(self.grid.n_tau, self.samples.iter().map(|s| s.greens_noisy.view()))
    }

    /// Ground-truth spectra as columns, `N_ω × n`.
    pub fn spectra_matrix(&self) -> Array2<f64> {
        columns(self.grid.n_omega, self.samples.iter().map(|s| s.spectrum.view()))
    }

    /// Samples whose peak count lies in `lo..=hi`, in original order.
    pub fn stratum(&self, lo: usize, hi: usize) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .filter(|s| (lo..=hi).contains(&s.peak_count))
                .cloned()
                .collect(),
            config: self.config,
            grid: self.grid,
        }
    }

    pub fn take(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples.iter().take(n).cloned().collect(),
            config: self.config,
            grid: self.grid,
        }
    }

    pub fn check_grid(&self, expected: &GridSpec) -> Result<()> {
        if &self.grid != expected {
            return Err(Error::shape("dataset grid", format!("{expected:?}"), format!("{:?}", self.grid)));
        }
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.set("kind", "dataset");
        write_grid(&mut c, &self.grid);
        let cfg = &self.config;
        c.set("peak_count_min", cfg.peak_count_min);
        c.set("peak_count_max", cfg.peak_count_max);
        c.set("center_min", fmt_f64(cfg.center_min));
        c.set("center_max", fmt_f64(cfg.center_max));
        c.set("sharp_center_min", fmt_f64(cfg.sharp_center_min));
        c.set("sharp_center_max", fmt_f64(cfg.sharp_center_max));
        c.set("sharp_width_min", fmt_f64(cfg.sharp_width_min));
        c.set("sharp_width_max", fmt_f64(cfg.sharp_width_max));
        c.set("broad_width_min", fmt_f64(cfg.broad_width_min));
        c.set("broad_width_max", fmt_f64(cfg.broad_width_max));
        c.set("noise_sigma", fmt_f64(cfg.noise_sigma));
        c.set("seed", cfg.seed);
        c.set("n_samples", self.samples.len());
        c.set(
            "layout",
            "per sample: peak_count[1] spectrum[n_omega] greens_clean[n_tau] greens_noisy[n_tau]",
        );
        let stride = 1 + self.grid.n_omega + 2 * self.grid.n_tau;
        c.payload.reserve(stride * self.samples.len());
        for s in &self.samples {
            c.payload.push(s.peak_count as f64);
            c.payload.extend(s.spectrum.iter());
            c.payload.extend(s.greens_clean.iter());
            c.payload.extend(s.greens_noisy.iter());
        }
        c
    }

    /// SHA-256 of the serialized dataset, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_container().to_bytes()))
    }
}

fn columns<'a>(rows: usize, cols: impl ExactSizeIterator<Item = ArrayView1<'a, f64>>) -> Array2<f64> {
    let n = cols.len();
    let mut m = Array2::zeros((rows, n));
    for (j, c) in cols.enumerate() {
        m.column_mut(j).assign(&c);
    }
    m
}

pub(crate) fn write_grid(c: &mut Container, g: &GridSpec) {
    c.set("beta", fmt_f64(g.beta));
    c.set("n_tau", g.n_tau);
    c.set("omega_min", fmt_f64(g.omega_min));
    c.set("omega_max", fmt_f64(g.omega_max));
    c.set("n_omega", g.n_omega);
}

pub(crate) fn read_grid(c: &Container, path: &Path) -> Result<GridSpec> {
    let g = GridSpec {
        beta: c.require("beta", path)?,
        n_tau: c.require("n_tau", path)?,
        omega_min: c.require("omega_min", path)?,
        omega_max: c.require("omega_max", path)?,
        n_omega: c.require("n_omega", path)?,
    };
    g.build().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: format!("invalid grid metadata: {e}"),
    })?;
    Ok(g)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.to_container().write(path)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let c = Container::read(path)?;
    c.expect_kind("dataset", path)?;
    let grid = read_grid(&c, path)?;
    let config = SpectrumConfig {
        peak_count_min: c.require("peak_count_min", path)?,
        peak_count_max: c.require("peak_count_max", path)?,
        center_min: c.require("center_min", path)?,
        center_max: c.require("center_max", path)?,
        sharp_center_min: c.require("sharp_center_min", path)?,
        sharp_center_max: c.require("sharp_center_max", path)?,
        sharp_width_min: c.require("sharp_width_min", path)?,
        sharp_width_max: c.require("sharp_width_max", path)?,
        broad_width_min: c.require("broad_width_min", path)?,
        broad_width_max: c.require("broad_width_max", path)?,
        noise_sigma: c.require("noise_sigma", path)?,
        seed: c.require("seed", path)?,
    };
    let n: usize = c.require("n_samples", path)?;
    let (nt, nw) = (grid.n_tau, grid.n_omega);
    let stride = 1 + nw + 2 * nt;
    if c.payload.len() != n * stride {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "payload has {} values, header implies {n} samples x {stride}",
                c.payload.len()
            ),
        });
    }
    let samples = c
        .payload
        .chunks_exact(stride)
        .map(|chunk| {
            let peak_count = chunk[0] as usize;
            SpectrumSample {
                peak_count,
                spectrum: Array1::from(chunk[1..1 + nw].to_vec()),
                greens_clean: Array1::from(chunk[1 + nw..1 + nw + nt].to_vec()),
                greens_noisy: Array1::from(chunk[1 + nw + nt..].to_vec()),
            }
        })
        .collect();
    Ok(Dataset { samples, config, grid })
}

/// Loads a dataset and checks that it was generated on `expected`.
pub fn load_dataset_for(path: &Path, expected: &GridSpec) -> Result<Dataset> {
    let d = load_dataset(path)?;
    d.check_grid(expected)?;
    Ok(d)
}
