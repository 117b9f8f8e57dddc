//! Evaluation metrics and weight-matrix diagnostics.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::linalg::frobenius;
use crate::table::{fmt17, Table};
use crate::unrolled::{init_params, UnrolledNetParams, Variant};

/// Root square error `√Σ (a*_i − â_i)²`, unweighted.
pub fn rse(a_hat: ArrayView1<f64>, a_star: ArrayView1<f64>) -> Result<f64> {
    if a_hat.len() != a_star.len() {
        return Err(Error::shape("rse", a_star.len(), a_hat.len()));
    }
    Ok(a_hat
        .iter()
        .zip(a_star.iter())
        .map(|(x, y)| (y - x) * (y - x))
        .sum::<f64>()
        .sqrt())
}

/// Average coherence `ν(A) = max_i |Σ_{j≠i} ⟨a_i/‖a_i‖, a_j/‖a_j‖⟩| / (n − 1)`.
pub fn average_coherence(matrix: ArrayView2<f64>) -> Result<f64> {
    let n = matrix.ncols();
    if n < 2 {
        return Err(Error::Domain(format!("average coherence needs at least 2 columns, got {n}")));
    }
    let mut unit = matrix.to_owned();
    for (j, mut col) in unit.columns_mut().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm == 0.0 {
            return Err(Error::Domain(format!("column {j} is zero")));
        }
        col /= norm;
    }
    let sum = unit.sum_axis(ndarray::Axis(1));
    let best = unit
        .columns()
        .into_iter()
        .map(|c| (c.dot(&sum) - c.dot(&c)).abs())
        .fold(0.0, f64::max);
    Ok(best / (n - 1) as f64)
}

/// Which sign convention [`normalize_weight_export`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    /// Fixed ISTA matrices: both exported matrices are negated.
    Ista,
    /// Learned LISTA/RLISTA matrices: only `W_e` is negated.
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightExport {
    pub w_t: Array2<f64>,
    pub w_e: Array2<f64>,
    pub source: WeightSource,
    pub w_t_norm: f64,
    pub w_e_norm: f64,
}

pub const EXPORT_CONVENTION: &str =
    "W_t exported as s_t (W_t - I) / ||W_t - I||_F, W_e as s_e W_e / ||W_e||_F; s_e = -1 always, s_t = -1 for ISTA and +1 for learned matrices";

/// Plot-ready normalization of a layer's matrices: subtract the identity from
/// `W_t`, flip signs by source, and divide each by its Frobenius norm.
pub fn normalize_weight_export(w_t: ArrayView2<f64>, w_e: ArrayView2<f64>, source: WeightSource) -> Result<WeightExport> {
    let (r, c) = w_t.dim();
    if r != c {
        return Err(Error::shape("normalize_weight_export", "square W_t", format!("{r}x{c}")));
    }
    let shifted = &w_t - &Array2::<f64>::eye(r);
    let (nt, ne) = (frobenius(shifted.view()), frobenius(w_e));
    if nt == 0.0 || ne == 0.0 {
        return Err(Error::Domain("cannot normalize a zero matrix".into()));
    }
    let s_t = match source {
        WeightSource::Ista => -1.0,
        WeightSource::Learned => 1.0,
    };
    Ok(WeightExport {
        w_t: shifted * (s_t / nt),
        w_e: w_e.to_owned() * (-1.0 / ne),
        source,
        w_t_norm: nt,
        w_e_norm: ne,
    })
}

impl WeightExport {
    pub fn tables(&self) -> (Table, Table) {
        let mk = |m: &Array2<f64>, name: &str, norm: f64| {
            let mut t = Table::new((0..m.ncols()).map(|j| format!("c{j}")));
            t.meta("matrix", name)
                .meta("source", format!("{:?}", self.source))
                .meta("convention", EXPORT_CONVENTION)
                .meta("frobenius_norm_before_normalization", fmt17(norm));
            for row in m.rows() {
                t.push(row.iter().map(|&x| fmt17(x)).collect());
            }
            t
        };
        (mk(&self.w_t, "W_t", self.w_t_norm), mk(&self.w_e, "W_e", self.w_e_norm))
    }
}

pub const COHERENCE_CONVENTION: &str =
    "nu_wt = nu(W_t - I) over its columns; nu_we = nu(W_e^T), i.e. over the per-frequency rows of W_e";

/// Coherence of one layer's matrices over frequency-indexed atoms.
pub fn layer_coherence(w_t: ArrayView2<f64>, w_e: ArrayView2<f64>) -> Result<(f64, f64)> {
    let shifted = &w_t - &Array2::<f64>::eye(w_t.nrows());
    Ok((average_coherence(shifted.view())?, average_coherence(w_e.t())?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRow {
    pub layer: usize,
    pub nu_wt: f64,
    pub nu_we: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceProfile {
    pub rows: Vec<CoherenceRow>,
    pub ista_nu_wt: f64,
    pub ista_nu_we: f64,
    pub variant: Variant,
}

impl CoherenceProfile {
    pub fn mean_nu_wt(&self) -> f64 {
        self.rows.iter().map(|r| r.nu_wt).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_nu_we(&self) -> f64 {
        self.rows.iter().map(|r| r.nu_we).sum::<f64>() / self.rows.len() as f64
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["layer", "nu_wt", "nu_we", "ista_nu_wt", "ista_nu_we", "in_unit_interval"]);
        t.meta("variant", self.variant).meta("convention", COHERENCE_CONVENTION);
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        for r in &self.rows {
            t.push(vec![
                r.layer.to_string(),
                fmt17(r.nu_wt),
                fmt17(r.nu_we),
                fmt17(self.ista_nu_wt),
                fmt17(self.ista_nu_we),
                (unit(r.nu_wt) && unit(r.nu_we)).to_string(),
            ]);
        }
        t
    }
}

/// Per-layer coherence of a network next to the ISTA values for `kernel`.
pub fn coherence_profile(params: &UnrolledNetParams, kernel: &KernelMatrix, lambda: f64) -> Result<CoherenceProfile> {
    let ista = init_params(kernel, lambda, Variant::Lista, 1, 0.5)?;
    let (ista_nu_wt, ista_nu_we) = layer_coherence(ista.layers[0].w_t.view(), ista.layers[0].w_e.view())?;
    let rows = params
        .layers
        .iter()
        .enumerate()
        .map(|(n, l)| {
            let (nu_wt, nu_we) = layer_coherence(l.w_t.view(), l.w_e.view())?;
            Ok(CoherenceRow {
                layer: n + 1,
                nu_wt,
                nu_we,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceProfile {
        rows,
        ista_nu_wt,
        ista_nu_we,
        variant: params.variant,
    })
}

/// One line of a benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    pub stratum: String,
    pub parameter_count: usize,
    pub samples: usize,
    pub mean_rse: f64,
    pub median_rse: f64,
    pub seconds_per_sample: f64,
    /// Set when the method failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl BenchmarkRow {
    pub fn from_errors(method: &str, stratum: &str, parameter_count: usize, errors: &[f64], seconds_per_sample: f64) -> Self {
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            method: method.to_string(),
            stratum: stratum.to_string(),
            parameter_count,
            samples: n,
            mean_rse: errors.iter().sum::<f64>() / n as f64,
            median_rse: median,
            seconds_per_sample,
            error: None,
        }
    }

    pub fn failed(method: &str, stratum: &str, error: String) -> Self {
        Self {
            method: method.to_string(),
            stratum: stratum.to_string(),
            parameter_count: 0,
            samples: 0,
            mean_rse: f64::NAN,
            median_rse: f64::NAN,
            seconds_per_sample: f64::NAN,
            error: Some(error),
        }
    }
}
