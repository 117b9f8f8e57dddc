//! Experiment configuration as TOML: a top-level `seed`, then one table per
//! concern. Every key is optional and falls back to the defaults below.
//!
//! ```toml
//! seed = 42
//!
//! [grid]
//! beta = 10.0
//! n_tau = 64
//!
//! [data]
//! n_train = 20000
//! noise_sigma = 1e-3
//!
//! [train]
//! epochs = 200
//!
//! [benchmark]
//! methods = ["ista", "lista-6", "rlista-6"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GridSpec;
use crate::maxent::{AlphaChoice, MaxEntSettings, SolverOptions, DEFAULT_FLOOR};
use crate::prox::DEFAULT_LAMBDA;
use crate::rng::derive_seed;
use crate::synthdata::SpectrumConfig;
use crate::table::sha256_hex;
use crate::train::TrainConfig;
use crate::unrolled::DEFAULT_ETA;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    /// Size of each test stratum (single-peak and multi-peak).
    pub n_test: usize,
    pub peak_count_max: usize,
    pub center_min: f64,
    pub center_max: f64,
    pub sharp_center_min: f64,
    pub sharp_center_max: f64,
    pub sharp_width_min: f64,
    pub sharp_width_max: f64,
    pub broad_width_min: f64,
    pub broad_width_max: f64,
    pub noise_sigma: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SpectrumConfig::default();
        Self {
            n_train: 20_000,
            n_test: 2_000,
            peak_count_max: s.peak_count_max,
            center_min: s.center_min,
            center_max: s.center_max,
            sharp_center_min: s.sharp_center_min,
            sharp_center_max: s.sharp_center_max,
            sharp_width_min: s.sharp_width_min,
            sharp_width_max: s.sharp_width_max,
            broad_width_min: s.broad_width_min,
            broad_width_max: s.broad_width_max,
            noise_sigma: s.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    TestSingle,
    TestMulti,
}

impl DataConfig {
    /// Generator settings for one split; each split gets its own seed stream.
    pub fn spectrum_config(&self, seed: u64, split: Split) -> SpectrumConfig {
        let (lo, hi, idx) = match split {
            Split::Train => (1, self.peak_count_max, 0),
            Split::TestSingle => (1, 1, 1),
            Split::TestMulti => (2.min(self.peak_count_max), self.peak_count_max, 2),
        };
        SpectrumConfig {
            peak_count_min: lo,
            peak_count_max: hi,
            center_min: self.center_min,
            center_max: self.center_max,
            sharp_center_min: self.sharp_center_min,
            sharp_center_max: self.sharp_center_max,
            sharp_width_min: self.sharp_width_min,
            sharp_width_max: self.sharp_width_max,
            broad_width_min: self.broad_width_min,
            broad_width_max: self.broad_width_max,
            noise_sigma: self.noise_sigma,
            seed: derive_seed(seed, 1000 + idx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IstaSettings {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IstaSettings {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            max_iter: 10_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// λ used for the ISTA initialization `θ = λ/‖K‖²`.
    pub lambda: f64,
    pub eta: f64,
    pub depth: usize,
    /// Bias of the FCN output layer at initialization.
    pub fcn_output_bias: f64,
    pub fcn_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            eta: DEFAULT_ETA,
            depth: 6,
            fcn_output_bias: 1.0 / 16.0,
            fcn_seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Experiments run by `benchmark`: `comparison`, `efficiency`, `neural-default`.
    pub experiments: Vec<String>,
    /// Methods of the comparison table, e.g. `ista`, `lista-6`, `rlista-6`.
    pub methods: Vec<String>,
    /// Methods of the parameter-efficiency table; `fcn-2` and `fcn-3` are
    /// sized from the ratios below.
    pub efficiency_methods: Vec<String>,
    /// FCN parameter counts as multiples of the LISTA reference depth's.
    pub fcn2_ratio: f64,
    pub fcn3_ratio: f64,
    pub reference_depth: usize,
    /// Multi-peak test samples used by the neural-default experiment.
    pub neural_default_samples: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            experiments: s(&["comparison", "efficiency", "neural-default"]),
            methods: s(&["ista", "lista-6", "rlista-6"]),
            efficiency_methods: s(&["lista-1", "lista-2", "lista-4", "lista-6", "rlista-6", "rlista-20", "rlista-40", "fcn-2", "fcn-3"]),
            fcn2_ratio: 10.0,
            fcn3_ratio: 7.0,
            reference_depth: 6,
            neural_default_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxEntConfig {
    /// Noise level assumed by χ²; `data.noise_sigma` when absent.
    pub sigma: Option<f64>,
    /// Fixed α; the discrepancy principle when absent.
    pub alpha: Option<f64>,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub alphas_per_decade: usize,
    /// Gaussian width for the neural default; `2 Δω` when absent.
    pub smoothing_width: Option<f64>,
    pub floor: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            sigma: None,
            alpha: None,
            alpha_max: 1e6,
            alpha_min: 1e-3,
            alphas_per_decade: 4,
            smoothing_width: None,
            floor: DEFAULT_FLOOR,
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

impl MaxEntConfig {
    pub fn alpha_grid(&self) -> Result<Vec<f64>> {
        if !(self.alpha_min > 0.0 && self.alpha_max > self.alpha_min) || self.alphas_per_decade == 0 {
            return Err(Error::Config(format!(
                "alpha grid needs 0 < alpha_min < alpha_max and alphas_per_decade > 0, got [{}, {}] / {}",
                self.alpha_min, self.alpha_max, self.alphas_per_decade
            )));
        }
        let (hi, lo) = (self.alpha_max.log10(), self.alpha_min.log10());
        let steps = ((hi - lo) * self.alphas_per_decade as f64).round() as usize;
        Ok((0..=steps)
            .map(|k| 10f64.powf(hi - (hi - lo) * k as f64 / steps.max(1) as f64))
            .collect())
    }

    pub fn settings(&self, data_sigma: f64) -> Result<MaxEntSettings> {
        let sigma = self.sigma.unwrap_or(data_sigma);
        if !(sigma > 0.0) {
            return Err(Error::Config(format!(
                "maxent needs sigma > 0 (got {sigma}); set maxent.sigma for noise-free data"
            )));
        }
        let alpha = match self.alpha {
            Some(a) if a > 0.0 => AlphaChoice::Fixed(a),
            Some(a) => return Err(Error::Config(format!("alpha must be > 0, got {a}"))),
            None => AlphaChoice::Auto(self.alpha_grid()?),
        };
        Ok(MaxEntSettings {
            sigma,
            alpha,
            smoothing_width: self.smoothing_width,
            floor: self.floor,
            solver: SolverOptions {
                tol: self.tol,
                max_iter: self.max_iter,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub ista: IstaSettings,
    pub network: NetworkConfig,
    pub benchmark: BenchmarkConfig,
    pub maxent: MaxEntConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            grid: GridSpec::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            ista: IstaSettings::default(),
            network: NetworkConfig::default(),
            benchmark: BenchmarkConfig::default(),
            maxent: MaxEntConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fully resolved config; every default is spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    /// Applies a `section.key=value` override; the value is parsed as a TOML
    /// literal and falls back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(Error::Config(format!("override {assignment:?} has an empty key")));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root: toml::Table = toml::from_str(&self.to_toml()).expect("resolved config parses");
        let mut node = &mut root;
        for k in &keys[..keys.len() - 1] {
            node = node
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{k:?} in {path:?} is not a section")))?;
        }
        node.insert(keys[keys.len() - 1].to_string(), value);
        *self = Self::from_toml(&toml::to_string(&root).expect("table serializes"))
            .map_err(|e| Error::Config(format!("override {assignment:?}: {e}")))?;
        Ok(())
    }

    /// Every resolved key as `section.key` and its TOML value, in file order.
    pub fn flat_entries(&self) -> Vec<(String, String)> {
        fn walk(prefix: &str, t: &toml::Table, out: &mut Vec<(String, String)>) {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match v {
                    toml::Value::Table(sub) => walk(&key, sub, out),
                    other => out.push((key, other.to_string())),
                }
            }
        }
        let root: toml::Table = toml::from_str(&self.to_toml()).expect("resolved config parses");
        let mut out = Vec::new();
        walk("", &root, &mut out);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let (_, freq) = self.grid.build()?;
        self.data.spectrum_config(self.seed, Split::Train).validate(&freq)?;
        if self.data.n_train == 0 || self.data.n_test == 0 {
            return Err(Error::Config("data.n_train and data.n_test must be > 0".into()));
        }
        self.train.validate()?;
        if !(self.ista.lambda > 0.0) || self.ista.max_iter == 0 || !(self.ista.tol >= 0.0) {
            return Err(Error::Config(format!("invalid ista settings {:?}", self.ista)));
        }
        if !(self.network.lambda > 0.0) || self.network.depth == 0 {
            return Err(Error::Config(format!("invalid network settings {:?}", self.network)));
        }
        if !(self.network.eta > 0.0 && self.network.eta < 1.0) {
            return Err(Error::Config(format!(
                "RLISTA relaxation factor must satisfy 0 < eta < 1, got {}",
                self.network.eta
            )));
        }
        self.maxent.settings(self.data.noise_sigma)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let mut c = ExperimentConfig::default();
        c.apply_override("train.epochs=3").unwrap();
        c.apply_override("grid.n_tau = 32").unwrap();
        c.apply_override("benchmark.methods=[\"ista\"]").unwrap();
        c.apply_override("seed=9").unwrap();
        assert_eq!((c.train.epochs, c.grid.n_tau, c.seed), (3, 32, 9));
        assert_eq!(c.benchmark.methods, vec!["ista".to_string()]);
        assert!(c.apply_override("train.nonsense=1").is_err());
        assert!(c.apply_override("train.epochs").is_err());
        assert!(c.apply_override("train.epochs=\"many\"").is_err());
        let flat = c.flat_entries();
        assert!(flat.contains(&("train.epochs".to_string(), "3".to_string())));
        assert!(flat.contains(&("seed".to_string(), "9".to_string())));
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut c = ExperimentConfig::default();
        c.seed = 9;
        c.maxent.alpha = Some(3.5);
        c.benchmark.methods = vec!["ista".into()];
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn sections_override_defaults() {
        let c = ExperimentConfig::from_toml("seed = 3\n[grid]\nn_tau = 32\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.grid.n_tau, 32);
        assert_eq!(c.grid.n_omega, 64);
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.batch_size, 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[grid]\nbta = 3.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[nope]\n").is_err());
    }

    #[test]
    fn eta_outside_unit_interval_fails_validation() {
        let mut c = ExperimentConfig::default();
        c.network.eta = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn alpha_grid_is_descending_and_spans_range() {
        let g = MaxEntConfig::default().alpha_grid().unwrap();
        assert_eq!(g.len(), 37);
        assert!((g[0] - 1e6).abs() < 1e-6);
        assert!((g[36] - 1e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn splits_use_distinct_seeds() {
        let d = DataConfig::default();
        let a = d.spectrum_config(1, Split::Train);
        let b = d.spectrum_config(1, Split::TestMulti);
        assert_ne!(a.seed, b.seed);
        assert_eq!((b.peak_count_min, b.peak_count_max), (2, 4));
        let s = d.spectrum_config(1, Split::TestSingle);
        assert_eq!((s.peak_count_min, s.peak_count_max), (1, 1));
    }
}
