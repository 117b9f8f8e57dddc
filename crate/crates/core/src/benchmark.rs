//! End-to-end experiments: the method comparison on single- and multi-peak
//! test strata, the parameter-efficiency sweep against dense baselines, and
//! the neural-default MaxEnt comparison.
//!
//! All learned methods share one training set and one [`TrainConfig`]. Every
//! numeric table column is a deterministic function of the config; wall-clock
//! timings are kept apart in [`Timing`] records.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, Model};
use crate::container::Container;
use crate::config::{ExperimentConfig, Split};
use crate::error::{Error, Result};
use crate::fcn::{dense_parameter_count, width_for_parameter_target, FcnParams};
use crate::kernel::KernelMatrix;
use crate::maxent::{flat_maxent, rlista_plus, MaxEntSettings};
use crate::metrics::{coherence_profile, rse, BenchmarkRow, CoherenceProfile};
use crate::prox::{ista_solve_batch, IstaConfig};
use crate::synthdata::{generate_dataset, Dataset};
use crate::table::{fmt17, sha256_hex, Table};
use crate::train::{curve_table, train, EpochRecord, SpectralPredictor, TrainingFailure};
use crate::unrolled::{init_params, parameter_count, UnrolledNetParams, Variant};
use crate::Execution;

pub const STRATUM_SINGLE: &str = "single";
pub const STRATUM_MULTI: &str = "multi";

/// ISTA columns solved together; fixed so results do not depend on `Execution`.
const ISTA_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ista,
    Unrolled(Variant, usize),
    Fcn2,
    Fcn3,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ista => f.write_str("ista"),
            Method::Unrolled(v, d) => write!(f, "{v}-{d}"),
            Method::Fcn2 => f.write_str("fcn-2"),
            Method::Fcn3 => f.write_str("fcn-3"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "ista" => return Ok(Method::Ista),
            "fcn-2" => return Ok(Method::Fcn2),
            "fcn-3" => return Ok(Method::Fcn3),
            _ => {}
        }
        let bad = || Error::Config(format!("unknown method {s:?} (expected ista, lista-L, rlista-L, fcn-2 or fcn-3)"));
        let (name, depth) = s.rsplit_once('-').ok_or_else(bad)?;
        let variant: Variant = name.parse().map_err(|_| bad())?;
        let depth: usize = depth.parse().map_err(|_| bad())?;
        if depth == 0 {
            return Err(bad());
        }
        Ok(Method::Unrolled(variant, depth))
    }
}

pub fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|n| n.parse()).collect()
}

/// Training set plus the two test strata.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: Dataset,
    pub test_single: Dataset,
    pub test_multi: Dataset,
}

impl Datasets {
    pub fn generate(cfg: &ExperimentConfig, exec: Execution) -> Result<Self> {
        let d = &cfg.data;
        let gen = |n, split| generate_dataset(n, &d.spectrum_config(cfg.seed, split), &cfg.grid, exec);
        Ok(Self {
            train: gen(d.n_train, Split::Train)?,
            test_single: gen(d.n_test, Split::TestSingle)?,
            test_multi: gen(d.n_test, Split::TestMulti)?,
        })
    }

    pub fn stratum(&self, name: &str) -> &Dataset {
        if name == STRATUM_SINGLE {
            &self.test_single
        } else {
            &self.test_multi
        }
    }

    /// `(name, sha256)` of each dataset.
    pub fn hashes(&self) -> Vec<(String, String)> {
        vec![
            ("train".into(), self.train.hash()),
            ("test_single".into(), self.test_single.hash()),
            ("test_multi".into(), self.test_multi.hash()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub method: Method,
    pub checkpoint: Checkpoint,
    pub curve: Vec<EpochRecord>,
    pub initial_test_rse: f64,
    pub failure: Option<TrainingFailure>,
}

impl TrainedModel {
    pub fn unrolled(&self) -> Option<&UnrolledNetParams> {
        match &self.checkpoint.model {
            Model::Unrolled(p) => Some(p),
            Model::Fcn(_) => None,
        }
    }
}

/// Parameter count of the LISTA reference network on the configured grid.
pub fn reference_parameter_count(cfg: &ExperimentConfig) -> usize {
    let (nt, nw) = (cfg.grid.n_tau, cfg.grid.n_omega);
    cfg.benchmark.reference_depth * (nw * nw + nw * nt + 1)
}

/// Hidden widths of the dense baselines, sized by the configured ratios.
pub fn fcn_hidden(method: Method, cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    let (nt, nw) = (cfg.grid.n_tau, cfg.grid.n_omega);
    let reference = reference_parameter_count(cfg) as f64;
    let (layers, ratio) = match method {
        Method::Fcn2 => (1, cfg.benchmark.fcn2_ratio),
        Method::Fcn3 => (2, cfg.benchmark.fcn3_ratio),
        other => return Err(Error::Config(format!("{other} is not a dense baseline"))),
    };
    if !(ratio > 0.0) {
        return Err(Error::Config(format!("FCN parameter ratio must be > 0, got {ratio}")));
    }
    let target = (ratio * reference).ceil() as usize;
    Ok(vec![width_for_parameter_target(nt, nw, layers, target); layers])
}

pub fn method_parameter_count(method: Method, cfg: &ExperimentConfig) -> Result<usize> {
    let (nt, nw) = (cfg.grid.n_tau, cfg.grid.n_omega);
    Ok(match method {
        Method::Ista => 0,
        Method::Unrolled(_, depth) => depth * (nw * nw + nw * nt + 1),
        Method::Fcn2 | Method::Fcn3 => dense_parameter_count(nt, nw, &fcn_hidden(method, cfg)?),
    })
}

/// Trains one learned method on `data.train`, tracking the multi-peak test RSE.
pub fn train_method(method: Method, cfg: &ExperimentConfig, data: &Datasets, kernel: &KernelMatrix) -> Result<TrainedModel> {
    let describe = Some(cfg.train.describe());
    let hash = Some(data.train.hash());
    match method {
        Method::Ista => Err(Error::Config("ista has nothing to train".into())),
        Method::Unrolled(variant, depth) => {
            let init = init_params(kernel, cfg.network.lambda, variant, depth, cfg.network.eta)?;
            let out = train(init, &data.train, &data.test_multi, &cfg.train)?;
            Ok(TrainedModel {
                method,
                checkpoint: Checkpoint::unrolled(out.model).with_provenance(describe, hash),
                curve: out.curve,
                initial_test_rse: out.initial_test_rse,
                failure: out.failure,
            })
        }
        Method::Fcn2 | Method::Fcn3 => {
            let hidden = fcn_hidden(method, cfg)?;
            let init = FcnParams::new(
                cfg.grid.n_tau,
                cfg.grid.n_omega,
                &hidden,
                cfg.network.fcn_output_bias,
                cfg.network.fcn_seed,
            )?;
            let out = train(init, &data.train, &data.test_multi, &cfg.train)?;
            Ok(TrainedModel {
                method,
                checkpoint: Checkpoint::fcn(out.model, Some(cfg.grid)).with_provenance(describe, hash),
                curve: out.curve,
                initial_test_rse: out.initial_test_rse,
                failure: out.failure,
            })
        }
    }
}

/// Trained models keyed by method, so experiments sharing a method train it once.
#[derive(Debug, Default)]
pub struct ModelCache {
    models: BTreeMap<Method, TrainedModel>,
}

impl ModelCache {
    pub fn insert(&mut self, model: TrainedModel) {
        self.models.insert(model.method, model);
    }

    pub fn get(&self, method: Method) -> Option<&TrainedModel> {
        self.models.get(&method)
    }

    pub fn get_or_train(&mut self, method: Method, cfg: &ExperimentConfig, data: &Datasets, kernel: &KernelMatrix, opts: &RunOptions) -> Result<&TrainedModel> {
        if !self.models.contains_key(&method) {
            opts.log(&format!("training {method}"));
            let start = Instant::now();
            let m = train_method(method, cfg, data, kernel)?;
            opts.log(&format!(
                "trained {method} in {:.1}s, test rse {:.4} -> {:.4}",
                start.elapsed().as_secs_f64(),
                m.initial_test_rse,
                m.curve.last().map_or(f64::NAN, |r| r.test_rse)
            ));
            self.models.insert(method, m);
        }
        Ok(&self.models[&method])
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainedModel> {
        self.models.values()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub exec: Execution,
    /// Progress lines on stderr.
    pub verbose: bool,
}

impl RunOptions {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[benchmark] {msg}");
        }
    }
}

/// Per-sample RSE of converged-budget ISTA.
pub fn ista_errors(kernel: &KernelMatrix, data: &Dataset, cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<f64>> {
    let mut ista = IstaConfig::for_operator(kernel.matrix(), cfg.ista.lambda)?;
    ista.max_iter = cfg.ista.max_iter;
    ista.tol = cfg.ista.tol;
    let g = data.greens_matrix();
    let starts: Vec<usize> = (0..data.len()).step_by(ISTA_CHUNK).collect();
    let solve = |&s: &usize| -> Result<Array2<f64>> {
        let e = (s + ISTA_CHUNK).min(data.len());
        Ok(ista_solve_batch(kernel.matrix(), g.slice(ndarray::s![.., s..e]), &ista)?.solutions)
    };
    let chunks = match exec {
        Execution::Serial => starts.iter().map(solve).collect::<Result<Vec<_>>>()?,
        Execution::Parallel => starts.par_iter().map(solve).collect::<Result<Vec<_>>>()?,
    };
    let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
    let solutions = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Numeric(e.to_string()))?;
    errors_against(&solutions, data)
}

/// Per-sample RSE of a network on the noisy inputs of `data`.
pub fn model_errors<P: SpectralPredictor + ?Sized>(model: &P, data: &Dataset) -> Result<Vec<f64>> {
    let pred = model.predict_batch(data.greens_matrix().view())?;
    errors_against(&pred, data)
}

fn errors_against(pred: &Array2<f64>, data: &Dataset) -> Result<Vec<f64>> {
    data.samples
        .iter()
        .enumerate()
        .map(|(j, s)| rse(pred.column(j), s.spectrum.view()))
        .collect()
}

/// Wall-clock inference time, kept out of the deterministic tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub method: String,
    pub stratum: String,
    pub seconds_per_sample: f64,
}

pub fn timing_table(timings: &[Timing]) -> Table {
    let mut t = Table::new(["method", "stratum", "seconds_per_sample"]);
    for r in timings {
        t.push(vec![r.method.clone(), r.stratum.clone(), fmt17(r.seconds_per_sample)]);
    }
    t
}

pub fn rows_table(rows: &[BenchmarkRow]) -> Table {
    let mut t = Table::new(["method", "stratum", "parameter_count", "samples", "mean_rse", "median_rse", "error"]);
    for r in rows {
        t.push(vec![
            r.method.clone(),
            r.stratum.clone(),
            r.parameter_count.to_string(),
            r.samples.to_string(),
            fmt17(r.mean_rse),
            fmt17(r.median_rse),
            r.error.clone().unwrap_or_default().replace(',', ";"),
        ]);
    }
    t
}

#[derive(Debug, Clone, Default)]
pub struct MethodTable {
    pub rows: Vec<BenchmarkRow>,
    pub timings: Vec<Timing>,
}

impl MethodTable {
    pub fn row(&self, method: &str, stratum: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method && r.stratum == stratum)
    }
}

fn evaluate_methods(methods: &[Method], strata: &[&str], cfg: &ExperimentConfig, data: &Datasets, kernel: &KernelMatrix, cache: &mut ModelCache, opts: &RunOptions) -> MethodTable {
    let mut out = MethodTable::default();
    for &method in methods {
        let name = method.to_string();
        let trained = match method {
            Method::Ista => Ok(None),
            m => cache.get_or_train(m, cfg, data, kernel, opts).map(|t| Some(t.checkpoint.model.clone())),
        };
        let model = match trained {
            Ok(m) => m,
            Err(e) => {
                opts.log(&format!("{name} failed: {e}"));
                for s in strata {
                    out.rows.push(BenchmarkRow::failed(&name, s, e.to_string()));
                }
                continue;
            }
        };
        for &stratum in strata {
            let set = data.stratum(stratum);
            let start = Instant::now();
            let errors = match &model {
                None => ista_errors(kernel, set, cfg, opts.exec),
                Some(m) => model_errors(m, set),
            };
            let secs = start.elapsed().as_secs_f64() / set.len() as f64;
            match errors {
                Ok(e) => {
                    let count = method_parameter_count(method, cfg).unwrap_or(0);
                    let row = BenchmarkRow::from_errors(&name, stratum, count, &e, secs);
                    opts.log(&format!("{name} on {stratum}: mean rse {:.4}", row.mean_rse));
                    out.rows.push(row);
                    out.timings.push(Timing {
                        method: name.clone(),
                        stratum: stratum.to_string(),
                        seconds_per_sample: secs,
                    });
                }
                Err(e) => out.rows.push(BenchmarkRow::failed(&name, stratum, e.to_string())),
            }
        }
    }
    out
}

/// Mean and median RSE per method on both test strata.
pub fn run_method_comparison(cfg: &ExperimentConfig, data: &Datasets, kernel: &KernelMatrix, cache: &mut ModelCache, opts: &RunOptions) -> Result<MethodTable> {
    let methods = parse_methods(&cfg.benchmark.methods)?;
    Ok(evaluate_methods(&methods, &[STRATUM_SINGLE, STRATUM_MULTI], cfg, data, kernel, cache, opts))
}

/// Parameter count against multi-peak test RSE for networks of several sizes.
pub fn run_parameter_efficiency(cfg: &ExperimentConfig, data: &Datasets, kernel: &KernelMatrix, cache: &mut ModelCache, opts: &RunOptions) -> Result<MethodTable> {
    let methods = parse_methods(&cfg.benchmark.efficiency_methods)?;
    if methods.contains(&Method::Ista) {
        return Err(Error::Config("ista has no parameters; leave it out of efficiency_methods".into()));
    }
    Ok(evaluate_methods(&methods, &[STRATUM_MULTI], cfg, data, kernel, cache, opts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDefaultRow {
    pub sample: usize,
    pub peak_count: usize,
    pub rse_flat: f64,
    pub rse_network: f64,
    pub rse_rlista_plus: f64,
    pub alpha_flat: f64,
    pub alpha_plus: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDefaultReport {
    pub network: String,
    pub rows: Vec<NeuralDefaultRow>,
}

impl NeuralDefaultReport {
    pub fn mean(&self, f: impl Fn(&NeuralDefaultRow) -> f64) -> f64 {
        self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "sample",
            "peak_count",
            "rse_flat",
            "rse_rlista",
            "rse_rlista_plus",
            "alpha_flat",
            "alpha_rlista_plus",
            "converged",
        ]);
        t.meta("network", &self.network)
            .meta("mean_rse_flat", fmt17(self.mean(|r| r.rse_flat)))
            .meta("mean_rse_rlista", fmt17(self.mean(|r| r.rse_network)))
            .meta("mean_rse_rlista_plus", fmt17(self.mean(|r| r.rse_rlista_plus)));
        for r in &self.rows {
            t.push(vec![
                r.sample.to_string(),
                r.peak_count.to_string(),
                fmt17(r.rse_flat),
                fmt17(r.rse_network),
                fmt17(r.rse_rlista_plus),
                fmt17(r.alpha_flat),
                fmt17(r.alpha_plus),
                r.converged.to_string(),
            ]);
        }
        t
    }
}

/// Flat-default MaxEnt, the raw network, and MaxEnt with the network's
/// default model, on the first `samples` multi-peak test spectra.
pub fn run_neural_default<P: SpectralPredictor + Sync + ?Sized>(
    network: &P,
    network_name: &str,
    data: &Dataset,
    kernel: &KernelMatrix,
    settings: &MaxEntSettings,
    samples: usize,
    exec: Execution,
) -> Result<NeuralDefaultReport> {
    let n = samples.min(data.len());
    if n == 0 {
        return Err(Error::Config("neural-default experiment needs at least one sample".into()));
    }
    let one = |i: usize| -> Result<NeuralDefaultRow> {
        let s = &data.samples[i];
        let g = s.greens_noisy.view();
        let flat = flat_maxent(g, kernel, settings)?;
        let plus = rlista_plus(g, kernel, network, settings)?;
        Ok(NeuralDefaultRow {
            sample: i,
            peak_count: s.peak_count,
            rse_flat: rse(flat.spectrum.view(), s.spectrum.view())?,
            rse_network: rse(plus.network_output.view(), s.spectrum.view())?,
            rse_rlista_plus: rse(plus.result.spectrum.view(), s.spectrum.view())?,
            alpha_flat: flat.alpha_used,
            alpha_plus: plus.result.alpha_used,
            converged: flat.converged && plus.result.converged,
        })
    };
    let rows = match exec {
        Execution::Serial => (0..n).map(one).collect::<Result<Vec<_>>>()?,
        Execution::Parallel => (0..n).into_par_iter().map(one).collect::<Result<Vec<_>>>()?,
    };
    Ok(NeuralDefaultReport {
        network: network_name.to_string(),
        rows,
    })
}

/// Everything one `benchmark` run produced.
#[derive(Debug)]
pub struct BenchmarkReport {
    pub comparison: Option<MethodTable>,
    pub efficiency: Option<MethodTable>,
    pub neural_default: Option<NeuralDefaultReport>,
    pub coherence: Vec<(String, CoherenceProfile)>,
    pub cache: ModelCache,
    pub data: Datasets,
}

pub const EXPERIMENTS: [&str; 3] = ["comparison", "efficiency", "neural-default"];

/// Runs every experiment named in `cfg.benchmark.experiments`.
pub fn run_benchmark(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<BenchmarkReport> {
    cfg.validate()?;
    for e in &cfg.benchmark.experiments {
        if !EXPERIMENTS.contains(&e.as_str()) {
            return Err(Error::Config(format!("unknown experiment {e:?} (expected one of {EXPERIMENTS:?})")));
        }
    }
    let wants = |name: &str| cfg.benchmark.experiments.iter().any(|e| e == name);
    let kernel = cfg.grid.kernel()?;
    opts.log("generating datasets");
    let data = Datasets::generate(cfg, opts.exec)?;
    let mut cache = ModelCache::default();
    let comparison = if wants("comparison") {
        Some(run_method_comparison(cfg, &data, &kernel, &mut cache, opts)?)
    } else {
        None
    };
    let efficiency = if wants("efficiency") {
        Some(run_parameter_efficiency(cfg, &data, &kernel, &mut cache, opts)?)
    } else {
        None
    };
    let neural_default = if wants("neural-default") {
        let method = Method::Unrolled(Variant::Rlista, cfg.network.depth);
        let net = cache.get_or_train(method, cfg, &data, &kernel, opts)?.checkpoint.model.clone();
        let settings = cfg.maxent.settings(cfg.data.noise_sigma)?;
        opts.log("running maxent comparison");
        Some(run_neural_default(
            &net,
            &method.to_string(),
            &data.test_multi,
            &kernel,
            &settings,
            cfg.benchmark.neural_default_samples,
            opts.exec,
        )?)
    } else {
        None
    };
    let mut coherence = Vec::new();
    for m in cache.iter() {
        if let Some(p) = m.unrolled() {
            coherence.push((m.method.to_string(), coherence_profile(p, &kernel, cfg.network.lambda)?));
        }
    }
    Ok(BenchmarkReport {
        comparison,
        efficiency,
        neural_default,
        coherence,
        cache,
        data,
    })
}

/// Provenance attached to every emitted file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub inputs: Vec<(String, String)>,
}

impl Provenance {
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut meta = vec![
            ("tool".to_string(), format!("anacont {}", env!("CARGO_PKG_VERSION"))),
            ("config_sha256".to_string(), self.config_hash.clone()),
        ];
        for (k, v) in &self.inputs {
            meta.push((format!("input_{k}_sha256"), v.clone()));
        }
        meta
    }

    /// Prepends the provenance lines to a table's metadata.
    pub fn stamp(&self, t: &mut Table) {
        let mut meta = self.entries();
        meta.append(&mut t.meta);
        t.meta = meta;
    }

    /// Same for a binary container; the stamp keys come first in its header.
    pub fn stamp_container(&self, c: Container) -> Container {
        let mut out = Container::new();
        for (k, v) in self.entries().into_iter().chain(c.header) {
            out.set(&k, v);
        }
        out.payload = c.payload;
        out
    }
}

impl BenchmarkReport {
    /// Writes tables, checkpoints and `manifest.csv` into `dir`; returns the
    /// written paths. Timings are written only when `with_timings` is set.
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path, with_timings: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut prov = Provenance {
            config_hash: cfg.hash(),
            inputs: self.data.hashes(),
        };
        let mut files: Vec<(String, PathBuf)> = Vec::new();
        let mut checkpoints = Vec::new();
        for m in self.cache.iter() {
            let name = format!("checkpoint_{}.bin", m.method);
            let path = dir.join(&name);
            prov.stamp_container(m.checkpoint.to_container()).write(&path)?;
            let hash = sha256_hex(&m.checkpoint.to_bytes());
            checkpoints.push((m.method.to_string(), hash));
            files.push((format!("checkpoint {}", m.method), path));
        }
        prov.inputs.extend(checkpoints.iter().map(|(m, h)| (format!("checkpoint_{m}"), h.clone())));

        let mut emit = |name: &str, label: &str, mut t: Table| -> Result<()> {
            prov.stamp(&mut t);
            let path = dir.join(name);
            t.write(&path)?;
            files.push((label.to_string(), path));
            Ok(())
        };
        let mut all_timings = Vec::new();
        if let Some(c) = &self.comparison {
            let mut t = rows_table(&c.rows);
            t.meta("experiment", "method comparison");
            t.meta("ista", format!("lambda={:?} max_iter={} tol={:?}", cfg.ista.lambda, cfg.ista.max_iter, cfg.ista.tol));
            t.meta("train_config", cfg.train.describe());
            emit("comparison.csv", "comparison", t)?;
            all_timings.extend(c.timings.iter().cloned());
        }
        if let Some(e) = &self.efficiency {
            let mut t = rows_table(&e.rows);
            t.meta("experiment", "parameter efficiency");
            t.meta("reference_parameter_count", reference_parameter_count(cfg));
            t.meta("train_config", cfg.train.describe());
            for m in [Method::Fcn2, Method::Fcn3] {
                if let Ok(h) = fcn_hidden(m, cfg) {
                    t.meta(&format!("{m}_hidden_width"), h[0]);
                }
            }
            emit("efficiency.csv", "efficiency", t)?;
            all_timings.extend(e.timings.iter().cloned());
        }
        if let Some(n) = &self.neural_default {
            let mut t = n.table();
            t.meta("experiment", "neural default model");
            emit("neural_default.csv", "neural-default", t)?;
        }
        for (name, profile) in &self.coherence {
            emit(&format!("coherence_{name}.csv"), &format!("coherence {name}"), profile.table())?;
        }
        for m in self.cache.iter() {
            let mut t = Table::parse(&curve_table(&m.curve))?;
            t.meta("method", m.method);
            t.meta("initial_test_rse", fmt17(m.initial_test_rse));
            t.meta("training_failure", m.failure.is_some());
            emit(&format!("curve_{}.csv", m.method), &format!("curve {}", m.method), t)?;
        }
        if with_timings && !all_timings.is_empty() {
            emit("timings.csv", "timings", timing_table(&all_timings))?;
        }
        let config_path = dir.join("config.toml");
        std::fs::write(&config_path, cfg.to_toml()).map_err(|e| Error::io(&config_path, e))?;
        files.push(("resolved config".into(), config_path));

        let mut manifest = Table::new(["label", "file", "sha256"]);
        manifest.meta("command", "benchmark");
        for (k, v) in cfg.flat_entries() {
            manifest.meta(&format!("config.{k}"), v);
        }
        for (label, path) in &files {
            let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            manifest.push(vec![label.clone(), name, crate::table::file_sha256(path)?]);
        }
        prov.stamp(&mut manifest);
        let manifest_path = dir.join("manifest.csv");
        manifest.write(&manifest_path)?;
        let mut out: Vec<PathBuf> = files.into_iter().map(|(_, p)| p).collect();
        out.push(manifest_path);
        Ok(out)
    }
}

/// Learned-method parameter count, for callers holding only a checkpoint.
pub fn checkpoint_parameter_count(ck: &Checkpoint) -> usize {
    match &ck.model {
        Model::Unrolled(p) => parameter_count(p),
        Model::Fcn(p) => p.parameter_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GridSpec;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.grid = GridSpec {
            beta: 10.0,
            n_tau: 16,
            omega_min: -8.0,
            omega_max: 8.0,
            n_omega: 16,
        };
        c.data.n_train = 64;
        c.data.n_test = 12;
        c.train.epochs = 2;
        c.train.batch_size = 16;
        c.ista.max_iter = 200;
        c.benchmark.methods = vec!["ista".into(), "lista-2".into()];
        c.benchmark.efficiency_methods = vec!["lista-2".into(), "fcn-2".into()];
        c.benchmark.neural_default_samples = 3;
        c.benchmark.reference_depth = 2;
        c.network.depth = 2;
        c
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["ista", "lista-6", "rlista-40", "fcn-2", "fcn-3"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        for bad in ["lista", "lista-0", "fcn-4", "nope-3", "rlista-x"] {
            assert!(bad.parse::<Method>().is_err(), "{bad}");
        }
    }

    #[test]
    fn lista6_parameter_count_and_fcn_widths() {
        let cfg = ExperimentConfig::default();
        assert_eq!(method_parameter_count("lista-6".parse().unwrap(), &cfg).unwrap(), 49158);
        assert_eq!(fcn_hidden(Method::Fcn2, &cfg).unwrap(), vec![3811]);
        let c3 = method_parameter_count(Method::Fcn3, &cfg).unwrap();
        assert!(c3 >= 7 * 49158);
    }

    #[test]
    fn ista_only_rows_match_direct_metrics() {
        let mut cfg = tiny();
        cfg.benchmark.methods = vec!["ista".into()];
        let data = Datasets::generate(&cfg, Execution::Serial).unwrap();
        let k = cfg.grid.kernel().unwrap();
        let table = run_method_comparison(&cfg, &data, &k, &mut ModelCache::default(), &RunOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 2);
        let mut ista = IstaConfig::for_operator(k.matrix(), cfg.ista.lambda).unwrap();
        ista.max_iter = cfg.ista.max_iter;
        for row in &table.rows {
            let set = data.stratum(&row.stratum);
            let direct: f64 = set
                .samples
                .iter()
                .map(|s| {
                    let a = crate::prox::ista_solve_quiet(k.matrix(), s.greens_noisy.view(), &ista).unwrap().solution;
                    rse(a.view(), s.spectrum.view()).unwrap()
                })
                .sum::<f64>()
                / set.len() as f64;
            assert!((row.mean_rse - direct).abs() < 1e-9, "{} vs {direct}", row.mean_rse);
        }
    }

    #[test]
    fn failing_method_becomes_a_row() {
        let mut cfg = tiny();
        cfg.train.learning_rate = 1e6;
        cfg.train.clip_norm = 1e12;
        cfg.benchmark.methods = vec!["ista".into(), "fcn-2".into()];
        cfg.benchmark.fcn2_ratio = 1.0;
        let data = Datasets::generate(&cfg, Execution::Serial).unwrap();
        let k = cfg.grid.kernel().unwrap();
        let table = run_method_comparison(&cfg, &data, &k, &mut ModelCache::default(), &RunOptions::default()).unwrap();
        assert!(table.row("ista", STRATUM_MULTI).unwrap().error.is_none());
        assert_eq!(table.rows.len(), 4);
    }

    #[test]
    fn full_run_writes_stamped_files_deterministically() {
        let cfg = tiny();
        let dir = tempfile::tempdir().unwrap();
        let run = |sub: &str, exec| {
            let r = run_benchmark(&cfg, &RunOptions { exec, verbose: false }).unwrap();
            r.write(&cfg, &dir.path().join(sub), false).unwrap()
        };
        let a = run("a", Execution::Serial);
        let b = run("b", Execution::Parallel);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
        let text = std::fs::read_to_string(dir.path().join("a/comparison.csv")).unwrap();
        assert!(text.starts_with("# tool: anacont"));
        assert!(text.contains("config_sha256"));
        assert!(text.contains("input_train_sha256"));
        assert!(dir.path().join("a/neural_default.csv").exists());
        assert!(dir.path().join("a/coherence_lista-2.csv").exists());
        assert!(!dir.path().join("a/timings.csv").exists());
    }
}
