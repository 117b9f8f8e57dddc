//! The `anacont` command line. [`main`] parses arguments, resolves the
//! config (file, then `--set` overrides, then dedicated flags), runs one
//! subcommand and maps errors to exit codes: 0 success, 1 runtime or I/O
//! failure, 2 usage or validation error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::benchmark::{fcn_hidden, run_benchmark, Method, Provenance, RunOptions};
use crate::checkpoint::{load_checkpoint, Checkpoint};
use crate::config::{ExperimentConfig, Split};
use crate::error::{Error, Result};
use crate::fcn::FcnParams;
use crate::maxent::{flat_maxent, result_table, rlista_plus, AlphaChoice};
use crate::metrics::{coherence_profile, normalize_weight_export, rse, WeightSource};
use crate::prox::{ista_solve_batch, ista_solve_quiet, IstaConfig};
use crate::synthdata::{generate_dataset, load_dataset, Dataset};
use crate::table::{file_sha256, fmt17, Table};
use crate::train::{curve_table, train, SpectralPredictor};
use crate::unrolled::{init_params, UnrolledNetParams, Variant};
use crate::Execution;

#[derive(Debug, Parser)]
#[command(name = "anacont", version, about = "Analytic continuation with ISTA, LISTA/RLISTA and maximum entropy")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment config; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads for per-sample work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled dataset.
    GenData(GenDataArgs),
    /// Train an unrolled network or a dense baseline.
    Train(TrainArgs),
    /// Run a trained network over a dataset.
    Infer(InferArgs),
    /// Solve the l1-regularized problem with ISTA.
    Ista(IstaArgs),
    /// Maximum entropy with a flat or network default model.
    Maxent(MaxentArgs),
    /// Run the configured experiments and write their tables.
    Benchmark(BenchmarkArgs),
    /// Per-layer coherence of a network against the ISTA matrices.
    Coherence(CoherenceArgs),
    /// Normalized W_t and W_e of one layer, ready for plotting.
    ExportWeights(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Single,
    Multi,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Single => Split::TestSingle,
            SplitArg::Multi => Split::TestMulti,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Lista,
    Rlista,
    Fcn,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "lista")]
    pub variant: ArchArg,
    /// Unrolled depth (default: network.depth).
    #[arg(long)]
    pub depth: Option<usize>,
    /// RLISTA relaxation factor, 0 < eta < 1.
    #[arg(long)]
    pub eta: Option<f64>,
    /// FCN hidden widths, comma separated (default: one layer sized by benchmark.fcn2_ratio).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training dataset (default: generated from the config).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out dataset for the learning curve (default: generated multi-peak stratum).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Checkpoint path; the learning curve goes next to it as `<stem>.curve.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IstaArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Solve one sample and write its spectrum and objective trace.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DefaultArg {
    Flat,
    Neural,
}

#[derive(Debug, Args)]
pub struct MaxentArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[arg(long = "default", value_enum, default_value = "flat")]
    pub default_model: DefaultArg,
    /// Network providing the default model (required with `--default neural`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `auto` for discrepancy-principle selection, or a fixed value.
    #[arg(long, default_value = "auto")]
    pub alpha: String,
    /// Noise level (default: maxent.sigma, else the dataset's noise level).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip writing wall-clock timings.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    /// Unrolled checkpoint (default: the untrained ISTA-initialized network).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Unrolled checkpoint (default: the fixed ISTA matrices).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// 1-based layer index.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Output directory for `w_t.csv` and `w_e.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Shape { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let threads = if cli.global.deterministic { 1 } else { cli.global.jobs.unwrap_or(0) };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

struct Ctx {
    cfg: ExperimentConfig,
    exec: Execution,
    verbose: bool,
}

impl Ctx {
    fn provenance(&self, inputs: &[&Path]) -> Result<Provenance> {
        let mut list = Vec::new();
        for p in inputs {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            list.push((name, file_sha256(p)?));
        }
        Ok(Provenance {
            config_hash: self.cfg.hash(),
            inputs: list,
        })
    }

    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[anacont] {msg}");
        }
    }
}

fn resolve_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &g.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.global)?;
    apply_flags(&mut cfg, &cli.command)?;
    cfg.validate()?;
    let ctx = Ctx {
        cfg,
        exec: if cli.global.deterministic { Execution::Serial } else { Execution::Parallel },
        verbose: cli.global.verbose,
    };
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Infer(a) => cmd_infer(&ctx, a),
        Command::Ista(a) => cmd_ista(&ctx, a),
        Command::Maxent(a) => cmd_maxent(&ctx, a),
        Command::Benchmark(a) => cmd_benchmark(&ctx, a),
        Command::Coherence(a) => cmd_coherence(&ctx, a),
        Command::ExportWeights(a) => cmd_export_weights(&ctx, a),
    }
}

/// Dedicated flags are shorthands for config keys and win over the file.
fn apply_flags(cfg: &mut ExperimentConfig, cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => {
            if let Some(s) = a.noise_sigma {
                cfg.data.noise_sigma = s;
            }
        }
        Command::Train(a) => {
            if let Some(d) = a.depth {
                cfg.network.depth = d;
            }
            if let Some(e) = a.eta {
                cfg.network.eta = e;
            }
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(l) = a.learning_rate {
                cfg.train.learning_rate = l;
            }
            if let Some(b) = a.batch_size {
                cfg.train.batch_size = b;
            }
        }
        Command::Ista(a) => {
            if let Some(l) = a.lambda {
                cfg.ista.lambda = l;
            }
            if let Some(m) = a.max_iter {
                cfg.ista.max_iter = m;
            }
        }
        Command::Maxent(a) => {
            if let Some(s) = a.sigma {
                cfg.maxent.sigma = Some(s);
            }
            cfg.maxent.alpha = match a.alpha.trim() {
                "auto" => None,
                v => Some(v.parse().map_err(|_| Error::Config(format!("--alpha must be auto or a number, got {v:?}")))?),
            };
        }
        _ => {}
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// `<stem>.manifest.csv` next to the primary output: config echo, inputs and outputs with hashes.
fn write_manifest(ctx: &Ctx, command: &str, primary: &Path, inputs: &[&Path], outputs: &[PathBuf]) -> Result<PathBuf> {
    let mut t = Table::new(["role", "file", "sha256"]);
    t.meta("command", command);
    for (k, v) in ctx.cfg.flat_entries() {
        t.meta(&format!("config.{k}"), v);
    }
    for p in inputs {
        t.push(vec!["input".into(), p.display().to_string(), file_sha256(p)?]);
    }
    for p in outputs {
        t.push(vec!["output".into(), p.display().to_string(), file_sha256(p)?]);
    }
    ctx.provenance(inputs)?.stamp(&mut t);
    let path = with_suffix(primary, ".manifest.csv");
    t.write(&path)?;
    Ok(path)
}

fn write_table(prov: &Provenance, mut t: Table, path: &Path) -> Result<()> {
    prov.stamp(&mut t);
    t.write(path)
}

fn load_data(ctx: &Ctx, path: &Path) -> Result<Dataset> {
    let d = load_dataset(path)?;
    d.check_grid(&ctx.cfg.grid)?;
    Ok(d)
}

fn load_model(ctx: &Ctx, path: &Path) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    ck.check_grid(&ctx.cfg.grid)?;
    Ok(ck)
}

fn cmd_gen_data(ctx: &Ctx, a: &GenDataArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::Config("--n must be > 0".into()));
    }
    let spec = ctx.cfg.data.spectrum_config(ctx.cfg.seed, a.split.into());
    let data = generate_dataset(a.n, &spec, &ctx.cfg.grid, ctx.exec)?;
    let prov = ctx.provenance(&[])?;
    prov.stamp_container(data.to_container()).write(&a.out)?;
    write_manifest(ctx, "gen-data", &a.out, &[], &[a.out.clone()])?;
    ctx.log(&format!("wrote {} samples to {}", a.n, a.out.display()));
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut inputs: Vec<&Path> = Vec::new();
    let train_set = match &a.data {
        Some(p) => {
            inputs.push(p);
            load_data(ctx, p)?
        }
        None => generate_dataset(cfg.data.n_train, &cfg.data.spectrum_config(cfg.seed, Split::Train), &cfg.grid, ctx.exec)?,
    };
    let test_set = match &a.test {
        Some(p) => {
            inputs.push(p);
            load_data(ctx, p)?
        }
        None => generate_dataset(cfg.data.n_test, &cfg.data.spectrum_config(cfg.seed, Split::TestMulti), &cfg.grid, ctx.exec)?,
    };
    let kernel = cfg.grid.kernel()?;
    let provenance = Some(cfg.train.describe());
    let data_hash = Some(train_set.hash());
    ctx.log(&format!("training on {} samples", train_set.len()));
    let (ck, curve, initial, failure) = match a.variant {
        ArchArg::Lista | ArchArg::Rlista => {
            let variant = if a.variant == ArchArg::Lista { Variant::Lista } else { Variant::Rlista };
            let init = init_params(&kernel, cfg.network.lambda, variant, cfg.network.depth, cfg.network.eta)?;
            let out = train(init, &train_set, &test_set, &cfg.train)?;
            (Checkpoint::unrolled(out.model), out.curve, out.initial_test_rse, out.failure)
        }
        ArchArg::Fcn => {
            let hidden = if a.hidden.is_empty() {
                fcn_hidden(Method::Fcn2, cfg)?
            } else {
                a.hidden.clone()
            };
            let init = FcnParams::new(cfg.grid.n_tau, cfg.grid.n_omega, &hidden, cfg.network.fcn_output_bias, cfg.network.fcn_seed)?;
            let out = train(init, &train_set, &test_set, &cfg.train)?;
            (Checkpoint::fcn(out.model, Some(cfg.grid)), out.curve, out.initial_test_rse, out.failure)
        }
    };
    let ck = ck.with_provenance(provenance, data_hash);
    let prov = ctx.provenance(&inputs)?;
    prov.stamp_container(ck.to_container()).write(&a.out)?;
    let curve_path = with_suffix(&a.out, ".curve.csv");
    let mut t = Table::parse(&curve_table(&curve))?;
    t.meta("model", ck.model.name());
    t.meta("initial_test_rse", fmt17(initial));
    t.meta("training_failure", failure.is_some());
    write_table(&prov, t, &curve_path)?;
    write_manifest(ctx, "train", &a.out, &inputs, &[a.out.clone(), curve_path])?;
    if let Some(f) = failure {
        eprintln!(
            "warning: training did not improve the test error ({:.4} -> {:.4})",
            f.initial_test_rse, f.final_test_rse
        );
    }
    ctx.log(&format!(
        "final test rse {:.6}",
        curve.last().map_or(initial, |r| r.test_rse)
    ));
    Ok(())
}

fn cmd_infer(ctx: &Ctx, a: &InferArgs) -> Result<()> {
    let ck = load_model(ctx, &a.checkpoint)?;
    let data = load_data(ctx, &a.data)?;
    let pred = ck.model.predict_batch(data.greens_matrix().view())?;
    let n_omega = ck.model.n_omega();
    let mut cols = vec!["sample".to_string(), "peak_count".into(), "rse".into()];
    cols.extend((0..n_omega).map(|i| format!("a{i}")));
    let mut t = Table::new(cols);
    t.meta("model", ck.model.name());
    let mut total = 0.0;
    for (j, s) in data.samples.iter().enumerate() {
        let e = rse(pred.column(j), s.spectrum.view())?;
        total += e;
        let mut row = vec![j.to_string(), s.peak_count.to_string(), fmt17(e)];
        row.extend(pred.column(j).iter().map(|&x| fmt17(x)));
        t.push(row);
    }
    t.meta("mean_rse", fmt17(total / data.len() as f64));
    let inputs = [a.checkpoint.as_path(), a.data.as_path()];
    write_table(&ctx.provenance(&inputs)?, t, &a.out)?;
    write_manifest(ctx, "infer", &a.out, &inputs, &[a.out.clone()])?;
    Ok(())
}

fn cmd_ista(ctx: &Ctx, a: &IstaArgs) -> Result<()> {
    let data = load_data(ctx, &a.data)?;
    let kernel = ctx.cfg.grid.kernel()?;
    let mut ista = IstaConfig::for_operator(kernel.matrix(), ctx.cfg.ista.lambda)?;
    ista.max_iter = ctx.cfg.ista.max_iter;
    ista.tol = ctx.cfg.ista.tol;
    let inputs = [a.data.as_path()];
    let prov = ctx.provenance(&inputs)?;
    let mut outputs = vec![a.out.clone()];
    let meta = |t: &mut Table| {
        t.meta("lambda", fmt17(ista.lambda)).meta("step", fmt17(ista.step)).meta("tol", fmt17(ista.tol)).meta("max_iter", ista.max_iter);
    };
    match a.sample {
        Some(i) => {
            let s = data
                .samples
                .get(i)
                .ok_or_else(|| Error::Config(format!("--sample {i} out of range (dataset has {})", data.len())))?;
            let report = ista_solve_quiet(kernel.matrix(), s.greens_noisy.view(), &ista)?;
            let mut t = Table::new(["omega", "a", "a_true"]);
            meta(&mut t);
            t.meta("sample", i)
                .meta("iterations", report.iterations)
                .meta("converged", report.converged)
                .meta("objective", fmt17(report.objective_trace.last().copied().unwrap_or(f64::NAN)))
                .meta("rse", fmt17(rse(report.solution.view(), s.spectrum.view())?));
            for (k, &w) in kernel.freq_grid().points().iter().enumerate() {
                t.push(vec![fmt17(w), fmt17(report.solution[k]), fmt17(s.spectrum[k])]);
            }
            write_table(&prov, t, &a.out)?;
            let mut trace = Table::new(["iteration", "objective"]);
            for (k, &f) in report.objective_trace.iter().enumerate() {
                trace.push(vec![k.to_string(), fmt17(f)]);
            }
            let trace_path = with_suffix(&a.out, ".trace.csv");
            write_table(&prov, trace, &trace_path)?;
            outputs.push(trace_path);
        }
        None => {
            let report = ista_solve_batch(kernel.matrix(), data.greens_matrix().view(), &ista)?;
            let mut t = Table::new(["sample", "peak_count", "iterations", "converged", "rse"]);
            meta(&mut t);
            let mut total = 0.0;
            for (j, s) in data.samples.iter().enumerate() {
                let e = rse(report.solutions.column(j), s.spectrum.view())?;
                total += e;
                t.push(vec![
                    j.to_string(),
                    s.peak_count.to_string(),
                    report.iterations[j].to_string(),
                    report.converged[j].to_string(),
                    fmt17(e),
                ]);
            }
            t.meta("mean_rse", fmt17(total / data.len() as f64));
            write_table(&prov, t, &a.out)?;
        }
    }
    write_manifest(ctx, "ista", &a.out, &inputs, &outputs)?;
    Ok(())
}

fn cmd_maxent(ctx: &Ctx, a: &MaxentArgs) -> Result<()> {
    let data = load_data(ctx, &a.data)?;
    let s = data
        .samples
        .get(a.sample)
        .ok_or_else(|| Error::Config(format!("--sample {} out of range (dataset has {})", a.sample, data.len())))?;
    let kernel = ctx.cfg.grid.kernel()?;
    let settings = ctx.cfg.maxent.settings(data.config.noise_sigma)?;
    let g = s.greens_noisy.view();
    let mut inputs = vec![a.data.as_path()];
    let (result, default_model, network_output) = match a.default_model {
        DefaultArg::Flat => {
            if a.checkpoint.is_some() {
                return Err(Error::Config("--checkpoint is only used with --default neural".into()));
            }
            let r = flat_maxent(g, &kernel, &settings)?;
            (r, kernel.freq_grid().flat_density(), None)
        }
        DefaultArg::Neural => {
            let path = a
                .checkpoint
                .as_deref()
                .ok_or_else(|| Error::Config("--default neural needs --checkpoint".into()))?;
            inputs.push(path);
            let ck = load_model(ctx, path)?;
            let r = rlista_plus(g, &kernel, &ck.model, &settings)?;
            (r.result, r.default_model, Some((ck.model.name(), r.network_output)))
        }
    };
    let mut t = result_table(&result, kernel.freq_grid(), default_model.view());
    t.meta("sample", a.sample).meta("sigma", fmt17(settings.sigma)).meta(
        "alpha_mode",
        match &settings.alpha {
            AlphaChoice::Fixed(_) => "fixed",
            AlphaChoice::Auto(_) => "auto",
        },
    );
    t.meta("rse", fmt17(rse(result.spectrum.view(), s.spectrum.view())?));
    if let Some((name, out)) = &network_output {
        t.meta("network", name).meta("network_rse", fmt17(rse(out.view(), s.spectrum.view())?));
        t.columns.push("network".into());
        for (row, &x) in t.rows.iter_mut().zip(out.iter()) {
            row.push(fmt17(x));
        }
    }
    t.columns.push("a_true".into());
    for (row, &x) in t.rows.iter_mut().zip(s.spectrum.iter()) {
        row.push(fmt17(x));
    }
    write_table(&ctx.provenance(&inputs)?, t, &a.out)?;
    write_manifest(ctx, "maxent", &a.out, &inputs, &[a.out.clone()])?;
    Ok(())
}

fn cmd_benchmark(ctx: &Ctx, a: &BenchmarkArgs) -> Result<()> {
    let opts = RunOptions {
        exec: ctx.exec,
        verbose: ctx.verbose,
    };
    let report = run_benchmark(&ctx.cfg, &opts)?;
    // Wall-clock timings would break byte-identical reruns.
    let timings = !a.no_timings && ctx.exec == Execution::Parallel;
    let files = report.write(&ctx.cfg, &a.out, timings)?;
    if let Some(c) = &report.comparison {
        for r in &c.rows {
            println!("{:<10} {:<7} mean_rse {:.6}", r.method, r.stratum, r.mean_rse);
        }
    }
    if let Some(n) = &report.neural_default {
        println!(
            "maxent flat {:.6}  {} {:.6}  rlista+ {:.6}",
            n.mean(|r| r.rse_flat),
            n.network,
            n.mean(|r| r.rse_network),
            n.mean(|r| r.rse_rlista_plus)
        );
    }
    ctx.log(&format!("wrote {} files to {}", files.len(), a.out.display()));
    Ok(())
}

fn unrolled_or_ista(ctx: &Ctx, path: Option<&Path>) -> Result<(UnrolledNetParams, WeightSource)> {
    match path {
        Some(p) => Ok((load_model(ctx, p)?.into_unrolled()?, WeightSource::Learned)),
        None => {
            let kernel = ctx.cfg.grid.kernel()?;
            let p = init_params(&kernel, ctx.cfg.network.lambda, Variant::Lista, ctx.cfg.network.depth, ctx.cfg.network.eta)?;
            Ok((p, WeightSource::Ista))
        }
    }
}

fn cmd_coherence(ctx: &Ctx, a: &CoherenceArgs) -> Result<()> {
    let (params, source) = unrolled_or_ista(ctx, a.checkpoint.as_deref())?;
    let kernel = ctx.cfg.grid.kernel()?;
    let profile = coherence_profile(&params, &kernel, ctx.cfg.network.lambda)?;
    let mut t = profile.table();
    t.meta("source", format!("{source:?}"))
        .meta("mean_nu_wt", fmt17(profile.mean_nu_wt()))
        .meta("mean_nu_we", fmt17(profile.mean_nu_we()));
    let inputs: Vec<&Path> = a.checkpoint.as_deref().into_iter().collect();
    write_table(&ctx.provenance(&inputs)?, t, &a.out)?;
    write_manifest(ctx, "coherence", &a.out, &inputs, &[a.out.clone()])?;
    Ok(())
}

fn cmd_export_weights(ctx: &Ctx, a: &ExportArgs) -> Result<()> {
    let (params, source) = unrolled_or_ista(ctx, a.checkpoint.as_deref())?;
    if a.layer == 0 || a.layer > params.depth() {
        return Err(Error::Config(format!("--layer must be in 1..={}, got {}", params.depth(), a.layer)));
    }
    let l = &params.layers[a.layer - 1];
    let export = normalize_weight_export(l.w_t.view(), l.w_e.view(), source)?;
    let (mut wt, mut we) = export.tables();
    wt.meta("layer", a.layer);
    we.meta("layer", a.layer);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let inputs: Vec<&Path> = a.checkpoint.as_deref().into_iter().collect();
    let prov = ctx.provenance(&inputs)?;
    let (pt, pe) = (a.out.join("w_t.csv"), a.out.join("w_e.csv"));
    write_table(&prov, wt, &pt)?;
    write_table(&prov, we, &pe)?;
    write_manifest(ctx, "export-weights", &a.out.join("weights"), &inputs, &[pt, pe])?;
    Ok(())
}
