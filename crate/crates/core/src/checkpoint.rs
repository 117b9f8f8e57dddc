//! Checkpoints for trained networks, stored in the `SPECCONT` container.
//!
//! `kind = unrolled` payload, per layer: `W_t` (row-major), `W_e`
//! (row-major), `θ`. `kind = fcn` payload, per dense layer: weights
//! (row-major, `out × in`) then bias.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use crate::container::{fmt_f64, Container};
use crate::error::{Error, Result};
use crate::fcn::{Dense, FcnParams};
use crate::kernel::GridSpec;
use crate::synthdata::{read_grid, write_grid};
use crate::train::SpectralPredictor;
use crate::unrolled::{Layer, UnrolledNetParams, Variant};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Unrolled(UnrolledNetParams),
    Fcn(FcnParams),
}

impl Model {
    pub fn name(&self) -> String {
        match self {
            Model::Unrolled(p) => format!("{}-{}", p.variant.to_string().to_uppercase(), p.depth()),
            Model::Fcn(p) => format!("FCN-{}", p.depth()),
        }
    }
}

impl SpectralPredictor for Model {
    fn predict_batch(&self, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Model::Unrolled(p) => p.predict_batch(g),
            Model::Fcn(p) => p.predict_batch(g),
        }
    }

    fn parameter_count(&self) -> usize {
        match self {
            Model::Unrolled(p) => SpectralPredictor::parameter_count(p),
            Model::Fcn(p) => p.parameter_count(),
        }
    }

    fn n_tau(&self) -> usize {
        match self {
            Model::Unrolled(p) => p.n_tau(),
            Model::Fcn(p) => SpectralPredictor::n_tau(p),
        }
    }

    fn n_omega(&self) -> usize {
        match self {
            Model::Unrolled(p) => p.n_omega(),
            Model::Fcn(p) => SpectralPredictor::n_omega(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub grid: Option<GridSpec>,
    /// [`crate::train::TrainConfig::describe`] of the run that produced it.
    pub train_config: Option<String>,
    pub dataset_hash: Option<String>,
}

impl Checkpoint {
    pub fn unrolled(params: UnrolledNetParams) -> Self {
        let grid = params.grid;
        Self {
            model: Model::Unrolled(params),
            grid,
            train_config: None,
            dataset_hash: None,
        }
    }

    pub fn fcn(params: FcnParams, grid: Option<GridSpec>) -> Self {
        Self {
            model: Model::Fcn(params),
            grid,
            train_config: None,
            dataset_hash: None,
        }
    }

    pub fn with_provenance(mut self, train_config: Option<String>, dataset_hash: Option<String>) -> Self {
        self.train_config = train_config;
        self.dataset_hash = dataset_hash;
        self
    }

    pub fn into_unrolled(self) -> Result<UnrolledNetParams> {
        match self.model {
            Model::Unrolled(p) => Ok(p),
            Model::Fcn(_) => Err(Error::Config("checkpoint holds an FCN, not an unrolled network".into())),
        }
    }

    /// Errors unless the checkpoint records `expected` as its grid.
    pub fn check_grid(&self, expected: &GridSpec) -> Result<()> {
        let (nt, nw) = (self.model.n_tau(), self.model.n_omega());
        if nt != expected.n_tau || nw != expected.n_omega {
            return Err(Error::shape(
                "checkpoint grid",
                format!("{} x {}", expected.n_tau, expected.n_omega),
                format!("{nt} x {nw}"),
            ));
        }
        match &self.grid {
            Some(g) if g == expected => Ok(()),
            Some(g) => Err(Error::shape("checkpoint grid", format!("{expected:?}"), format!("{g:?}"))),
            None => Ok(()),
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        match &self.model {
            Model::Unrolled(p) => {
                c.set("kind", "unrolled");
                c.set("variant", p.variant);
                c.set("depth", p.depth());
                c.set("eta", fmt_f64(p.eta));
                c.set("n_tau", p.n_tau());
                c.set("n_omega", p.n_omega());
                c.set("layout", "per layer: W_t[n_omega x n_omega] W_e[n_omega x n_tau] theta");
                for l in &p.layers {
                    c.payload.extend(l.w_t.iter());
                    c.payload.extend(l.w_e.iter());
                    c.payload.push(l.theta);
                }
            }
            Model::Fcn(p) => {
                c.set("kind", "fcn");
                c.set("depth", p.depth());
                c.set("n_tau", SpectralPredictor::n_tau(p));
                c.set("n_omega", SpectralPredictor::n_omega(p));
                let widths: Vec<String> = p.hidden_widths().iter().map(|w| w.to_string()).collect();
                c.set("hidden", widths.join(","));
                c.set("layout", "per layer: weights[out x in] bias[out]");
                for l in &p.layers {
                    c.payload.extend(l.weights.iter());
                    c.payload.extend(l.bias.iter());
                }
            }
        }
        match &self.grid {
            Some(g) => {
                c.set("has_grid", true);
                write_grid(&mut c, g);
            }
            None => c.set("has_grid", false),
        }
        c.set("train_config", self.train_config.as_deref().unwrap_or("none"));
        c.set("dataset_hash", self.dataset_hash.as_deref().unwrap_or("none"));
        c
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    ck.to_container().write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c = Container::read(path)?;
    let fail = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let kind: String = c.require("kind", path)?;
    if kind != "unrolled" && kind != "fcn" {
        return Err(fail(format!("expected a checkpoint, found kind {kind:?}")));
    }
    let has_grid: bool = c.require("has_grid", path)?;
    let mut grid = if has_grid { Some(read_grid(&c, path)?) } else { None };
    let nt: usize = c.require("n_tau", path)?;
    let nw: usize = c.require("n_omega", path)?;
    let depth: usize = c.require("depth", path)?;
    if nt == 0 || nw == 0 || depth == 0 {
        return Err(fail("zero-sized network".into()));
    }
    let mut values = c.payload.iter().copied();
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = values.by_ref().take(n).collect();
        if v.len() == n {
            Ok(v)
        } else {
            Err(fail("payload shorter than the declared architecture".into()))
        }
    };
    let model = match kind.as_str() {
        "unrolled" => {
            let variant: Variant = c
                .require::<String>("variant", path)?
                .parse()
                .map_err(|e: Error| fail(e.to_string()))?;
            let eta: f64 = c.require("eta", path)?;
            let mut layers = Vec::with_capacity(depth);
            for _ in 0..depth {
                let w_t = Array2::from_shape_vec((nw, nw), take(nw * nw)?).expect("sized");
                let w_e = Array2::from_shape_vec((nw, nt), take(nw * nt)?).expect("sized");
                let theta = take(1)?[0];
                layers.push(Layer { w_t, w_e, theta });
            }
            let p = UnrolledNetParams {
                variant,
                eta,
                layers,
                grid,
            };
            p.validate().map_err(|e| fail(e.to_string()))?;
            Model::Unrolled(p)
        }
        "fcn" => {
            let hidden: String = c.require("hidden", path)?;
            let mut sizes = vec![nt];
            for w in hidden.split(',').filter(|s| !s.is_empty()) {
                sizes.push(w.trim().parse().map_err(|_| fail(format!("bad hidden width {w:?}")))?);
            }
            sizes.push(nw);
            if sizes.len() != depth + 1 {
                return Err(fail(format!("depth {depth} disagrees with hidden widths {hidden:?}")));
            }
            let mut layers = Vec::with_capacity(depth);
            for s in sizes.windows(2) {
                let weights = Array2::from_shape_vec((s[1], s[0]), take(s[0] * s[1])?).expect("sized");
                let bias = Array1::from(take(s[1])?);
                layers.push(Dense { weights, bias });
            }
            Model::Fcn(FcnParams { layers })
        }
        other => return Err(fail(format!("expected a checkpoint, found kind {other:?}"))),
    };
    if values.next().is_some() {
        return Err(fail("payload longer than the declared architecture".into()));
    }
    if let (Some(g), Model::Unrolled(p)) = (&mut grid, &model) {
        *g = p.grid.unwrap_or(*g);
    }
    let opt = |key: &str| c.get(key).filter(|v| *v != "none").map(str::to_string);
    Ok(Checkpoint {
        model,
        grid,
        train_config: opt("train_config"),
        dataset_hash: opt("dataset_hash"),
    })
}

/// Loads a checkpoint and checks that it was built for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &GridSpec) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    ck.check_grid(expected)?;
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unrolled::{forward, init_params};
    use ndarray::Array1;

    fn small_grid() -> GridSpec {
        GridSpec {
            beta: 5.0,
            n_tau: 8,
            omega_min: -3.0,
            omega_max: 3.0,
            n_omega: 10,
        }
    }

    #[test]
    fn unrolled_round_trip_is_bitwise() {
        let k = small_grid().kernel().unwrap();
        let mut p = init_params(&k, 1e-3, Variant::Rlista, 3, 0.3).unwrap();
        p.layers[1].w_t[[2, 3]] = 1.0 / 3.0;
        p.layers[2].theta = 0.1 + 0.2;
        let ck = Checkpoint::unrolled(p).with_provenance(Some("loss=mse epochs=3".into()), Some("abc".into()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn fcn_round_trip_is_bitwise() {
        let p = FcnParams::new(8, 10, &[5, 4], 0.1, 3).unwrap();
        let ck = Checkpoint::fcn(p, Some(small_grid()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        save_checkpoint(&ck, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
    }

    #[test]
    fn untrained_checkpoint_reproduces_forward() {
        let k = small_grid().kernel().unwrap();
        let p = init_params(&k, 1e-2, Variant::Lista, 4, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&Checkpoint::unrolled(p.clone()), &path).unwrap();
        let back = load_checkpoint(&path).unwrap().into_unrolled().unwrap();
        let g = Array1::linspace(0.1, 0.5, 8);
        assert_eq!(forward(&p, g.view()).unwrap().output_vector(), forward(&back, g.view()).unwrap().output_vector());
    }

    #[test]
    fn grid_mismatch_is_a_shape_error() {
        let k = small_grid().kernel().unwrap();
        let p = init_params(&k, 1e-2, Variant::Lista, 1, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        save_checkpoint(&Checkpoint::unrolled(p), &path).unwrap();
        assert!(load_checkpoint_for(&path, &small_grid()).is_ok());
        let err = load_checkpoint_for(&path, &GridSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
        let mut other_beta = small_grid();
        other_beta.beta = 6.0;
        assert!(matches!(load_checkpoint_for(&path, &other_beta), Err(Error::Shape { .. })));
    }

    #[test]
    fn dataset_file_is_not_a_checkpoint() {
        let cfg = crate::synthdata::SpectrumConfig {
            center_min: -1.0,
            center_max: 1.0,
            broad_width_max: 0.5,
            ..Default::default()
        };
        let ds = crate::synthdata::generate_dataset(2, &cfg, &small_grid(), crate::Execution::Serial).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        crate::synthdata::save_dataset(&ds, &path).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }
}
