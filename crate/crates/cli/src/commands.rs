use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use softcorr::correspondence::{mle_map, SoftCorrespondence, VertexMap};
use softcorr::eval::{
    ablation_run, default_table_k, error_curve, geodesic_error, initial_correspondence, refine_pair, shape_graph, uniform_thresholds,
    ErrorSummary, PairData, SEED_STREAM_DATA,
};
use softcorr::geometry::{bent_cylinder_pair, icosphere, noisy_copy, Shape, ShapeFormat};
use softcorr::numcore::derive_seed;

use crate::config::*;
use crate::error::{CliError, Context, ErrorKind};

/// Files written by one command, recorded with their hashes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Collects outputs of a command and writes its manifest last.
struct Writer<'a> {
    config: &'a RunConfig,
    command: &'static str,
    outputs: Vec<OutputRecord>,
}

impl<'a> Writer<'a> {
    fn new(config: &'a RunConfig, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(&config.out_dir).ctx(ErrorKind::Io, "cli", "create_output_dir")?;
        let mut w = Writer { config, command, outputs: Vec::new() };
        // the resolved configuration reproduces this run when passed back via --config
        w.write(&format!("{command}.config.toml"), config.to_toml().as_bytes())?;
        Ok(w)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.config.out(name);
        fs::write(&path, bytes).map_err(|e| CliError::new(ErrorKind::Io, "cli", "write_output", format!("{}: {e}", path.display())))?;
        self.outputs.push(OutputRecord { path: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() });
        Ok(path)
    }

    fn finish(self) -> Result<Vec<PathBuf>, CliError> {
        let manifest = Manifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            config_sha256: self.config.hash(),
            outputs: self.outputs,
        };
        let text = toml::to_string(&manifest).expect("manifest serializes");
        let path = self.config.out(&format!("{}.manifest.toml", self.command));
        fs::write(&path, text).ctx(ErrorKind::Io, "cli", "write_manifest")?;
        let mut paths: Vec<PathBuf> = manifest.outputs.iter().map(|o| self.config.out(&o.path)).collect();
        paths.push(path);
        Ok(paths)
    }
}

fn load_shape(path: &Path) -> Result<Shape, CliError> {
    let format = ShapeFormat::from_path(path).ok_or_else(|| {
        CliError::new(ErrorKind::Config, "geometry", "load_shape", format!("{}: unknown extension (off, obj, xyz)", path.display()))
    })?;
    Shape::load(path, format).map_err(|e| CliError::new(ErrorKind::Io, "geometry", "load_shape", format!("{}: {e}", path.display())))
}

fn load_corr(path: &Path) -> Result<SoftCorrespondence, CliError> {
    SoftCorrespondence::read(path)
        .map_err(|e| CliError::new(ErrorKind::Io, "correspondence", "read_corr", format!("{}: {e}", path.display())))
}

fn load_map(path: &Path) -> Result<VertexMap, CliError> {
    VertexMap::read(path).map_err(|e| CliError::new(ErrorKind::Io, "correspondence", "read_map", format!("{}: {e}", path.display())))
}

fn load_pair(config: &RunConfig, with_gt: bool) -> Result<PairData, CliError> {
    let source = load_shape(&config.source_path())?;
    let target = load_shape(&config.target_path())?;
    let gt = if with_gt { Some(load_map(&config.gt_path())?) } else { None };
    PairData::new(source, target, gt).ctx(ErrorKind::Compute, "eval", "pair")
}

/// Writes a source/target pair and its ground-truth map.
pub fn cmd_gen(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let g = &config.gen;
    let (source, target) = match g.kind {
        GenKind::Icosphere => {
            let s = icosphere(g.subdivisions).ctx(ErrorKind::Compute, "geometry", "icosphere")?;
            (s.clone(), s)
        }
        GenKind::BentCylinder => bent_cylinder_pair(g.bend_angle).ctx(ErrorKind::Compute, "geometry", "bent_cylinder_pair")?,
        GenKind::NoisyCopy => {
            let source = match &g.source {
                Some(path) => load_shape(path)?,
                None => icosphere(g.subdivisions).ctx(ErrorKind::Compute, "geometry", "icosphere")?,
            };
            let (target, params) = noisy_copy(&source, &g.noise.to_config(), derive_seed(config.seed, SEED_STREAM_DATA))
                .ctx(ErrorKind::Compute, "geometry", "noisy_copy")?;
            log::info!("noisy copy: rotation {:?}, scale {:?}, translation {:?}", params.rotation, params.scale, params.translation);
            (source, target)
        }
    };
    // every generator keeps vertex order, so the true map is the identity
    let gt = VertexMap::identity(source.len());
    let mut w = Writer::new(config, "gen")?;
    w.write(SOURCE_FILE, source.to_off().as_bytes())?;
    w.write(TARGET_FILE, target.to_off().as_bytes())?;
    w.write(GT_FILE, gt.to_text().as_bytes())?;
    log::info!("generated {} source and {} target vertices", source.len(), target.len());
    w.finish()
}

/// Trains the initiator on the source shape and writes it with the initial matrix.
pub fn cmd_init(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let pair = load_pair(config, false)?;
    let pipeline = config.pipeline(default_table_k(&pair.source))?;
    let (trained, p0) = initial_correspondence(&pair, &pipeline, config.seed).ctx(ErrorKind::Compute, "initiator", "train_initiator")?;
    log::info!(
        "initiator loss {:.4} -> {:.4}",
        trained.loss_history.first().copied().unwrap_or(f64::NAN),
        trained.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    let mut w = Writer::new(config, "init")?;
    w.write(INITIATOR_FILE, &trained.net.params().to_dnet())?;
    w.write(INITIAL_CORR_FILE, &p0.to_bytes())?;
    w.finish()
}

/// Refines the initial matrix, writing every step and the per-step losses.
pub fn cmd_refine(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let pair = load_pair(config, false)?;
    let cfg = config.refine_config(default_table_k(&pair.source))?;
    let p0 = load_corr(&config.corr_path())?;
    let trace = refine_pair(&pair, &p0, &cfg, cfg.mask, config.seed).ctx(ErrorKind::Compute, "refine", "refine")?;
    let mut w = Writer::new(config, "refine")?;
    for (i, rec) in trace.iterations.iter().enumerate() {
        w.write(&step_file(i + 1), &rec.p.to_bytes())?;
    }
    w.write(LOSS_FILE, trace.loss_csv().as_bytes())?;
    w.finish()
}

fn default_predictions(config: &RunConfig) -> Vec<PathBuf> {
    let mut preds = vec![config.corr_path()];
    preds.extend((1..=config.refine.iterations).map(|i| config.out(&step_file(i))).filter(|p| p.exists()));
    preds
}

fn prediction_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("pred").to_string()
}

/// Scores every prediction against the ground truth.
pub fn cmd_eval(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let target = load_shape(&config.target_path())?;
    let gt = load_map(&config.gt_path())?;
    let preds = if config.eval.pred.is_empty() { default_predictions(config) } else { config.eval.pred.clone() };
    let graph = shape_graph(&target).ctx(ErrorKind::Compute, "geometry", "graph")?;
    let mut scored: Vec<(String, ErrorSummary)> = Vec::new();
    for path in &preds {
        let map = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("corr")) {
            mle_map(&load_corr(path)?)
        } else {
            load_map(path)?
        };
        let summary = geodesic_error(&map, &gt, &target, &graph)
            .ctx(ErrorKind::Compute, "eval", "geodesic_error")?;
        log::info!("{}: MGE {:.4}", path.display(), summary.mge());
        scored.push((prediction_name(path), summary));
    }

    let mut summary = String::from("prediction,mge,total,max,normalizer,normalizer_value\n");
    for (name, s) in &scored {
        let kind = if s.normalizer.is_fallback() { "bbox_diagonal" } else { "sqrt_area" };
        summary.push_str(&format!("{name},{:?},{:?},{:?},{kind},{:?}\n", s.mge(), s.total(), s.max(), s.normalizer.value()));
    }
    let names: Vec<&str> = scored.iter().map(|(n, _)| n.as_str()).collect();
    let mut errors = format!("vertex,{}\n", names.join(","));
    for v in 0..gt.len() {
        let row: Vec<String> = scored.iter().map(|(_, s)| format!("{:?}", s.errors[v])).collect();
        errors.push_str(&format!("{v},{}\n", row.join(",")));
    }
    let thresholds = uniform_thresholds(config.eval.curve_max, config.eval.curve_points);
    let curves = scored
        .iter()
        .map(|(_, s)| error_curve(s, &thresholds))
        .collect::<Result<Vec<_>, _>>()
        .ctx(ErrorKind::Compute, "eval", "error_curve")?;
    let mut curve = format!("threshold,{}\n", names.join(","));
    for (i, t) in thresholds.iter().enumerate() {
        let row: Vec<String> = curves.iter().map(|c| format!("{:?}", c[i].1)).collect();
        curve.push_str(&format!("{t:?},{}\n", row.join(",")));
    }

    let mut w = Writer::new(config, "eval")?;
    w.write(SUMMARY_FILE, summary.as_bytes())?;
    w.write(ERRORS_FILE, errors.as_bytes())?;
    w.write(CURVE_FILE, curve.as_bytes())?;
    w.finish()
}

/// Loss-subset ablation over several seeds on the configured pair.
pub fn cmd_ablate(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let pair = load_pair(config, true)?;
    let pipeline = config.pipeline(default_table_k(&pair.source))?;
    let subsets = config.subsets()?;
    let table = ablation_run(&pair, &pipeline, &subsets, &config.ablate.seeds).ctx(ErrorKind::Compute, "eval", "ablation_run")?;
    for r in &table.rows {
        log::info!("{}: mean MGE {:.4}, median {:.4}", r.subset.label(), r.mean, r.median);
    }
    let mut w = Writer::new(config, "ablate")?;
    w.write(ABLATION_FILE, table.to_csv().as_bytes())?;
    w.write(ABLATION_CELLS_FILE, table.cells_csv().as_bytes())?;
    w.finish()
}
