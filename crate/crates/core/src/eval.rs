//! Geodesic error of hard maps and cumulative error curves.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::correspondence::{mle_map, SoftCorrespondence, VertexMap};
use crate::dgat::{DEFAULT_K_KNN, DEFAULT_K_MESH};
use crate::geometry::{icosphere, knn_graph, mesh_graph, noisy_copy, standard_noise, AugmentConfig, GeoGraph, GeometryError, Shape};
use crate::initiator::{infer_initial, train_initiator, InitiatorError, TrainConfig, TrainedInitiator};
use crate::losses::LossMask;
use crate::numcore::derive_seed;
use crate::refine::{refine, PairContext, RefineConfig, RefineError, RefineTrace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("predicted and ground-truth targets are disconnected for source vertices {0:?}")]
    Disconnected(Vec<usize>),
    #[error("thresholds must be sorted ascending")]
    UnsortedThresholds,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Initiator(#[from] InitiatorError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error("ablation needs at least one subset and one seed")]
    EmptyAblation,
    #[error("the pair has no ground-truth map")]
    MissingGroundTruth,
}

/// How distances were normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalizer {
    /// `√area` of the target mesh.
    SqrtArea(f64),
    /// Bounding-box diagonal, used for point clouds (no triangle area).
    BboxDiagonal(f64),
}

impl Normalizer {
    pub fn for_shape(shape: &Shape) -> Self {
        match shape.surface_area() {
            Ok(a) if a > 0.0 => Normalizer::SqrtArea(a.sqrt()),
            _ => Normalizer::BboxDiagonal(shape.bbox_diagonal()),
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Normalizer::SqrtArea(v) | Normalizer::BboxDiagonal(v) => v,
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, Normalizer::BboxDiagonal(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    /// Per source vertex: graph-geodesic distance between predicted and true
    /// target, divided by the normalizer.
    pub errors: Vec<f64>,
    pub normalizer: Normalizer,
}

/// Scale of the headline mean geodesic error (mean normalized error × 100).
pub const MGE_SCALE: f64 = 100.0;

impl ErrorSummary {
    /// Mean normalized error × [`MGE_SCALE`].
    pub fn mge(&self) -> f64 {
        MGE_SCALE * self.errors.iter().sum::<f64>() / self.errors.len().max(1) as f64
    }

    /// Unscaled sum of normalized errors over all source vertices.
    pub fn total(&self) -> f64 {
        self.errors.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

pub fn geodesic_error(pred: &VertexMap, gt: &VertexMap, target: &Shape, graph: &GeoGraph) -> Result<ErrorSummary, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::Dimension(format!("predicted map has {} entries, ground truth {}", pred.len(), gt.len())));
    }
    if graph.len() != target.len() {
        return Err(EvalError::Dimension(format!("graph has {} nodes, target {}", graph.len(), target.len())));
    }
    let m = target.len();
    for (name, map) in [("predicted", pred), ("ground-truth", gt)] {
        if let Some(i) = map.targets().iter().position(|&t| t >= m) {
            return Err(EvalError::Index(format!("{name} target {} of vertex {i} >= {m}", map.targets()[i])));
        }
    }
    let normalizer = Normalizer::for_shape(target);
    if normalizer.is_fallback() {
        log::info!("target has no triangle area; normalizing by bounding-box diagonal");
    }
    let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut errors = Vec::with_capacity(pred.len());
    let mut disconnected = Vec::new();
    for (i, (&p, &g)) in pred.targets().iter().zip(gt.targets()).enumerate() {
        let d = if p == g {
            0.0
        } else {
            // one Dijkstra per distinct source keeps the pass O(unique · E log V)
            let (s, t) = (p.min(g), p.max(g));
            if !rows.contains_key(&s) {
                rows.insert(s, graph.geodesic_distances(s)?);
            }
            rows[&s][t]
        };
        if d.is_infinite() {
            disconnected.push(i);
        }
        errors.push(d / normalizer.value());
    }
    if !disconnected.is_empty() {
        return Err(EvalError::Disconnected(disconnected));
    }
    Ok(ErrorSummary { errors, normalizer })
}

/// Fraction of vertices with normalized error `≤ t` for each threshold.
pub fn error_curve(summary: &ErrorSummary, thresholds: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) || thresholds.iter().any(|t| t.is_nan()) {
        return Err(EvalError::UnsortedThresholds);
    }
    let mut sorted = summary.errors.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, sorted.partition_point(|&e| e <= t) as f64 / n))
        .collect())
}

/// `count` evenly spaced thresholds from 0 to `max`.
pub fn uniform_thresholds(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..count).map(|k| max * k as f64 / (count - 1) as f64).collect(),
    }
}

/// Graph used for a shape: mesh edges when it has faces, otherwise kNN.
pub fn shape_graph(shape: &Shape) -> Result<GeoGraph, GeometryError> {
    if shape.faces().is_some() {
        mesh_graph(shape)
    } else {
        knn_graph(shape, DEFAULT_K_KNN.min(shape.len().saturating_sub(1)).max(1))
    }
}

/// Neighbor count of the refinement tables matching [`shape_graph`].
pub fn default_table_k(shape: &Shape) -> usize {
    if shape.faces().is_some() {
        DEFAULT_K_MESH
    } else {
        DEFAULT_K_KNN
    }
}

/// A source/target pair with their graphs and, when known, the true map.
#[derive(Debug, Clone)]
pub struct PairData {
    pub source: Shape,
    pub target: Shape,
    pub source_graph: GeoGraph,
    pub target_graph: GeoGraph,
    pub gt: Option<VertexMap>,
}

impl PairData {
    pub fn new(source: Shape, target: Shape, gt: Option<VertexMap>) -> Result<Self, EvalError> {
        if let Some(gt) = &gt {
            if gt.len() != source.len() {
                return Err(EvalError::Dimension(format!("ground truth has {} entries for {} source vertices", gt.len(), source.len())));
            }
            gt.validate(target.len()).map_err(|e| EvalError::Index(e.to_string()))?;
        }
        Ok(PairData { source_graph: shape_graph(&source)?, target_graph: shape_graph(&target)?, source, target, gt })
    }

    /// The standard synthetic pair: a 162-vertex icosphere and a rotated,
    /// jittered copy (identity ground truth). `seed` is a root seed.
    pub fn standard(seed: u64) -> Result<Self, EvalError> {
        let source = icosphere(2)?;
        let (target, _) = noisy_copy(&source, &standard_noise(), derive_seed(seed, SEED_STREAM_DATA))?;
        let n = source.len();
        PairData::new(source, target, Some(VertexMap::identity(n)))
    }

    pub fn errors(&self, p: &SoftCorrespondence) -> Result<ErrorSummary, EvalError> {
        let gt = self.gt.as_ref().ok_or(EvalError::MissingGroundTruth)?;
        geodesic_error(&mle_map(p), gt, &self.target, &self.target_graph)
    }

    pub fn mge(&self, p: &SoftCorrespondence) -> Result<f64, EvalError> {
        Ok(self.errors(p)?.mge())
    }
}

/// Initiator training plus refinement settings of one pipeline run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub augment: AugmentConfig,
    pub initiator: TrainConfig,
    pub refine: RefineConfig,
}

/// Seed streams of one pipeline run.
pub const SEED_STREAM_DATA: u64 = 1;
pub const SEED_STREAM_INITIATOR: u64 = 2;
pub const SEED_STREAM_REFINE: u64 = 3;

/// Trains the initiator on the source shape and returns the initial matrix.
pub fn initial_correspondence(pair: &PairData, config: &PipelineConfig, seed: u64) -> Result<(TrainedInitiator, SoftCorrespondence), EvalError> {
    let trained = train_initiator(&pair.source, &pair.source_graph, &config.augment, &config.initiator, derive_seed(seed, SEED_STREAM_INITIATOR))?;
    let cos = infer_initial(&pair.source, &pair.source_graph, &pair.target, &pair.target_graph, &trained.net)?;
    if cos.degenerate() {
        log::warn!("initial correspondence has all-zero descriptor rows");
    }
    Ok((trained, cos.p))
}

/// Refines `p0` with the loss terms of `mask`.
pub fn refine_pair(pair: &PairData, p0: &SoftCorrespondence, config: &RefineConfig, mask: LossMask, seed: u64) -> Result<RefineTrace, EvalError> {
    let cfg = RefineConfig { mask, seed: derive_seed(seed, SEED_STREAM_REFINE), ..config.clone() };
    let ctx = PairContext::new(&pair.source, &pair.target, &pair.source_graph, &pair.target_graph, cfg.dgat.k)?;
    Ok(refine(p0, &ctx, &cfg)?)
}

/// Fraction of the first iteration's primal anchors whose label is the
/// argmax of their row after every iteration.
pub fn anchor_survival(trace: &RefineTrace) -> f64 {
    let Some(first) = trace.iterations.first() else { return 0.0 };
    let anchors = &first.anchors_primal;
    if anchors.len() == 0 {
        return 0.0;
    }
    let maps: Vec<VertexMap> = trace.iterations.iter().map(|r| mle_map(&r.p)).collect();
    let kept = anchors.iter().filter(|a| maps.iter().all(|m| m.0[a.source] == a.label)).count();
    kept as f64 / anchors.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    InitiatorOnly,
    Losses(LossMask),
}

impl Subset {
    pub fn label(&self) -> String {
        match self {
            Subset::InitiatorOnly => "initiator".into(),
            Subset::Losses(m) => m.label(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s.trim().eq_ignore_ascii_case("initiator") {
            Some(Subset::InitiatorOnly)
        } else {
            LossMask::parse(s).ok().filter(|m| !m.is_empty()).map(Subset::Losses)
        }
    }
}

/// One (subset, seed) cell of an ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub subset: Subset,
    pub seed: u64,
    /// MGE of the initial matrix followed by one entry per iteration.
    pub mge_steps: Vec<f64>,
    /// Anchor survival over all iterations (`None` for the initiator alone).
    pub anchor_survival: Option<f64>,
    /// Wall time of the initiator plus this cell's refinement.
    pub elapsed: Duration,
}

impl AblationCell {
    pub fn final_mge(&self) -> f64 {
        *self.mge_steps.last().expect("at least the initial MGE")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub subset: Subset,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn row(&self, subset: Subset) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.subset == subset)
    }

    pub fn cells_of(&self, subset: Subset) -> impl Iterator<Item = &AblationCell> {
        self.cells.iter().filter(move |c| c.subset == subset)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("subset,mge_mean,mge_median\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:?},{:?}\n", r.subset.label(), r.mean, r.median));
        }
        s
    }

    /// Every cell with its per-step MGE (`step` 0 is the initial matrix).
    pub fn cells_csv(&self) -> String {
        let mut s = String::from("subset,seed,step,mge\n");
        for c in &self.cells {
            for (step, v) in c.mge_steps.iter().enumerate() {
                s.push_str(&format!("{},{},{step},{v:?}\n", c.subset.label(), c.seed));
            }
        }
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Runs the pipeline for every (subset, seed) cell. The initiator is trained
/// once per seed and shared by that seed's subsets; cells run in parallel.
pub fn ablation_run(pair: &PairData, config: &PipelineConfig, subsets: &[Subset], seeds: &[u64]) -> Result<AblationTable, EvalError> {
    let mut unique: Vec<Subset> = Vec::new();
    for s in subsets {
        if unique.contains(s) {
            log::warn!("duplicate ablation subset {} ignored", s.label());
        } else {
            unique.push(*s);
        }
    }
    let mut seed_list: Vec<u64> = Vec::new();
    for s in seeds {
        if seed_list.contains(s) {
            log::warn!("duplicate ablation seed {s} ignored");
        } else {
            seed_list.push(*s);
        }
    }
    if unique.is_empty() || seed_list.is_empty() {
        return Err(EvalError::EmptyAblation);
    }
    let initial: Vec<(SoftCorrespondence, f64, Duration)> = seed_list
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let (_, p0) = initial_correspondence(pair, config, seed)?;
            let m0 = pair.mge(&p0)?;
            Ok((p0, m0, start.elapsed()))
        })
        .collect::<Result<_, EvalError>>()?;
    let jobs: Vec<(usize, Subset)> = (0..seed_list.len()).flat_map(|i| unique.iter().map(move |s| (i, *s))).collect();
    let cells: Vec<AblationCell> = jobs
        .par_iter()
        .map(|&(i, subset)| {
            let (p0, m0, init_time) = &initial[i];
            let seed = seed_list[i];
            match subset {
                Subset::InitiatorOnly => Ok(AblationCell { subset, seed, mge_steps: vec![*m0], anchor_survival: None, elapsed: *init_time }),
                Subset::Losses(mask) => {
                    let start = Instant::now();
                    let trace = refine_pair(pair, p0, &config.refine, mask, seed)?;
                    let mut mge_steps = vec![*m0];
                    for rec in &trace.iterations {
                        mge_steps.push(pair.mge(&rec.p)?);
                    }
                    log::info!("ablation {} seed {seed}: MGE {:.3} -> {:.3}", subset.label(), m0, mge_steps.last().unwrap());
                    Ok(AblationCell {
                        subset,
                        seed,
                        mge_steps,
                        anchor_survival: Some(anchor_survival(&trace)),
                        elapsed: *init_time + start.elapsed(),
                    })
                }
            }
        })
        .collect::<Result<_, EvalError>>()?;
    let rows = unique
        .iter()
        .map(|&subset| {
            let v: Vec<f64> = cells.iter().filter(|c| c.subset == subset).map(AblationCell::final_mge).collect();
            AblationRow { subset, mean: v.iter().sum::<f64>() / v.len() as f64, median: median(&v) }
        })
        .collect();
    Ok(AblationTable { seeds: seed_list, rows, cells })
}
