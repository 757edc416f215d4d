//! Iterative refinement: each iteration trains a fresh dual-graph block on the
//! current matrix against the loss objective and hands its output to the next.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correspondence::{anchor_count, select_anchors, AnchorSet, CorrError, SoftCorrespondence};
use crate::dgat::{Dg2nBlock, DgatConfig, NeighborTable};
use crate::geometry::{GeoGraph, Shape};
use crate::losses::{total_loss_var, LossContext, LossError, LossMask, LossReport, LossWeights};
use crate::numcore::{Adam, AdamConfig, NumError, Tape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration}, inner step {step}")]
    NonFinite { iteration: usize, step: usize },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Corr(#[from] CorrError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub iterations: usize,
    pub inner_steps: usize,
    pub dgat: DgatConfig,
    pub weights: LossWeights,
    pub mask: LossMask,
    /// Anchors per view: `⌈fraction·count⌉`.
    pub anchor_fraction: f64,
    /// First FPS pick for anchor selection.
    pub anchor_start: usize,
    /// Select anchors once from the initial matrix instead of every iteration.
    pub freeze_anchors: bool,
    pub lr: f64,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            iterations: 5,
            inner_steps: 200,
            dgat: DgatConfig::default(),
            weights: LossWeights::default(),
            mask: LossMask::ALL,
            anchor_fraction: 0.05,
            anchor_start: 0,
            freeze_anchors: false,
            lr: DEFAULT_REFINE_LR,
            seed: 0,
        }
    }
}

/// Default learning rate of the inner optimization.
pub const DEFAULT_REFINE_LR: f64 = 1e-3;

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.iterations == 0 {
            return Err(RefineError::Config("iterations must be ≥ 1".into()));
        }
        if self.inner_steps == 0 {
            return Err(RefineError::Config("inner steps must be ≥ 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(RefineError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.anchor_fraction > 0.0 && self.anchor_fraction <= 1.0) {
            return Err(RefineError::Config(format!("anchor fraction {} must be in (0, 1]", self.anchor_fraction)));
        }
        let d = &self.dgat;
        if d.k == 0 || d.layers == 0 || d.hidden2 == 0 || d.hidden1 == Some(0) {
            return Err(RefineError::Config(format!("DGAT sizes must be positive: {d:?}")));
        }
        let w = self.effective_weights();
        let weights = [w.laplacian, w.sparsity, w.anchor, w.denoise];
        if weights.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(RefineError::Config(format!("loss weights must be non-negative: {:?}", self.weights)));
        }
        Ok(())
    }

    /// Weights with disabled terms zeroed.
    pub fn effective_weights(&self) -> LossWeights {
        self.weights.masked(self.mask)
    }
}

/// A source/target pair with the graphs and neighbor tables refinement runs on.
#[derive(Debug, Clone)]
pub struct PairContext<'a> {
    pub source: &'a Shape,
    pub target: &'a Shape,
    pub source_graph: &'a GeoGraph,
    pub target_graph: &'a GeoGraph,
    pub primal_table: NeighborTable,
    pub dual_table: NeighborTable,
}

impl<'a> PairContext<'a> {
    pub fn new(source: &'a Shape, target: &'a Shape, source_graph: &'a GeoGraph, target_graph: &'a GeoGraph, k: usize) -> Result<Self, RefineError> {
        if source_graph.len() != source.len() || target_graph.len() != target.len() {
            return Err(RefineError::Config("graphs do not match their shapes".into()));
        }
        Ok(PairContext {
            source,
            target,
            source_graph,
            target_graph,
            primal_table: NeighborTable::new(source_graph, k)?,
            dual_table: NeighborTable::new(target_graph, k)?,
        })
    }

    /// Anchors on both views of `p`.
    pub fn anchors(&self, p: &SoftCorrespondence, fraction: f64, start: usize) -> Result<(AnchorSet, AnchorSet), RefineError> {
        let (n, m) = (p.source_n(), p.target_m());
        let primal = select_anchors(p, self.source, anchor_count(n, fraction), start.min(n - 1))?;
        let dual = select_anchors(&p.transpose(), self.target, anchor_count(m, fraction), start.min(m - 1))?;
        Ok((primal, dual))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub p: SoftCorrespondence,
    /// One report per inner step.
    pub losses: Vec<LossReport>,
    pub anchors_primal: AnchorSet,
    pub anchors_dual: AnchorSet,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace {
    pub iterations: Vec<IterationRecord>,
}

impl RefineTrace {
    pub fn last(&self) -> &SoftCorrespondence {
        &self.iterations.last().expect("at least one iteration").p
    }

    /// Per-step CSV (`iteration` column prepended), including a header.
    pub fn loss_csv(&self) -> String {
        let mut s = format!("iteration,{}\n", LossReport::CSV_HEADER);
        for (it, rec) in self.iterations.iter().enumerate() {
            for (step, r) in rec.losses.iter().enumerate() {
                s.push_str(&format!("{},{}\n", it + 1, r.csv_row(step)));
            }
        }
        s
    }
}

/// Trains one freshly initialized block on `p` for `config.inner_steps` steps
/// and returns the forward output of the final step with the per-step reports.
pub fn refine_once(
    p: &SoftCorrespondence,
    pair: &PairContext,
    anchors: (&AnchorSet, &AnchorSet),
    config: &RefineConfig,
    seed: u64,
    iteration: usize,
) -> Result<(SoftCorrespondence, Vec<LossReport>), RefineError> {
    config.validate()?;
    let (n, m) = (p.source_n(), p.target_m());
    if n != pair.source.len() || m != pair.target.len() {
        return Err(RefineError::Config(format!("{n}×{m} matrix for shapes of {} and {} vertices", pair.source.len(), pair.target.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = Dg2nBlock::new(n, m, &config.dgat, &mut rng)?;
    let mut opt = Adam::new(&block.store, AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let ctx = LossContext {
        p_prev: p,
        source_graph: pair.source_graph,
        target_graph: pair.target_graph,
        anchors_primal: anchors.0,
        anchors_dual: anchors.1,
        weights: config.effective_weights(),
    };
    let input = p.to_tensor();
    let mut reports = Vec::with_capacity(config.inner_steps);
    for step in 0..config.inner_steps {
        let mut tape = Tape::new();
        let bound = tape.bind(&block.store);
        let x = tape.constant(&input);
        let out = block.forward(&mut tape, &bound, x, &pair.primal_table, &pair.dual_table)?;
        let (loss, report) = total_loss_var(&mut tape, out, &ctx)?;
        if !report.total.is_finite() {
            return Err(RefineError::NonFinite { iteration, step });
        }
        reports.push(report);
        if step + 1 == config.inner_steps {
            let p_star = SoftCorrespondence::from_tensor(&tape.tensor(out))?;
            return Ok((p_star, reports));
        }
        tape.backward(loss)?;
        block.store.accumulate(&tape, &bound)?;
        opt.step(&mut block.store).map_err(|e| match e {
            NumError::NonFinite(_) => RefineError::NonFinite { iteration, step },
            other => other.into(),
        })?;
    }
    unreachable!("inner_steps ≥ 1 was validated")
}

/// Chains `config.iterations` refinement iterations starting from `p0`.
pub fn refine(p0: &SoftCorrespondence, pair: &PairContext, config: &RefineConfig) -> Result<RefineTrace, RefineError> {
    refine_with(p0, pair, config, |_, _| {})
}

/// [`refine`] with a callback after every iteration (1-based index, record).
pub fn refine_with(
    p0: &SoftCorrespondence,
    pair: &PairContext,
    config: &RefineConfig,
    mut on_iteration: impl FnMut(usize, &IterationRecord),
) -> Result<RefineTrace, RefineError> {
    config.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let frozen = if config.freeze_anchors {
        Some(pair.anchors(p0, config.anchor_fraction, config.anchor_start)?)
    } else {
        None
    };
    let mut p = p0.clone();
    let mut iterations = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let start = Instant::now();
        let (ap, ad) = match &frozen {
            Some(a) => a.clone(),
            None => pair.anchors(&p, config.anchor_fraction, config.anchor_start)?,
        };
        let (next, losses) = refine_once(&p, pair, (&ap, &ad), config, seeds.gen(), it)?;
        let record = IterationRecord { p: next, losses, anchors_primal: ap, anchors_dual: ad, elapsed: start.elapsed() };
        log::debug!(
            "refine iteration {}: loss {:.4} -> {:.4} in {:.1?}",
            it + 1,
            record.losses.first().map_or(f64::NAN, |r| r.total),
            record.losses.last().map_or(f64::NAN, |r| r.total),
            record.elapsed
        );
        on_iteration(it + 1, &record);
        p = record.p.clone();
        iterations.push(record);
    }
    Ok(RefineTrace { iterations })
}
