//! Refinement objectives: graph smoothness, sparsity, anchor guidance and
//! closeness to the previous matrix, each evaluated on the primal view P* and
//! the dual view P*ᵀ.

use crate::correspondence::{AnchorSet, SoftCorrespondence};
use crate::geometry::GeoGraph;
use crate::numcore::{NumError, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("invalid loss weights: {0}")]
    Weights(String),
    #[error("anchor out of range: {0}")]
    Anchor(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub laplacian: f64,
    pub sparsity: f64,
    pub anchor: f64,
    pub denoise: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { laplacian: 1.0, sparsity: 0.1, anchor: 1.0, denoise: 10.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let w = [self.laplacian, self.sparsity, self.anchor, self.denoise];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(LossError::Weights(format!("{self:?} has a negative or non-finite weight")));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(LossError::Weights("all loss weights are zero".into()));
        }
        Ok(())
    }

    /// Zeroes the weights of disabled terms.
    pub fn masked(&self, mask: LossMask) -> Self {
        let on = |b: bool, v: f64| if b { v } else { 0.0 };
        LossWeights {
            laplacian: on(mask.laplacian, self.laplacian),
            sparsity: on(mask.sparsity, self.sparsity),
            anchor: on(mask.anchor, self.anchor),
            denoise: on(mask.denoise, self.denoise),
        }
    }
}

/// Which terms are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LossMask {
    pub laplacian: bool,
    pub sparsity: bool,
    pub anchor: bool,
    pub denoise: bool,
}

impl LossMask {
    pub const ALL: LossMask = LossMask { laplacian: true, sparsity: true, anchor: true, denoise: true };
    pub const NONE: LossMask = LossMask { laplacian: false, sparsity: false, anchor: false, denoise: false };

    pub fn is_empty(&self) -> bool {
        *self == Self::NONE
    }

    /// Parses a `+`-separated subset such as `L+l1+AG+l2`; `none` is the empty set.
    pub fn parse(s: &str) -> Result<Self, LossError> {
        let mut m = Self::NONE;
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("initiator") {
            return Ok(m);
        }
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::ALL);
        }
        for part in s.split('+').map(str::trim) {
            match part {
                "L" => m.laplacian = true,
                "l1" => m.sparsity = true,
                "AG" => m.anchor = true,
                "l2" => m.denoise = true,
                other => return Err(LossError::Weights(format!("unknown loss term {other:?} (use L, l1, AG, l2)"))),
            }
        }
        Ok(m)
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = [(self.laplacian, "L"), (self.sparsity, "l1"), (self.anchor, "AG"), (self.denoise, "l2")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

impl Default for LossMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// The four term values of one view.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Terms {
    pub laplacian: f64,
    pub sparsity: f64,
    pub anchor: f64,
    pub denoise: f64,
}

impl Terms {
    pub fn sum(&self) -> f64 {
        self.laplacian + self.sparsity + self.anchor + self.denoise
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub primal: Terms,
    pub dual: Terms,
    pub total: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,laplacian_primal,sparsity_primal,anchor_primal,denoise_primal,\
laplacian_dual,sparsity_dual,anchor_dual,denoise_dual,total";

    pub fn components(&self) -> [f64; 8] {
        let (p, d) = (&self.primal, &self.dual);
        [p.laplacian, p.sparsity, p.anchor, p.denoise, d.laplacian, d.sparsity, d.anchor, d.denoise]
    }

    /// One CSV row; `{:?}` keeps every value round-trippable.
    pub fn csv_row(&self, step: usize) -> String {
        let mut s = step.to_string();
        for v in self.components().iter().chain([self.total].iter()) {
            s.push(',');
            s.push_str(&format!("{v:?}"));
        }
        s
    }
}

fn edge_lists(graph: &GeoGraph) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let edges = graph.edges();
    (edges.iter().map(|e| e.i).collect(), edges.iter().map(|e| e.j).collect(), edges.iter().map(|e| e.weight).collect())
}

/// `λ Σ_{(i,j)∈E} w_ij ‖p_i − p_j‖²` over the rows of `p`.
pub fn laplacian_var(tape: &mut Tape, p: Var, graph: &GeoGraph, lambda: f64) -> Result<Var, NumError> {
    let s = tape.shape(p).to_vec();
    if s.len() != 2 || s[0] != graph.len() {
        return Err(NumError::Dimension(format!("laplacian loss: {s:?} features on a {}-node graph", graph.len())));
    }
    let (src, dst, w) = edge_lists(graph);
    if src.is_empty() {
        let z = tape.constant(&Tensor::scalar(0.0));
        let pz = tape.scale(p, 0.0)?;
        let pz = tape.sum(pz)?;
        return tape.add(z, pz);
    }
    let a = tape.gather_rows(p, &src)?;
    let b = tape.gather_rows(p, &dst)?;
    let d = tape.sub(a, b)?;
    let sq = tape.mul(d, d)?;
    let per_edge = tape.sum_last(sq)?;
    let wv = tape.constant(&Tensor::vector(w)?);
    let weighted = tape.mul(per_edge, wv)?;
    let total = tape.sum(weighted)?;
    tape.scale(total, lambda)
}

/// `λ·tr(Pᵀ L P)` with a dense Laplacian.
pub fn laplacian_trace_var(tape: &mut Tape, p: Var, laplacian: &Tensor, lambda: f64) -> Result<Var, NumError> {
    let l = tape.constant(laplacian);
    let lp = tape.matmul(l, p)?;
    let prod = tape.mul(p, lp)?;
    let total = tape.sum(prod)?;
    tape.scale(total, lambda)
}

/// `λ Σ |P_ij|`.
pub fn sparsity_var(tape: &mut Tape, p: Var, lambda: f64) -> Result<Var, NumError> {
    let l = tape.l1(p)?;
    tape.scale(l, lambda)
}

/// `λ Σ_anchors C² (−x[ŷ] + log Σ_j exp x[j])` with the anchor rows of `p` as logits.
pub fn anchor_var(tape: &mut Tape, p: Var, anchors: &AnchorSet, lambda: f64) -> Result<Var, LossError> {
    let s = tape.shape(p).to_vec();
    if s.len() != 2 {
        return Err(NumError::Dimension(format!("anchor loss on shape {s:?}")).into());
    }
    let (n, m) = (s[0], s[1]);
    if let Some(a) = anchors.iter().find(|a| a.source >= n || a.label >= m) {
        return Err(LossError::Anchor(format!("anchor {}→{} outside {n}×{m}", a.source, a.label)));
    }
    if anchors.is_empty() {
        let pz = tape.scale(p, 0.0)?;
        return Ok(tape.sum(pz)?);
    }
    let k = anchors.len();
    let rows: Vec<usize> = anchors.iter().map(|a| a.source).collect();
    let x = tape.gather_rows(p, &rows)?;
    let lse = tape.logsumexp(x)?;
    let mut onehot = vec![0.0; k * m];
    for (r, a) in anchors.iter().enumerate() {
        onehot[r * m + a.label] = 1.0;
    }
    let oh = tape.constant(&Tensor::matrix(k, m, onehot)?);
    let picked = tape.mul(x, oh)?;
    let picked = tape.sum_last(picked)?;
    let ce = tape.sub(lse, picked)?;
    let c2 = tape.constant(&Tensor::vector(anchors.iter().map(|a| a.confidence * a.confidence).collect())?);
    let weighted = tape.mul(ce, c2)?;
    let total = tape.sum(weighted)?;
    Ok(tape.scale(total, lambda)?)
}

/// `λ ‖P* − P‖²_F`.
pub fn denoise_var(tape: &mut Tape, p_star: Var, p_prev: Var, lambda: f64) -> Result<Var, NumError> {
    let d = tape.sub(p_star, p_prev)?;
    let l = tape.squared_l2(d)?;
    tape.scale(l, lambda)
}

/// Everything the objective needs besides the refined matrix itself.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub p_prev: &'a SoftCorrespondence,
    pub source_graph: &'a GeoGraph,
    pub target_graph: &'a GeoGraph,
    pub anchors_primal: &'a AnchorSet,
    pub anchors_dual: &'a AnchorSet,
    pub weights: LossWeights,
}

/// Records the eight terms and their sum for `p_star` (N×M). Terms with zero
/// weight are skipped and reported as 0.
pub fn total_loss_var(tape: &mut Tape, p_star: Var, ctx: &LossContext) -> Result<(Var, LossReport), LossError> {
    let w = ctx.weights;
    let prev = tape.constant(&ctx.p_prev.to_tensor());
    let prev_t = tape.transpose(prev)?;
    let dual = tape.transpose(p_star)?;
    let views = [
        (p_star, prev, ctx.source_graph, ctx.anchors_primal),
        (dual, prev_t, ctx.target_graph, ctx.anchors_dual),
    ];
    let mut parts: Vec<Var> = Vec::new();
    let mut terms = [Terms::default(); 2];
    for (v, (x, xp, graph, anchors)) in views.into_iter().enumerate() {
        let t = &mut terms[v];
        if w.laplacian > 0.0 {
            let l = laplacian_var(tape, x, graph, w.laplacian)?;
            t.laplacian = tape.scalar(l);
            parts.push(l);
        }
        if w.sparsity > 0.0 {
            let l = sparsity_var(tape, x, w.sparsity)?;
            t.sparsity = tape.scalar(l);
            parts.push(l);
        }
        if w.anchor > 0.0 && !anchors.is_empty() {
            let l = anchor_var(tape, x, anchors, w.anchor)?;
            t.anchor = tape.scalar(l);
            parts.push(l);
        }
        if w.denoise > 0.0 {
            let l = denoise_var(tape, x, xp, w.denoise)?;
            t.denoise = tape.scalar(l);
            parts.push(l);
        }
    }
    let mut total = match parts.first() {
        Some(&first) => first,
        None => {
            let pz = tape.scale(p_star, 0.0)?;
            tape.sum(pz)?
        }
    };
    for &p in parts.iter().skip(1) {
        total = tape.add(total, p)?;
    }
    let report = LossReport { primal: terms[0], dual: terms[1], total: tape.scalar(total) };
    Ok((total, report))
}

/// Off-tape evaluation of [`total_loss_var`].
pub fn total_loss(p_star: &SoftCorrespondence, ctx: &LossContext) -> Result<LossReport, LossError> {
    let mut tape = Tape::new();
    let p = tape.constant(&p_star.to_tensor());
    Ok(total_loss_var(&mut tape, p, ctx)?.1)
}

fn eval_scalar(p: &SoftCorrespondence, f: impl FnOnce(&mut Tape, Var) -> Result<Var, LossError>) -> Result<f64, LossError> {
    let mut tape = Tape::new();
    let v = tape.constant(&p.to_tensor());
    let out = f(&mut tape, v)?;
    Ok(tape.scalar(out))
}

pub fn laplacian_loss(p: &SoftCorrespondence, graph: &GeoGraph, lambda: f64) -> Result<f64, LossError> {
    eval_scalar(p, |t, v| Ok(laplacian_var(t, v, graph, lambda)?))
}

pub fn laplacian_trace(p: &SoftCorrespondence, laplacian: &Tensor, lambda: f64) -> Result<f64, LossError> {
    eval_scalar(p, |t, v| Ok(laplacian_trace_var(t, v, laplacian, lambda)?))
}

pub fn sparsity_loss(p: &SoftCorrespondence, lambda: f64) -> Result<f64, LossError> {
    eval_scalar(p, |t, v| Ok(sparsity_var(t, v, lambda)?))
}

pub fn anchor_loss(p: &SoftCorrespondence, anchors: &AnchorSet) -> Result<f64, LossError> {
    eval_scalar(p, |t, v| anchor_var(t, v, anchors, 1.0))
}

pub fn denoise_loss(p_star: &SoftCorrespondence, p_prev: &SoftCorrespondence, lambda: f64) -> Result<f64, LossError> {
    if (p_star.source_n(), p_star.target_m()) != (p_prev.source_n(), p_prev.target_m()) {
        return Err(NumError::Dimension("denoise loss: shape mismatch".into()).into());
    }
    let mut tape = Tape::new();
    let a = tape.constant(&p_star.to_tensor());
    let b = tape.constant(&p_prev.to_tensor());
    let l = denoise_var(&mut tape, a, b, lambda)?;
    Ok(tape.scalar(l))
}
