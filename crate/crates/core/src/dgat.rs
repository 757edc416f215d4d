//! Differentiable graph attention layer and the dual (primal/transpose) block.
//!
//! Phase I runs an MLP on `(f_i ‖ f_j ‖ f_i − f_j)` for each of the K ordered
//! neighbors of node i, giving an M×K stack per node. Phase II regresses each
//! feature's K-vector to a scalar with a second MLP shared across features.
//!
//! The first Phase I linear map is stored as three M×h blocks (self,
//! neighbor, difference) so it can be applied per node and gathered per edge:
//! `[f_i, f_j, f_i − f_j]·W = f_i·(W_s + W_d) + f_j·(W_n − W_d)`.

use rand::Rng;

use crate::correspondence::{CorrError, FusionMode, SoftCorrespondence};
use crate::geometry::GeoGraph;
use crate::numcore::{Linear, NumError, ParamId, ParamStore, Tape, Tensor, Var};

/// Per node, K neighbor indices ordered by edge length (ties → lower index),
/// padded with the node itself when its degree is below K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    k: usize,
    rows: Vec<usize>,
}

impl NeighborTable {
    pub fn new(graph: &GeoGraph, k: usize) -> Result<Self, NumError> {
        if k == 0 {
            return Err(NumError::Dimension("neighbor count K must be ≥ 1".into()));
        }
        let mut rows = Vec::with_capacity(graph.len() * k);
        let mut order: Vec<(f64, usize)> = Vec::new();
        for i in 0..graph.len() {
            order.clear();
            order.extend(graph.lengths(i).iter().copied().zip(graph.neighbors(i).iter().copied()));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            rows.extend(order.iter().take(k).map(|&(_, j)| j));
            rows.extend(std::iter::repeat(i).take(k.saturating_sub(order.len())));
        }
        Ok(NeighborTable { k, rows })
    }

    pub fn from_rows(k: usize, rows: Vec<usize>) -> Result<Self, NumError> {
        if k == 0 || rows.len() % k != 0 {
            return Err(NumError::Dimension(format!("{} entries do not form rows of {k}", rows.len())));
        }
        let n = rows.len() / k;
        if let Some(&bad) = rows.iter().find(|&&j| j >= n) {
            return Err(NumError::Index(format!("neighbor {bad} in a table of {n} nodes")));
        }
        Ok(NeighborTable { k, rows })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> usize {
        self.rows.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i * self.k..(i + 1) * self.k]
    }
}

pub const DEFAULT_K_MESH: usize = 8;
pub const DEFAULT_K_KNN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DgatConfig {
    /// Neighbors per node.
    pub k: usize,
    /// DGAT layers per view.
    pub layers: usize,
    /// Hidden width of the Phase I MLP; `None` uses M.
    pub hidden1: Option<usize>,
    /// Hidden width of the Phase II MLP.
    pub hidden2: usize,
    /// Layer normalization after the Phase I hidden layer.
    pub layer_norm: bool,
    pub fusion: FusionMode,
}

impl Default for DgatConfig {
    fn default() -> Self {
        DgatConfig { k: DEFAULT_K_MESH, layers: 2, hidden1: Some(DEFAULT_HIDDEN1), hidden2: 16, layer_norm: true, fusion: FusionMode::Mean }
    }
}

/// Default Phase I hidden width.
pub const DEFAULT_HIDDEN1: usize = 32;

/// Parameter handles of one layer inside a shared [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct DgatLayer {
    pub m: usize,
    pub k: usize,
    pub layer_norm: bool,
    w_self: ParamId,
    w_neighbor: ParamId,
    w_diff: ParamId,
    b_in: ParamId,
    dnn1_out: Linear,
    dnn2_hidden: Linear,
    dnn2_out: Linear,
}

impl DgatLayer {
    /// Random Phase I/II weights; the final Phase II linear map starts at zero
    /// so a residual layer is initially the identity.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, m: usize, config: &DgatConfig, rng: &mut R) -> Result<Self, NumError> {
        if m == 0 || config.k == 0 || config.hidden2 == 0 || config.hidden1 == Some(0) {
            return Err(NumError::Dimension(format!("DGAT layer widths must be positive (M = {m})")));
        }
        let h1 = config.hidden1.unwrap_or(m);
        let bound = 1.0 / ((3 * m) as f64).sqrt();
        let mut block = |store: &mut ParamStore, part: &str, shape: &[usize]| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            store.add(format!("{name}.dnn1.in.{part}"), Tensor::new(shape.to_vec(), data).expect("finite draws"))
        };
        let w_self = block(store, "self", &[m, h1]);
        let w_neighbor = block(store, "neighbor", &[m, h1]);
        let w_diff = block(store, "diff", &[m, h1]);
        let b_in = block(store, "bias", &[h1]);
        let dnn1_out = Linear::new(store, &format!("{name}.dnn1.out"), h1, m, rng);
        let dnn2_hidden = Linear::new(store, &format!("{name}.dnn2.hidden"), config.k, config.hidden2, rng);
        let dnn2_out = Linear::zeros(store, &format!("{name}.dnn2.out"), config.hidden2, 1);
        Ok(DgatLayer { m, k: config.k, layer_norm: config.layer_norm, w_self, w_neighbor, w_diff, b_in, dnn1_out, dnn2_hidden, dnn2_out })
    }

    /// Handles of the Phase II parameters (hidden then output linear).
    pub fn dnn2(&self) -> (Linear, Linear) {
        (self.dnn2_hidden, self.dnn2_out)
    }

    pub fn dnn1_out(&self) -> Linear {
        self.dnn1_out
    }

    /// Phase I input blocks: self, neighbor, difference, bias.
    pub fn dnn1_in(&self) -> [ParamId; 4] {
        [self.w_self, self.w_neighbor, self.w_diff, self.b_in]
    }

    /// `DGAT(F)` for N×M features `f` (without the residual term).
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], f: Var, table: &NeighborTable) -> Result<Var, NumError> {
        let s = tape.shape(f).to_vec();
        if s.len() != 2 || s[1] != self.m || s[0] != table.nodes() || table.k() != self.k {
            return Err(NumError::Dimension(format!(
                "DGAT input {s:?} with table {}×{} for a layer with M = {}, K = {}",
                table.nodes(),
                table.k(),
                self.m,
                self.k
            )));
        }
        let (n, m, k) = (s[0], self.m, self.k);
        // neighbor-major pair order: row k·N + i pairs node i with its k-th neighbor
        let src: Vec<usize> = (0..k).flat_map(|_| 0..n).collect();
        let dst: Vec<usize> = (0..k).flat_map(|q| (0..n).map(move |i| table.row(i)[q])).collect();

        let a = tape.matmul(f, bound[self.w_self.index()])?;
        let b = tape.matmul(f, bound[self.w_neighbor.index()])?;
        let c = tape.matmul(f, bound[self.w_diff.index()])?;
        let node_side = tape.add(a, c)?;
        let nbr_side = tape.sub(b, c)?;
        let gi = tape.gather_rows(node_side, &src)?;
        let gj = tape.gather_rows(nbr_side, &dst)?;
        let h = tape.add(gi, gj)?;
        let mut h = tape.add_row(h, bound[self.b_in.index()])?;
        if self.layer_norm {
            h = tape.layer_norm(h)?;
        }
        let h = tape.relu(h)?;
        let u = self.dnn1_out.forward(tape, bound, h)?; // (K·N)×M

        let u = tape.reshape(u, &[k, n * m])?;
        let u = tape.transpose(u)?; // (N·M)×K, row i·M + j is feature j of node i
        let z = self.dnn2_hidden.forward(tape, bound, u)?;
        let z = tape.relu(z)?;
        let z = self.dnn2_out.forward(tape, bound, z)?;
        tape.reshape(z, &[n, m])
    }
}

/// Residual DGAT stacks for the primal view (P, features of width M) and the
/// dual view (Pᵀ, width N), with fresh weights per refinement iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Dg2nBlock {
    pub store: ParamStore,
    pub primal: Vec<DgatLayer>,
    pub dual: Vec<DgatLayer>,
    pub fusion: FusionMode,
}

impl Dg2nBlock {
    pub fn new<R: Rng>(n: usize, m: usize, config: &DgatConfig, rng: &mut R) -> Result<Self, NumError> {
        if config.layers == 0 {
            return Err(NumError::Dimension("a DG2N block needs at least one layer per view".into()));
        }
        let mut store = ParamStore::new();
        let mut primal = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            primal.push(DgatLayer::new(&mut store, &format!("primal{l}"), m, config, rng)?);
        }
        let mut dual = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            dual.push(DgatLayer::new(&mut store, &format!("dual{l}"), n, config, rng)?);
        }
        Ok(Dg2nBlock { store, primal, dual, fusion: config.fusion })
    }

    /// Records the refined matrix `P*` for input `p` (N×M) on `tape`.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], p: Var, primal: &NeighborTable, dual: &NeighborTable) -> Result<Var, NumError> {
        let pt = tape.transpose(p)?;
        let a = residual_stack(tape, bound, p, &self.primal, primal)?;
        let b = residual_stack(tape, bound, pt, &self.dual, dual)?;
        let bt = tape.transpose(b)?;
        match self.fusion {
            FusionMode::Mean => {
                let s = tape.add(a, bt)?;
                tape.scale(s, 0.5)
            }
            FusionMode::Max => tape.maximum(a, bt),
        }
    }
}

fn residual_stack(tape: &mut Tape, bound: &[Var], x: Var, layers: &[DgatLayer], table: &NeighborTable) -> Result<Var, NumError> {
    let mut h = x;
    for layer in layers {
        let d = layer.forward(tape, bound, h, table)?;
        h = tape.add(d, h)?;
    }
    Ok(h)
}

/// `DGAT(F)` evaluated off-tape.
pub fn dgat_forward(features: &Tensor, table: &NeighborTable, layer: &DgatLayer, store: &ParamStore) -> Result<Tensor, NumError> {
    let mut tape = Tape::new();
    let bound = tape.bind(store);
    let f = tape.constant(features);
    let out = layer.forward(&mut tape, &bound, f, table)?;
    Ok(tape.tensor(out))
}

/// The refined matrix `P* = fuse(primal(P), dual(Pᵀ))` evaluated off-tape.
pub fn dg2n_forward(
    p: &SoftCorrespondence,
    primal: &NeighborTable,
    dual: &NeighborTable,
    block: &Dg2nBlock,
) -> Result<SoftCorrespondence, CorrError> {
    let mut tape = Tape::new();
    let bound = tape.bind(&block.store);
    let x = tape.constant(&p.to_tensor());
    let out = block.forward(&mut tape, &bound, x, primal, dual).map_err(|e| CorrError::Dimension(e.to_string()))?;
    SoftCorrespondence::from_tensor(&tape.tensor(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Edge;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize, j: usize, length: f64) -> Edge {
        Edge { i, j, weight: 1.0, length }
    }

    #[test]
    fn table_examples() {
        let path = GeoGraph::from_edges(3, &[e(0, 1, 1.0), e(1, 2, 1.0)]).unwrap();
        let t = NeighborTable::new(&path, 1).unwrap();
        assert_eq!((t.row(0), t.row(1), t.row(2)), (&[1][..], &[0][..], &[1][..]));

        let lens = [[0.0, 3.0, 1.0, 2.0], [3.0, 0.0, 1.5, 0.5], [1.0, 1.5, 0.0, 2.5], [2.0, 0.5, 2.5, 0.0]];
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push(e(i, j, lens[i][j]));
            }
        }
        let t = NeighborTable::new(&GeoGraph::from_edges(4, &edges).unwrap(), 3).unwrap();
        assert_eq!(t.row(0), &[2, 3, 1]);
        assert_eq!(t.row(1), &[3, 2, 0]);

        let lonely = GeoGraph::from_edges(2, &[]).unwrap();
        assert_eq!(NeighborTable::new(&lonely, 3).unwrap().row(1), &[1, 1, 1]);
    }

    #[test]
    fn output_shape_and_zero_stage() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DgatConfig { k: 4, hidden1: None, ..DgatConfig::default() };
        let mut store = ParamStore::new();
        let layer = DgatLayer::new(&mut store, "l", 7, &cfg, &mut rng).unwrap();
        let table = NeighborTable::from_rows(4, (0..5).flat_map(|i| [(i + 1) % 5, (i + 2) % 5, i, (i + 4) % 5]).collect()).unwrap();
        let f = Tensor::matrix(5, 7, (0..35).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let out = dgat_forward(&f, &table, &layer, &store).unwrap();
        assert_eq!(out.shape(), &[5, 7]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(dgat_forward(&Tensor::zeros(&[5, 6]), &table, &layer, &store).is_err());
    }

    #[test]
    fn dnn2_size_is_independent_of_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let count = |m: usize, rng: &mut ChaCha8Rng| {
            let mut store = ParamStore::new();
            let layer = DgatLayer::new(&mut store, "l", m, &DgatConfig::default(), rng).unwrap();
            let (a, b) = layer.dnn2();
            [a.weight, a.bias, b.weight, b.bias].iter().map(|&id| store.get(id).len()).sum::<usize>()
        };
        assert_eq!(count(5, &mut rng), count(50, &mut rng));
    }
}
