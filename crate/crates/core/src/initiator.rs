//! Self-supervised all-to-all initiator: edge-convolution descriptors matched
//! by cosine similarity, trained on random deformations of a single shape.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correspondence::{CorrError, SoftCorrespondence};
use crate::geometry::{augment, AugmentConfig, GeoGraph, GeometryError, Shape};
use crate::numcore::{Adam, AdamConfig, Linear, NumError, ParamStore, Tape, Tensor, Var, NORM_FLOOR};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InitiatorError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Corr(#[from] CorrError),
}

pub const DEFAULT_WIDTHS: [usize; 4] = [3, 32, 32, 64];

/// Edge lists grouped by source node, as consumed by the max aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub offsets: Vec<usize>,
    /// Nodes without neighbors, aggregated over themselves instead.
    pub isolated: Vec<usize>,
}

impl EdgeIndex {
    pub fn from_graph(graph: &GeoGraph) -> Self {
        let mut e = EdgeIndex { src: Vec::new(), dst: Vec::new(), offsets: vec![0], isolated: Vec::new() };
        for i in 0..graph.len() {
            let nb = graph.neighbors(i);
            if nb.is_empty() {
                e.isolated.push(i);
                e.src.push(i);
                e.dst.push(i);
            } else {
                e.src.extend(std::iter::repeat(i).take(nb.len()));
                e.dst.extend_from_slice(nb);
            }
            e.offsets.push(e.src.len());
        }
        if !e.isolated.is_empty() {
            log::warn!("{} isolated vertices aggregate over themselves", e.isolated.len());
        }
        e
    }

    pub fn nodes(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// Stack of edge convolutions `f_i' = max_j MLP(f_i ‖ f_j − f_i)`, with a ReLU
/// between layers. Each MLP is `2·d_in → d_out → d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorNet {
    widths: Vec<usize>,
    store: ParamStore,
    layers: Vec<(Linear, Linear)>,
}

impl DescriptorNet {
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self, InitiatorError> {
        Self::build(widths, |s, name, i, o| Linear::new(s, name, i, o, rng))
    }

    /// All-zero weights; descriptors are identically zero.
    pub fn zeros(widths: &[usize]) -> Result<Self, InitiatorError> {
        Self::build(widths, Linear::zeros)
    }

    fn build(widths: &[usize], mut make: impl FnMut(&mut ParamStore, &str, usize, usize) -> Linear) -> Result<Self, InitiatorError> {
        check_widths(widths)?;
        let mut store = ParamStore::new();
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let a = make(&mut store, &format!("edgeconv{l}.0"), 2 * w[0], w[1]);
                let b = make(&mut store, &format!("edgeconv{l}.1"), w[1], w[1]);
                (a, b)
            })
            .collect();
        Ok(DescriptorNet { widths: widths.to_vec(), store, layers })
    }

    /// Rebuilds a net from stored parameters, inferring the widths.
    pub fn from_params(store: ParamStore) -> Result<Self, InitiatorError> {
        if store.is_empty() || store.len() % 4 != 0 {
            return Err(InitiatorError::Precondition(format!("{} tensors do not form edge-conv layers", store.len())));
        }
        let mut layers = Vec::new();
        let mut widths = Vec::new();
        for l in 0..store.len() / 4 {
            let a = Linear::from_store(&store, 4 * l)?;
            let b = Linear::from_store(&store, 4 * l + 2)?;
            if a.fan_in % 2 != 0 || a.fan_out != b.fan_in || b.fan_in != b.fan_out {
                return Err(InitiatorError::Precondition(format!("edge-conv layer {l} has inconsistent shapes")));
            }
            if l == 0 {
                widths.push(a.fan_in / 2);
            } else if widths[l] != a.fan_in / 2 {
                return Err(InitiatorError::Precondition(format!("edge-conv layer {l} does not chain")));
            }
            widths.push(a.fan_out);
            layers.push((a, b));
        }
        check_widths(&widths)?;
        Ok(DescriptorNet { widths, store, layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_params(self) -> ParamStore {
        self.store
    }

    pub fn layers(&self) -> &[(Linear, Linear)] {
        &self.layers
    }

    /// Records the descriptor computation for coordinates `x` (N×3) on `tape`;
    /// `bound` comes from `tape.bind(self.params())`.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var, edges: &EdgeIndex) -> Result<Var, NumError> {
        if tape.shape(x) != [edges.nodes(), self.widths[0]] {
            return Err(NumError::Dimension(format!(
                "descriptor input {:?} vs {} nodes × {}",
                tape.shape(x),
                edges.nodes(),
                self.widths[0]
            )));
        }
        let mut f = x;
        for (l, (a, b)) in self.layers.iter().enumerate() {
            let fi = tape.gather_rows(f, &edges.src)?;
            let fj = tape.gather_rows(f, &edges.dst)?;
            let d = tape.sub(fj, fi)?;
            let cat = tape.concat(&[fi, d])?;
            let h = a.forward(tape, bound, cat)?;
            let h = tape.relu(h)?;
            let h = b.forward(tape, bound, h)?;
            f = tape.segment_max(h, &edges.offsets)?;
            if l + 1 < self.layers.len() {
                f = tape.relu(f)?;
            }
        }
        Ok(f)
    }
}

fn check_widths(widths: &[usize]) -> Result<(), InitiatorError> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(InitiatorError::Precondition(format!("descriptor widths {widths:?} need ≥ 2 positive entries")));
    }
    if widths.last() < Some(&2) {
        return Err(InitiatorError::Precondition("descriptor dimension must be ≥ 2".into()));
    }
    Ok(())
}

fn coordinates(shape: &Shape) -> Tensor {
    Tensor::matrix(shape.len(), 3, shape.vertices().iter().flatten().copied().collect()).expect("validated shape")
}

/// N×d descriptor matrix of `shape`, with vertex coordinates as input features.
pub fn descriptors(shape: &Shape, graph: &GeoGraph, net: &DescriptorNet) -> Result<Tensor, InitiatorError> {
    if graph.len() != shape.len() {
        return Err(InitiatorError::Precondition(format!("graph has {} nodes, shape {}", graph.len(), shape.len())));
    }
    let edges = EdgeIndex::from_graph(graph);
    let mut tape = Tape::new();
    let bound = tape.bind(net.params());
    let x = tape.constant(&coordinates(shape));
    let h = net.forward(&mut tape, &bound, x, &edges)?;
    Ok(tape.tensor(h))
}

/// Cosine similarity matrix plus the rows whose norm fell below the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineMatrix {
    pub p: SoftCorrespondence,
    pub zero_rows_x: Vec<usize>,
    pub zero_rows_y: Vec<usize>,
}

impl CosineMatrix {
    pub fn degenerate(&self) -> bool {
        !self.zero_rows_x.is_empty() || !self.zero_rows_y.is_empty()
    }
}

pub fn cosine_matrix(hx: &Tensor, hy: &Tensor) -> Result<CosineMatrix, InitiatorError> {
    if hx.rank() != 2 || hy.rank() != 2 || hx.cols() != hy.cols() {
        return Err(NumError::Dimension(format!("descriptor shapes {:?} vs {:?}", hx.shape(), hy.shape())).into());
    }
    let zero = |h: &Tensor| -> Vec<usize> {
        (0..h.rows()).filter(|&i| h.row(i).iter().map(|v| v * v).sum::<f64>().sqrt() < NORM_FLOOR).collect()
    };
    let mut tape = Tape::new();
    let (x, y) = (tape.constant(hx), tape.constant(hy));
    let p = cosine_vars(&mut tape, x, y)?;
    let out = CosineMatrix { zero_rows_x: zero(hx), zero_rows_y: zero(hy), p: SoftCorrespondence::from_tensor(&tape.tensor(p))? };
    if out.degenerate() {
        log::warn!(
            "cosine matrix: {} source and {} target descriptors have zero norm",
            out.zero_rows_x.len(),
            out.zero_rows_y.len()
        );
    }
    Ok(out)
}

/// `P_ij = ⟨x_i, y_j⟩ / (‖x_i‖·‖y_j‖)` with floored norms.
pub fn cosine_vars(tape: &mut Tape, hx: Var, hy: Var) -> Result<Var, NumError> {
    let xn = tape.normalize_rows(hx)?;
    let yn = tape.normalize_rows(hy)?;
    let yt = tape.transpose(yn)?;
    tape.matmul(xn, yt)
}

/// `‖P − I‖²_F` for square `P`.
pub fn identity_loss(p: &SoftCorrespondence) -> Result<f64, InitiatorError> {
    let mut tape = Tape::new();
    let v = tape.constant(&p.to_tensor());
    let l = identity_loss_var(&mut tape, v)?;
    Ok(tape.scalar(l))
}

pub fn identity_loss_var(tape: &mut Tape, p: Var) -> Result<Var, NumError> {
    let s = tape.shape(p).to_vec();
    if s.len() != 2 || s[0] != s[1] {
        return Err(NumError::Dimension(format!("identity loss needs a square matrix, got {s:?}")));
    }
    let eye = tape.constant(&Tensor::identity(s[0]));
    let d = tape.sub(p, eye)?;
    tape.squared_l2(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { widths: DEFAULT_WIDTHS.to_vec(), epochs: 300, lr: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedInitiator {
    pub net: DescriptorNet,
    pub loss_history: Vec<f64>,
}

/// Trains a fresh net on `shape` against one new random deformation per epoch.
/// The deformed copy keeps vertex order, so the target map is the identity.
pub fn train_initiator(
    shape: &Shape,
    graph: &GeoGraph,
    aug: &AugmentConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedInitiator, InitiatorError> {
    if config.epochs == 0 {
        return Err(InitiatorError::Precondition("epochs must be ≥ 1".into()));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(InitiatorError::Precondition(format!("learning rate {} must be positive", config.lr)));
    }
    if graph.len() != shape.len() {
        return Err(InitiatorError::Precondition(format!("graph has {} nodes, shape {}", graph.len(), shape.len())));
    }
    aug.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DescriptorNet::new(&config.widths, &mut rng)?;
    let mut opt = Adam::new(net.params(), AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let edges = EdgeIndex::from_graph(graph);
    let x0 = coordinates(shape);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let params = aug.sample(shape, &mut rng);
        let deformed = augment(shape, &params, rng.gen())?;
        let mut tape = Tape::new();
        let bound = tape.bind(net.params());
        let x = tape.constant(&x0);
        let y = tape.constant(&coordinates(&deformed));
        let hx = net.forward(&mut tape, &bound, x, &edges)?;
        let hy = net.forward(&mut tape, &bound, y, &edges)?;
        let p = cosine_vars(&mut tape, hx, hy)?;
        let loss = identity_loss_var(&mut tape, p)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(InitiatorError::Divergence { epoch, loss: value });
        }
        history.push(value);
        tape.backward(loss)?;
        net.params_mut().accumulate(&tape, &bound)?;
        opt.step(net.params_mut()).map_err(|e| match e {
            NumError::NonFinite(_) => InitiatorError::Divergence { epoch, loss: value },
            other => other.into(),
        })?;
        if epoch % 50 == 0 || epoch + 1 == config.epochs {
            log::debug!("initiator epoch {epoch}: loss {value:.4}");
        }
    }
    Ok(TrainedInitiator { net, loss_history: history })
}

/// Cosine correspondence between the descriptors of two shapes.
pub fn infer_initial(
    x: &Shape,
    graph_x: &GeoGraph,
    y: &Shape,
    graph_y: &GeoGraph,
    net: &DescriptorNet,
) -> Result<CosineMatrix, InitiatorError> {
    let hx = descriptors(x, graph_x, net)?;
    let hy = descriptors(y, graph_y, net)?;
    cosine_matrix(&hx, &hy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Edge;

    fn path_shape() -> (Shape, GeoGraph) {
        let s = Shape::point_cloud(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let e = |i, j| Edge { i, j, weight: 1.0, length: 1.0 };
        (s, GeoGraph::from_edges(3, &[e(0, 1), e(1, 2)]).unwrap())
    }

    #[test]
    fn zero_net_gives_zero_descriptors() {
        let (s, g) = path_shape();
        let net = DescriptorNet::zeros(&DEFAULT_WIDTHS).unwrap();
        let h = descriptors(&s, &g, &net).unwrap();
        assert_eq!(h.shape(), &[3, 64]);
        assert!(h.data().iter().all(|&v| v == 0.0));
        let c = cosine_matrix(&h, &h).unwrap();
        assert!(c.degenerate());
        assert_eq!(c.zero_rows_x, vec![0, 1, 2]);
    }

    #[test]
    fn difference_block_aggregation() {
        let (s, g) = path_shape();
        let mut net = DescriptorNet::zeros(&[3, 3]).unwrap();
        let (a, b) = net.layers()[0];
        // first linear selects the f_j − f_i block, second is the identity
        let mut w = vec![0.0; 6 * 3];
        for k in 0..3 {
            w[(3 + k) * 3 + k] = 1.0;
        }
        net.params_mut().set(a.weight, w).unwrap();
        net.params_mut().set(b.weight, Tensor::identity(3).into_data()).unwrap();
        let h = descriptors(&s, &g, &net).unwrap();
        assert_eq!(h.row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(h.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(h.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn cosine_examples() {
        let h = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(cosine_matrix(&h, &h).unwrap().p, SoftCorrespondence::identity(2).unwrap());
        let y = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let c = cosine_matrix(&h, &y).unwrap().p;
        assert!((c.at(0, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let scaled = Tensor::from_rows(&[vec![5.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(cosine_matrix(&scaled, &y).unwrap().p, cosine_matrix(&h, &y).unwrap().p);
        let bad = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(cosine_matrix(&h, &bad).is_err());
    }

    #[test]
    fn identity_loss_examples() {
        assert_eq!(identity_loss(&SoftCorrespondence::identity(3).unwrap()).unwrap(), 0.0);
        assert_eq!(identity_loss(&SoftCorrespondence::new(3, 3, vec![0.0; 9]).unwrap()).unwrap(), 3.0);
        let mut d = SoftCorrespondence::identity(3).unwrap().data().to_vec();
        d[1] = 0.5;
        assert_eq!(identity_loss(&SoftCorrespondence::new(3, 3, d).unwrap()).unwrap(), 0.25);
        assert!(identity_loss(&SoftCorrespondence::new(2, 3, vec![0.0; 6]).unwrap()).is_err());
    }

    #[test]
    fn zero_epochs_rejected() {
        let (s, g) = path_shape();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(
            train_initiator(&s, &g, &AugmentConfig::default(), &cfg, 1),
            Err(InitiatorError::Precondition(_))
        ));
    }

    #[test]
    fn dnet_round_trip_rebuilds_net() {
        let net = DescriptorNet::new(&[3, 8, 4], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let back = DescriptorNet::from_params(ParamStore::from_dnet(&net.params().to_dnet()).unwrap()).unwrap();
        assert_eq!(back.widths(), &[3, 8, 4]);
        assert_eq!(back.params().to_dnet(), net.params().to_dnet());
    }
}
