//! Random small instances and finite-difference checks shared by the gradient
//! tests and the acceptance suite.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softcorr::correspondence::{Anchor, AnchorSet, FusionMode, SoftCorrespondence};
use softcorr::dgat::{Dg2nBlock, DgatConfig, DgatLayer, NeighborTable};
use softcorr::geometry::{Edge, GeoGraph, Point, Shape};
use softcorr::initiator::{cosine_vars, identity_loss_var, DescriptorNet, EdgeIndex};
use softcorr::losses::{
    anchor_var, denoise_var, laplacian_trace_var, laplacian_var, sparsity_var, total_loss_var, LossContext, LossWeights,
};
use softcorr::numcore::{grad_check, NumError, ParamStore, Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-6;

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Connected random graph: a random spanning tree plus extra edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> GeoGraph {
    let mut edges = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for t in 1..n {
        let parent = order[rng.gen_range(0..t)];
        edges.push(Edge { i: order[t], j: parent, weight: rng.gen_range(0.5..2.0), length: rng.gen_range(0.1..1.0) });
    }
    for _ in 0..n {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j && !edges.iter().any(|e| (e.i, e.j) == (i, j) || (e.i, e.j) == (j, i)) {
            edges.push(Edge { i, j, weight: rng.gen_range(0.5..2.0), length: rng.gen_range(0.1..1.0) });
        }
    }
    GeoGraph::from_edges(n, &edges).unwrap()
}

pub fn random_anchors(rng: &mut ChaCha8Rng, n: usize, m: usize) -> AnchorSet {
    let mut sources: Vec<usize> = (0..n).collect();
    sources.shuffle(rng);
    let k = rng.gen_range(1..=n.min(4));
    AnchorSet(sources[..k].iter().map(|&s| Anchor { source: s, label: rng.gen_range(0..m), confidence: rng.gen_range(0.0..1.0) }).collect())
}

/// Projects a matrix-valued function to a scalar with fixed random weights.
fn contract(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var, NumError> {
    let w = tape.constant(weights);
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        store.set(id, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    }
}

/// Gradient w.r.t. every parameter tensor of `store`, substituted one at a time.
fn check_params<F>(store: &ParamStore, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumError>,
{
    let mut worst: f64 = 0.0;
    for (idx, id) in store.ids().enumerate() {
        let err = grad_check(
            |tape, v| {
                let mut bound = tape.bind(store);
                bound[idx] = v;
                f(tape, &bound)
            },
            store.get(id),
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

/// Worst central-difference relative error per differentiable function over
/// `instances` random small problems.
pub fn gradient_report(instances: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(w) => w.1 = w.1.max(err),
        None => worst.push((name, err)),
    };
    for case in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let n = rng.gen_range(3..7);
        let m = rng.gen_range(3..7);
        let gx = random_graph(&mut rng, n);
        let gy = random_graph(&mut rng, m);
        let p = uniform(&mut rng, &[n, m]);
        let prev = uniform(&mut rng, &[n, m]);
        let ax = random_anchors(&mut rng, n, m);
        let ay = random_anchors(&mut rng, m, n);
        let lx = gx.laplacian();

        record("laplacian", grad_check(|t, v| laplacian_var(t, v, &gx, 1.3), &p, FD_STEP).unwrap());
        record("laplacian_trace", grad_check(|t, v| laplacian_trace_var(t, v, &lx, 1.3), &p, FD_STEP).unwrap());
        record("sparsity", grad_check(|t, v| sparsity_var(t, v, 0.7), &p, FD_STEP).unwrap());
        record(
            "anchor",
            grad_check(|t, v| anchor_var(t, v, &ax, 1.1).map_err(|e| NumError::Dimension(e.to_string())), &p, FD_STEP).unwrap(),
        );
        record(
            "denoise",
            grad_check(
                |t, v| {
                    let c = t.constant(&prev);
                    denoise_var(t, v, c, 2.5)
                },
                &p,
                FD_STEP,
            )
            .unwrap(),
        );
        let prev_corr = SoftCorrespondence::from_tensor(&prev).unwrap();
        let ctx = LossContext {
            p_prev: &prev_corr,
            source_graph: &gx,
            target_graph: &gy,
            anchors_primal: &ax,
            anchors_dual: &ay,
            weights: LossWeights::default(),
        };
        record(
            "total_loss",
            grad_check(|t, v| total_loss_var(t, v, &ctx).map(|r| r.0).map_err(|e| NumError::Dimension(e.to_string())), &p, FD_STEP)
                .unwrap(),
        );

        // one DGAT layer with every parameter randomized, including the zero-initialized output
        let k = rng.gen_range(1..n);
        let cfg = DgatConfig { k, layers: 1, hidden1: Some(rng.gen_range(2..5)), hidden2: rng.gen_range(1..4), ..DgatConfig::default() };
        let table = NeighborTable::new(&gx, k).unwrap();
        let mut store = ParamStore::new();
        let layer = DgatLayer::new(&mut store, "l", m, &cfg, &mut rng).unwrap();
        randomize(&mut store, &mut rng);
        let r = uniform(&mut rng, &[n, m]);
        record(
            "dgat_input",
            grad_check(
                |t, v| {
                    let bound = t.bind(&store);
                    let out = layer.forward(t, &bound, v, &table)?;
                    contract(t, out, &r)
                },
                &p,
                FD_STEP,
            )
            .unwrap(),
        );
        record(
            "dgat_params",
            check_params(&store, |t, bound| {
                let x = t.constant(&p);
                let out = layer.forward(t, bound, x, &table)?;
                contract(t, out, &r)
            }),
        );

        // dual-graph block, both fusion modes
        let kd = rng.gen_range(1..m);
        for fusion in [FusionMode::Mean, FusionMode::Max] {
            let cfg = DgatConfig { k: kd.min(k), layers: 2, hidden1: Some(3), hidden2: 2, fusion, ..DgatConfig::default() };
            let primal = NeighborTable::new(&gx, cfg.k).unwrap();
            let dual = NeighborTable::new(&gy, cfg.k).unwrap();
            let mut block = Dg2nBlock::new(n, m, &cfg, &mut rng).unwrap();
            randomize(&mut block.store, &mut rng);
            let name = if fusion == FusionMode::Mean { "dg2n_mean" } else { "dg2n_max" };
            record(
                name,
                grad_check(
                    |t, v| {
                        let bound = t.bind(&block.store);
                        let out = block.forward(t, &bound, v, &primal, &dual)?;
                        contract(t, out, &r)
                    },
                    &p,
                    FD_STEP,
                )
                .unwrap(),
            );
        }

        // descriptor net on a random point set, then cosine matrix and identity loss
        let widths = [3, rng.gen_range(2..5), rng.gen_range(2..5)];
        let net = DescriptorNet::new(&widths, &mut rng).unwrap();
        let edges = EdgeIndex::from_graph(&gx);
        let coords = uniform(&mut rng, &[n, 3]);
        let rd = uniform(&mut rng, &[n, widths[2]]);
        record(
            "descriptor_input",
            grad_check(
                |t, v| {
                    let bound = t.bind(net.params());
                    let out = net.forward(t, &bound, v, &edges)?;
                    contract(t, out, &rd)
                },
                &coords,
                FD_STEP,
            )
            .unwrap(),
        );
        record(
            "descriptor_params",
            check_params(net.params(), |t, bound| {
                let x = t.constant(&coords);
                let out = net.forward(t, bound, x, &edges)?;
                contract(t, out, &rd)
            }),
        );
        let hy = uniform(&mut rng, &[n, widths[2]]);
        let hx = uniform(&mut rng, &[n, widths[2]]);
        record(
            "cosine_identity",
            grad_check(
                |t, v| {
                    let y = t.constant(&hy);
                    let c = cosine_vars(t, v, y)?;
                    identity_loss_var(t, c)
                },
                &hx,
                FD_STEP,
            )
            .unwrap(),
        );
    }
    worst
}

/// Unit-scale point cloud wrapper used by scale tests.
pub fn scaled(shape: &Shape, s: f64) -> Shape {
    shape.with_vertices(shape.vertices().iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect()).unwrap()
}

fn dist(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// O(kN²) farthest-point oracle: recomputes every min-distance from scratch.
pub fn fps_oracle(points: &[Point], k: usize, start: usize) -> Vec<usize> {
    let mut sel = vec![start];
    while sel.len() < k {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..points.len() {
            if sel.contains(&i) {
                continue;
            }
            let d = sel.iter().map(|&s| dist(&points[i], &points[s])).fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = Some(i);
            }
        }
        sel.push(best.unwrap());
    }
    sel
}

pub fn floyd_warshall(n: usize, edges: &[Edge]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    // duplicates keep the first occurrence, matching GeoGraph::from_edges
    let mut seen = std::collections::HashSet::new();
    for e in edges {
        if seen.insert((e.i, e.j)) {
            d[e.i][e.j] = e.length;
            d[e.j][e.i] = e.length;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}
