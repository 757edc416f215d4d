use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::shape::{distance, Shape};
use super::GeometryError;
use crate::numcore::Tensor;

/// Undirected graph over shape vertices with per-edge weights and Euclidean lengths.
///
/// Neighbor lists are sorted by vertex index.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoGraph {
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
    lengths: Vec<Vec<f64>>,
}

/// One undirected edge, reported once with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub length: f64,
}

impl GeoGraph {
    /// Builds a symmetric graph from undirected edges; duplicates keep the first occurrence.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self, GeometryError> {
        let mut adj: Vec<BTreeMap<usize, (f64, f64)>> = vec![BTreeMap::new(); n];
        for e in edges {
            if e.i >= n || e.j >= n {
                return Err(GeometryError::Index(format!("edge ({}, {}) in graph of {n} nodes", e.i, e.j)));
            }
            if e.i == e.j {
                return Err(GeometryError::Precondition(format!("self-loop at node {}", e.i)));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite() && e.length >= 0.0 && e.length.is_finite()) {
                return Err(GeometryError::Precondition(format!("edge ({}, {}) has invalid weight/length", e.i, e.j)));
            }
            adj[e.i].entry(e.j).or_insert((e.weight, e.length));
            adj[e.j].entry(e.i).or_insert((e.weight, e.length));
        }
        let mut g = GeoGraph { neighbors: Vec::with_capacity(n), weights: Vec::with_capacity(n), lengths: Vec::with_capacity(n) };
        for m in adj {
            g.neighbors.push(m.keys().copied().collect());
            g.weights.push(m.values().map(|v| v.0).collect());
            g.lengths.push(m.values().map(|v| v.1).collect());
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn lengths(&self, i: usize) -> &[f64] {
        &self.lengths[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.len() {
            for (k, &j) in self.neighbors[i].iter().enumerate() {
                if i < j {
                    out.push(Edge { i, j, weight: self.weights[i][k], length: self.lengths[i][k] });
                }
            }
        }
        out
    }

    /// Component id per node (ids in order of first appearance) and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = count;
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// Dense `L = D − A` with the edge weights.
    pub fn laplacian(&self) -> Tensor {
        let n = self.len();
        let mut l = Tensor::zeros(&[n, n]);
        let d = l.data_mut();
        for i in 0..n {
            for (k, &j) in self.neighbors[i].iter().enumerate() {
                let w = self.weights[i][k];
                d[i * n + j] -= w;
                d[i * n + i] += w;
            }
        }
        l
    }

    /// Dijkstra shortest-path lengths along edge lengths; unreachable nodes get `+∞`.
    pub fn geodesic_distances(&self, source: usize) -> Result<Vec<f64>, GeometryError> {
        let n = self.len();
        if source >= n {
            return Err(GeometryError::Index(format!("source {source} >= {n} nodes")));
        }
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem { dist: 0.0, node: source });
        while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (k, &v) in self.neighbors[u].iter().enumerate() {
                let nd = d + self.lengths[u][k];
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem { dist: nd, node: v });
                }
            }
        }
        Ok(dist)
    }
}

#[derive(Debug, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One unit-weight edge per distinct triangle side.
pub fn mesh_graph(shape: &Shape) -> Result<GeoGraph, GeometryError> {
    let faces = shape
        .faces()
        .ok_or_else(|| GeometryError::Precondition("mesh graph needs faces".into()))?;
    let v = shape.vertices();
    let mut edges = Vec::with_capacity(faces.len() * 3);
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            edges.push(Edge { i, j, weight: 1.0, length: distance(&v[i], &v[j]) });
        }
    }
    GeoGraph::from_edges(shape.len(), &edges)
}

/// Directed k-nearest-neighbor graph (ties by lower index), symmetrized by union.
pub fn knn_graph(shape: &Shape, k: usize) -> Result<GeoGraph, GeometryError> {
    let n = shape.len();
    if k == 0 || k >= n {
        return Err(GeometryError::OutOfRange(format!("k = {k} must be in [1, {n})")));
    }
    let v = shape.vertices();
    let mut edges = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (distance(&v[i], &v[j]), j)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in &cand[..k] {
            edges.push(Edge { i: i.min(j), j: i.max(j), weight: 1.0, length: d });
        }
    }
    GeoGraph::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Shape {
        Shape::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            Some(vec![[0, 1, 2], [0, 2, 3]]),
        )
        .unwrap()
    }

    pub(crate) fn path3() -> GeoGraph {
        let e = |i, j| Edge { i, j, weight: 1.0, length: 1.0 };
        GeoGraph::from_edges(3, &[e(0, 1), e(1, 2)]).unwrap()
    }

    #[test]
    fn mesh_edge_counts() {
        assert_eq!(mesh_graph(&square()).unwrap().edge_count(), 5);
        let tri = Shape::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], Some(vec![[0, 1, 2]])).unwrap();
        let g = mesh_graph(&tri).unwrap();
        assert!((0..3).all(|i| g.degree(i) == 2));
        let tet = Shape::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            Some(vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]),
        )
        .unwrap();
        let g = mesh_graph(&tet).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!((0..4).all(|i| g.degree(i) == 3));
    }

    #[test]
    fn mesh_graph_needs_faces() {
        let pc = Shape::point_cloud(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(mesh_graph(&pc), Err(GeometryError::Precondition(_))));
    }

    #[test]
    fn knn_collinear() {
        let pc = Shape::point_cloud(vec![[0.0; 3], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let g = knn_graph(&pc, 1).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        let full = knn_graph(&pc, 2).unwrap();
        assert_eq!(full.edge_count(), 3);
        assert!(knn_graph(&pc, 3).is_err());
        assert!(knn_graph(&pc, 0).is_err());
    }

    #[test]
    fn knn_duplicates_break_ties_by_index() {
        // points 1 and 2 coincide; node 0 is equidistant to both and must pick 1.
        let pc = Shape::point_cloud(vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]]).unwrap();
        let g = knn_graph(&pc, 1).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j)).collect();
        // 0→1, 1→2 (distance 0), 2→1, 3→1
        assert_eq!(pairs, vec![(0, 1), (1, 2), (1, 3)]);
        assert!((0..4).all(|i| !g.neighbors(i).contains(&i)));
    }

    #[test]
    fn path_laplacian() {
        let l = path3().laplacian();
        assert_eq!(l.data(), &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let single = GeoGraph::from_edges(1, &[]).unwrap();
        assert_eq!(single.laplacian().data(), &[0.0]);
    }

    #[test]
    fn dijkstra_small_cases() {
        assert_eq!(path3().geodesic_distances(0).unwrap(), vec![0.0, 1.0, 2.0]);
        let e = |i, j| Edge { i, j, weight: 1.0, length: 1.0 };
        let cycle = GeoGraph::from_edges(4, &[e(0, 1), e(1, 2), e(2, 3), e(0, 3)]).unwrap();
        assert_eq!(cycle.geodesic_distances(0).unwrap()[2], 2.0);
        assert!(path3().geodesic_distances(3).is_err());
        let split = GeoGraph::from_edges(3, &[e(0, 1)]).unwrap();
        assert_eq!(split.geodesic_distances(0).unwrap()[2], f64::INFINITY);
        assert_eq!(split.components().1, 2);
    }

    #[test]
    fn rejects_self_loop() {
        let e = Edge { i: 1, j: 1, weight: 1.0, length: 1.0 };
        assert!(GeoGraph::from_edges(2, &[e]).is_err());
    }
}
