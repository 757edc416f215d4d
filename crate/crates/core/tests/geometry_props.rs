mod common;

use common::{floyd_warshall, fps_oracle};
use proptest::prelude::*;
use softcorr::geometry::{augment, fps, AugmentParams, Edge, GeoGraph, Point, Shape, ShapeFormat};

fn graph_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<Edge>)> {
    (2..=max_n).prop_flat_map(|n| {
        let edge = (0..n, 0..n, 0.05f64..2.0, 0.05f64..3.0);
        prop::collection::vec(edge, 0..(n * 3)).prop_map(move |raw| {
            let edges = raw
                .into_iter()
                .filter(|(i, j, _, _)| i != j)
                .map(|(i, j, weight, length)| Edge { i: i.min(j), j: i.max(j), weight, length })
                .collect();
            (n, edges)
        })
    })
}

/// Mixes a coarse integer lattice (lots of exact ties) with continuous coordinates.
fn points_strategy(max_n: usize) -> impl Strategy<Value = Vec<Point>> {
    let coarse = prop::collection::vec((0i32..4, 0i32..4, 0i32..2), 1..=max_n)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| [x as f64, y as f64, z as f64]).collect::<Vec<Point>>());
    let fine = prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..=max_n)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| [x, y, z]).collect::<Vec<Point>>());
    prop_oneof![coarse, fine]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn laplacian_is_psd_and_matches_edge_sum((n, edges) in graph_strategy(20), seed in prop::collection::vec(-3.0f64..3.0, 20)) {
        let g = GeoGraph::from_edges(n, &edges).unwrap();
        let l = g.laplacian();
        let x = &seed[..n];
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += x[i] * l.at(i, j) * x[j];
            }
        }
        let edge_sum: f64 = g.edges().iter().map(|e| e.weight * (x[e.i] - x[e.j]).powi(2)).sum();
        prop_assert!(quad >= -1e-12);
        prop_assert!((quad - edge_sum).abs() <= 1e-9);
        for i in 0..n {
            let row: f64 = (0..n).map(|j| l.at(i, j)).sum();
            prop_assert!(row.abs() <= 1e-12);
            for j in 0..n {
                prop_assert_eq!(l.at(i, j), l.at(j, i));
            }
        }
    }

    #[test]
    fn graph_is_symmetric_without_self_loops((n, edges) in graph_strategy(20)) {
        let g = GeoGraph::from_edges(n, &edges).unwrap();
        for i in 0..n {
            for &j in g.neighbors(i) {
                prop_assert!(j != i);
                prop_assert!(g.neighbors(j).contains(&i));
            }
        }
        prop_assert!(g.components().1 >= 1);
    }

    #[test]
    fn dijkstra_matches_floyd_warshall((n, edges) in graph_strategy(30)) {
        let g = GeoGraph::from_edges(n, &edges).unwrap();
        let fw = floyd_warshall(n, &edges);
        for s in 0..n {
            let d = g.geodesic_distances(s).unwrap();
            prop_assert_eq!(d[s], 0.0);
            for t in 0..n {
                if fw[s][t].is_infinite() {
                    prop_assert!(d[t].is_infinite());
                } else {
                    prop_assert!((d[t] - fw[s][t]).abs() <= 1e-12, "{} vs {}", d[t], fw[s][t]);
                }
            }
        }
    }

    #[test]
    fn fps_matches_brute_force(points in points_strategy(50), k_frac in 0.0f64..1.0, s_frac in 0.0f64..1.0) {
        let n = points.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let start = ((n as f64 * s_frac) as usize).min(n - 1);
        prop_assert_eq!(fps(&points, k, start).unwrap(), fps_oracle(&points, k, start));
    }

    #[test]
    fn augment_inverse_recovers_vertices(
        points in points_strategy(30),
        axis in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        angle in 0.0f64..6.3,
        scale in (0.8f64..1.25, 0.8f64..1.25, 0.8f64..1.25),
        t in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
    ) {
        let shape = Shape::point_cloud(points).unwrap();
        let params = AugmentParams {
            rotation: softcorr::geometry::axis_angle([axis.0, axis.1, axis.2], angle),
            scale: [scale.0, scale.1, scale.2],
            translation: [t.0, t.1, t.2],
            jitter: 0.0,
        };
        let out = augment(&shape, &params, 1).unwrap();
        for (orig, moved) in shape.vertices().iter().zip(out.vertices()) {
            let back = params.invert_linear(moved);
            for c in 0..3 {
                prop_assert!((back[c] - orig[c]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn off_round_trip_is_exact(points in points_strategy(20)) {
        let shape = Shape::point_cloud(points).unwrap();
        let back = Shape::parse(&shape.to_off(), ShapeFormat::Off).unwrap();
        prop_assert_eq!(back.vertices(), shape.vertices());
    }
}
