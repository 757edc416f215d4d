use super::shape::{distance, Point};
use super::GeometryError;

/// Greedy farthest-point sampling.
///
/// Starts at `start`; each further pick is the unselected point maximizing the
/// minimum Euclidean distance to the selection, lowest index on ties.
pub fn fps(points: &[Point], k: usize, start: usize) -> Result<Vec<usize>, GeometryError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(GeometryError::OutOfRange(format!("fps k = {k} must be in [1, {n}]")));
    }
    if start >= n {
        return Err(GeometryError::Index(format!("fps start {start} >= {n}")));
    }
    let mut selected = vec![false; n];
    let mut min_dist: Vec<f64> = points.iter().map(|p| distance(p, &points[start])).collect();
    selected[start] = true;
    let mut out = Vec::with_capacity(k);
    out.push(start);
    while out.len() < k {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            match best {
                Some(b) if min_dist[i] <= min_dist[b] => {}
                _ => best = Some(i),
            }
        }
        let b = best.expect("k <= n leaves an unselected point");
        selected[b] = true;
        out.push(b);
        for i in 0..n {
            let d = distance(&points[i], &points[b]);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    Ok(out)
}
