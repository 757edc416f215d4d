use std::collections::HashMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, AugmentConfig, AugmentParams};
use super::shape::{Face, Point, Shape};
use super::GeometryError;

/// Unit icosphere: an icosahedron subdivided `subdivisions` times, vertices
/// projected onto the sphere. Subdivision `s` yields `10·4ˢ + 2` vertices.
pub fn icosphere(subdivisions: u32) -> Result<Shape, GeometryError> {
    if subdivisions > 6 {
        return Err(GeometryError::OutOfRange(format!("icosphere subdivisions {subdivisions} > 6")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(unit)
    .collect();
    let mut faces: Vec<Face> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(unit(&[(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let shape = Shape::new(vertices, Some(faces))?;
    let (v, e, f) = euler_counts(&shape);
    if v + f != e + 2 {
        return Err(GeometryError::Precondition(format!("icosphere Euler check failed: V={v} E={e} F={f}")));
    }
    Ok(shape)
}

/// `(V, E, F)` of a triangle mesh; `E` counts distinct undirected sides.
pub fn euler_counts(shape: &Shape) -> (usize, usize, usize) {
    let faces = shape.faces().unwrap_or(&[]);
    let mut edges = std::collections::HashSet::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    (shape.len(), edges.len(), faces.len())
}

/// Open cylinder of radius `radius` along `z ∈ [0, length]`, `rings` vertex
/// rings of `segments` vertices each.
pub fn cylinder(rings: usize, segments: usize, radius: f64, length: f64) -> Result<Shape, GeometryError> {
    if rings < 2 || segments < 3 {
        return Err(GeometryError::OutOfRange(format!("cylinder needs rings ≥ 2, segments ≥ 3 (got {rings}, {segments})")));
    }
    if !(radius > 0.0 && length > 0.0 && radius.is_finite() && length.is_finite()) {
        return Err(GeometryError::Precondition("cylinder radius and length must be positive".into()));
    }
    let mut vertices = Vec::with_capacity(rings * segments);
    for r in 0..rings {
        let z = length * r as f64 / (rings - 1) as f64;
        for s in 0..segments {
            let th = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push([radius * th.cos(), radius * th.sin(), z]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (rings - 1) * segments);
    for r in 0..rings - 1 {
        for s in 0..segments {
            let a = r * segments + s;
            let b = r * segments + (s + 1) % segments;
            let (c, d) = (a + segments, b + segments);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    Shape::new(vertices, Some(faces))
}

/// Bends a shape about the y-axis so that its z-extent `[0, length]` follows an
/// arc of total angle `angle` radians. Arc length along the axis is preserved;
/// vertex order is kept, so the ground-truth map is the identity.
pub fn bend(shape: &Shape, length: f64, angle: f64) -> Result<Shape, GeometryError> {
    if !angle.is_finite() || !(length > 0.0) {
        return Err(GeometryError::Precondition("bend needs finite angle and positive length".into()));
    }
    if angle == 0.0 {
        return Ok(shape.clone());
    }
    let r = length / angle;
    let vertices = shape
        .vertices()
        .iter()
        .map(|&[x, y, z]| {
            let phi = z / r;
            [r - (r - x) * phi.cos(), y, (r - x) * phi.sin()]
        })
        .collect();
    shape.with_vertices(vertices)
}

/// Straight cylinder and its bent copy.
pub fn bent_cylinder_pair(angle: f64) -> Result<(Shape, Shape), GeometryError> {
    const LENGTH: f64 = 4.0;
    let straight = cylinder(17, 12, 0.5, LENGTH)?;
    let bent = bend(&straight, LENGTH, angle)?;
    Ok((straight, bent))
}

/// Deformation of the standard synthetic pair: bounded random rotation and
/// 0.5 % jitter, no scaling.
pub fn standard_noise() -> AugmentConfig {
    AugmentConfig { scale_range: (1.0, 1.0), ..AugmentConfig::default() }
}

/// The shape and a randomly deformed copy; the sampled parameters are returned
/// for the record. Ground truth is the identity map.
pub fn noisy_copy(shape: &Shape, config: &AugmentConfig, seed: u64) -> Result<(Shape, AugmentParams), GeometryError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = config.sample(shape, &mut rng);
    let copy = augment(shape, &params, seed.wrapping_add(1))?;
    Ok((copy, params))
}

fn unit(p: &Point) -> Point {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}
