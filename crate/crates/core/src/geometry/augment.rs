use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::shape::{Point, Shape};
use super::GeometryError;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// A linear deformation plus per-vertex Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation: Mat3,
    pub scale: [f64; 3],
    pub translation: [f64; 3],
    /// Absolute standard deviation of the per-coordinate jitter.
    pub jitter: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams { rotation: IDENTITY3, scale: [1.0; 3], translation: [0.0; 3], jitter: 0.0 }
    }
}

/// How rotations are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationSampling {
    /// Haar-uniform over SO(3).
    Uniform,
    /// Uniform random axis, angle uniform in `[0, max_angle]` radians.
    Bounded { max_angle: f64 },
}

/// Distribution from which [`AugmentParams`] are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub rotation: RotationSampling,
    /// Per-axis scale factors are drawn uniformly from this range.
    pub scale_range: (f64, f64),
    /// Per-axis translation drawn uniformly from `[-t, t]`.
    pub translation: f64,
    /// Jitter standard deviation as a fraction of the bounding-box diagonal.
    pub jitter_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation: RotationSampling::Bounded { max_angle: DEFAULT_MAX_ROTATION },
            scale_range: (0.8, 1.25),
            translation: 0.0,
            jitter_fraction: 0.005,
        }
    }
}

/// Default bound on training rotations, in radians.
///
/// Coordinates are the only descriptor input, so rotations much larger than
/// this leave nearly symmetric shapes (spheres) without a recoverable map.
pub const DEFAULT_MAX_ROTATION: f64 = 0.5;

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(GeometryError::Precondition(format!("scale range ({lo}, {hi}) must be positive")));
        }
        if !(self.jitter_fraction >= 0.0 && self.jitter_fraction.is_finite()) {
            return Err(GeometryError::Precondition("jitter fraction must be non-negative".into()));
        }
        if !(self.translation >= 0.0 && self.translation.is_finite()) {
            return Err(GeometryError::Precondition("translation bound must be non-negative".into()));
        }
        if let RotationSampling::Bounded { max_angle } = self.rotation {
            if !(max_angle >= 0.0 && max_angle.is_finite()) {
                return Err(GeometryError::Precondition("rotation bound must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Draws parameters for `shape`; jitter scales with its bounding-box diagonal.
    pub fn sample<R: Rng>(&self, shape: &Shape, rng: &mut R) -> AugmentParams {
        let rotation = match self.rotation {
            RotationSampling::Uniform => {
                let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                quaternion_to_matrix(q)
            }
            RotationSampling::Bounded { max_angle } => {
                let axis: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let angle = if max_angle > 0.0 { rng.gen_range(0.0..=max_angle) } else { 0.0 };
                axis_angle(axis, angle)
            }
        };
        let (lo, hi) = self.scale_range;
        let scale = std::array::from_fn(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo });
        let t = self.translation;
        let translation = std::array::from_fn(|_| if t > 0.0 { rng.gen_range(-t..=t) } else { 0.0 });
        AugmentParams { rotation, scale, translation, jitter: self.jitter_fraction * shape.bbox_diagonal() }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return Err(GeometryError::Precondition("rotation is not orthonormal".into()));
                }
            }
        }
        if det3(r) < 0.0 {
            return Err(GeometryError::Precondition("rotation has negative determinant".into()));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(GeometryError::Precondition("scale factors must be positive".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) || self.translation.iter().any(|t| !t.is_finite()) {
            return Err(GeometryError::Precondition("jitter/translation must be finite, jitter ≥ 0".into()));
        }
        Ok(())
    }

    /// `R·(S·v) + t` without jitter.
    pub fn apply_linear(&self, v: &Point) -> Point {
        let s = [v[0] * self.scale[0], v[1] * self.scale[1], v[2] * self.scale[2]];
        let r = &self.rotation;
        std::array::from_fn(|i| r[i][0] * s[0] + r[i][1] * s[1] + r[i][2] * s[2] + self.translation[i])
    }

    /// Inverse of [`AugmentParams::apply_linear`].
    pub fn invert_linear(&self, v: &Point) -> Point {
        let d = [v[0] - self.translation[0], v[1] - self.translation[1], v[2] - self.translation[2]];
        let r = &self.rotation;
        std::array::from_fn(|i| (r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2]) / self.scale[i])
    }
}

/// Transforms every vertex; faces and vertex order are kept, so the ground-truth
/// map between input and output is the identity.
pub fn augment(shape: &Shape, params: &AugmentParams, seed: u64) -> Result<Shape, GeometryError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = shape
        .vertices()
        .iter()
        .map(|v| {
            let mut p = params.apply_linear(v);
            if params.jitter > 0.0 {
                for c in &mut p {
                    let z: f64 = rng.sample(StandardNormal);
                    *c += params.jitter * z;
                }
            }
            p
        })
        .collect();
    shape.with_vertices(vertices)
}

fn quaternion_to_matrix(q: [f64; 4]) -> Mat3 {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-300 {
        return IDENTITY3;
    }
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Rotation by `angle` radians about `axis` (need not be normalized).
pub fn axis_angle(axis: [f64; 3], angle: f64) -> Mat3 {
    let n = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-300 || angle == 0.0 {
        return IDENTITY3;
    }
    let (s, c) = (angle / 2.0).sin_cos();
    quaternion_to_matrix([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
}

fn det3(r: &Mat3) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}
