//! Synthetic stratified spaces with exact distances to their singular locus.
//!
//! Every generator samples uniformly by area (or volume) on each stratum,
//! records the distance from the noiseless point to the singular locus, and
//! only then adds uniform noise in `[-a, a]` to every coordinate.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, PointCloud};

pub const DEFAULT_NOISE: f64 = 0.01;
/// Distance between the two sphere centres in [`Shape::TwoSpheres`].
pub const TWO_SPHERES_OFFSET: f64 = 1.0;
/// Half-height of the double cone. Small enough that a 2000-point sample
/// reaches within 0.05 of the apex with high probability.
pub const CONE_HEIGHT: f64 = 0.5;
const PINCH_MAJOR: f64 = 1.0;
const PINCH_TUBE: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Unit circle in `R^2`.
    Circle,
    /// Unit d-sphere in `R^(d+1)`.
    Sphere(usize),
    /// Two unit circles with centres one apart; same as `TwoSpheres(1)`.
    TwoCircles,
    /// Two unit d-spheres in `R^(d+1)` with centres `(+-1/2, 0, ...)`.
    TwoSpheres(usize),
    /// Filled unit d-ball in `R^d`; the boundary sphere is singular.
    SolidBall(usize),
    /// Two unit 2d-disks in `R^(3d)` spanning axes `0..2d` and `d..3d`.
    TwoDisks(usize),
    /// Double cone `|z| = sqrt(x^2 + y^2)`, `|z| <= CONE_HEIGHT`, apex
    /// singular.
    Cone,
    /// Torus whose tube radius shrinks to zero at one point.
    PinchTorus,
    /// Ellipsoid with the given semi-axes in `R^3`.
    Ellipsoid([f64; 3]),
    /// Ring torus in `R^3` with major and minor radius.
    Torus { major: f64, minor: f64 },
    /// Flat torus `S^1(1) x S^1(radius)` in `R^4`.
    SphereProduct { radius: f64 },
    /// Surface of the cube `[-1,1]^3`; edges are singular.
    HollowCube,
    /// Unit disks in the three coordinate planes of `R^3`.
    ThreeDisks,
}

impl Shape {
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Shape::Circle | Shape::TwoCircles => 2,
            Shape::Sphere(d) | Shape::TwoSpheres(d) => d + 1,
            Shape::SolidBall(d) => d,
            Shape::TwoDisks(d) => 3 * d,
            Shape::Cone | Shape::PinchTorus | Shape::Ellipsoid(_) | Shape::Torus { .. } => 3,
            Shape::SphereProduct { .. } => 4,
            Shape::HollowCube | Shape::ThreeDisks => 3,
        }
    }

    /// True when the shape has no singular points.
    pub fn is_manifold(&self) -> bool {
        matches!(
            self,
            Shape::Circle
                | Shape::Sphere(_)
                | Shape::Ellipsoid(_)
                | Shape::Torus { .. }
                | Shape::SphereProduct { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Sphere(d) | Shape::TwoSpheres(d) | Shape::SolidBall(d) | Shape::TwoDisks(d) => d >= 1,
            Shape::Ellipsoid(a) => a.iter().all(|v| *v > 0.0),
            Shape::Torus { major, minor } => minor > 0.0 && major > minor,
            Shape::SphereProduct { radius } => radius > 0.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid shape parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub n: usize,
    pub noise_amplitude: f64,
    pub seed: u64,
}

/// A sampled cloud with the exact distance of each noiseless sample to the
/// singular locus (`+inf` when there is none).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub dist_to_singular: Vec<f64>,
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn ball_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let r = rng.random::<f64>().powf(1.0 / dim as f64);
    unit_vector(rng, dim).into_iter().map(|x| x * r).collect()
}

/// Centre-offset and radius of the intersection sphere of two unit spheres
/// whose centres lie `TWO_SPHERES_OFFSET` apart along the first axis.
fn two_spheres_ring() -> f64 {
    (1.0 - (TWO_SPHERES_OFFSET / 2.0).powi(2)).sqrt()
}

/// One noiseless sample and its distance to the singular locus.
fn sample_point<R: Rng>(shape: &Shape, rng: &mut R) -> (Vec<f64>, f64) {
    match *shape {
        Shape::Circle => (unit_vector(rng, 2), f64::INFINITY),
        Shape::Sphere(d) => (unit_vector(rng, d + 1), f64::INFINITY),
        Shape::TwoCircles => sample_point(&Shape::TwoSpheres(1), rng),
        Shape::TwoSpheres(d) => {
            let mut x = unit_vector(rng, d + 1);
            let shift = if rng.random::<bool>() { 0.5 } else { -0.5 } * TWO_SPHERES_OFFSET;
            x[0] += shift;
            let rest = norm(&x[1..]);
            let dist = (x[0] * x[0] + (rest - two_spheres_ring()).powi(2)).sqrt();
            (x, dist)
        }
        Shape::SolidBall(d) => {
            let x = ball_point(rng, d);
            let dist = (1.0 - norm(&x)).abs();
            (x, dist)
        }
        Shape::TwoDisks(d) => {
            let disk = ball_point(rng, 2 * d);
            let mut x = vec![0.0; 3 * d];
            let first = rng.random::<bool>();
            let offset = if first { 0 } else { d };
            x[offset..offset + 2 * d].copy_from_slice(&disk);
            // The part orthogonal to the shared middle block.
            let outer = if first { norm(&disk[..d]) } else { norm(&disk[d..]) };
            let dist = outer.min(1.0 - norm(&disk));
            (x, dist)
        }
        Shape::Cone => {
            let h = CONE_HEIGHT * rng.random::<f64>().sqrt();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let t = rng.random::<f64>() * 2.0 * PI;
            let x = vec![h * t.cos(), h * t.sin(), sign * h];
            let dist = norm(&x);
            (x, dist)
        }
        Shape::PinchTorus => {
            let a = PINCH_TUBE;
            let big = PINCH_MAJOR;
            let bound = ((a / 2.0).powi(2) + (big + a).powi(2)).sqrt() * a;
            loop {
                let th = rng.random::<f64>() * 2.0 * PI;
                let ph = rng.random::<f64>() * 2.0 * PI;
                let rho = a * (th / 2.0).sin();
                let drho = 0.5 * a * (th / 2.0).cos();
                let w = big + rho * ph.cos();
                let pt = [
                    drho * ph.cos() * th.cos() - w * th.sin(),
                    drho * ph.cos() * th.sin() + w * th.cos(),
                    drho * ph.sin(),
                ];
                let pp = [-rho * ph.sin() * th.cos(), -rho * ph.sin() * th.sin(), rho * ph.cos()];
                let cross = [
                    pt[1] * pp[2] - pt[2] * pp[1],
                    pt[2] * pp[0] - pt[0] * pp[2],
                    pt[0] * pp[1] - pt[1] * pp[0],
                ];
                if rng.random::<f64>() * bound <= norm(&cross) {
                    let x = vec![w * th.cos(), w * th.sin(), rho * ph.sin()];
                    let dist = ((x[0] - big).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
                    return (x, dist);
                }
            }
        }
        Shape::Ellipsoid([a, b, c]) => {
            let m = (b * c).max(a * c).max(a * b);
            loop {
                let u = unit_vector(rng, 3);
                let j = ((b * c * u[0]).powi(2) + (a * c * u[1]).powi(2) + (a * b * u[2]).powi(2)).sqrt();
                if rng.random::<f64>() * m <= j {
                    return (vec![a * u[0], b * u[1], c * u[2]], f64::INFINITY);
                }
            }
        }
        Shape::Torus { major, minor } => loop {
            let th = rng.random::<f64>() * 2.0 * PI;
            let ph = rng.random::<f64>() * 2.0 * PI;
            let w = major + minor * ph.cos();
            if rng.random::<f64>() * (major + minor) <= w {
                return (vec![w * th.cos(), w * th.sin(), minor * ph.sin()], f64::INFINITY);
            }
        },
        Shape::SphereProduct { radius } => {
            let a = rng.random::<f64>() * 2.0 * PI;
            let b = rng.random::<f64>() * 2.0 * PI;
            (
                vec![a.cos(), a.sin(), radius * b.cos(), radius * b.sin()],
                f64::INFINITY,
            )
        }
        Shape::HollowCube => {
            let face = rng.random_range(0..6usize);
            let axis = face / 2;
            let s = if face % 2 == 0 { 1.0 } else { -1.0 };
            let u = rng.random::<f64>() * 2.0 - 1.0;
            let v = rng.random::<f64>() * 2.0 - 1.0;
            let mut x = vec![0.0; 3];
            x[axis] = s;
            x[(axis + 1) % 3] = u;
            x[(axis + 2) % 3] = v;
            let dist = (1.0 - u.abs()).min(1.0 - v.abs());
            (x, dist)
        }
        Shape::ThreeDisks => {
            let plane = rng.random_range(0..3usize);
            let p = ball_point(rng, 2);
            let mut x = vec![0.0; 3];
            x[plane] = p[0];
            x[(plane + 1) % 3] = p[1];
            let dist = p[0].abs().min(p[1].abs()).min(1.0 - norm(&p));
            (x, dist)
        }
    }
}

/// Samples `spec.n` points from the shape, with uniform noise added after
/// the distances are recorded.
pub fn generate(spec: &ShapeSpec) -> Result<LabeledCloud> {
    spec.shape.validate()?;
    if spec.n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    if !(spec.noise_amplitude >= 0.0 && spec.noise_amplitude.is_finite()) {
        return Err(Error::InvalidParameter("noise amplitude must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.shape.ambient_dim();
    let mut data = Vec::with_capacity(spec.n * dim);
    let mut dist = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (x, d) = sample_point(&spec.shape, &mut rng);
        dist.push(d);
        data.extend(x);
    }
    if spec.noise_amplitude > 0.0 {
        let a = spec.noise_amplitude;
        for v in data.iter_mut() {
            *v += rng.random_range(-a..=a);
        }
    }
    Ok(LabeledCloud {
        cloud: PointCloud::new(dim, data)?,
        dist_to_singular: dist,
    })
}

/// Label 1 exactly for points within distance `s` of the singular locus.
pub fn ground_truth_labels(labeled: &LabeledCloud, s: f64) -> Result<Vec<u8>> {
    labels_within(&labeled.dist_to_singular, s)
}

pub fn labels_within(dist: &[f64], s: f64) -> Result<Vec<u8>> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("labeling distance must be positive, got {s}")));
    }
    Ok(dist.iter().map(|&d| u8::from(d <= s)).collect())
}

/// Dimension-scaled radius and sample size: `(r0^(1/d), round(n0 growth^d))`.
pub fn scaled_experiment_params(d: usize, r0: f64, n0: f64, growth: f64) -> Result<(f64, usize)> {
    if d == 0 || !(r0 > 0.0 && r0 < 1.0) || !(n0 >= 1.0) || !(growth > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "scaled parameters need d >= 1, r0 in (0,1), n0 >= 1, growth > 1; got ({d}, {r0}, {n0}, {growth})"
        )));
    }
    Ok((
        r0.powf(1.0 / d as f64),
        (n0 * growth.powi(d as i32)).round() as usize,
    ))
}

/// One cloud of the manifold-hypothesis benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkCloud {
    pub name: String,
    pub shape: Shape,
    pub labeled: LabeledCloud,
    pub is_manifold: bool,
}

/// Instances generated per shape class.
pub const BENCHMARK_INSTANCES: usize = 2;

/// Manifolds (sphere, ellipsoid, product of circles, torus) and stratified
/// spaces (two spheres, cone, hollow cube, three disks), several random
/// instances of each.
pub fn mh_benchmark(sample_size: usize, seed: u64) -> Result<Vec<BenchmarkCloud>> {
    if sample_size < 100 {
        return Err(Error::InvalidParameter(format!(
            "benchmark sample size must be >= 100, got {sample_size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for inst in 0..BENCHMARK_INSTANCES {
        let shapes = [
            ("sphere", Shape::Sphere(2)),
            (
                "ellipsoid",
                Shape::Ellipsoid([
                    rng.random_range(0.8..1.2),
                    rng.random_range(0.7..1.0),
                    rng.random_range(0.5..0.8),
                ]),
            ),
            (
                "sphere_product",
                Shape::SphereProduct {
                    radius: rng.random_range(0.6..1.0),
                },
            ),
            (
                "torus",
                Shape::Torus {
                    major: rng.random_range(1.0..1.4),
                    minor: rng.random_range(0.4..0.6),
                },
            ),
            ("two_spheres", Shape::TwoSpheres(2)),
            ("cone", Shape::Cone),
            ("hollow_cube", Shape::HollowCube),
            ("three_disks", Shape::ThreeDisks),
        ];
        for (name, shape) in shapes {
            let spec = ShapeSpec {
                shape,
                n: sample_size,
                noise_amplitude: DEFAULT_NOISE,
                seed: rng.random(),
            };
            out.push(BenchmarkCloud {
                name: format!("{name}_{inst}"),
                shape,
                labeled: generate(&spec)?,
                is_manifold: shape.is_manifold(),
            });
        }
    }
    Ok(out)
}
