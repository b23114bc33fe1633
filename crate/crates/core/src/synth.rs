//! Synthetic dataset generators: a circular ring trajectory with a single
//! loop closure, and a cube-grid trajectory with random loop closures between
//! neighboring nodes.
//!
//! Measurements follow the generative model
//! `t_ij = R_i^T (t_j - t_i) + N(0, sigma_t^2 I)` and
//! `q_ij = q_i* q_j q_eps` with `q_eps` a vMF rotational-noise draw. Edge
//! weights record the inverse noise levels: the translational block of
//! `sigma1` is `sigma_t^-2 I3` and `sigma2 = kappa(sigma_r) I4`. A noise
//! level of exactly zero disables that noise draw and records unit weights,
//! giving exactly consistent measurements.

use nalgebra::{Matrix4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::graph::{Edge, GraphError, Pose, PoseGraph};
use crate::quat::UnitQuaternion;
use crate::vmf::{kappa_from_sigma, sample_rotation_noise_with, KappaConvention, VmfError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Vmf(#[from] VmfError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Ring trajectory: `n` poses equally spaced on a circle, odometric edges
/// plus one closing edge.
#[derive(Debug, Clone, Copy)]
pub struct RingSpec {
    pub n: usize,
    pub radius: f64,
    pub sigma_r: f64,
    pub sigma_t: f64,
    pub seed: u64,
    pub convention: KappaConvention,
}

impl RingSpec {
    pub fn new(n: usize, sigma_r: f64, sigma_t: f64, seed: u64) -> Self {
        Self {
            n,
            radius: 2.0,
            sigma_r,
            sigma_t,
            seed,
            convention: KappaConvention::InverseVariance,
        }
    }
}

/// Cube-grid trajectory: a serpentine path visiting every node of an
/// `n_hat^3` grid scaled into a side-2 cube, plus loop closures sampled
/// independently per ordered neighbor pair with probability `p_cube`.
///
/// The translation noise level is `sigma_t_rel / n_hat`.
#[derive(Debug, Clone, Copy)]
pub struct CubeSpec {
    pub n_hat: usize,
    pub p_cube: f64,
    pub sigma_r: f64,
    pub sigma_t_rel: f64,
    pub seed: u64,
    pub convention: KappaConvention,
}

impl CubeSpec {
    pub fn new(n_hat: usize, p_cube: f64, sigma_r: f64, sigma_t_rel: f64, seed: u64) -> Self {
        Self {
            n_hat,
            p_cube,
            sigma_r,
            sigma_t_rel,
            seed,
            convention: KappaConvention::InverseVariance,
        }
    }
}

/// Edge weights implied by the noise levels. Zero maps to unit weight.
fn weights_for(
    sigma_r: f64,
    sigma_t: f64,
    convention: KappaConvention,
) -> (Matrix4<f64>, Matrix4<f64>) {
    let mut sigma1 = Matrix4::identity();
    if sigma_t > 0.0 {
        let w = 1.0 / (sigma_t * sigma_t);
        for k in 1..4 {
            sigma1[(k, k)] = w;
        }
    }
    let sigma2 = if sigma_r > 0.0 {
        Matrix4::identity() * kappa_from_sigma(sigma_r, convention)
    } else {
        Matrix4::identity()
    };
    (sigma1, sigma2)
}

/// Applies the generative noise model to the relative poses of `pairs`.
///
/// Deterministic for a fixed seed: the generator is drawn once per edge in
/// the order given. Zero noise levels produce exact relative measurements.
pub fn perturb_measurements(
    truth: &[Pose],
    pairs: &[(usize, usize)],
    sigma_r: f64,
    sigma_t: f64,
    seed: u64,
    convention: KappaConvention,
) -> Result<Vec<Edge>, SynthError> {
    if !(sigma_r >= 0.0) || !(sigma_t >= 0.0) {
        return Err(SynthError::BadSpec(
            "noise levels must be nonnegative".into(),
        ));
    }
    for &(i, j) in pairs {
        if i >= truth.len() || j >= truth.len() {
            return Err(SynthError::BadSpec(format!(
                "edge ({i}, {j}) references a missing truth pose"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sigma1, sigma2) = weights_for(sigma_r, sigma_t, convention);
    let mut edges = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let rel = truth[i].between(&truth[j]);
        let mut t_ij = rel.translation;
        if sigma_t > 0.0 {
            for k in 0..3 {
                let eps: f64 = StandardNormal.sample(&mut rng);
                t_ij[k] += sigma_t * eps;
            }
        }
        let q_ij = if sigma_r > 0.0 {
            rel.rotation * sample_rotation_noise_with(sigma_r, convention, &mut rng)?
        } else {
            rel.rotation
        };
        edges.push(Edge::new(i, j, q_ij, t_ij, sigma1, sigma2));
    }
    Ok(edges)
}

/// Generates the ring dataset: truth poses plus the measured graph.
pub fn gen_ring(spec: &RingSpec) -> Result<(Vec<Pose>, PoseGraph), SynthError> {
    if spec.n < 3 {
        return Err(SynthError::BadSpec(format!(
            "ring needs at least 3 poses, got {}",
            spec.n
        )));
    }
    if !(spec.radius > 0.0) {
        return Err(SynthError::BadSpec("radius must be positive".into()));
    }
    let n = spec.n;
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let position = Vector3::new(spec.radius * theta.cos(), spec.radius * theta.sin(), 0.0);
        // Heading tangent to the circle (direction of travel).
        let yaw = theta + std::f64::consts::FRAC_PI_2;
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::z(), yaw)
            .expect("z axis is non-degenerate");
        truth.push(Pose::new(rotation, position));
    }
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let edges = perturb_measurements(
        &truth,
        &pairs,
        spec.sigma_r,
        spec.sigma_t,
        spec.seed,
        spec.convention,
    )?;
    let graph = PoseGraph::new(n, edges)?;
    Ok((truth, graph))
}

/// Serpentine (boustrophedon) visiting order of an `n^3` grid: consecutive
/// nodes always differ by one step along a single axis.
pub fn boustrophedon_path(n: usize) -> Vec<(usize, usize, usize)> {
    let mut path = Vec::with_capacity(n * n * n);
    for c in 0..n {
        for b_raw in 0..n {
            let b = if c % 2 == 1 { n - 1 - b_raw } else { b_raw };
            let row_rank = c * n + b_raw;
            for a_raw in 0..n {
                let a = if row_rank % 2 == 1 { n - 1 - a_raw } else { a_raw };
                path.push((a, b, c));
            }
        }
    }
    path
}

fn grid_to_metric(idx: (usize, usize, usize), n_hat: usize) -> Vector3<f64> {
    let s = 2.0 / (n_hat - 1) as f64;
    Vector3::new(
        -1.0 + s * idx.0 as f64,
        -1.0 + s * idx.1 as f64,
        -1.0 + s * idx.2 as f64,
    )
}

/// Rotation taking the body x-axis to the (unit) direction `d`.
fn heading_toward(d: &Vector3<f64>) -> UnitQuaternion {
    let x = Vector3::x();
    let dot = x.dot(d).clamp(-1.0, 1.0);
    if dot > 1.0 - 1e-12 {
        return UnitQuaternion::identity();
    }
    if dot < -1.0 + 1e-12 {
        // Opposite direction: half turn about z.
        return UnitQuaternion::from_axis_angle(&Vector3::z(), std::f64::consts::PI)
            .expect("z axis is non-degenerate");
    }
    let axis = x.cross(d);
    UnitQuaternion::from_axis_angle(&axis, dot.acos()).expect("axis is non-degenerate here")
}

/// Generates the cube dataset: truth poses plus the measured graph.
///
/// Path edges `(i, i+1)` are always present; every ordered pair of grid
/// neighbors not adjacent on the path is added independently with
/// probability `p_cube`, so the expected edge count is
/// `2 (2 n^3 - 3 n^2 + 1) p + n^3 - 1`.
pub fn gen_cube(spec: &CubeSpec) -> Result<(Vec<Pose>, PoseGraph), SynthError> {
    let nh = spec.n_hat;
    if nh < 2 {
        return Err(SynthError::BadSpec(format!(
            "cube needs at least 2 nodes per side, got {nh}"
        )));
    }
    if !(0.0..=1.0).contains(&spec.p_cube) {
        return Err(SynthError::BadSpec(format!(
            "p_cube must lie in [0, 1], got {}",
            spec.p_cube
        )));
    }
    let n = nh * nh * nh;
    let path = boustrophedon_path(nh);
    // visit_id[grid linear index] = position along the path.
    let linear = |(a, b, c): (usize, usize, usize)| a + nh * (b + nh * c);
    let mut visit_id = vec![0usize; n];
    for (rank, &cell) in path.iter().enumerate() {
        visit_id[linear(cell)] = rank;
    }

    let mut truth: Vec<Pose> = Vec::with_capacity(n);
    for (rank, &cell) in path.iter().enumerate() {
        let position = grid_to_metric(cell, nh);
        let rotation = if rank + 1 < n {
            let next = grid_to_metric(path[rank + 1], nh);
            let dir = (next - position).normalize();
            heading_toward(&dir)
        } else {
            truth[rank - 1].rotation
        };
        truth.push(Pose::new(rotation, position));
    }

    // Path edges first, then loop-closure candidates in visit order. The
    // candidate stream consumes one uniform draw per ordered pair so the
    // dataset is a pure function of the seed.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    for i in 0..n {
        let cell = path[i];
        let mut neighbors = Vec::with_capacity(6);
        let (a, b, c) = cell;
        if a > 0 {
            neighbors.push(visit_id[linear((a - 1, b, c))]);
        }
        if a + 1 < nh {
            neighbors.push(visit_id[linear((a + 1, b, c))]);
        }
        if b > 0 {
            neighbors.push(visit_id[linear((a, b - 1, c))]);
        }
        if b + 1 < nh {
            neighbors.push(visit_id[linear((a, b + 1, c))]);
        }
        if c > 0 {
            neighbors.push(visit_id[linear((a, b, c - 1))]);
        }
        if c + 1 < nh {
            neighbors.push(visit_id[linear((a, b, c + 1))]);
        }
        neighbors.sort_unstable();
        for j in neighbors {
            if j + 1 == i || j == i + 1 {
                continue; // consecutive on the path
            }
            if rng.random::<f64>() < spec.p_cube {
                pairs.push((i, j));
            }
        }
    }

    let sigma_t = spec.sigma_t_rel / nh as f64;
    let edges = perturb_measurements(
        &truth,
        &pairs,
        spec.sigma_r,
        sigma_t,
        spec.seed,
        spec.convention,
    )?;
    let graph = PoseGraph::new(n, edges)?;
    Ok((truth, graph))
}

/// Expected edge count of the cube generator.
pub fn cube_expected_edges(n_hat: usize, p_cube: f64) -> f64 {
    let n3 = (n_hat * n_hat * n_hat) as f64;
    let n2 = (n_hat * n_hat) as f64;
    2.0 * (2.0 * n3 - 3.0 * n2 + 1.0) * p_cube + n3 - 1.0
}
