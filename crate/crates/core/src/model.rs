//! Objective functions of the split pose-graph model, their Euclidean
//! gradients, the augmented Lagrangian, the merit function used to monitor
//! convergence, Lipschitz-constant estimates and the penalty-parameter
//! advisor, plus first-order stationarity diagnostics.
//!
//! The split model carries two copies of each rotation: `p[i]` constrained to
//! the unit sphere and `q[i]` free in R^4, coupled by multipliers `lambda[i]`.
//! With per-edge weights `sigma1`, `sigma2` the objective splits into
//!
//! - `f(p, q, t)`: translation terms `|| [0, t_j - t_i] - q_i t_ij p_i* ||^2_{sigma1}`
//!   over edges `(i, j)`,
//! - `g(p, q)`: rotation terms `|| p_j* q_i q_ij - 1 ||^2_{sigma2}`.
//!
//! `f` couples `p_i`, `q_i` through out-edges of `i`; `g` couples `q_i`
//! through out-edges and `p_j` through in-edges of `j`. All gradients here
//! are plain Euclidean (ambient) gradients, verified against central finite
//! differences; evaluation does not require `p` to be unit.

use nalgebra::{Vector3, Vector4};
use thiserror::Error;

use crate::graph::{Edge, Pose, PoseGraph};
use crate::linalg::sym_max_eigenvalue;
use crate::quat::{conjugation_matrix, sphere_tangent_project, Quaternion};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("H1 diagonal {h1} must exceed L_f_p + L_g_p = {required}; increase tau1")]
    H1TooSmall { h1: f64, required: f64 },
    #[error("variable sequences have inconsistent lengths")]
    LengthMismatch,
}

/// Iterates of the split model: sphere copies `p`, free copies `q`,
/// translations `t` and multipliers `lambda`, all indexed by vertex.
#[derive(Debug, Clone)]
pub struct SplitVars {
    pub p: Vec<Vector4<f64>>,
    pub q: Vec<Vector4<f64>>,
    pub t: Vec<Vector3<f64>>,
    pub lambda: Vec<Vector4<f64>>,
}

impl SplitVars {
    /// Starts at the given poses: `p = q =` rotations, zero multipliers.
    pub fn from_poses(poses: &[Pose]) -> Self {
        let rotations: Vec<Vector4<f64>> = poses.iter().map(|p| p.rotation.as_vec4()).collect();
        Self {
            p: rotations.clone(),
            q: rotations,
            t: poses.iter().map(|p| p.translation).collect(),
            lambda: vec![Vector4::zeros(); poses.len()],
        }
    }

    /// The pose estimate carried by the sphere copies: `(normalize(p_i), t_i)`.
    pub fn to_poses(&self) -> Vec<Pose> {
        self.p
            .iter()
            .zip(&self.t)
            .map(|(p, t)| {
                Pose::new(
                    Quaternion::from_vec4(p)
                        .normalized()
                        .expect("sphere copies stay away from zero"),
                    *t,
                )
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.q.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.t.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.lambda.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// `[0, t_to - t_from]`, the translation-difference quaternion of an edge.
pub(crate) fn translation_gap(e: &Edge, t: &[Vector3<f64>]) -> Vector4<f64> {
    let d = t[e.to] - t[e.from];
    Vector4::new(0.0, d.x, d.y, d.z)
}

/// Residual of one translation term: `[0, t_j - t_i] - q_i t_ij p_i*`.
fn residual_f(e: &Edge, p_i: &Vector4<f64>, q_i: &Vector4<f64>, t: &[Vector3<f64>]) -> Vector4<f64> {
    let s = Quaternion::from_vec4(q_i)
        * Quaternion::from_vector(&e.translation)
        * Quaternion::from_vec4(p_i).conjugate();
    translation_gap(e, t) - s.as_vec4()
}

/// Residual of one rotation term: `p_j* q_i q_ij - 1`.
fn residual_g(e: &Edge, p_j: &Vector4<f64>, q_i: &Vector4<f64>) -> Vector4<f64> {
    let u = Quaternion::from_vec4(p_j).conjugate()
        * Quaternion::from_vec4(q_i)
        * e.rotation.as_quat();
    u.as_vec4() - Vector4::new(1.0, 0.0, 0.0, 0.0)
}

/// Translation objective `f(p, q, t)`.
pub fn eval_f(
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    t: &[Vector3<f64>],
    graph: &PoseGraph,
) -> f64 {
    graph
        .edges()
        .iter()
        .map(|e| {
            let r = residual_f(e, &p[e.from], &q[e.from], t);
            (e.sigma1 * r).dot(&r)
        })
        .sum()
}

/// Rotation objective `g(p, q)`.
pub fn eval_g(p: &[Vector4<f64>], q: &[Vector4<f64>], graph: &PoseGraph) -> f64 {
    graph
        .edges()
        .iter()
        .map(|e| {
            let r = residual_g(e, &p[e.to], &q[e.from]);
            (e.sigma2 * r).dot(&r)
        })
        .sum()
}

/// Gradient of `f` with respect to `p_i`; sums over out-edges of `i`.
pub fn grad_p_f_vertex(
    i: usize,
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    t: &[Vector3<f64>],
    graph: &PoseGraph,
) -> Vector4<f64> {
    let d = conjugation_matrix();
    let mut grad = Vector4::zeros();
    for &ei in graph.out_edges(i) {
        let e = graph.edge(ei);
        // f_e(p_i) = || A p_i - b ||^2_{sigma1} with A = M(q_i) M(t_ij) D.
        let a = Quaternion::from_vec4(&q[i]).left_mul_matrix()
            * Quaternion::from_vector(&e.translation).left_mul_matrix()
            * d;
        let r = a * p[i] - translation_gap(e, t);
        grad += 2.0 * a.transpose() * (e.sigma1 * r);
    }
    grad
}

/// Gradient of `g` with respect to `p_j`; sums over in-edges of `j`.
pub fn grad_p_g_vertex(
    j: usize,
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    graph: &PoseGraph,
) -> Vector4<f64> {
    let d = conjugation_matrix();
    let e1 = Vector4::new(1.0, 0.0, 0.0, 0.0);
    let mut grad = Vector4::zeros();
    for &ei in graph.in_edges(j) {
        let e = graph.edge(ei);
        // g_e(p_j) = || G p_j - 1 ||^2_{sigma2} with G = W(q_i q_ij) D.
        let qi_qij = Quaternion::from_vec4(&q[e.from]) * e.rotation.as_quat();
        let g = qi_qij.right_mul_matrix() * d;
        let r = g * p[j] - e1;
        grad += 2.0 * g.transpose() * (e.sigma2 * r);
    }
    grad
}

/// Gradient of `f` with respect to `q_i`; sums over out-edges of `i`.
pub fn grad_q_f_vertex(
    i: usize,
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    t: &[Vector3<f64>],
    graph: &PoseGraph,
) -> Vector4<f64> {
    let mut grad = Vector4::zeros();
    for &ei in graph.out_edges(i) {
        let e = graph.edge(ei);
        // f_e(q_i) = || C q_i - b ||^2_{sigma1} with C = W(t_ij p_i*).
        let tp = Quaternion::from_vector(&e.translation) * Quaternion::from_vec4(&p[i]).conjugate();
        let c = tp.right_mul_matrix();
        let r = c * q[i] - translation_gap(e, t);
        grad += 2.0 * c.transpose() * (e.sigma1 * r);
    }
    grad
}

/// Gradient of `g` with respect to `q_i`; sums over out-edges of `i`.
pub fn grad_q_g_vertex(
    i: usize,
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    graph: &PoseGraph,
) -> Vector4<f64> {
    let e1 = Vector4::new(1.0, 0.0, 0.0, 0.0);
    let mut grad = Vector4::zeros();
    for &ei in graph.out_edges(i) {
        let e = graph.edge(ei);
        // g_e(q_i) = || G q_i - 1 ||^2_{sigma2} with G = M(p_j)^T W(q_ij).
        let g = Quaternion::from_vec4(&p[e.to]).left_mul_matrix().transpose()
            * e.rotation.as_quat().right_mul_matrix();
        let r = g * q[i] - e1;
        grad += 2.0 * g.transpose() * (e.sigma2 * r);
    }
    grad
}

pub fn grad_p_f(
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    t: &[Vector3<f64>],
    graph: &PoseGraph,
) -> Vec<Vector4<f64>> {
    (0..graph.vertex_count())
        .map(|i| grad_p_f_vertex(i, p, q, t, graph))
        .collect()
}

pub fn grad_p_g(p: &[Vector4<f64>], q: &[Vector4<f64>], graph: &PoseGraph) -> Vec<Vector4<f64>> {
    (0..graph.vertex_count())
        .map(|j| grad_p_g_vertex(j, p, q, graph))
        .collect()
}

pub fn grad_q_f(
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    t: &[Vector3<f64>],
    graph: &PoseGraph,
) -> Vec<Vector4<f64>> {
    (0..graph.vertex_count())
        .map(|i| grad_q_f_vertex(i, p, q, t, graph))
        .collect()
}

pub fn grad_q_g(p: &[Vector4<f64>], q: &[Vector4<f64>], graph: &PoseGraph) -> Vec<Vector4<f64>> {
    (0..graph.vertex_count())
        .map(|i| grad_q_g_vertex(i, p, q, graph))
        .collect()
}

/// Gradient of `f` with respect to all translations.
pub fn grad_t_f(
    p: &[Vector4<f64>],
    q: &[Vector4<f64>],
    t: &[Vector3<f64>],
    graph: &PoseGraph,
) -> Vec<Vector3<f64>> {
    let mut grad = vec![Vector3::zeros(); graph.vertex_count()];
    for e in graph.edges() {
        let r = residual_f(e, &p[e.from], &q[e.from], t);
        let w = 2.0 * (e.sigma1 * r);
        let w3 = Vector3::new(w[1], w[2], w[3]);
        grad[e.to] += w3;
        grad[e.from] -= w3;
    }
    grad
}

/// Augmented Lagrangian
/// `f + g + sum_i { -<lambda_i, p_i - q_i> + (beta/2) ||p_i - q_i||^2 }`.
///
/// The sphere indicator contributes zero: callers keep `p` feasible.
pub fn augmented_lagrangian(vars: &SplitVars, graph: &PoseGraph, beta: f64) -> f64 {
    let mut value = eval_f(&vars.p, &vars.q, &vars.t, graph) + eval_g(&vars.p, &vars.q, graph);
    for i in 0..vars.len() {
        let gap = vars.p[i] - vars.q[i];
        value += -vars.lambda[i].dot(&gap) + 0.5 * beta * gap.norm_squared();
    }
    value
}

/// Merit function: the augmented Lagrangian plus history terms
/// `(4/beta) tau2^2 ||q - q_prev||^2 + (4/beta) L_f^2 ||t - t_prev||^2`.
///
/// With a penalty parameter from [`beta_advisor`] this quantity is
/// nonincreasing along solver iterations.
pub fn merit_phi(
    vars: &SplitVars,
    graph: &PoseGraph,
    prev_q: &[Vector4<f64>],
    prev_t: &[Vector3<f64>],
    beta: f64,
    tau2: f64,
    l_f: f64,
) -> f64 {
    let mut value = augmented_lagrangian(vars, graph, beta);
    let scale_q = 4.0 / beta * tau2 * tau2;
    let scale_t = 4.0 / beta * l_f * l_f;
    for i in 0..vars.len() {
        value += scale_q * (vars.q[i] - prev_q[i]).norm_squared();
        value += scale_t * (vars.t[i] - prev_t[i]).norm_squared();
    }
    value
}

/// Upper bounds for the gradient Lipschitz constants of `f` and `g`.
///
/// The per-block bounds follow the operator-norm products
/// `sigma_max(Sigma) * ||q||^2 * ||t_ij||^2` summed per vertex; `bound_hint`
/// stands in for the (unconstrained) `||q_i||` over the run. The joint
/// constants `l_f`, `l_g` are deliberately conservative: twice the sum of the
/// block bounds plus cross-block products with a residual bound of
/// `(1 + 2 hint) ||t_ij||` per edge. Only the tightness of the advised
/// penalty parameter suffers from the slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimates {
    pub l_f_p: f64,
    pub l_g_p: f64,
    pub l_f_q: f64,
    pub l_g_q: f64,
    pub l_f: f64,
    pub l_g: f64,
}

pub fn lipschitz_estimates(graph: &PoseGraph, bound_hint: f64) -> LipschitzEstimates {
    let n = graph.vertex_count();
    let hint2 = bound_hint * bound_hint;

    let mut sf_out = vec![0.0f64; n]; // sum sigma_max(Sigma1) ||t_e||^2 over out-edges
    let mut xf_out = vec![0.0f64; n]; // sum sigma_max(Sigma1) (||t_e||^2 + ||t_e||)
    let mut sg_out = vec![0.0f64; n];
    let mut sg_in = vec![0.0f64; n];
    let mut max_sigma1_hat = 0.0f64;
    for e in graph.edges() {
        let s1 = sym_max_eigenvalue(&e.sigma1);
        let s2 = sym_max_eigenvalue(&e.sigma2);
        let tn2 = e.translation.norm_squared();
        sf_out[e.from] += s1 * tn2;
        xf_out[e.from] += s1 * (tn2 + tn2.sqrt());
        sg_out[e.from] += s2;
        sg_in[e.to] += s2;
        max_sigma1_hat = max_sigma1_hat.max(sym_max_eigenvalue(&e.sigma1_hat()));
    }
    let max_degree = (0..n)
        .map(|i| graph.out_edges(i).len() + graph.in_edges(i).len())
        .max()
        .unwrap_or(0) as f64;

    let max_of = |v: &[f64]| v.iter().copied().fold(0.0f64, f64::max);
    let l_f_p = hint2 * max_of(&sf_out);
    let l_f_q = max_of(&sf_out);
    let l_g_p = hint2 * max_of(&sg_in);
    let l_g_q = max_of(&sg_out);
    let l_f_t = 4.0 * max_sigma1_hat * max_degree;

    let cross = 1.0 + 2.0 * bound_hint;
    let l_f = 2.0 * (l_f_p + l_f_q + l_f_t) + 4.0 * cross * max_of(&xf_out);
    let l_g = 2.0 * (l_g_p + l_g_q) + 4.0 * cross * max_of(&sg_out).max(max_of(&sg_in));

    LipschitzEstimates {
        l_f_p,
        l_g_p,
        l_f_q,
        l_g_q,
        l_f,
        l_g,
    }
}

/// Smallest penalty parameter (with a 5% margin) under which the merit
/// function is provably nonincreasing, given proximal weights `H_k = tau_k I`.
///
/// Requires `h1 > l_f_p + l_g_p`. Returns 0 for an empty graph (all
/// estimates zero).
pub fn beta_advisor(
    est: &LipschitzEstimates,
    h1: f64,
    h2: f64,
    h3: f64,
) -> Result<f64, ModelError> {
    let zero = est.l_f_p == 0.0
        && est.l_g_p == 0.0
        && est.l_f_q == 0.0
        && est.l_g_q == 0.0
        && est.l_f == 0.0
        && est.l_g == 0.0;
    if zero {
        return Ok(0.0);
    }
    let required = est.l_f_p + est.l_g_p;
    if h1 <= required {
        return Err(ModelError::H1TooSmall { h1, required });
    }
    let sq = est.l_f * est.l_f + est.l_g * est.l_g;
    let t1 = 4.0 / 3.0 * (est.l_f_q + est.l_g_q);
    let t2 = 8.0 * sq / (h1 - required);
    let t3 = (8.0 * sq + 16.0 * h2 * h2) / h2;
    let t4 = 8.0 * est.l_f * est.l_f / h3;
    Ok(1.05 * t1.max(t2).max(t3).max(t4))
}

/// The four residuals of the first-order optimality system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    /// Norm of the tangent component of `-grad_p(f+g) + lambda` at `p`.
    pub s_p: f64,
    /// Norm of `grad_q(f+g) + lambda`.
    pub s_q: f64,
    /// Norm of `grad_t f`.
    pub s_t: f64,
    /// Feasibility gap `||p - q||`.
    pub s_feas: f64,
}

impl StationarityReport {
    pub fn max(&self) -> f64 {
        self.s_p.max(self.s_q).max(self.s_t).max(self.s_feas)
    }
}

/// Evaluates the stationarity residuals at the given point. On the sphere the
/// distance to the normal cone reduces to the norm of the tangent component,
/// so `s_p` is computed by per-vertex tangent projection. Requires unit `p`.
pub fn epsilon_stationarity(vars: &SplitVars, graph: &PoseGraph) -> StationarityReport {
    let mut s_p = 0.0;
    let mut s_q = 0.0;
    let mut s_t = 0.0;
    let mut s_feas = 0.0;
    let grad_t = grad_t_f(&vars.p, &vars.q, &vars.t, graph);
    for i in 0..vars.len() {
        let gpf = grad_p_f_vertex(i, &vars.p, &vars.q, &vars.t, graph);
        let gpg = grad_p_g_vertex(i, &vars.p, &vars.q, graph);
        let v = -gpf - gpg + vars.lambda[i];
        s_p += sphere_tangent_project(&vars.p[i], &v).norm_squared();

        let gqf = grad_q_f_vertex(i, &vars.p, &vars.q, &vars.t, graph);
        let gqg = grad_q_g_vertex(i, &vars.p, &vars.q, graph);
        s_q += (gqf + gqg + vars.lambda[i]).norm_squared();

        s_t += grad_t[i].norm_squared();
        s_feas += (vars.p[i] - vars.q[i]).norm_squared();
    }
    StationarityReport {
        s_p: s_p.sqrt(),
        s_q: s_q.sqrt(),
        s_t: s_t.sqrt(),
        s_feas: s_feas.sqrt(),
    }
}
