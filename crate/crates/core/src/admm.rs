//! The splitting solver: proximal linearized ADMM on the split model with
//! per-vertex-parallel closed-form updates.
//!
//! One iteration runs four steps. The sphere copies `p` take a linearized
//! proximal step followed by normalization; the free copies `q` solve
//! independent 4x4 positive-definite systems; the translations solve one
//! sparse positive-definite system whose matrix never changes across
//! iterations (factored once); the multipliers take the usual dual ascent
//! step `lambda <- lambda - beta (p - q)`.
//!
//! Iterations stop when the residual
//! `R = (1/beta) ||d lambda||^2 + beta (||d q||^2 + ||d t||^2)`
//! drops below `tol` or `max_iter` is reached.

use std::time::Instant;

use nalgebra::{Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Pose, PoseGraph};
use crate::model::{
    self, beta_advisor, lipschitz_estimates, LipschitzEstimates, ModelError, SplitVars,
};
use crate::quat::Quaternion;
use crate::sparse::{SparseError, SpdSolver, TripletBuilder};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("initial poses have length {got}, graph has {expected} vertices")]
    BadInit { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("iterate became non-finite at iteration {iter} (divergence)")]
    Diverged { iter: usize },
}

/// How the penalty and proximal weights were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    /// Parameters satisfy the convergence-theory bound; validated on entry.
    Theory,
    /// Caller-tuned parameters; no validation beyond positivity.
    Manual,
}

/// Solver parameters: penalty `beta`, proximal weights `H_k = tau_k I`,
/// stopping tolerance and iteration cap.
#[derive(Debug, Clone, Copy)]
pub struct AdmmParams {
    pub beta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: ParamMode,
    pub parallel: bool,
    /// Assumed bound on `||q_i||` over the run, used by the Lipschitz
    /// estimates; a runtime monitor re-invokes the advisor if exceeded.
    pub bound_hint: f64,
}

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_BOUND_HINT: f64 = 1.5;

impl AdmmParams {
    /// Manually tuned defaults: `beta = 10 * mean(sigma_max(Sigma2))` over
    /// edges, `tau_k = 0.01 * beta`.
    pub fn manual_for(graph: &PoseGraph) -> Self {
        let m = graph.edge_count().max(1) as f64;
        let mean_s2: f64 = graph
            .edges()
            .iter()
            .map(|e| crate::linalg::sym_max_eigenvalue(&e.sigma2))
            .sum::<f64>()
            / m;
        let beta = (10.0 * mean_s2).max(1e-6);
        Self {
            beta,
            tau1: 0.01 * beta,
            tau2: 0.01 * beta,
            tau3: 0.01 * beta,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            mode: ParamMode::Manual,
            parallel: true,
            bound_hint: DEFAULT_BOUND_HINT,
        }
    }

    /// Parameters satisfying the merit-monotonicity bound: `tau1` twice the
    /// `p`-block Lipschitz sum, `tau2` at the minimizer of its advisor term,
    /// `beta` from [`beta_advisor`].
    pub fn theory_for(graph: &PoseGraph, bound_hint: f64) -> Result<Self, ModelError> {
        let est = lipschitz_estimates(graph, bound_hint);
        let base = est.l_f_p + est.l_g_p;
        let tau1 = (2.0 * base).max(1e-6);
        let sq = est.l_f * est.l_f + est.l_g * est.l_g;
        let tau2 = (sq / 2.0).sqrt().max(1e-6);
        let tau3 = est.l_f.max(1e-6);
        let beta = beta_advisor(&est, tau1, tau2, tau3)?.max(1e-6);
        Ok(Self {
            beta,
            tau1,
            tau2,
            tau3,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            mode: ParamMode::Theory,
            parallel: true,
            bound_hint,
        })
    }

    fn validate(&self) -> Result<(), SolverError> {
        for (name, v) in [
            ("beta", self.beta),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("tau3", self.tau3),
            ("tol", self.tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SolverError::BadParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(SolverError::BadParams("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-iteration log entry. `residual` is NaN on the initial record.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: usize,
    pub f: f64,
    pub g: f64,
    pub lagrangian: f64,
    pub phi: f64,
    pub residual: f64,
    pub elapsed_s: f64,
}

/// Final iterates plus the per-iteration history.
#[derive(Debug)]
pub struct AdmmState {
    pub vars: SplitVars,
    pub iter: usize,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug)]
pub struct AdmmOutcome {
    pub poses: Vec<Pose>,
    pub state: AdmmState,
    /// True when the residual dropped below `tol` before `max_iter`.
    pub converged: bool,
}

fn unit_quat_vec() -> Vector4<f64> {
    Vector4::new(1.0, 0.0, 0.0, 0.0)
}

/// One `p` update: linearized proximal step projected onto the sphere,
/// evaluated entirely at the previous iterate.
pub fn step_p(vars: &SplitVars, graph: &PoseGraph, params: &AdmmParams) -> Vec<Vector4<f64>> {
    let update = |i: usize| -> Vector4<f64> {
        let gpf = model::grad_p_f_vertex(i, &vars.p, &vars.q, &vars.t, graph);
        let gpg = model::grad_p_g_vertex(i, &vars.p, &vars.q, graph);
        let v = (params.beta * vars.q[i] + vars.lambda[i] + params.tau1 * vars.p[i] - gpf - gpg)
            / (params.beta + params.tau1);
        let norm = v.norm();
        if norm < 1e-15 {
            log::warn!("degenerate projection at vertex {i}; keeping previous iterate");
            vars.p[i]
        } else {
            v / norm
        }
    };
    if params.parallel {
        (0..vars.len()).into_par_iter().map(update).collect()
    } else {
        (0..vars.len()).map(update).collect()
    }
}

/// One `q` update: independent 4x4 positive-definite solves using the fresh
/// `p` and the previous `t`, `lambda`.
pub fn step_q(
    p_new: &[Vector4<f64>],
    vars: &SplitVars,
    graph: &PoseGraph,
    params: &AdmmParams,
) -> Vec<Vector4<f64>> {
    let e1 = unit_quat_vec();
    let update = |i: usize| -> Vector4<f64> {
        let mut a = Matrix4::identity() * (params.beta + params.tau2);
        let mut rhs = params.beta * p_new[i] - vars.lambda[i] + params.tau2 * vars.q[i];
        for &ei in graph.out_edges(i) {
            let e = graph.edge(ei);
            // Translation term || G1 q_i - gap ||^2_{sigma1},
            // G1 = W(t_ij p_i*) with the fresh p_i.
            let tp = Quaternion::from_vector(&e.translation)
                * Quaternion::from_vec4(&p_new[i]).conjugate();
            let g1 = tp.right_mul_matrix();
            let gap = model::translation_gap(e, &vars.t);
            a += 2.0 * g1.transpose() * e.sigma1 * g1;
            rhs += 2.0 * g1.transpose() * (e.sigma1 * gap);
            // Rotation term || G2 q_i - 1 ||^2_{sigma2},
            // G2 = M(p_j)^T W(q_ij) with the fresh p_j.
            let g2 = Quaternion::from_vec4(&p_new[e.to])
                .left_mul_matrix()
                .transpose()
                * e.rotation.as_quat().right_mul_matrix();
            a += 2.0 * g2.transpose() * e.sigma2 * g2;
            rhs += 2.0 * g2.transpose() * (e.sigma2 * e1);
        }
        let chol = a
            .cholesky()
            .expect("q-subproblem matrix is positive definite (beta I + PSD sums)");
        chol.solve(&rhs)
    };
    if params.parallel {
        (0..vars.len()).into_par_iter().map(update).collect()
    } else {
        (0..vars.len()).map(update).collect()
    }
}

/// The translation subproblem's constant matrix
/// `A = 2 Q^T (I_m (x) Sigma1_hat) Q + tau3 I`, factored once.
pub struct TranslationSystem {
    solver: SpdSolver,
    tau3: f64,
}

impl TranslationSystem {
    pub fn assemble(graph: &PoseGraph, tau3: f64) -> Result<Self, SparseError> {
        let n = graph.vertex_count();
        let mut builder = TripletBuilder::new(3 * n);
        for e in graph.edges() {
            let block = 2.0 * e.sigma1_hat();
            builder.push_block(3 * e.from, 3 * e.from, &block);
            builder.push_block(3 * e.to, 3 * e.to, &block);
            builder.push_block(3 * e.from, 3 * e.to, &(-block));
            builder.push_block(3 * e.to, 3 * e.from, &(-block));
        }
        for k in 0..3 * n {
            builder.push(k, k, tau3);
        }
        Ok(Self {
            solver: SpdSolver::from_builder(builder)?,
            tau3,
        })
    }

    pub fn matrix(&self) -> &nalgebra_sparse::CscMatrix<f64> {
        self.solver.matrix()
    }

    pub fn apply(&self, x: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        self.solver.mul_vec(x)
    }

    /// Solves `A t = 2 Q^T (I (x) Sigma1_hat) s + tau3 t_prev` where
    /// `s_e = Im(q_i t_ij p_i*)` from the fresh rotation iterates.
    pub fn solve(
        &self,
        p_new: &[Vector4<f64>],
        q_new: &[Vector4<f64>],
        t_prev: &[Vector3<f64>],
        graph: &PoseGraph,
    ) -> Result<Vec<Vector3<f64>>, SparseError> {
        let n = graph.vertex_count();
        let mut rhs = nalgebra::DVector::zeros(3 * n);
        for e in graph.edges() {
            let s = (Quaternion::from_vec4(&q_new[e.from])
                * Quaternion::from_vector(&e.translation)
                * Quaternion::from_vec4(&p_new[e.from]).conjugate())
            .vector_part();
            let w = 2.0 * e.sigma1_hat() * s;
            for k in 0..3 {
                rhs[3 * e.to + k] += w[k];
                rhs[3 * e.from + k] -= w[k];
            }
        }
        for (i, t) in t_prev.iter().enumerate() {
            for k in 0..3 {
                rhs[3 * i + k] += self.tau3 * t[k];
            }
        }
        let x = self.solver.solve(&rhs)?;
        Ok((0..n)
            .map(|i| Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]))
            .collect())
    }
}

/// Dual ascent: `lambda - beta (p - q)`.
pub fn step_lambda(
    p_new: &[Vector4<f64>],
    q_new: &[Vector4<f64>],
    lambda: &[Vector4<f64>],
    beta: f64,
) -> Vec<Vector4<f64>> {
    lambda
        .iter()
        .zip(p_new.iter().zip(q_new))
        .map(|(l, (p, q))| l - beta * (p - q))
        .collect()
}

/// Stopping residual from consecutive iterates.
pub fn residual(
    beta: f64,
    lambda_new: &[Vector4<f64>],
    lambda_old: &[Vector4<f64>],
    q_new: &[Vector4<f64>],
    q_old: &[Vector4<f64>],
    t_new: &[Vector3<f64>],
    t_old: &[Vector3<f64>],
) -> f64 {
    let dl: f64 = lambda_new
        .iter()
        .zip(lambda_old)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let dq: f64 = q_new
        .iter()
        .zip(q_old)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let dt: f64 = t_new
        .iter()
        .zip(t_old)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    dl / beta + beta * (dq + dt)
}

/// Runs the solver from the given initial poses.
///
/// The free copies start at the initial rotations (`p = q`, zero
/// multipliers). The optional callback sees every history record as it is
/// produced, including the initial one.
pub fn solve(
    graph: &PoseGraph,
    init: &[Pose],
    params: &AdmmParams,
    mut callback: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<AdmmOutcome, SolverError> {
    params.validate()?;
    let n = graph.vertex_count();
    if init.len() != n {
        return Err(SolverError::BadInit {
            expected: n,
            got: init.len(),
        });
    }
    let est = lipschitz_estimates(graph, params.bound_hint);
    if params.mode == ParamMode::Theory {
        validate_theory(params, &est)?;
    }

    let t_system = TranslationSystem::assemble(graph, params.tau3)?;
    let mut vars = SplitVars::from_poses(init);
    let mut history = Vec::with_capacity(params.max_iter + 1);
    let start = Instant::now();
    let mut hint_exceeded = false;

    let record_of = |vars: &SplitVars,
                     prev_q: &[Vector4<f64>],
                     prev_t: &[Vector3<f64>],
                     iter: usize,
                     res: f64,
                     start: &Instant| {
        let f = model::eval_f(&vars.p, &vars.q, &vars.t, graph);
        let g = model::eval_g(&vars.p, &vars.q, graph);
        let lagrangian = model::augmented_lagrangian(vars, graph, params.beta);
        let phi = model::merit_phi(vars, graph, prev_q, prev_t, params.beta, params.tau2, est.l_f);
        IterationRecord {
            iter,
            f,
            g,
            lagrangian,
            phi,
            residual: res,
            elapsed_s: start.elapsed().as_secs_f64(),
        }
    };

    let initial = record_of(&vars, &vars.q.clone(), &vars.t.clone(), 0, f64::NAN, &start);
    if let Some(cb) = callback.as_deref_mut() {
        cb(&initial);
    }
    history.push(initial);

    let mut converged = false;
    let mut iter = 0;
    for k in 1..=params.max_iter {
        iter = k;
        let p_new = step_p(&vars, graph, params);
        let q_new = step_q(&p_new, &vars, graph, params);
        let t_new = t_system.solve(&p_new, &q_new, &vars.t, graph)?;
        let lambda_new = step_lambda(&p_new, &q_new, &vars.lambda, params.beta);

        let res = residual(
            params.beta,
            &lambda_new,
            &vars.lambda,
            &q_new,
            &vars.q,
            &t_new,
            &vars.t,
        );

        let prev_q = std::mem::replace(&mut vars.q, q_new);
        let prev_t = std::mem::replace(&mut vars.t, t_new);
        vars.p = p_new;
        vars.lambda = lambda_new;

        if !vars.is_finite() || !res.is_finite() {
            return Err(SolverError::Diverged { iter: k });
        }

        if !hint_exceeded {
            let max_q = vars.q.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
            if max_q > params.bound_hint {
                hint_exceeded = true;
                let re_est = lipschitz_estimates(graph, 2.0 * max_q);
                match beta_advisor(&re_est, params.tau1, params.tau2, params.tau3) {
                    Ok(advised) if advised > params.beta => log::warn!(
                        "||q|| reached {max_q:.3} beyond bound hint {}; re-advised beta \
                         {advised:.3e} exceeds current {:.3e}",
                        params.bound_hint,
                        params.beta
                    ),
                    Ok(_) => log::info!(
                        "||q|| reached {max_q:.3} beyond bound hint {}; current beta still valid",
                        params.bound_hint
                    ),
                    Err(e) => log::warn!("bound-hint monitor: {e}"),
                }
            }
        }

        let record = record_of(&vars, &prev_q, &prev_t, k, res, &start);
        if let Some(cb) = callback.as_deref_mut() {
            cb(&record);
        }
        history.push(record);

        if res < params.tol {
            converged = true;
            break;
        }
    }

    let poses = vars.to_poses();
    Ok(AdmmOutcome {
        poses,
        state: AdmmState {
            vars,
            iter,
            history,
        },
        converged,
    })
}

fn validate_theory(params: &AdmmParams, est: &LipschitzEstimates) -> Result<(), SolverError> {
    let required = est.l_f_p + est.l_g_p;
    if params.tau1 <= required {
        return Err(SolverError::BadParams(format!(
            "theory mode: tau1 = {} must exceed L_f_p + L_g_p = {required}",
            params.tau1
        )));
    }
    let advised = beta_advisor(est, params.tau1, params.tau2, params.tau3)?;
    if params.beta * (1.0 + 1e-12) < advised {
        return Err(SolverError::BadParams(format!(
            "theory mode: beta = {} is below the advised bound {advised}",
            params.beta
        )));
    }
    Ok(())
}
