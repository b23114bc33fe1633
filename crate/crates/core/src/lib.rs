//! Pose graph optimization on the augmented unit-quaternion manifold.
//!
//! A pose is a pair (unit quaternion, translation). Given a directed graph of
//! noisy relative pose measurements, the toolkit estimates all absolute poses
//! by minimizing a weighted least-squares objective whose rotational term is
//! derived from the von Mises-Fisher distribution on the 3-sphere.
//!
//! Three solvers are provided:
//! - [`admm`]: an ADMM splitting solver with closed-form, per-vertex-parallel
//!   subproblems (splits each rotation into a sphere-constrained copy and a
//!   free copy, coupled by multipliers),
//! - [`least_squares`]: manifold Gauss-Newton and Levenberg-Marquardt
//!   baselines on the unsplit model.
//!
//! Supporting modules: [`quat`] (quaternion algebra), [`vmf`] (rotational
//! noise), [`graph`] + [`g2o`] (data model and file I/O), [`model`]
//! (objectives, gradients, stationarity diagnostics), [`init`]
//! (odometric/chordal initialization), [`synth`] (ring/cube dataset
//! generators) and [`metrics`] (Rel.Err / NRMSE).

pub mod admm;
pub mod g2o;
pub mod graph;
pub mod init;
pub mod least_squares;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod quat;
pub mod sparse;
pub mod synth;
pub mod vmf;

pub use graph::{Edge, Pose, PoseGraph};
pub use quat::{Quaternion, UnitQuaternion};
