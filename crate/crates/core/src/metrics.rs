//! Estimation-quality metrics and gauge alignment.
//!
//! Pose-graph objectives are invariant to one global rigid transform, so
//! estimates are aligned to the ground truth before scoring by anchoring
//! pose 0. Both metrics stack all rotation and translation errors into
//! single Euclidean norms:
//!
//! - relative error: `(||dq|| + ||dt||) / (||q0|| + ||t0||)`,
//! - NRMSE: `(||dq|| + ||dt||) / ((max(t0) - min(t0)) sqrt(n))`,
//!
//! where `max`/`min` range over all truth translation coordinates.

use thiserror::Error;

use crate::graph::Pose;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("estimate has {est} poses, truth has {truth}")]
    LengthMismatch { est: usize, truth: usize },
    #[error("all truth translations are identical; NRMSE denominator is zero")]
    DegenerateSpread,
    #[error("empty pose sequences")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    /// Left-multiply all estimates by the rigid transform taking estimated
    /// pose 0 onto truth pose 0, then flip each quaternion into the
    /// hemisphere of its truth counterpart.
    Anchor0,
    /// Pass the estimates through unchanged.
    None,
}

/// Aligns the estimate to the truth frame.
pub fn align_to_truth(
    est: &[Pose],
    truth: &[Pose],
    mode: AlignMode,
) -> Result<Vec<Pose>, MetricsError> {
    if est.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            est: est.len(),
            truth: truth.len(),
        });
    }
    match mode {
        AlignMode::None => Ok(est.to_vec()),
        AlignMode::Anchor0 => {
            if est.is_empty() {
                return Ok(Vec::new());
            }
            let transform = truth[0].compose(&est[0].inverse());
            Ok(est
                .iter()
                .zip(truth)
                .map(|(e, t)| {
                    let mut aligned = transform.compose(e);
                    if aligned.rotation.as_vec4().dot(&t.rotation.as_vec4()) < 0.0 {
                        aligned.rotation = aligned.rotation.antipode();
                    }
                    aligned
                })
                .collect())
        }
    }
}

fn stacked_errors(est: &[Pose], truth: &[Pose]) -> Result<(f64, f64), MetricsError> {
    if est.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            est: est.len(),
            truth: truth.len(),
        });
    }
    if est.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dq: f64 = est
        .iter()
        .zip(truth)
        .map(|(e, t)| (e.rotation.as_vec4() - t.rotation.as_vec4()).norm_squared())
        .sum();
    let dt: f64 = est
        .iter()
        .zip(truth)
        .map(|(e, t)| (e.translation - t.translation).norm_squared())
        .sum();
    Ok((dq.sqrt(), dt.sqrt()))
}

/// Relative error against aligned truth.
pub fn rel_err(est: &[Pose], truth: &[Pose]) -> Result<f64, MetricsError> {
    let (dq, dt) = stacked_errors(est, truth)?;
    let q0: f64 = truth
        .iter()
        .map(|t| t.rotation.as_vec4().norm_squared())
        .sum::<f64>()
        .sqrt();
    let t0: f64 = truth
        .iter()
        .map(|t| t.translation.norm_squared())
        .sum::<f64>()
        .sqrt();
    Ok((dq + dt) / (q0 + t0))
}

/// Range of the truth translation coordinates, `max - min` over all entries.
pub fn translation_spread(truth: &[Pose]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in truth {
        for k in 0..3 {
            lo = lo.min(p.translation[k]);
            hi = hi.max(p.translation[k]);
        }
    }
    hi - lo
}

/// Normalized root-mean-square error against aligned truth.
pub fn nrmse(est: &[Pose], truth: &[Pose]) -> Result<f64, MetricsError> {
    let (dq, dt) = stacked_errors(est, truth)?;
    let spread = translation_spread(truth);
    if !(spread > 1e-15) {
        return Err(MetricsError::DegenerateSpread);
    }
    Ok((dq + dt) / (spread * (truth.len() as f64).sqrt()))
}

/// Per-pose rotation angles (radians) and translation distances, after the
/// caller's alignment of choice.
pub fn per_pose_errors(est: &[Pose], truth: &[Pose]) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if est.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            est: est.len(),
            truth: truth.len(),
        });
    }
    let mut angles = Vec::with_capacity(est.len());
    let mut dists = Vec::with_capacity(est.len());
    for (e, t) in est.iter().zip(truth) {
        let dot = e.rotation.as_vec4().dot(&t.rotation.as_vec4()).abs().min(1.0);
        angles.push(2.0 * dot.acos());
        dists.push((e.translation - t.translation).norm());
    }
    Ok((angles, dists))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::UnitQuaternion;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poses(seed: u64, n: usize) -> Vec<Pose> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let axis = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let axis = if axis.norm() < 0.1 { Vector3::z() } else { axis };
                Pose::new(
                    UnitQuaternion::from_axis_angle(&axis, rng.random_range(-3.0..3.0)).unwrap(),
                    Vector3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    ),
                )
            })
            .collect()
    }

    #[test]
    fn exact_estimate_scores_zero() {
        let truth = random_poses(1, 8);
        let aligned = align_to_truth(&truth, &truth, AlignMode::Anchor0).unwrap();
        assert_eq!(rel_err(&aligned, &truth).unwrap(), 0.0);
        assert_eq!(nrmse(&aligned, &truth).unwrap(), 0.0);
    }

    #[test]
    fn global_transform_is_removed_by_anchor0() {
        let truth = random_poses(2, 10);
        let gauge = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::new(0.3, -1.0, 0.5), 1.1).unwrap(),
            Vector3::new(4.0, -2.0, 7.0),
        );
        let est: Vec<Pose> = truth.iter().map(|p| gauge.compose(p)).collect();
        let aligned = align_to_truth(&est, &truth, AlignMode::Anchor0).unwrap();
        assert!(rel_err(&aligned, &truth).unwrap() <= 1e-9);
    }

    #[test]
    fn mode_none_is_passthrough() {
        let truth = random_poses(3, 4);
        let est = random_poses(4, 4);
        let aligned = align_to_truth(&est, &truth, AlignMode::None).unwrap();
        for (a, e) in aligned.iter().zip(&est) {
            assert_eq!(a.rotation.as_vec4(), e.rotation.as_vec4());
            assert_eq!(a.translation, e.translation);
        }
    }

    #[test]
    fn hand_computed_single_pose_value() {
        // One pose, quaternion error of norm sqrt(2)e-2, no translation
        // error, ||q0|| = 1, ||t0|| = 2: rel_err = 0.014142 / 3.
        let truth = vec![Pose::new(
            UnitQuaternion::identity(),
            Vector3::new(2.0, 0.0, 0.0),
        )];
        let delta = std::f64::consts::SQRT_2 * 1e-2;
        let est = vec![Pose::new(
            UnitQuaternion::new(1.0, 0.0, 0.0, delta).unwrap(),
            Vector3::new(2.0, 0.0, 0.0),
        )];
        let r = rel_err(&est, &truth).unwrap();
        assert!((r - 0.004714).abs() <= 2e-6, "rel_err = {r}");
    }

    #[test]
    fn sign_flip_is_absorbed_by_alignment() {
        let truth = random_poses(5, 6);
        let est: Vec<Pose> = truth
            .iter()
            .map(|p| Pose::new(p.rotation.antipode(), p.translation))
            .collect();
        let aligned = align_to_truth(&est, &truth, AlignMode::Anchor0).unwrap();
        assert!(rel_err(&aligned, &truth).unwrap() <= 1e-12);
    }

    #[test]
    fn metric_ratio_is_a_dataset_constant() {
        let truth = random_poses(6, 12);
        for seed in 0..4u64 {
            let est = random_poses(100 + seed, 12);
            let aligned = align_to_truth(&est, &truth, AlignMode::Anchor0).unwrap();
            let r = rel_err(&aligned, &truth).unwrap();
            let m = nrmse(&aligned, &truth).unwrap();
            let q0: f64 = (truth.len() as f64).sqrt();
            let t0: f64 = truth
                .iter()
                .map(|t| t.translation.norm_squared())
                .sum::<f64>()
                .sqrt();
            let expected = (q0 + t0) / (translation_spread(&truth) * (truth.len() as f64).sqrt());
            assert!((m / r - expected).abs() <= 1e-9 * expected);
        }
    }

    #[test]
    fn degenerate_spread_is_an_error() {
        let truth = vec![Pose::identity(), Pose::identity()];
        let est = random_poses(7, 2);
        assert_eq!(nrmse(&est, &truth), Err(MetricsError::DegenerateSpread));
        // rel_err still works (denominator includes sqrt(n) from rotations).
        assert!(rel_err(&est, &truth).is_ok());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let truth = random_poses(8, 3);
        let est = random_poses(9, 2);
        assert!(matches!(
            align_to_truth(&est, &truth, AlignMode::Anchor0),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            rel_err(&est, &truth),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn per_pose_errors_report_angles_and_distances() {
        let truth = vec![Pose::identity()];
        let est = vec![Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z(), 0.2).unwrap(),
            Vector3::new(0.0, 3.0, 4.0),
        )];
        let (angles, dists) = per_pose_errors(&est, &truth).unwrap();
        assert!((angles[0] - 0.2).abs() < 1e-12);
        assert!((dists[0] - 5.0).abs() < 1e-12);
    }
}
