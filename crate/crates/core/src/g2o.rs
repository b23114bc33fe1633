//! Reading and writing pose graphs in the g2o text format
//! (`VERTEX_SE3:QUAT` / `EDGE_SE3:QUAT` lines).
//!
//! Files store quaternions as `(qx, qy, qz, qw)`; conversion to the internal
//! `(w, x, y, z)` order happens here and nowhere else. Edge lines carry the
//! 21 row-major upper-triangle entries of a 6x6 information matrix with the
//! translation block first; [`info_to_sigmas`] maps it onto the model's pair
//! of 4x4 weights.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix4, Matrix6, Vector3};
use thiserror::Error;

use crate::graph::{Edge, GraphError, Pose, PoseGraph};
use crate::linalg::is_symmetric_psd;
use crate::quat::Quaternion;

const VERTEX_TAG: &str = "VERTEX_SE3:QUAT";
const EDGE_TAG: &str = "EDGE_SE3:QUAT";

#[derive(Debug, Error)]
pub enum G2oError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: edge references unknown vertex {id}")]
    MissingVertex { line: usize, id: i64 },
    #[error("line {line}: duplicate vertex id {id}")]
    DuplicateVertex { line: usize, id: i64 },
    #[error("information matrix is not symmetric positive semidefinite")]
    NonPsdInformation,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Counters for tolerated oddities encountered while loading.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LoadReport {
    /// Lines with an unrecognized tag, skipped.
    pub skipped_unknown_tags: usize,
    /// Measurement quaternions whose stored norm drifted more than 1e-6.
    pub renormalized_rotations: usize,
    /// Edges whose information matrix had nonzero translation-rotation cross
    /// blocks (discarded by the sigma mapping).
    pub edges_with_cross_block: usize,
}

/// A parsed g2o file: the graph, the stored vertex estimates, and the
/// original vertex ids (internal ids are dense 0-based, in file order).
#[derive(Debug)]
pub struct LoadedGraph {
    pub graph: PoseGraph,
    pub poses: Vec<Pose>,
    pub original_ids: Vec<i64>,
    pub report: LoadReport,
}

/// Splits a 6x6 information matrix into the model's translation weight
/// `sigma1` and rotation weight `sigma2`.
///
/// The translational 3x3 block is kept exactly as the imaginary-part block of
/// `sigma1`, with the real-part weight fixed at 1 and no cross coupling (the
/// residual's real part vanishes on the constraint set, so these entries
/// never influence the objective). The rotation weight is isotropic,
/// `sigma2 = mean(diag(rotational block)) * I4`. Cross blocks between
/// translation and rotation have no home in the factorized model and are
/// discarded.
pub fn info_to_sigmas(info: &Matrix6<f64>) -> Result<(Matrix4<f64>, Matrix4<f64>), G2oError> {
    if !is_symmetric_psd(info, 1e-9) {
        return Err(G2oError::NonPsdInformation);
    }
    let mut sigma1 = Matrix4::zeros();
    sigma1[(0, 0)] = 1.0;
    for r in 0..3 {
        for c in 0..3 {
            sigma1[(r + 1, c + 1)] = info[(r, c)];
        }
    }
    let kappa_bar = (info[(3, 3)] + info[(4, 4)] + info[(5, 5)]) / 3.0;
    let sigma2 = Matrix4::identity() * kappa_bar;
    Ok((sigma1, sigma2))
}

/// Inverse of [`info_to_sigmas`] used when writing: block-diagonal 6x6 from
/// the translational block of `sigma1` and the mean diagonal of `sigma2`.
pub fn sigmas_to_info(sigma1: &Matrix4<f64>, sigma2: &Matrix4<f64>) -> Matrix6<f64> {
    let mut info = Matrix6::zeros();
    for r in 0..3 {
        for c in 0..3 {
            info[(r, c)] = sigma1[(r + 1, c + 1)];
        }
    }
    let kappa_bar = sigma2.diagonal().sum() / 4.0;
    for r in 3..6 {
        info[(r, r)] = kappa_bar;
    }
    info
}

fn has_cross_block(info: &Matrix6<f64>) -> bool {
    for r in 0..3 {
        for c in 3..6 {
            if info[(r, c)] != 0.0 {
                return true;
            }
        }
    }
    false
}

struct RawEdge {
    line: usize,
    from: i64,
    to: i64,
    t: Vector3<f64>,
    q: Quaternion,
    info: Matrix6<f64>,
}

fn parse_floats(parts: &[&str], line: usize) -> Result<Vec<f64>, G2oError> {
    parts
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|_| G2oError::Malformed {
                line,
                reason: format!("expected a number, got {s:?}"),
            })
        })
        .collect()
}

/// Loads a pose graph and the stored vertex estimates.
pub fn load_g2o(path: impl AsRef<Path>) -> Result<LoadedGraph, G2oError> {
    let text = std::fs::read_to_string(path)?;
    let mut report = LoadReport::default();
    let mut original_ids = Vec::new();
    let mut id_map: HashMap<i64, usize> = HashMap::new();
    let mut poses = Vec::new();
    let mut raw_edges = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        match parts[0] {
            VERTEX_TAG => {
                if parts.len() != 9 {
                    return Err(G2oError::Malformed {
                        line,
                        reason: format!("vertex line has {} fields, expected 9", parts.len()),
                    });
                }
                let id: i64 = parts[1].parse().map_err(|_| G2oError::Malformed {
                    line,
                    reason: format!("bad vertex id {:?}", parts[1]),
                })?;
                if id_map.contains_key(&id) {
                    return Err(G2oError::DuplicateVertex { line, id });
                }
                let v = parse_floats(&parts[2..], line)?;
                let q = quat_from_file_order(v[3], v[4], v[5], v[6]);
                let rotation = normalized_measurement(q, &mut report, line)?;
                id_map.insert(id, poses.len());
                original_ids.push(id);
                poses.push(Pose::new(rotation, Vector3::new(v[0], v[1], v[2])));
            }
            EDGE_TAG => {
                if parts.len() != 31 {
                    return Err(G2oError::Malformed {
                        line,
                        reason: format!("edge line has {} fields, expected 31", parts.len()),
                    });
                }
                let from: i64 = parts[1].parse().map_err(|_| G2oError::Malformed {
                    line,
                    reason: format!("bad vertex id {:?}", parts[1]),
                })?;
                let to: i64 = parts[2].parse().map_err(|_| G2oError::Malformed {
                    line,
                    reason: format!("bad vertex id {:?}", parts[2]),
                })?;
                let v = parse_floats(&parts[3..], line)?;
                let mut info = Matrix6::zeros();
                let mut k = 7;
                for r in 0..6 {
                    for c in r..6 {
                        info[(r, c)] = v[k];
                        info[(c, r)] = v[k];
                        k += 1;
                    }
                }
                raw_edges.push(RawEdge {
                    line,
                    from,
                    to,
                    t: Vector3::new(v[0], v[1], v[2]),
                    q: quat_from_file_order(v[3], v[4], v[5], v[6]),
                    info,
                });
            }
            _ => {
                report.skipped_unknown_tags += 1;
            }
        }
    }

    let mut edges = Vec::with_capacity(raw_edges.len());
    for raw in raw_edges {
        let from = *id_map.get(&raw.from).ok_or(G2oError::MissingVertex {
            line: raw.line,
            id: raw.from,
        })?;
        let to = *id_map.get(&raw.to).ok_or(G2oError::MissingVertex {
            line: raw.line,
            id: raw.to,
        })?;
        if has_cross_block(&raw.info) {
            report.edges_with_cross_block += 1;
        }
        let (sigma1, sigma2) = info_to_sigmas(&raw.info).map_err(|e| match e {
            G2oError::NonPsdInformation => G2oError::Malformed {
                line: raw.line,
                reason: "information matrix is not symmetric PSD".into(),
            },
            other => other,
        })?;
        let rotation = normalized_measurement(raw.q, &mut report, raw.line)?;
        edges.push(Edge::new(from, to, rotation, raw.t, sigma1, sigma2));
    }

    if report.skipped_unknown_tags > 0 {
        log::warn!("skipped {} lines with unknown tags", report.skipped_unknown_tags);
    }
    if report.edges_with_cross_block > 0 {
        log::warn!(
            "discarded translation-rotation cross weights on {} edges",
            report.edges_with_cross_block
        );
    }

    let graph = PoseGraph::new(poses.len(), edges)?;
    Ok(LoadedGraph {
        graph,
        poses,
        original_ids,
        report,
    })
}

fn quat_from_file_order(qx: f64, qy: f64, qz: f64, qw: f64) -> Quaternion {
    Quaternion::new(qw, qx, qy, qz)
}

fn normalized_measurement(
    q: Quaternion,
    report: &mut LoadReport,
    line: usize,
) -> Result<crate::quat::UnitQuaternion, G2oError> {
    if (q.norm() - 1.0).abs() > 1e-6 {
        report.renormalized_rotations += 1;
    }
    q.normalized().map_err(|e| G2oError::Malformed {
        line,
        reason: e.to_string(),
    })
}

/// Writes vertices and edges; floats carry 12 significant digits so that a
/// reload reproduces values within 1e-9.
pub fn save_g2o(
    graph: &PoseGraph,
    poses: &[Pose],
    path: impl AsRef<Path>,
) -> Result<(), G2oError> {
    let mut out = String::new();
    for (i, pose) in poses.iter().enumerate() {
        let t = pose.translation;
        let q = pose.rotation.as_quat();
        writeln!(
            out,
            "{VERTEX_TAG} {i} {} {} {} {} {} {} {}",
            fmt(t.x),
            fmt(t.y),
            fmt(t.z),
            fmt(q.x),
            fmt(q.y),
            fmt(q.z),
            fmt(q.w)
        )
        .expect("writing to string cannot fail");
    }
    for e in graph.edges() {
        let q = e.rotation.as_quat();
        let info = sigmas_to_info(&e.sigma1, &e.sigma2);
        let mut line = format!(
            "{EDGE_TAG} {} {} {} {} {} {} {} {} {}",
            e.from,
            e.to,
            fmt(e.translation.x),
            fmt(e.translation.y),
            fmt(e.translation.z),
            fmt(q.x),
            fmt(q.y),
            fmt(q.z),
            fmt(q.w)
        );
        for r in 0..6 {
            for c in r..6 {
                line.push(' ');
                line.push_str(&fmt(info[(r, c)]));
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// Writes only vertex lines (used for ground-truth files).
pub fn save_g2o_vertices(poses: &[Pose], path: impl AsRef<Path>) -> Result<(), G2oError> {
    let empty = PoseGraph::new(poses.len(), Vec::new())?;
    save_g2o(&empty, poses, path)
}
