//! The pose-graph data model: vertices carry poses, directed edges carry
//! relative measurements with separate translation and rotation weights.
//!
//! Adjacency is built at construction and the graph is immutable afterwards,
//! so shared read access from worker threads needs no synchronization.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use thiserror::Error;

use crate::linalg::is_symmetric_psd;
use crate::quat::UnitQuaternion;

const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge {index} connects vertex {vertex} outside 0..{n}")]
    VertexOutOfRange { index: usize, vertex: usize, n: usize },
    #[error("edge {index} is a self-loop at vertex {vertex}")]
    SelfLoop { index: usize, vertex: usize },
    #[error("sigma{which} of edge ({from}, {to}) is not symmetric PSD")]
    WeightNotPsd { which: u8, from: usize, to: usize },
}

/// A rigid-body pose: unit-quaternion rotation plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// `self` then `other`: `(q1 q2, t1 + R(q1) t2)`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation.rotate(&other.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.conjugate();
        Pose {
            rotation: inv_rot,
            translation: -inv_rot.rotate(&self.translation),
        }
    }

    /// The relative pose taking `self`'s frame to `other`'s frame.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }
}

/// A directed relative measurement from vertex `from` to vertex `to`.
///
/// `sigma1` weights the 4-dimensional translation residual and `sigma2` the
/// rotation residual; both are symmetric positive semidefinite. The 3x3
/// translational block of `sigma1` is exposed via [`Edge::sigma1_hat`].
#[derive(Debug, Clone)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub rotation: UnitQuaternion,
    pub translation: Vector3<f64>,
    pub sigma1: Matrix4<f64>,
    pub sigma2: Matrix4<f64>,
}

impl Edge {
    pub fn new(
        from: usize,
        to: usize,
        rotation: UnitQuaternion,
        translation: Vector3<f64>,
        sigma1: Matrix4<f64>,
        sigma2: Matrix4<f64>,
    ) -> Self {
        Self {
            from,
            to,
            rotation,
            translation,
            sigma1,
            sigma2,
        }
    }

    /// Identity-weighted edge.
    pub fn with_unit_weights(
        from: usize,
        to: usize,
        rotation: UnitQuaternion,
        translation: Vector3<f64>,
    ) -> Self {
        Self::new(
            from,
            to,
            rotation,
            translation,
            Matrix4::identity(),
            Matrix4::identity(),
        )
    }

    /// Scalar entry weighting the (identically zero at feasibility) real part
    /// of the translation residual.
    pub fn sigma11(&self) -> f64 {
        self.sigma1[(0, 0)]
    }

    /// Cross weights between real and imaginary translation-residual parts.
    pub fn sigma12(&self) -> Vector3<f64> {
        Vector3::new(self.sigma1[(0, 1)], self.sigma1[(0, 2)], self.sigma1[(0, 3)])
    }

    /// The 3x3 block of `sigma1` acting on the imaginary (vector) part.
    pub fn sigma1_hat(&self) -> Matrix3<f64> {
        self.sigma1.fixed_view::<3, 3>(1, 1).into_owned()
    }

    /// The measured translation as a 4-vector `[0, t]`.
    pub fn translation_quat(&self) -> Vector4<f64> {
        Vector4::new(0.0, self.translation.x, self.translation.y, self.translation.z)
    }
}

/// A directed multigraph of `n` vertices with per-vertex adjacency
/// partitions: `out_edges(i)` are edges with source `i`, `in_edges(i)` edges
/// with target `i`. Every edge appears in exactly one out-list and one
/// in-list.
#[derive(Debug, Clone)]
pub struct PoseGraph {
    n: usize,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl PoseGraph {
    /// Validates edges and builds the adjacency partition.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        for (index, e) in edges.iter().enumerate() {
            if e.from >= n {
                return Err(GraphError::VertexOutOfRange {
                    index,
                    vertex: e.from,
                    n,
                });
            }
            if e.to >= n {
                return Err(GraphError::VertexOutOfRange {
                    index,
                    vertex: e.to,
                    n,
                });
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop {
                    index,
                    vertex: e.from,
                });
            }
            if !is_symmetric_psd(&e.sigma1, PSD_TOL) {
                return Err(GraphError::WeightNotPsd {
                    which: 1,
                    from: e.from,
                    to: e.to,
                });
            }
            if !is_symmetric_psd(&e.sigma2, PSD_TOL) {
                return Err(GraphError::WeightNotPsd {
                    which: 2,
                    from: e.from,
                    to: e.to,
                });
            }
        }
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (index, e) in edges.iter().enumerate() {
            out_adj[e.from].push(index);
            in_adj[e.to].push(index);
        }
        Ok(Self {
            n,
            edges,
            out_adj,
            in_adj,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> &Edge {
        &self.edges[index]
    }

    /// Indices of edges whose source is `i`.
    pub fn out_edges(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    /// Indices of edges whose target is `i`.
    pub fn in_edges(&self, i: usize) -> &[usize] {
        &self.in_adj[i]
    }

    /// Undirected connected components, as a vertex -> component-id map plus
    /// the component count.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let mut component = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if component[start] != usize::MAX {
                continue;
            }
            component[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &ei in self.out_adj[v].iter().chain(&self.in_adj[v]) {
                    let e = &self.edges[ei];
                    let other = if e.from == v { e.to } else { e.from };
                    if component[other] == usize::MAX {
                        component[other] = count;
                        stack.push(other);
                    }
                }
            }
            count += 1;
        }
        (component, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_edge(from: usize, to: usize) -> Edge {
        Edge::with_unit_weights(from, to, UnitQuaternion::identity(), Vector3::x())
    }

    #[test]
    fn three_cycle_adjacency() {
        let g = PoseGraph::new(3, vec![unit_edge(0, 1), unit_edge(1, 2), unit_edge(2, 0)]).unwrap();
        for i in 0..3 {
            assert_eq!(g.out_edges(i).len(), 1);
            assert_eq!(g.in_edges(i).len(), 1);
        }
        assert_eq!(g.out_edges(0), &[0]);
        assert_eq!(g.in_edges(0), &[2]);
    }

    #[test]
    fn empty_edge_set() {
        let g = PoseGraph::new(4, vec![]).unwrap();
        for i in 0..4 {
            assert!(g.out_edges(i).is_empty());
            assert!(g.in_edges(i).is_empty());
        }
        assert_eq!(g.connected_components().1, 4);
    }

    #[test]
    fn duplicate_edges_kept_as_multiset() {
        let g = PoseGraph::new(2, vec![unit_edge(0, 1), unit_edge(0, 1)]).unwrap();
        assert_eq!(g.out_edges(0).len(), 2);
        assert_eq!(g.in_edges(1).len(), 2);
    }

    #[test]
    fn rejects_out_of_range_and_self_loop() {
        assert!(matches!(
            PoseGraph::new(2, vec![unit_edge(0, 2)]),
            Err(GraphError::VertexOutOfRange { .. })
        ));
        let bad = Edge::with_unit_weights(1, 1, UnitQuaternion::identity(), Vector3::zeros());
        assert!(matches!(
            PoseGraph::new(2, vec![bad]),
            Err(GraphError::SelfLoop { .. })
        ));
    }

    #[test]
    fn rejects_non_psd_weight() {
        let mut e = unit_edge(0, 1);
        e.sigma1[(1, 1)] = -1.0;
        assert!(matches!(
            PoseGraph::new(2, vec![e]),
            Err(GraphError::WeightNotPsd { which: 1, .. })
        ));
    }

    #[test]
    fn pose_compose_inverse_round_trip() {
        let a = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z(), 0.7).unwrap(),
            Vector3::new(1.0, -2.0, 0.5),
        );
        let b = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), -0.3).unwrap(),
            Vector3::new(0.0, 3.0, 1.0),
        );
        let rel = a.between(&b);
        let back = a.compose(&rel);
        assert!((back.translation - b.translation).norm() < 1e-12);
        assert!((back.rotation.as_vec4() - b.rotation.as_vec4()).norm() < 1e-12);
        let e = a.compose(&a.inverse());
        assert!((e.translation.norm()) < 1e-12);
        assert!((e.rotation.as_vec4() - Vector4::new(1.0, 0.0, 0.0, 0.0)).norm() < 1e-12);
    }

    proptest! {
        /// The adjacency lists partition the edge set: every edge appears in
        /// exactly one out-list and one in-list, and per-vertex in/out lists
        /// are disjoint.
        #[test]
        fn adjacency_partitions_edges(
            n in 2usize..12,
            pairs in proptest::collection::vec((0usize..12, 0usize..12), 0..40),
        ) {
            let edges: Vec<Edge> = pairs
                .into_iter()
                .map(|(a, b)| (a % n, b % n))
                .filter(|(a, b)| a != b)
                .map(|(a, b)| unit_edge(a, b))
                .collect();
            let m = edges.len();
            let g = PoseGraph::new(n, edges).unwrap();

            let mut seen_out = vec![false; m];
            let mut seen_in = vec![false; m];
            for i in 0..n {
                for &e in g.out_edges(i) {
                    prop_assert!(!seen_out[e]);
                    seen_out[e] = true;
                    prop_assert_eq!(g.edge(e).from, i);
                }
                for &e in g.in_edges(i) {
                    prop_assert!(!seen_in[e]);
                    seen_in[e] = true;
                    prop_assert_eq!(g.edge(e).to, i);
                }
                // in/out lists at one vertex are disjoint (no self-loops).
                for &e in g.out_edges(i) {
                    prop_assert!(!g.in_edges(i).contains(&e));
                }
            }
            prop_assert!(seen_out.iter().all(|&s| s));
            prop_assert!(seen_in.iter().all(|&s| s));
        }
    }
}
