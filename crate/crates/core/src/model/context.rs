use crate::arc_graph::ArcGraph;
use crate::autodiff::Matrix;
use crate::error::Result;
use crate::features::{classical_mds, FeatureScale, MdsCoords};
use crate::instance::Instance;
use crate::shortest_path::{all_pairs_shortest_paths, DistanceMatrix};

/// Everything the policy needs about one instance, computed once.
#[derive(Debug, Clone)]
pub struct InstanceContext {
    pub instance: Instance,
    pub dist: DistanceMatrix,
    pub graph: ArcGraph,
    pub mds: MdsCoords,
    pub scale: FeatureScale,
    incoming: Matrix,
}

impl InstanceContext {
    pub fn new(instance: Instance, mds_dim: usize) -> Result<InstanceContext> {
        instance.check()?;
        let dist = all_pairs_shortest_paths(&instance)?;
        let graph = ArcGraph::transform(&instance, &dist);
        let mds = classical_mds(&dist, mds_dim);
        let scale = FeatureScale::new(&dist, instance.capacity);
        let n = graph.len();
        let mut incoming = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                incoming.set(i, j, graph.weight(j, i) as f64 / scale.distance);
            }
        }
        Ok(InstanceContext {
            instance,
            dist,
            graph,
            mds,
            scale,
            incoming,
        })
    }

    /// Entry `(i, j)` is the normalized weight of the arc-graph edge from arc
    /// `j` into arc `i`.
    pub fn incoming_weights(&self) -> &Matrix {
        &self.incoming
    }
}
