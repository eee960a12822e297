//! Node embedding by classical multidimensional scaling and the per-step arc
//! feature matrix consumed by the policy.
//!
//! Row layout for arc `i` (width `2d + 5`):
//!
//! | column        | content                                         |
//! |---------------|-------------------------------------------------|
//! | 0             | 1 for the depot arc, else 0                     |
//! | 1             | arc cost / distance scale                       |
//! | 2             | arc demand / capacity                           |
//! | 3 .. 3+d      | MDS coordinates of the start node / dist. scale |
//! | 3+d .. 3+2d   | MDS coordinates of the end node / dist. scale   |
//! | 3+2d          | weight from the last chosen arc / dist. scale   |
//! | 4+2d          | 1 if the arc may be chosen as a service now     |

use nalgebra::{DMatrix, SymmetricEigen};

use crate::arc_graph::{ArcGraph, DEPOT_ARC};
use crate::autodiff::Matrix;
use crate::env::EnvState;
use crate::shortest_path::DistanceMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MdsCoords {
    /// `n x dim`, row-major.
    pub coords: Vec<f64>,
    pub dim: usize,
    /// Eigenvalues of the used axes, nonincreasing and clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Sum of all positive eigenvalues of the centered Gram matrix.
    pub positive_trace: f64,
}

impl MdsCoords {
    pub fn node(&self, n: usize) -> &[f64] {
        &self.coords[n * self.dim..(n + 1) * self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.coords.len() / self.dim.max(1)
    }
}

/// Double-centered Gram matrix `-1/2 J (D o D) J`.
pub fn double_center(dist: &DistanceMatrix) -> DMatrix<f64> {
    let n = dist.len();
    let sq = DMatrix::from_fn(n, n, |i, j| {
        let d = dist.get(i, j) as f64;
        d * d
    });
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    // D is symmetric so column means equal row means
    DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand))
}

/// Torgerson MDS into `dim` dimensions.
///
/// Axes are ordered by descending eigenvalue (ties by index); each axis is
/// signed so that its largest-magnitude eigenvector entry is positive, with
/// ties going to the lowest node index.
pub fn classical_mds(dist: &DistanceMatrix, dim: usize) -> MdsCoords {
    let n = dist.len();
    let mut coords = vec![0.0; n * dim];
    let mut eigenvalues = vec![0.0; dim];
    if n == 0 || dim == 0 {
        return MdsCoords {
            coords,
            dim,
            eigenvalues,
            positive_trace: 0.0,
        };
    }
    let b = double_center(dist);
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&c))
    });
    let positive_trace = eig.eigenvalues.iter().filter(|&&l| l > 0.0).sum();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs())).max(1.0);
    for (axis, &k) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[k];
        // numerical zeros count as zero
        if lambda <= 1e-12 * scale {
            continue;
        }
        eigenvalues[axis] = lambda;
        let v = eig.eigenvectors.column(k);
        let max_abs = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let pivot = v
            .iter()
            .position(|x| x.abs() >= max_abs * (1.0 - 1e-9))
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let root = lambda.sqrt();
        for node in 0..n {
            coords[node * dim + axis] = sign * v[node] * root;
        }
    }
    MdsCoords {
        coords,
        dim,
        eigenvalues,
        positive_trace,
    }
}

/// Fixed normalizers for scalar features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale {
    pub distance: f64,
    pub demand: f64,
}

impl FeatureScale {
    pub fn new(dist: &DistanceMatrix, capacity: u32) -> Self {
        FeatureScale {
            distance: (dist.max_entry() as f64).max(1.0),
            demand: (capacity as f64).max(1.0),
        }
    }
}

pub fn feature_dim(mds_dim: usize) -> usize {
    2 * mds_dim + 5
}

/// Builds the arc feature matrix for `state`.
pub fn build_features(
    graph: &ArcGraph,
    mds: &MdsCoords,
    scale: FeatureScale,
    state: &EnvState,
) -> Matrix {
    let d = mds.dim;
    let width = feature_dim(d);
    let last = state.last();
    let mut m = Matrix::zeros(graph.len(), width);
    for arc in &graph.arcs {
        let row = m.row_mut(arc.id);
        row[0] = if arc.is_depot { 1.0 } else { 0.0 };
        row[1] = arc.cost as f64 / scale.distance;
        row[2] = arc.demand as f64 / scale.demand;
        for (k, x) in mds.node(arc.start).iter().enumerate() {
            row[3 + k] = x / scale.distance;
        }
        for (k, x) in mds.node(arc.end).iter().enumerate() {
            row[3 + d + k] = x / scale.distance;
        }
        row[3 + 2 * d] = graph.weight(last, arc.id) as f64 / scale.distance;
        let allow = if arc.id == DEPOT_ARC {
            state.depot_allowed()
        } else {
            state.serve_flags[arc.id]
        };
        row[4 + 2 * d] = if allow { 1.0 } else { 0.0 };
    }
    m
}
