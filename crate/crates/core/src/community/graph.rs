use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::netweave::EdgeWeightMatrix;

/// Unweighted undirected graph with no self loops, stored as a dense 0/1
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryGraph {
    adjacency: DMatrix<f64>,
    threshold_used: f64,
}

impl BinaryGraph {
    pub fn from_adjacency(adjacency: DMatrix<f64>, threshold_used: f64) -> Result<Self> {
        let p = adjacency.nrows();
        if adjacency.ncols() != p {
            return Err(Error::Dimension("adjacency must be square".into()));
        }
        for i in 0..p {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!("self loop at node {i}")));
            }
            for j in 0..p {
                let v = adjacency[(i, j)];
                if (v != 0.0 && v != 1.0) || v != adjacency[(j, i)] {
                    return Err(Error::InvalidParameter(format!("entry ({i}, {j}) is not a symmetric 0/1 value")));
                }
            }
        }
        Ok(Self {
            adjacency,
            threshold_used,
        })
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn threshold_used(&self) -> f64 {
        self.threshold_used
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn edge_count(&self) -> usize {
        (self.adjacency.sum() / 2.0).round() as usize
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_iter().map(|r| r.sum()).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)] == 1.0
    }
}

/// Keeps the edges with `Ā_ij ≥ threshold`.
pub fn discretize(a: &EdgeWeightMatrix, threshold: f64) -> Result<BinaryGraph> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside (0, 1]")));
    }
    let w = a.weights();
    let adjacency = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        if i != j && w[(i, j)] >= threshold {
            1.0
        } else {
            0.0
        }
    });
    Ok(BinaryGraph {
        adjacency,
        threshold_used: threshold,
    })
}
