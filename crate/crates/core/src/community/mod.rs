//! Module extraction from an edge weight matrix: a stochastic block model
//! fitted by unconditional pseudo-likelihood on a thresholded graph, and
//! Ward hierarchical clustering with a small-cluster cutoff.

mod graph;
mod sbm;
mod spectral;
mod vote;
mod ward;

pub use graph::{discretize, BinaryGraph};
pub use sbm::{sbm_fit, sbm_select, SbmFit, DEFAULT_SBM_ITERATIONS};
pub use spectral::{kmeans, spectral_init};
pub use vote::{majority_vote, vote_clusters};
pub use ward::{hc_cut, hc_ward, Dendrogram, Merge};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Block labels are 0-based; block `k` is `labels[i] == k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityResult {
    pub labels: Vec<usize>,
    pub gamma: DVector<f64>,
    pub pi: DMatrix<f64>,
    pub selected_blocks: Vec<usize>,
    pub method_tag: String,
    pub warnings: Vec<String>,
}

impl CommunityResult {
    pub fn blocks(&self) -> usize {
        self.gamma.len()
    }

    pub fn members(&self, block: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == block).collect()
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        (0..self.blocks()).map(|k| self.members(k)).collect()
    }

    pub fn selected_clusters(&self) -> Vec<Vec<usize>> {
        self.selected_blocks.iter().map(|&k| self.members(k)).collect()
    }

    /// Union of the selected blocks, ascending.
    pub fn selected_genes(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.selected_blocks.contains(&self.labels[i]))
            .collect()
    }
}

/// Relabels so that blocks are numbered by first appearance; returns the
/// new labels and the number of distinct blocks.
pub fn canonical_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Block sizes over `q` blocks divided by the number of nodes.
pub(crate) fn proportions(labels: &[usize], q: usize) -> DVector<f64> {
    let mut gamma = DVector::zeros(q);
    for &l in labels {
        gamma[l] += 1.0;
    }
    gamma / labels.len().max(1) as f64
}

/// Mean of `w` over node pairs in blocks `(k, l)`, excluding self pairs.
/// Singleton diagonal blocks have no pairs and get 0.
pub(crate) fn block_means(w: &DMatrix<f64>, labels: &[usize], q: usize) -> DMatrix<f64> {
    let mut sum = DMatrix::<f64>::zeros(q, q);
    let mut count = DMatrix::<f64>::zeros(q, q);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if i != j {
                sum[(labels[i], labels[j])] += w[(i, j)];
                count[(labels[i], labels[j])] += 1.0;
            }
        }
    }
    sum.zip_map(&count, |s, c| if c > 0.0 { s / c } else { 0.0 })
}
