//! Unconditional pseudo-likelihood for the stochastic block model.
//!
//! Given labels `e`, each node's row is compressed to block counts
//! `b_ik = Σ_j A_ij 1{e_j = k}`. The counts are modeled as a mixture over
//! classes whose components are products of Poissons with means `λ_ck`;
//! EM fits `(γ, Λ)` with the counts held fixed, then every node moves to
//! its most probable class and the counts are recomputed.

use nalgebra::{DMatrix, DVector};

use super::{proportions, BinaryGraph, CommunityResult};
use crate::error::{Error, Result};

pub const DEFAULT_SBM_ITERATIONS: usize = 50;

const EM_SWEEPS: usize = 200;
const EM_TOL: f64 = 1e-10;
const RATE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SbmFit {
    pub result: CommunityResult,
    /// Mixture log-likelihood after every EM sweep, one list per outer
    /// relabeling iteration. Each list is nondecreasing.
    pub objective_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn block_counts(adj: &DMatrix<f64>, labels: &[usize], q: usize) -> DMatrix<f64> {
    let p = labels.len();
    let mut b = DMatrix::zeros(p, q);
    for i in 0..p {
        for j in 0..p {
            if adj[(i, j)] != 0.0 {
                b[(i, labels[j])] += 1.0;
            }
        }
    }
    b
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-node, per-class log joint `log γ_c + Σ_k (b_ik log λ_ck − λ_ck)`,
/// omitting the `log b_ik!` terms that do not depend on the parameters.
fn log_joint(b: &DMatrix<f64>, gamma: &DVector<f64>, rates: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = b.shape();
    DMatrix::from_fn(p, gamma.len(), |i, c| {
        if gamma[c] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        gamma[c].ln() + (0..q).map(|k| b[(i, k)] * rates[(c, k)].ln() - rates[(c, k)]).sum::<f64>()
    })
}

fn m_step(b: &DMatrix<f64>, post: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (p, q) = b.shape();
    let classes = post.ncols();
    let weight = post.row_sum().transpose();
    let gamma = &weight / p as f64;
    let rates = DMatrix::from_fn(classes, q, |c, k| {
        if weight[c] > 0.0 {
            let s: f64 = (0..p).map(|i| post[(i, c)] * b[(i, k)]).sum();
            (s / weight[c]).max(RATE_FLOOR)
        } else {
            RATE_FLOOR
        }
    });
    (gamma, rates)
}

/// EM on fixed counts starting from hard labels; returns the posterior and
/// the log-likelihood after every sweep.
fn mixture_em(b: &DMatrix<f64>, labels: &[usize], classes: usize) -> (DMatrix<f64>, Vec<f64>) {
    let p = b.nrows();
    let mut post = DMatrix::from_fn(p, classes, |i, c| if labels[i] == c { 1.0 } else { 0.0 });
    let mut trace = Vec::new();
    for _ in 0..EM_SWEEPS {
        let (gamma, rates) = m_step(b, &post);
        let joint = log_joint(b, &gamma, &rates);
        let mut ll = 0.0;
        for i in 0..p {
            let row: Vec<f64> = joint.row(i).iter().copied().collect();
            let norm = log_sum_exp(&row);
            ll += norm;
            for c in 0..classes {
                post[(i, c)] = (row[c] - norm).exp();
            }
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= EM_TOL * ll.abs().max(1.0));
        trace.push(ll);
        if done {
            break;
        }
    }
    (post, trace)
}

fn edge_density(adj: &DMatrix<f64>, labels: &[usize], q: usize) -> DMatrix<f64> {
    let sizes: Vec<f64> = (0..q).map(|k| labels.iter().filter(|&&l| l == k).count() as f64).collect();
    let mut edges = DMatrix::<f64>::zeros(q, q);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            edges[(labels[i], labels[j])] += adj[(i, j)];
        }
    }
    DMatrix::from_fn(q, q, |k, l| {
        let pairs = if k == l { sizes[k] * (sizes[k] - 1.0) } else { sizes[k] * sizes[l] };
        if pairs > 0.0 {
            edges[(k, l)] / pairs
        } else {
            0.0
        }
    })
}

/// Fits a `q`-block model starting from `init` (labels in `0..q`). Blocks
/// that end up empty are dropped and reported in `warnings`.
pub fn sbm_fit(g: &BinaryGraph, q: usize, init: &[usize], max_iter: usize) -> Result<SbmFit> {
    let p = g.nodes();
    if init.len() != p {
        return Err(Error::Dimension(format!("{} initial labels for {p} nodes", init.len())));
    }
    if q == 0 || init.iter().any(|&l| l >= q) {
        return Err(Error::InvalidParameter(format!("initial labels must lie in 0..{q}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be positive".into()));
    }
    let adj = g.adjacency();
    let mut labels = init.to_vec();
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let b = block_counts(adj, &labels, q);
        let (post, trace) = mixture_em(&b, &labels, q);
        objective_trace.push(trace);
        let next: Vec<usize> = (0..p)
            .map(|i| {
                // ties go to the current label, then the lowest class
                let mut best = labels[i];
                for c in 0..q {
                    if post[(i, c)] > post[(i, best)] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }

    let mut used: Vec<usize> = labels.clone();
    used.sort_unstable();
    used.dedup();
    let mut warnings = Vec::new();
    if used.len() < q {
        warnings.push(format!("{} of {q} blocks are empty; reporting {} blocks", q - used.len(), used.len()));
        log::warn!("{}", warnings[0]);
    }
    let labels: Vec<usize> = labels.iter().map(|l| used.binary_search(l).expect("label is used")).collect();
    let q_eff = used.len();
    let mut result = CommunityResult {
        gamma: proportions(&labels, q_eff),
        pi: edge_density(adj, &labels, q_eff),
        labels,
        selected_blocks: Vec::new(),
        method_tag: "sbm".into(),
        warnings,
    };
    result.selected_blocks = vec![sbm_select(&result)];
    Ok(SbmFit {
        result,
        objective_trace,
        iterations,
        converged,
    })
}

/// The block with the highest internal edge density; ties go to the smaller
/// block, then the lower id.
pub fn sbm_select(r: &CommunityResult) -> usize {
    let sizes: Vec<usize> = (0..r.blocks()).map(|k| r.labels.iter().filter(|&&l| l == k).count()).collect();
    (0..r.blocks())
        .min_by(|&a, &b| {
            r.pi[(b, b)]
                .total_cmp(&r.pi[(a, a)])
                .then(sizes[a].cmp(&sizes[b]))
                .then(a.cmp(&b))
        })
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::{canonical_labels, spectral_init};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn planted(p: usize, within: f64, between: f64, seed: u64) -> BinaryGraph {
        let mut rng = stream_rng(seed, 77);
        let mut adj = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in (i + 1)..p {
                let prob = if (i < p / 2) == (j < p / 2) { within } else { between };
                if rng.random_bool(prob) {
                    adj[(i, j)] = 1.0;
                    adj[(j, i)] = 1.0;
                }
            }
        }
        BinaryGraph::from_adjacency(adj, 0.5).unwrap()
    }

    fn result_with(pi: &[f64], labels: Vec<usize>) -> CommunityResult {
        let q = 2;
        CommunityResult {
            gamma: proportions(&labels, q),
            pi: DMatrix::from_row_slice(q, q, pi),
            labels,
            selected_blocks: vec![],
            method_tag: "test".into(),
            warnings: vec![],
        }
    }

    #[test]
    fn single_block_reports_global_density() {
        let g = planted(30, 0.5, 0.5, 1);
        let fit = sbm_fit(&g, 1, &[0; 30], 10).unwrap();
        let density = g.edge_count() as f64 / (30.0 * 29.0 / 2.0);
        assert!((fit.result.pi[(0, 0)] - density).abs() < 1e-12);
        assert_eq!(fit.result.gamma, DVector::from_vec(vec![1.0]));
    }

    #[test]
    fn disconnected_cliques_have_zero_between_density() {
        let p = 20;
        let adj = DMatrix::from_fn(p, p, |i, j| if i != j && (i < 10) == (j < 10) { 1.0 } else { 0.0 });
        let g = BinaryGraph::from_adjacency(adj, 0.5).unwrap();
        let init = spectral_init(&g, 2, 0).unwrap();
        let fit = sbm_fit(&g, 2, &init, 50).unwrap();
        assert_eq!(fit.result.pi[(0, 1)], 0.0);
        assert_eq!(fit.result.pi[(0, 0)], 1.0);
        assert!(fit.converged);
    }

    #[test]
    fn planted_partition_is_recovered() {
        let g = planted(100, 0.8, 0.05, 4);
        let init = spectral_init(&g, 2, 4).unwrap();
        let fit = sbm_fit(&g, 2, &init, DEFAULT_SBM_ITERATIONS).unwrap();
        let truth: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        assert_eq!(canonical_labels(&fit.result.labels).0, truth);
    }

    #[test]
    fn em_sweeps_never_decrease_the_objective() {
        for seed in 0..5 {
            let g = planted(60, 0.5, 0.2, seed);
            let mut rng = stream_rng(seed, 5);
            let init: Vec<usize> = (0..60).map(|_| rng.random_range(0..3)).collect();
            let fit = sbm_fit(&g, 3, &init, 20).unwrap();
            for sweep in &fit.objective_trace {
                for w in sweep.windows(2) {
                    assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
                }
            }
        }
    }

    #[test]
    fn empty_blocks_are_dropped_with_a_warning() {
        let g = planted(20, 0.9, 0.0, 2);
        let init: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let fit = sbm_fit(&g, 3, &init, 10).unwrap();
        assert_eq!(fit.result.blocks(), 2);
        assert_eq!(fit.result.warnings.len(), 1);
        assert!((fit.result.gamma.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn selection_rules() {
        assert_eq!(sbm_select(&result_with(&[0.9, 0.0, 0.0, 0.1], vec![0, 0, 1])), 0);
        assert_eq!(sbm_select(&result_with(&[0.1, 0.0, 0.0, 0.9], vec![0, 0, 1])), 1);
        // equal densities: the smaller block wins
        let mut labels = vec![0; 50];
        labels.extend([1; 5]);
        assert_eq!(sbm_select(&result_with(&[0.5, 0.0, 0.0, 0.5], labels)), 1);
    }

    #[test]
    fn bad_initial_labels() {
        let g = planted(10, 0.5, 0.5, 0);
        assert!(sbm_fit(&g, 2, &[0; 9], 5).is_err());
        assert!(sbm_fit(&g, 2, &[2; 10], 5).is_err());
        assert!(sbm_fit(&g, 2, &[0; 10], 0).is_err());
    }
}
