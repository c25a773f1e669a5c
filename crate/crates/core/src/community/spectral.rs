use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::{canonical_labels, BinaryGraph};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, TAG_MISC};

const KMEANS_RESTARTS: u64 = 10;
const KMEANS_ITERATIONS: usize = 100;

/// Spectral clustering of the adjacency regularized by `τ = d̄ / p` on every
/// off-diagonal entry: the `q` leading eigenvectors, row-normalized, then
/// k-means.
pub fn spectral_init(g: &BinaryGraph, q: usize, seed: u64) -> Result<Vec<usize>> {
    let p = g.nodes();
    if q == 0 || q > p {
        return Err(Error::InvalidParameter(format!("need 1 <= Q <= {p}, got {q}")));
    }
    if q == 1 {
        return Ok(vec![0; p]);
    }
    let tau = g.degrees().iter().sum::<f64>() / (p * p) as f64;
    let mut perturbed = g.adjacency().add_scalar(tau);
    perturbed.fill_diagonal(0.0);

    let eig = SymmetricEigen::new(perturbed);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut embed = DMatrix::from_fn(p, q, |i, k| eig.eigenvectors[(i, order[k])]);
    for mut row in embed.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(kmeans(&embed, q, seed))
}

/// Lloyd's algorithm with k-means++ seeding; the best of several restarts
/// by within-cluster sum of squares. Labels are numbered by first
/// appearance.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let n = points.nrows();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = stream_rng(seed, TAG_MISC | (100 + restart));
        let (inertia, labels) = lloyd(points, k.min(n), &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b - 1e-12) {
            best = Some((inertia, labels));
        }
    }
    canonical_labels(&best.map(|(_, l)| l).unwrap_or_default()).0
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols()).map(|d| (points[(i, d)] - centers[(c, d)]).powi(2)).sum()
}

fn lloyd(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> (f64, Vec<usize>) {
    let (n, dim) = points.shape();
    let mut centers = DMatrix::zeros(k, dim);
    if n == 0 || k == 0 {
        return (0.0, vec![]);
    }
    // k-means++ seeding
    let first = rng.random_range(0..n);
    centers.set_row(0, &points.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERATIONS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let nearest = (0..k)
                .map(|c| (sq_dist(points, i, &centers, c), c))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, c)| c)
                .unwrap_or(0);
            if *label != nearest {
                *label = nearest;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let row = points.row(i).into_owned();
            let mut target = sums.row_mut(l);
            target += row;
        }
        for c in 0..k {
            // an emptied center keeps its previous position
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centers.set_row(c, &mean);
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points, i, &centers, labels[i])).sum();
    (inertia, labels)
}
