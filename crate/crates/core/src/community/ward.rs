//! Agglomerative clustering with Ward's criterion on the squared distances
//! `1 - Ā_ij`.
//!
//! The merge cost of clusters `M1`, `M2` is `n1 n2 / (n1 + n2) ‖m1 - m2‖²`,
//! maintained with the Lance–Williams recurrence. Leaves are clusters
//! `0..p`; the cluster created by merge `s` gets id `p + s`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{block_means, canonical_labels, proportions, CommunityResult};
use crate::error::{Error, Result};
use crate::netweave::EdgeWeightMatrix;

/// Costs this close (relative) are treated as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// The smaller of the two merged cluster ids.
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

pub(crate) fn better(cost: f64, pair: (usize, usize), best_cost: f64, best_pair: (usize, usize)) -> bool {
    let scale = cost.abs().max(best_cost.abs());
    if (cost - best_cost).abs() <= TIE_TOL * scale {
        pair < best_pair
    } else {
        cost < best_cost
    }
}

pub fn hc_ward(a: &EdgeWeightMatrix) -> Result<Dendrogram> {
    let p = a.len();
    if p < 2 {
        return Err(Error::InvalidParameter("clustering needs at least two genes".into()));
    }
    let w = a.weights();
    // slot i holds cluster `ids[i]` while `active[i]`
    let mut cost = DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { (1.0 - w[(i, j)]) / 2.0 });
    let mut ids: Vec<usize> = (0..p).collect();
    let mut sizes = vec![1usize; p];
    let mut active = vec![true; p];
    let mut merges = Vec::with_capacity(p - 1);

    for step in 0..p - 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for i in 0..p {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..p {
                if !active[j] {
                    continue;
                }
                let c = cost[(i, j)];
                let pair = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                if best.is_none_or(|(bc, bp, _, _)| better(c, pair, bc, bp)) {
                    best = Some((c, pair, i, j));
                }
            }
        }
        let (c, (ida, idb), i, j) = best.expect("at least two active clusters");
        let (ni, nj) = (sizes[i] as f64, sizes[j] as f64);
        for k in 0..p {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = sizes[k] as f64;
            let updated =
                ((ni + nk) * cost[(i, k)] + (nj + nk) * cost[(j, k)] - nk * cost[(i, j)]) / (ni + nj + nk);
            cost[(i, k)] = updated;
            cost[(k, i)] = updated;
        }
        active[j] = false;
        sizes[i] += sizes[j];
        ids[i] = p + step;
        merges.push(Merge {
            a: ida,
            b: idb,
            cost: c,
            size: sizes[i],
        });
    }
    Ok(Dendrogram { leaves: p, merges })
}

impl Dendrogram {
    /// Labels of the `q`-cluster cut, numbered by first appearance.
    pub fn cut(&self, q: usize) -> Result<Vec<usize>> {
        let p = self.leaves;
        if q == 0 || q > p {
            return Err(Error::InvalidParameter(format!("cannot cut {p} leaves into {q} clusters")));
        }
        // cluster id -> representative leaf, via union-find over leaves
        let mut parent: Vec<usize> = (0..p).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut leaf_of: Vec<usize> = (0..p).collect();
        for m in &self.merges[..p - q] {
            let ra = find(&mut parent, leaf_of[m.a]);
            let rb = find(&mut parent, leaf_of[m.b]);
            parent[rb] = ra;
            leaf_of.push(ra);
        }
        let roots: Vec<usize> = (0..p).map(|i| find(&mut parent, i)).collect();
        Ok(canonical_labels(&roots).0)
    }

    /// Checks that every cluster id is merged at most once and only after it
    /// exists.
    pub fn is_valid(&self) -> bool {
        let p = self.leaves;
        if self.merges.len() + 1 != p {
            return false;
        }
        let mut used = vec![false; 2 * p - 1];
        for (s, m) in self.merges.iter().enumerate() {
            if m.a >= m.b || m.b >= p + s || used[m.a] || used[m.b] {
                return false;
            }
            used[m.a] = true;
            used[m.b] = true;
        }
        true
    }
}

/// Cuts at the smallest `Q ≥ 2` with at least `min_small` clusters of fewer
/// than `small_size` genes, and selects those small clusters.
pub fn hc_cut(d: &Dendrogram, a: &EdgeWeightMatrix, small_size: usize, min_small: usize) -> Result<CommunityResult> {
    if small_size < 2 || min_small < 1 {
        return Err(Error::InvalidParameter(format!(
            "need small cluster size >= 2 and count >= 1, got {small_size} and {min_small}"
        )));
    }
    if a.len() != d.leaves {
        return Err(Error::Dimension(format!("dendrogram has {} leaves, matrix {} genes", d.leaves, a.len())));
    }
    for q in 2..=d.leaves {
        let labels = d.cut(q)?;
        let mut sizes = vec![0usize; q];
        for &l in &labels {
            sizes[l] += 1;
        }
        let small: Vec<usize> = (0..q).filter(|&k| sizes[k] < small_size).collect();
        if small.len() >= min_small {
            return Ok(CommunityResult {
                gamma: proportions(&labels, q),
                pi: block_means(a.weights(), &labels, q),
                labels,
                selected_blocks: small,
                method_tag: "hc".into(),
                warnings: Vec::new(),
            });
        }
    }
    Err(Error::CutNotFound {
        size: small_size,
        wanted: min_small,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("g{i:02}")).collect()
    }

    fn matrix(p: usize, f: impl Fn(usize, usize) -> f64) -> EdgeWeightMatrix {
        let w = DMatrix::from_fn(p, p, |i, j| if i == j { 0.0 } else { f(i.min(j), i.max(j)) });
        EdgeWeightMatrix::from_raw(w, ids(p)).unwrap()
    }

    #[test]
    fn first_merge_is_the_heaviest_edge() {
        let upper = [[0.0, 0.2, 0.3, 0.1], [0.0, 0.0, 1.0, 0.4], [0.0, 0.0, 0.0, 0.6], [0.0; 4]];
        let a = matrix(4, |i, j| upper[i][j]);
        let d = hc_ward(&a).unwrap();
        assert_eq!((d.merges[0].a, d.merges[0].b), (1, 2));
        assert_eq!(d.merges[0].cost, 0.0);
        assert_eq!(d.merges[0].size, 2);
        assert!(d.is_valid());
        assert_eq!(d.merges.last().unwrap().size, 4);
    }

    #[test]
    fn singleton_cost_is_half_the_distance() {
        let a = matrix(3, |i, j| if (i, j) == (0, 2) { 1.0 } else { 0.4 });
        let d = hc_ward(&a).unwrap();
        assert_eq!((d.merges[0].a, d.merges[0].b), (0, 2));
        // second merge: leaf 1 with the pair {0, 2}, costs 0.3 each
        let expected = (2.0 * 0.3 + 2.0 * 0.3 - 0.0) / 3.0;
        assert!((d.merges[1].cost - expected).abs() < 1e-15);
        assert_eq!((d.merges[1].a, d.merges[1].b), (1, 3));
    }

    #[test]
    fn clique_merges_before_noise() {
        let a = matrix(8, |i, j| if j < 3 { 1.0 } else { 0.1 + 0.01 * ((i * 7 + j * 3) % 5) as f64 });
        let d = hc_ward(&a).unwrap();
        let mut clique_leaves = std::collections::BTreeSet::new();
        for m in &d.merges[..2] {
            clique_leaves.extend([m.a, m.b].into_iter().filter(|&x| x < 8));
        }
        assert_eq!(clique_leaves.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn exact_ties_use_smallest_ids() {
        let a = matrix(4, |_, _| 0.5);
        let d = hc_ward(&a).unwrap();
        assert_eq!((d.merges[0].a, d.merges[0].b), (0, 1));
        assert_eq!((d.merges[1].a, d.merges[1].b), (2, 3));
    }

    #[test]
    fn cut_recovers_planted_cliques() {
        let a = matrix(40, |i, j| {
            if (i < 10 && j < 10) || ((10..20).contains(&i) && (10..20).contains(&j)) {
                1.0
            } else {
                0.02 * ((i * 13 + j * 7) % 10) as f64
            }
        });
        let d = hc_ward(&a).unwrap();
        let r = hc_cut(&d, &a, 15, 2).unwrap();
        let selected = r.selected_clusters();
        assert!(selected.contains(&(0..10).collect()));
        assert!(selected.contains(&(10..20).collect()));
        assert!((r.gamma.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cut_counts_and_errors() {
        let a = matrix(6, |i, j| 0.1 * ((i + j) % 4) as f64 + 0.05);
        let d = hc_ward(&a).unwrap();
        assert_eq!(d.cut(6).unwrap(), (0..6).collect::<Vec<_>>());
        assert_eq!(d.cut(1).unwrap(), vec![0; 6]);
        assert!(d.cut(0).is_err());
        assert!(matches!(hc_cut(&d, &a, 2, 7), Err(Error::CutNotFound { .. })));
        assert!(hc_cut(&d, &a, 1, 1).is_err());
    }
}
