use super::CommunityResult;
use crate::error::{Error, Result};

fn check_universe(results: &[CommunityResult]) -> Result<usize> {
    let p = results.first().map(|r| r.labels.len()).unwrap_or(0);
    if results.iter().any(|r| r.labels.len() != p) {
        return Err(Error::Dimension("results cover different gene sets".into()));
    }
    Ok(p)
}

/// Genes that fall in a selected block in more than half of the results.
pub fn majority_vote(results: &[CommunityResult]) -> Result<Vec<usize>> {
    let p = check_universe(results)?;
    let mut votes = vec![0usize; p];
    for r in results {
        for g in r.selected_genes() {
            votes[g] += 1;
        }
    }
    Ok((0..p).filter(|&g| 2 * votes[g] > results.len()).collect())
}

/// Splits the majority-vote genes into modules: two voted genes are linked
/// when they share a selected block in more than half of the results, and
/// modules are the connected components, ordered by smallest member.
pub fn vote_clusters(results: &[CommunityResult]) -> Result<Vec<Vec<usize>>> {
    let genes = majority_vote(results)?;
    let m = genes.len();
    let mut together = vec![0usize; m * m];
    for r in results {
        let selected: Vec<bool> = genes.iter().map(|&g| r.selected_blocks.contains(&r.labels[g])).collect();
        for x in 0..m {
            for y in (x + 1)..m {
                if selected[x] && selected[y] && r.labels[genes[x]] == r.labels[genes[y]] {
                    together[x * m + y] += 1;
                }
            }
        }
    }
    let mut component = vec![usize::MAX; m];
    let mut clusters = Vec::new();
    for start in 0..m {
        if component[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        component[start] = id;
        let mut stack = vec![start];
        let mut members = vec![];
        while let Some(x) = stack.pop() {
            members.push(genes[x]);
            for y in 0..m {
                let (lo, hi) = (x.min(y), x.max(y));
                if component[y] == usize::MAX && lo != hi && 2 * together[lo * m + hi] > results.len() {
                    component[y] = id;
                    stack.push(y);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn result(labels: Vec<usize>, selected: Vec<usize>) -> CommunityResult {
        let q = labels.iter().max().map_or(0, |m| m + 1);
        CommunityResult {
            gamma: DVector::from_element(q, 1.0 / q as f64),
            pi: DMatrix::zeros(q, q),
            labels,
            selected_blocks: selected,
            method_tag: "test".into(),
            warnings: vec![],
        }
    }

    #[test]
    fn repeated_result_votes_for_itself() {
        let r = result(vec![0, 0, 1, 1, 2], vec![1, 2]);
        let all = vec![r.clone(); 10];
        assert_eq!(majority_vote(&all).unwrap(), vec![2, 3, 4]);
        assert_eq!(vote_clusters(&all).unwrap(), vec![vec![2, 3], vec![4]]);
    }

    #[test]
    fn exactly_half_is_not_a_majority() {
        let mut all = vec![result(vec![0, 1], vec![0]); 5];
        all.extend(vec![result(vec![0, 1], vec![1]); 5]);
        assert!(majority_vote(&all).unwrap().is_empty());
        all.push(result(vec![0, 1], vec![0]));
        assert_eq!(majority_vote(&all).unwrap(), vec![0]);
    }

    #[test]
    fn label_permutation_does_not_change_the_vote() {
        let a = vec![result(vec![0, 0, 1, 1], vec![0]), result(vec![1, 1, 0, 0], vec![1])];
        let b = vec![result(vec![1, 1, 0, 0], vec![1]), result(vec![0, 0, 1, 1], vec![0])];
        assert_eq!(majority_vote(&a).unwrap(), majority_vote(&b).unwrap());
        assert_eq!(vote_clusters(&a).unwrap(), vec![vec![0, 1]]);
    }

    #[test]
    fn mismatched_universes_are_rejected() {
        let all = vec![result(vec![0, 0], vec![0]), result(vec![0, 0, 0], vec![0])];
        assert!(majority_vote(&all).is_err());
        assert!(majority_vote(&[]).unwrap().is_empty());
    }
}
