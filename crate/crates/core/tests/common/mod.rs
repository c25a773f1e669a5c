#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use scca_net::community::Dendrogram;
use scca_net::dataset::filter_genes;
use scca_net::knorm;
use scca_net::simgen::{sample_matrix_normal, simulate, SimulationSpec};
use scca_net::{EdgeWeightMatrix, ExpressionDataset, FilterThresholds, PenaltyPair, WeaveConfig, WeavePlan};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

pub fn ids(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("gene{i:03}")).collect()
}

/// Gaussian data with a shared factor on the first `linked` genes.
pub fn dataset(n: usize, p: usize, replicates: usize, linked: usize, seed: u64) -> ExpressionDataset {
    let mut r = rng(seed);
    let mut values = Vec::with_capacity(n * replicates * p);
    for _ in 0..n {
        let f: f64 = StandardNormal.sample(&mut r);
        let base: Vec<f64> = (0..p)
            .map(|g| {
                let e: f64 = StandardNormal.sample(&mut r);
                if g < linked { f + 0.5 * e } else { e }
            })
            .collect();
        for _ in 0..replicates {
            values.extend(base.iter().map(|v| v + 0.05 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r) + 8.0));
        }
    }
    let labels = (0..n).map(|e| format!("e{e}")).collect();
    ExpressionDataset::new(ids(p), labels, replicates, values).unwrap()
}

/// Symmetric matrix with integer weights `k / levels`, `k ≤ levels`, and at
/// least one entry equal to 1.
pub fn quantized_weights(p: usize, levels: u32, rng: &mut impl Rng) -> (EdgeWeightMatrix, Vec<Vec<u32>>) {
    let mut k = vec![vec![0u32; p]; p];
    for i in 0..p {
        for j in (i + 1)..p {
            let v = rng.random_range(0..=levels);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k[0][1] = levels;
    k[1][0] = levels;
    let w = DMatrix::from_fn(p, p, |i, j| k[i][j] as f64 / levels as f64);
    (EdgeWeightMatrix::new(w, ids(p)).unwrap(), k)
}

/// Ward on `D = 1 - Ā` recomputed from scratch at every step, in exact
/// integer arithmetic on `D · levels`. The merge cost of clusters `A`, `B`
/// is `W(A ∪ B) - W(A) - W(B)` with `W(S) = Σ_{i<j ∈ S} D_ij / |S|`, so a
/// singleton pair costs `D_ij / 2`.
pub fn naive_ward(k: &[Vec<u32>], levels: u32) -> Vec<(usize, usize, f64, usize)> {
    let p = k.len();
    let dist = |i: usize, j: usize| (levels - k[i][j]) as i128;
    let within = |s: &[usize]| -> i128 {
        let mut t = 0;
        for (x, &i) in s.iter().enumerate() {
            for &j in &s[x + 1..] {
                t += dist(i, j);
            }
        }
        t
    };
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..p).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..p - 1 {
        // (numerator, denominator, pair, x, y) of the cheapest merge
        let mut best: Option<(i128, i128, (usize, usize), usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in (x + 1)..clusters.len() {
                let (a, b) = (&clusters[x].1, &clusters[y].1);
                let (na, nb) = (a.len() as i128, b.len() as i128);
                let union: Vec<usize> = a.iter().chain(b).copied().collect();
                let num = na * nb * within(&union) - nb * (na + nb) * within(a) - na * (na + nb) * within(b);
                let den = na * nb * (na + nb) * levels as i128;
                let ids = (clusters[x].0.min(clusters[y].0), clusters[x].0.max(clusters[y].0));
                let take = match best {
                    None => true,
                    Some((bn, bd, bp, _, _)) => {
                        let (l, r) = (num * bd, bn * den);
                        l < r || (l == r && ids < bp)
                    }
                };
                if take {
                    best = Some((num, den, ids, x, y));
                }
            }
        }
        let (num, den, ids, x, y) = best.unwrap();
        let mut merged = clusters[x].1.clone();
        merged.extend(clusters[y].1.iter().copied());
        let size = merged.len();
        clusters.remove(y);
        clusters[x] = (p + step, merged);
        out.push((ids.0, ids.1, num as f64 / den as f64, size));
    }
    out
}

pub fn same_merges(d: &Dendrogram, oracle: &[(usize, usize, f64, usize)]) -> bool {
    d.merges.len() == oracle.len()
        && d
            .merges
            .iter()
            .zip(oracle)
            .all(|(m, o)| m.a == o.0 && m.b == o.1 && m.size == o.3 && (m.cost - o.2).abs() <= 1e-9)
}

/// Leading singular value of `m` by power iteration on `mᵀm`.
pub fn power_sigma(m: &DMatrix<f64>) -> f64 {
    let q = m.ncols();
    let mut v = nalgebra::DVector::from_fn(q, |j, _| 1.0 + 0.01 * j as f64);
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..200_000 {
        let mut w = m.transpose() * (m * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        w /= norm;
        let next = (m * &w).norm();
        let done = (next - sigma).abs() <= 1e-15 * next.max(1.0) && (&w - &v).amax() < 1e-13;
        sigma = next;
        v = w;
        if done {
            break;
        }
    }
    sigma
}

/// Symmetric inverse square root or square root through the eigendecomposition.
pub fn matrix_power(a: &DMatrix<f64>, exponent: f64) -> DMatrix<f64> {
    let e = a.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.powf(exponent)));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

fn random_correlation(q: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let f = gaussian(q, q + 2, rng);
    let s = &f * f.transpose() + DMatrix::identity(q, q) * 0.5;
    let d = s.diagonal().map(|v| 1.0 / v.sqrt());
    DMatrix::from_diagonal(&d) * s * DMatrix::from_diagonal(&d)
}

// ---- property bodies shared by the proptest suite and the acceptance run ----

pub fn prop_abar_invariants(seed: u64, p: usize, n: usize, lambda: f64, fraction: f64) -> Result<(), TestCaseError> {
    let d = dataset(n, p, 2, p / 3, seed);
    let cfg = WeaveConfig {
        subsample_fraction: fraction,
        partitions: 4,
        rounds: 3,
        penalties: PenaltyPair::new(lambda, lambda).unwrap(),
        seed,
        ..Default::default()
    };
    let a = WeavePlan::prepare(&d, &cfg).unwrap().run(cfg.penalties).unwrap();
    let w = a.weights();
    prop_assert_eq!(w.shape(), (p, p));
    for i in 0..p {
        prop_assert_eq!(w[(i, i)], 0.0);
        for j in 0..p {
            prop_assert_eq!(w[(i, j)], w[(j, i)]);
            prop_assert!((0.0..=1.0).contains(&w[(i, j)]));
        }
    }
    let max = w.max();
    prop_assert!(max == 1.0 || (max == 0.0 && a.is_zero()), "max weight {}", max);
    Ok(())
}

/// Whitening is invertible: `Σ^{1/2} whiten(Z) + M = Z`, and whitening
/// the fitted correlation itself gives the identity.
pub fn prop_knorm_round_trip(seed: u64, n: usize, extra: usize, shrinkage: f64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let p = n + extra;
    let shared = gaussian(n, 1, &mut r);
    let z = gaussian(n, p, &mut r) + &shared * DMatrix::from_element(1, p, 0.8);
    let model = knorm::fit_normalization(&z, shrinkage).unwrap();
    let w = knorm::whiten(&z, &model).unwrap();
    let sigma = &model.experiment_correlation;
    let back = matrix_power(sigma, 0.5) * &w + &model.mean_matrix;
    let err = (&back - &z).amax();
    prop_assert!(err < 1e-8 * z.amax().max(1.0), "round trip error {}", err);
    let root = matrix_power(sigma, -0.5);
    let id = &root * sigma * &root;
    prop_assert!((id - DMatrix::<f64>::identity(n, n)).amax() < 1e-8);
    Ok(())
}

/// Monte Carlo check of `cov(vec(Zᵀ)) = Σ^E ⊗ Σ^G`.
pub fn prop_kronecker_covariance(seed: u64, qe: usize, qg: usize) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let se = random_correlation(qe, &mut r);
    let sg = random_correlation(qg, &mut r);
    let draws = 20_000;
    let dim = qe * qg;
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    for _ in 0..draws {
        let z = sample_matrix_normal(&se, &sg, &mut r).unwrap();
        // row-major vec of Z, i.e. vec(Zᵀ)
        let v = nalgebra::DVector::from_fn(dim, |k, _| z[(k / qg, k % qg)]);
        acc += &v * v.transpose();
    }
    acc /= draws as f64;
    let expected = se.kronecker(&sg);
    let err = (&acc - &expected).amax();
    prop_assert!(err < 0.06, "Monte Carlo covariance off by {}", err);
    Ok(())
}

pub fn prop_filter_idempotent(seed: u64, min_variance: f64, max_gap: f64, min_expr: f64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let (n, p, reps) = (6, 12, 2);
    let mut values = Vec::with_capacity(n * reps * p);
    let scale: Vec<f64> = (0..p).map(|_| r.random_range(0.0..2.0)).collect();
    let level: Vec<f64> = (0..p).map(|_| r.random_range(4.0..10.0)).collect();
    for _ in 0..n {
        let base: Vec<f64> = (0..p).map(|g| level[g] + scale[g] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)).collect();
        for _ in 0..reps {
            values.extend(base.iter().map(|v| v + r.random_range(-1.5..1.5)));
        }
    }
    let d = ExpressionDataset::new(ids(p), (0..n).map(|e| format!("e{e}")).collect(), reps, values).unwrap();
    let t = FilterThresholds {
        min_variance,
        max_variance: f64::INFINITY,
        max_replicate_gap: max_gap,
        min_expression: min_expr,
    };
    if let Ok(once) = filter_genes(&d, &t) {
        let twice = filter_genes(&once, &t).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.gene_ids().iter().all(|g| d.gene_ids().contains(g)));
    }
    Ok(())
}

pub fn prop_determinism(seed: u64) -> Result<(), TestCaseError> {
    let spec = SimulationSpec {
        p: 30,
        n: 10,
        replicates: 2,
        groups: vec![6],
        dependency_level: 0.3,
        seed,
        ..Default::default()
    };
    let s1 = simulate(&spec).unwrap();
    let s2 = simulate(&spec).unwrap();
    prop_assert_eq!(&s1.dataset, &s2.dataset);
    prop_assert_eq!(&s1.truth, &s2.truth);
    let cfg = WeaveConfig {
        partitions: 5,
        rounds: 4,
        penalties: PenaltyPair::new(2.0, 3.0).unwrap(),
        seed,
        ..Default::default()
    };
    let a1 = WeavePlan::prepare(&s1.dataset, &cfg).unwrap().run(cfg.penalties).unwrap();
    let a2 = WeavePlan::prepare(&s2.dataset, &cfg).unwrap().run(cfg.penalties).unwrap();
    prop_assert_eq!(a1, a2);
    Ok(())
}

pub fn abar_strategy() -> impl Strategy<Value = (u64, usize, usize, f64, f64)> {
    (any::<u64>(), 8usize..20, 6usize..14, 0.0f64..6.0, 0.5f64..=1.0)
}

pub fn knorm_strategy() -> impl Strategy<Value = (u64, usize, usize, f64)> {
    (any::<u64>(), 3usize..12, 2usize..30, 0.05f64..=1.0)
}

pub fn kronecker_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..4, 1usize..4)
}

pub fn filter_strategy() -> impl Strategy<Value = (u64, f64, f64, f64)> {
    (any::<u64>(), 0.0f64..1.0, 0.5f64..4.0, 0.0f64..8.0)
}
