//! Synthetic benchmark data with planted functional groups, plus the small
//! two-pathway system used to show how partial correlations mislead.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::ExpressionDataset;
use crate::error::{Error, Result};
use crate::linalg::repair_correlation;
use crate::rng::{stream_rng, TAG_MISC};

const PD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSpec {
    pub p: usize,
    pub n: usize,
    pub replicates: usize,
    /// Fraction of experiments that are mutually correlated.
    pub dependency_level: f64,
    pub groups: Vec<usize>,
    pub high_corr_range: (f64, f64),
    pub low_corr_range: (f64, f64),
    /// Probability that a within-group pair draws from the high range.
    pub high_corr_share: f64,
    pub replicate_noise_sd: f64,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            p: 150,
            n: 30,
            replicates: 5,
            dependency_level: 0.0,
            groups: vec![15],
            high_corr_range: (0.5, 0.6),
            low_corr_range: (0.1, 0.2),
            high_corr_share: 0.5,
            replicate_noise_sd: 0.01,
            seed: 0,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p < 4 || self.n < 2 || self.replicates < 1 {
            return Err(Error::InvalidParameter(format!(
                "need p >= 4, n >= 2, replicates >= 1 (got {}, {}, {})",
                self.p, self.n, self.replicates
            )));
        }
        if self.groups.iter().sum::<usize>() > self.p {
            return Err(Error::InvalidParameter("groups do not fit into p genes".into()));
        }
        if self.groups.iter().any(|&k| k < 2) {
            return Err(Error::InvalidParameter("groups need at least two genes".into()));
        }
        for (lo, hi) in [self.high_corr_range, self.low_corr_range] {
            if !(lo > -1.0 && hi < 1.0 && lo <= hi) {
                return Err(Error::InvalidParameter(format!("bad correlation range ({lo}, {hi})")));
            }
        }
        if !(0.0..=1.0).contains(&self.dependency_level) || !(0.0..=1.0).contains(&self.high_corr_share) {
            return Err(Error::InvalidParameter("fractions must lie in [0, 1]".into()));
        }
        if !(self.replicate_noise_sd >= 0.0) {
            return Err(Error::InvalidParameter("noise sd must be nonnegative".into()));
        }
        Ok(())
    }

    /// Gene positions of each planted group, laid out consecutively from 0.
    pub fn group_members(&self) -> Vec<Vec<usize>> {
        let mut start = 0;
        self.groups
            .iter()
            .map(|&k| {
                let g = (start..start + k).collect();
                start += k;
                g
            })
            .collect()
    }

    /// Number of mutually dependent experiments (nearest integer, so a third
    /// of 30 is 10).
    pub fn dependent_experiments(&self) -> usize {
        (self.dependency_level * self.n as f64).round() as usize
    }

    fn rng(&self, purpose: u64) -> ChaCha8Rng {
        stream_rng(self.seed, TAG_MISC | purpose)
    }
}

pub fn make_experiment_correlation(spec: &SimulationSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.n;
    let k = spec.dependent_experiments().min(n);
    let mut rng = spec.rng(1);
    let (lo, hi) = spec.high_corr_range;
    let mut m = DMatrix::identity(n, n);
    for i in 0..k {
        for j in (i + 1)..k {
            let v = rng.random_range(lo..=hi);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(repair_correlation(&m, PD_FLOOR))
}

pub fn make_gene_correlation(spec: &SimulationSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut rng = spec.rng(2);
    let mut m = DMatrix::identity(spec.p, spec.p);
    for members in spec.group_members() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let (lo, hi) = if rng.random_bool(spec.high_corr_share) {
                    spec.high_corr_range
                } else {
                    spec.low_corr_range
                };
                let v = rng.random_range(lo..=hi);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    Ok(repair_correlation(&m, PD_FLOOR))
}

/// Draws an n×p matrix with row covariance `sigma_e` and column covariance
/// `sigma_g`, i.e. `cov(vec(Zᵀ)) = Σ^E ⊗ Σ^G`.
pub fn sample_matrix_normal(
    sigma_e: &DMatrix<f64>,
    sigma_g: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let le = sigma_e
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("experiment correlation".into()))?
        .unpack();
    let lg = sigma_g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("gene correlation".into()))?
        .unpack();
    let w = DMatrix::from_fn(sigma_e.nrows(), sigma_g.nrows(), |_, _| StandardNormal.sample(rng));
    Ok(le * w * lg.transpose())
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: ExpressionDataset,
    /// Planted group members as gene positions.
    pub truth: Vec<Vec<usize>>,
    pub experiment_correlation: DMatrix<f64>,
    pub gene_correlation: DMatrix<f64>,
}

impl Simulation {
    pub fn truth_ids(&self) -> Vec<Vec<String>> {
        self.truth
            .iter()
            .map(|g| g.iter().map(|&i| self.dataset.gene_ids()[i].clone()).collect())
            .collect()
    }
}

pub fn gene_names(p: usize) -> Vec<String> {
    let width = p.to_string().len();
    (1..=p).map(|i| format!("g{i:0width$}")).collect()
}

/// Generates the base matrix, replaces the last third of each group by
/// positive combinations of the remaining members, and emits noisy
/// replicates of every experiment.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulation> {
    spec.validate()?;
    let sigma_e = make_experiment_correlation(spec)?;
    let sigma_g = make_gene_correlation(spec)?;
    let mut z = sample_matrix_normal(&sigma_e, &sigma_g, &mut spec.rng(3))?;

    let mut rng = spec.rng(4);
    let truth = spec.group_members();
    for members in &truth {
        let derived = members.len().div_ceil(3);
        let (base, replaced) = members.split_at(members.len() - derived);
        for &g in replaced {
            let mut combo = DVector::zeros(spec.n);
            for &src in base {
                let w: f64 = rng.random_range(0.5..=1.5);
                combo += z.column(src) * w;
            }
            let mean = combo.mean();
            combo.add_scalar_mut(-mean);
            let sd = (combo.norm_squared() / (spec.n - 1) as f64).sqrt();
            if sd > 0.0 {
                combo /= sd;
            }
            z.set_column(g, &combo);
        }
    }

    let mut rng = spec.rng(5);
    let noise = Normal::new(0.0, spec.replicate_noise_sd)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut values = Vec::with_capacity(spec.n * spec.replicates * spec.p);
    for e in 0..spec.n {
        for _ in 0..spec.replicates {
            values.extend(z.row(e).iter().map(|&v| v + noise.sample(&mut rng)));
        }
    }
    let labels = (1..=spec.n).map(|e| format!("e{e:02}")).collect();
    let dataset = ExpressionDataset::new(gene_names(spec.p), labels, spec.replicates, values)?;
    Ok(Simulation {
        dataset,
        truth,
        experiment_correlation: sigma_e,
        gene_correlation: sigma_g,
    })
}

/// `ρ_ij = -ω_ij / sqrt(ω_ii ω_jj)` for `i ≠ j`, and 1 on the diagonal.
pub fn partial_correlation(precision: &DMatrix<f64>, i: usize, j: usize) -> Result<f64> {
    let k = precision.nrows();
    if precision.ncols() != k || i >= k || j >= k {
        return Err(Error::Dimension(format!("index ({i}, {j}) into a {k}x{k} precision matrix")));
    }
    let asym = (precision - precision.transpose()).amax();
    if asym > 1e-9 * precision.amax().max(1.0) || precision.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("precision matrix".into()));
    }
    if i == j {
        return Ok(1.0);
    }
    Ok(-precision[(i, j)] / (precision[(i, i)] * precision[(j, j)]).sqrt())
}

/// Gene order of the two-pathway system.
pub const MINIMAL_GENES: [&str; 7] = ["x", "y", "z", "u", "v", "p", "q"];

/// Linear map from the independent sources `(x, y, v, p, q, e_z, e_u)` to
/// the genes `(x, y, z, u, v, p, q)` for
///
/// ```text
/// z = x + y + ε(u + v + p) + e_z
/// u = δ(x + y + z + q) + v + e_u
/// ```
pub fn minimal_example_loadings(eps: f64, delta: f64) -> DMatrix<f64> {
    let det = 1.0 - eps * delta;
    // right-hand sides before solving the 2x2 system in (z, u)
    let rz = [1.0, 1.0, eps, eps, 0.0, 1.0, 0.0];
    let ru = [delta, delta, 1.0, 0.0, delta, 0.0, 1.0];
    let z: Vec<f64> = (0..7).map(|s| (rz[s] + eps * ru[s]) / det).collect();
    let u: Vec<f64> = (0..7).map(|s| (delta * rz[s] + ru[s]) / det).collect();
    let unit = |s: usize| (0..7).map(|k| if k == s { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let rows = [unit(0), unit(1), z, u, unit(2), unit(3), unit(4)];
    DMatrix::from_fn(7, 7, |g, s| rows[g][s])
}

/// Population covariance of the genes when the noise terms have SD
/// `noise_sd`.
pub fn minimal_example_covariance(eps: f64, delta: f64, noise_sd: f64) -> DMatrix<f64> {
    let l = minimal_example_loadings(eps, delta);
    let var = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0, noise_sd * noise_sd, noise_sd * noise_sd]);
    &l * DMatrix::from_diagonal(&var) * l.transpose()
}

pub fn minimal_example_dataset(n: usize, eps: f64, delta: f64, noise_sd: f64, seed: u64) -> Result<ExpressionDataset> {
    if n < 10 {
        return Err(Error::InvalidParameter("need at least 10 experiments".into()));
    }
    if !(eps.abs() <= 0.1 && delta.abs() <= 0.1) || !(noise_sd >= 0.0) {
        return Err(Error::InvalidParameter("eps and delta must be small, noise sd nonnegative".into()));
    }
    let l = minimal_example_loadings(eps, delta);
    let mut rng = stream_rng(seed, TAG_MISC | 6);
    let mut values = Vec::with_capacity(n * 7);
    for _ in 0..n {
        let mut s = DVector::<f64>::from_fn(7, |_, _| StandardNormal.sample(&mut rng));
        s[5] *= noise_sd;
        s[6] *= noise_sd;
        values.extend((&l * s).iter());
    }
    let labels = (1..=n).map(|e| format!("e{e}")).collect();
    ExpressionDataset::new(MINIMAL_GENES.iter().map(|s| s.to_string()).collect(), labels, 1, values)
}
