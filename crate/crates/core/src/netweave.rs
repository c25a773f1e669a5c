//! Aggregated edge weights from SCCA over random partitions and subsamples.
//!
//! For each round `b`: draw one replicate per experiment, normalize, keep a
//! random fraction `s` of the genes, and split them `T` times into two
//! halves. Each split is solved with [`solve_cross`]; the absolute weights
//! `|a|`, `|b|` (zero for genes outside the subsample) are averaged over the
//! splits into `c̄_b`. The edge weights are `Ā = mean_b c̄_b c̄_bᵀ` with a
//! zero diagonal, divided by the largest entry.
//!
//! Genes are processed in sorted-id order internally, so permuting the input
//! columns permutes the output and nothing else.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::dataset::{draw_replicates, ExpressionDataset};
use crate::error::{Error, Result};
use crate::knorm;
use crate::rng::{derive_seed, stream_rng, TAG_PARTITION, TAG_REPLICATE, TAG_SUBSAMPLE};
use crate::scca::{solve_cross, PenaltyPair, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeaveConfig {
    pub subsample_fraction: f64,
    pub partitions: usize,
    pub rounds: usize,
    pub penalties: PenaltyPair,
    pub skip_normalization: bool,
    pub shrinkage: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for WeaveConfig {
    fn default() -> Self {
        Self {
            subsample_fraction: 0.7,
            partitions: 100,
            rounds: 50,
            penalties: PenaltyPair {
                lambda1: 9.0,
                lambda2: 9.0,
            },
            skip_normalization: false,
            shrinkage: knorm::DEFAULT_SHRINKAGE,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl WeaveConfig {
    pub fn subsample_size(&self, p: usize) -> usize {
        // the epsilon keeps 0.7 * 10 from rounding down to 6
        (self.subsample_fraction * p as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "subsample fraction {} outside (0, 1]",
                self.subsample_fraction
            )));
        }
        if self.partitions == 0 || self.rounds == 0 {
            return Err(Error::InvalidParameter("partitions and rounds must be positive".into()));
        }
        if self.subsample_size(p) < 4 {
            return Err(Error::InvalidParameter(format!(
                "subsample of {} genes out of {p} is too small to partition (need >= 4)",
                self.subsample_size(p)
            )));
        }
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return Err(Error::InvalidParameter("shrinkage outside [0, 1]".into()));
        }
        self.penalties.validate()
    }
}

/// Symmetric, nonnegative, zero-diagonal gene×gene weights with maximum 1
/// (or identically zero).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightMatrix {
    weights: DMatrix<f64>,
    gene_ids: Vec<String>,
}

const MATRIX_MAGIC: &[u8; 8] = b"SCCANET1";

impl EdgeWeightMatrix {
    /// Wraps weights that already satisfy the invariants.
    pub fn new(weights: DMatrix<f64>, gene_ids: Vec<String>) -> Result<Self> {
        let p = gene_ids.len();
        if weights.shape() != (p, p) {
            return Err(Error::Dimension(format!(
                "{:?} weights for {p} genes",
                weights.shape()
            )));
        }
        let mut max = 0.0f64;
        for i in 0..p {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {i}")));
            }
            for j in 0..p {
                let w = weights[(i, j)];
                if !(w >= 0.0) || (w - weights[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "weights must be symmetric and nonnegative (entry {i},{j})"
                    )));
                }
                max = max.max(w);
            }
        }
        if max != 0.0 && (max - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("maximum weight is {max}, expected 1")));
        }
        Ok(Self { weights, gene_ids })
    }

    /// Zeroes the diagonal, symmetrizes and divides by the maximum entry.
    pub fn from_raw(mut raw: DMatrix<f64>, gene_ids: Vec<String>) -> Result<Self> {
        raw.fill_diagonal(0.0);
        raw.iter_mut().for_each(|w| *w = w.max(0.0));
        let mut raw = crate::linalg::symmetrize(raw);
        let max = raw.max();
        if max > 0.0 {
            raw /= max;
        } else {
            log::debug!("edge weight matrix is identically zero");
        }
        Self::new(raw, gene_ids)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn len(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gene_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// `(i, j, weight)` for `i < j`.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = self.len();
        (0..p).flat_map(move |i| ((i + 1)..p).map(move |j| (i, j, self.weights[(i, j)])))
    }

    /// Mean weight over distinct pairs inside `a` (when `b` is `None`) or
    /// between `a` and `b`.
    pub fn block_mean(&self, a: &[usize], b: Option<&[usize]>) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        match b {
            None => {
                for (x, &i) in a.iter().enumerate() {
                    for &j in &a[x + 1..] {
                        sum += self.weights[(i, j)];
                        count += 1;
                    }
                }
            }
            Some(b) => {
                for &i in a {
                    for &j in b {
                        if i != j {
                            sum += self.weights[(i, j)];
                            count += 1;
                        }
                    }
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)?;
        w.flush().map_err(|e| Error::io("writing matrix", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// Binary container: magic, gene count (u64 LE), each gene id as a
    /// u32 LE length plus UTF-8 bytes, then the p×p weights as row-major
    /// f64 LE.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let io = |e| Error::io("writing matrix", e);
        w.write_all(MATRIX_MAGIC).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io)?;
        for id in &self.gene_ids {
            w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(id.as_bytes()).map_err(io)?;
        }
        for i in 0..self.len() {
            for j in 0..self.len() {
                w.write_all(&self.weights[(i, j)].to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let io = |e| Error::io("reading matrix", e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MATRIX_MAGIC {
            return Err(Error::Format("not an edge weight matrix file".into()));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8).map_err(io)?;
        let p = u64::from_le_bytes(buf8) as usize;
        let mut ids = Vec::with_capacity(p);
        for _ in 0..p {
            let mut buf4 = [0u8; 4];
            r.read_exact(&mut buf4).map_err(io)?;
            let mut bytes = vec![0u8; u32::from_le_bytes(buf4) as usize];
            r.read_exact(&mut bytes).map_err(io)?;
            ids.push(String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?);
        }
        let mut weights = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                r.read_exact(&mut buf8).map_err(io)?;
                weights[(i, j)] = f64::from_le_bytes(buf8);
            }
        }
        Self::new(weights, ids)
    }

    /// `gene_i,gene_j,weight` rows for `i < j` and weight above `threshold`.
    pub fn write_edge_csv(&self, w: &mut impl Write, threshold: f64) -> Result<()> {
        let io = |e| Error::io("writing edge list", e);
        writeln!(w, "gene_i,gene_j,weight").map_err(io)?;
        for (i, j, v) in self.upper_triangle() {
            if v > threshold {
                writeln!(w, "{},{},{v}", self.gene_ids[i], self.gene_ids[j]).map_err(io)?;
            }
        }
        Ok(())
    }

    /// The matrix restricted to (and reordered by) the given positions.
    pub fn select(&self, genes: &[usize]) -> Result<Self> {
        let sub = DMatrix::from_fn(genes.len(), genes.len(), |i, j| self.weights[(genes[i], genes[j])]);
        let ids = genes.iter().map(|&g| self.gene_ids[g].clone()).collect();
        Self::from_raw(sub, ids)
    }
}

/// Splits `indices` into two sides of sizes `⌈m/2⌉` and `⌊m/2⌋`, uniformly
/// at random. Each side is returned in ascending order.
pub fn random_partition(indices: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut stream_rng(seed, TAG_PARTITION));
    let cut = shuffled.len().div_ceil(2);
    let mut first = shuffled[..cut].to_vec();
    let mut second = shuffled[cut..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

fn partition_seed(cfg: &WeaveConfig, round: usize, t: usize) -> u64 {
    derive_seed(cfg.seed, TAG_PARTITION | (round * cfg.partitions + t) as u64)
}

/// Everything about one round that does not depend on the penalties.
struct RoundPlan {
    n: usize,
    p: usize,
    sampled: Vec<usize>,
    gram: DMatrix<f64>,
    // positions into `sampled`
    splits: Vec<(Vec<usize>, Vec<usize>)>,
}

impl RoundPlan {
    fn new(z_star: &DMatrix<f64>, cfg: &WeaveConfig, round: usize) -> Self {
        let (n, p) = z_star.shape();
        let m = cfg.subsample_size(p);
        let mut rng = stream_rng(cfg.seed, TAG_SUBSAMPLE | round as u64);
        let mut sampled = index::sample(&mut rng, p, m).into_vec();
        sampled.sort_unstable();
        let sub = z_star.select_columns(&sampled);
        let gram = sub.transpose() * &sub;
        let local: Vec<usize> = (0..m).collect();
        let splits = (0..cfg.partitions)
            .map(|t| random_partition(&local, partition_seed(cfg, round, t)))
            .collect();
        Self {
            n,
            p,
            sampled,
            gram,
            splits,
        }
    }

    /// `c̄_b` over all genes.
    fn average_weights(&self, penalties: PenaltyPair, solver: &SolverOptions) -> DVector<f64> {
        let m = self.sampled.len();
        let mut acc = vec![0.0; m];
        let mut cross = DMatrix::zeros(0, 0);
        for (x_side, y_side) in &self.splits {
            // cross = YᵀX restricted from the Gram matrix
            cross.resize_mut(y_side.len(), x_side.len(), 0.0);
            for (c, &xj) in x_side.iter().enumerate() {
                for (r, &yi) in y_side.iter().enumerate() {
                    cross[(r, c)] = self.gram[(yi, xj)];
                }
            }
            let sol = solve_cross(&cross, self.n, penalties, solver);
            for (&g, w) in x_side.iter().zip(&sol.b) {
                acc[g] += w.abs();
            }
            for (&g, w) in y_side.iter().zip(&sol.a) {
                acc[g] += w.abs();
            }
        }
        let t = self.splits.len() as f64;
        let mut c = DVector::zeros(self.p);
        for (&g, v) in self.sampled.iter().zip(acc) {
            c[g] = v / t;
        }
        c
    }
}

/// Average absolute SCCA weights `c̄_b` of round `round` on a normalized
/// n×p matrix.
pub fn round_weights(z_star: &DMatrix<f64>, cfg: &WeaveConfig, round: usize) -> Result<DVector<f64>> {
    cfg.validate(z_star.ncols())?;
    Ok(RoundPlan::new(z_star, cfg, round).average_weights(cfg.penalties, &cfg.solver))
}

/// `A_b = c̄_b c̄_bᵀ` with a zero diagonal (not normalized).
pub fn weave_once(z_star: &DMatrix<f64>, cfg: &WeaveConfig, round: usize) -> Result<DMatrix<f64>> {
    let c = round_weights(z_star, cfg, round)?;
    let mut a = &c * c.transpose();
    a.fill_diagonal(0.0);
    Ok(a)
}

#[cfg(feature = "parallel")]
fn map_indices<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indices<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).map(f).collect()
}

/// Normalized replicate draws, subsamples and partitions for every round,
/// prepared once and reused across penalty settings.
pub struct WeavePlan {
    gene_ids: Vec<String>,
    // canonical (sorted-id) position of each input gene
    canonical_pos: Vec<usize>,
    rounds: Vec<RoundPlan>,
    solver: SolverOptions,
}

impl WeavePlan {
    pub fn prepare(dataset: &ExpressionDataset, cfg: &WeaveConfig) -> Result<Self> {
        let p = dataset.genes();
        cfg.validate(p)?;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&x, &y| dataset.gene_ids()[x].cmp(&dataset.gene_ids()[y]));
        let mut canonical_pos = vec![0; p];
        for (pos, &g) in order.iter().enumerate() {
            canonical_pos[g] = pos;
        }
        let canonical = dataset.select_genes(&order)?;

        let rounds = map_indices(cfg.rounds, |b| -> Result<RoundPlan> {
            let draw = draw_replicates(&canonical, derive_seed(cfg.seed, TAG_REPLICATE | b as u64));
            let z_star = if cfg.skip_normalization {
                knorm::standardize(&draw.matrix)
            } else {
                knorm::fit_and_normalize(&draw.matrix, cfg.shrinkage)?
            };
            Ok(RoundPlan::new(&z_star, cfg, b))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            gene_ids: dataset.gene_ids().to_vec(),
            canonical_pos,
            rounds,
            solver: cfg.solver,
        })
    }

    /// `c̄_b` of every round as the columns of a p×B matrix, in input gene
    /// order.
    pub fn round_weights(&self, penalties: PenaltyPair) -> DMatrix<f64> {
        let cols = map_indices(self.rounds.len(), |b| self.rounds[b].average_weights(penalties, &self.solver));
        let canonical = DMatrix::from_columns(&cols);
        DMatrix::from_fn(self.gene_ids.len(), cols.len(), |g, b| canonical[(self.canonical_pos[g], b)])
    }

    pub fn run(&self, penalties: PenaltyPair) -> Result<EdgeWeightMatrix> {
        penalties.validate()?;
        Ok(edge_weights_from_rounds(&self.round_weights(penalties), self.gene_ids.clone()))
    }
}

/// `Ā = (1/B) Σ_b c̄_b c̄_bᵀ`, zero diagonal, max-normalized.
pub fn edge_weights_from_rounds(c: &DMatrix<f64>, gene_ids: Vec<String>) -> EdgeWeightMatrix {
    let raw = c * c.transpose() / c.ncols() as f64;
    EdgeWeightMatrix::from_raw(raw, gene_ids).expect("outer products are symmetric and nonnegative")
}

pub fn weave(dataset: &ExpressionDataset, cfg: &WeaveConfig) -> Result<EdgeWeightMatrix> {
    WeavePlan::prepare(dataset, cfg)?.run(cfg.penalties)
}

/// Shannon entropy of the normalized positive upper-triangular weights.
/// The zero matrix maps to `+∞` so that it ranks last.
pub fn entropy(a: &EdgeWeightMatrix) -> f64 {
    let total: f64 = a.upper_triangle().map(|(_, _, w)| w).sum();
    if !(total > 0.0) {
        return f64::INFINITY;
    }
    -a.upper_triangle()
        .filter(|&(_, _, w)| w > 0.0)
        .map(|(_, _, w)| {
            let q = w / total;
            q * q.ln()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct RankedPenalty {
    pub penalties: PenaltyPair,
    pub entropy: f64,
    pub matrix: EdgeWeightMatrix,
}

/// Entropy of `Ā` at every grid point, in grid order.
pub fn entropy_surface(plan: &WeavePlan, grid: &[PenaltyPair]) -> Result<Vec<(PenaltyPair, f64)>> {
    grid.iter()
        .map(|&pen| Ok((pen, entropy(&plan.run(pen)?))))
        .collect()
}

fn rank_order(x: &(PenaltyPair, f64), y: &(PenaltyPair, f64)) -> std::cmp::Ordering {
    x.1.total_cmp(&y.1)
        .then(x.0.lambda1.total_cmp(&y.0.lambda1))
        .then(x.0.lambda2.total_cmp(&y.0.lambda2))
}

/// The `keep` grid points with the smallest entropy, ascending; ties go to
/// the lexicographically smaller `(λ1, λ2)`.
pub fn select_penalties(
    dataset: &ExpressionDataset,
    template: &WeaveConfig,
    grid: &[PenaltyPair],
    keep: usize,
) -> Result<Vec<RankedPenalty>> {
    let plan = WeavePlan::prepare(dataset, template)?;
    select_with_plan(&plan, grid, keep).map(|(ranked, _)| ranked)
}

/// Like [`select_penalties`] on a prepared plan; also returns the full
/// entropy surface.
pub fn select_with_plan(
    plan: &WeavePlan,
    grid: &[PenaltyPair],
    keep: usize,
) -> Result<(Vec<RankedPenalty>, Vec<(PenaltyPair, f64)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("penalty grid is empty".into()));
    }
    if keep == 0 || keep > grid.len() {
        return Err(Error::InvalidParameter(format!(
            "keep={keep} must be between 1 and the grid size {}",
            grid.len()
        )));
    }
    let mut evaluated = Vec::with_capacity(grid.len());
    for &pen in grid {
        pen.validate()?;
        let c = plan.round_weights(pen);
        let m = edge_weights_from_rounds(&c, plan.gene_ids.clone());
        evaluated.push((pen, entropy(&m), c));
    }
    let surface: Vec<(PenaltyPair, f64)> = evaluated.iter().map(|(p, h, _)| (*p, *h)).collect();
    evaluated.sort_by(|x, y| rank_order(&(x.0, x.1), &(y.0, y.1)));
    let ranked = evaluated
        .into_iter()
        .take(keep)
        .map(|(penalties, entropy, c)| RankedPenalty {
            penalties,
            entropy,
            matrix: edge_weights_from_rounds(&c, plan.gene_ids.clone()),
        })
        .collect();
    Ok((ranked, surface))
}

/// Parses `start:end:step` into an inclusive list of values.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let bad = || Error::InvalidParameter(format!("expected start:end:step, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || end < start {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}
