//! The end-to-end detection variants: edge weights from SCCA (entropy-ranked
//! penalties with a majority vote) or from Pearson correlation, followed by
//! Ward clustering or a block model.

use serde::{Deserialize, Serialize};

use crate::community::{
    discretize, hc_cut, hc_ward, sbm_fit, spectral_init, vote_clusters, CommunityResult, DEFAULT_SBM_ITERATIONS,
};
use crate::dataset::ExpressionDataset;
use crate::error::{Error, Result};
use crate::evalkit::pearson_matrix;
use crate::knorm;
use crate::netweave::{select_with_plan, EdgeWeightMatrix, WeaveConfig, WeavePlan};
use crate::rng::{derive_seed, TAG_MISC};
use crate::scca::PenaltyPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Detector {
    /// Ward clustering cut where `min_small` clusters of fewer than
    /// `small_size` genes first appear.
    Hc { small_size: usize, min_small: usize },
    /// A `q`-block model on the graph thresholded at `threshold`.
    Sbm { q: usize, threshold: f64 },
}

impl Detector {
    pub fn hc(min_small: usize) -> Self {
        Detector::Hc {
            small_size: 25,
            min_small,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Detector::Hc { .. } => "hc",
            Detector::Sbm { .. } => "sbm",
        }
    }
}

pub fn detect(a: &EdgeWeightMatrix, detector: &Detector, seed: u64) -> Result<CommunityResult> {
    match *detector {
        Detector::Hc { small_size, min_small } => hc_cut(&hc_ward(a)?, a, small_size, min_small),
        Detector::Sbm { q, threshold } => {
            let g = discretize(a, threshold)?;
            let init = spectral_init(&g, q, seed)?;
            Ok(sbm_fit(&g, q, &init, DEFAULT_SBM_ITERATIONS)?.result)
        }
    }
}

/// The default penalty grid `{9, 12, ..., 27}²`.
pub fn default_grid() -> Vec<PenaltyPair> {
    let values: Vec<f64> = (0..7).map(|k| 9.0 + 3.0 * k as f64).collect();
    PenaltyPair::square_grid(&values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SccaMethod {
    pub weave: WeaveConfig,
    pub grid: Vec<PenaltyPair>,
    /// Number of lowest-entropy matrices that vote.
    pub keep: usize,
}

impl Default for SccaMethod {
    fn default() -> Self {
        Self {
            weave: WeaveConfig::default(),
            grid: default_grid(),
            keep: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub tag: String,
    /// Detected modules as gene positions.
    pub clusters: Vec<Vec<usize>>,
    /// `(λ, H(Ā))` of the matrices that voted, ascending entropy.
    pub voters: Vec<(PenaltyPair, f64)>,
    pub results: Vec<CommunityResult>,
}

/// Detects on the `keep` lowest-entropy matrices over the grid and keeps
/// the modules a majority agrees on.
pub fn run_scca(dataset: &ExpressionDataset, method: &SccaMethod, detector: &Detector) -> Result<MethodOutcome> {
    let plan = WeavePlan::prepare(dataset, &method.weave)?;
    run_scca_with_plan(&plan, method, detector)
}

pub fn run_scca_with_plan(plan: &WeavePlan, method: &SccaMethod, detector: &Detector) -> Result<MethodOutcome> {
    let (ranked, _) = select_with_plan(plan, &method.grid, method.keep)?;
    let results = ranked
        .iter()
        .enumerate()
        .map(|(k, r)| detect(&r.matrix, detector, derive_seed(method.weave.seed, TAG_MISC | (1000 + k as u64))))
        .collect::<Result<Vec<_>>>()?;
    Ok(MethodOutcome {
        tag: format!("scca.{}", detector.tag()),
        clusters: vote_clusters(&results)?,
        voters: ranked.iter().map(|r| (r.penalties, r.entropy)).collect(),
        results,
    })
}

/// `|cor|` of the normalized replicate means.
pub fn pearson_weights(dataset: &ExpressionDataset, shrinkage: f64) -> Result<EdgeWeightMatrix> {
    let z = knorm::fit_and_normalize(&dataset.replicate_means(), shrinkage)?;
    pearson_matrix(&z, dataset.gene_ids().to_vec())
}

pub fn run_pearson(dataset: &ExpressionDataset, shrinkage: f64, detector: &Detector, seed: u64) -> Result<MethodOutcome> {
    let a = pearson_weights(dataset, shrinkage)?;
    let result = detect(&a, detector, seed)?;
    Ok(MethodOutcome {
        tag: format!("pearson.{}", detector.tag()),
        clusters: result.selected_clusters(),
        voters: Vec::new(),
        results: vec![result],
    })
}

pub fn parse_method(tag: &str) -> Result<(bool, &'static str)> {
    match tag {
        "scca.hc" => Ok((true, "hc")),
        "scca.sbm" => Ok((true, "sbm")),
        "pearson.hc" => Ok((false, "hc")),
        "pearson.sbm" => Ok((false, "sbm")),
        other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
    }
}
