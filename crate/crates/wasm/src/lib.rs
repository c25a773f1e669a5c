//! Browser bindings: simulate a dataset once, then weave, tune and detect on
//! it interactively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use scca_net::evalkit::score;
use scca_net::methods::{run_scca_with_plan, Detector, SccaMethod};
use scca_net::netweave::{entropy, entropy_surface, parse_range};
use scca_net::simgen::{simulate, SimulationSpec};
use scca_net::{PenaltyPair, WeaveConfig, WeavePlan};

fn js_err(e: scca_net::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct Detection {
    clusters: Vec<Vec<usize>>,
    voters: Vec<(f64, f64, f64)>,
    scores: Vec<(Option<f64>, f64)>,
}

#[wasm_bindgen]
pub struct Explorer {
    plan: WeavePlan,
    genes: usize,
    truth: Vec<Vec<usize>>,
    seed: u64,
    last_entropy: f64,
}

#[wasm_bindgen]
impl Explorer {
    /// Simulates `p` genes over `n` experiments with planted groups of the
    /// given sizes (comma separated) and prepares the resampling plan.
    #[wasm_bindgen(constructor)]
    pub fn new(
        p: usize,
        n: usize,
        groups: &str,
        dependency: f64,
        partitions: usize,
        rounds: usize,
        seed: u32,
    ) -> Result<Explorer, JsError> {
        let seed = u64::from(seed);
        let groups = groups
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|_| JsError::new(&format!("bad group size {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let sim = simulate(&SimulationSpec {
            p,
            n,
            groups,
            dependency_level: dependency,
            seed,
            ..Default::default()
        })
        .map_err(js_err)?;
        let cfg = WeaveConfig {
            partitions,
            rounds,
            seed,
            ..Default::default()
        };
        let plan = WeavePlan::prepare(&sim.dataset, &cfg).map_err(js_err)?;
        Ok(Explorer {
            plan,
            genes: p,
            truth: sim.truth,
            seed,
            last_entropy: f64::NAN,
        })
    }

    pub fn genes(&self) -> usize {
        self.genes
    }

    /// Planted groups as JSON lists of gene positions.
    pub fn truth(&self) -> String {
        serde_json::to_string(&self.truth).unwrap_or_default()
    }

    /// Row-major `p × p` edge weights at `(λ1, λ2)`.
    pub fn weave(&mut self, lambda1: f64, lambda2: f64) -> Result<Vec<f64>, JsError> {
        let pen = PenaltyPair::new(lambda1, lambda2).map_err(js_err)?;
        let a = self.plan.run(pen).map_err(js_err)?;
        self.last_entropy = entropy(&a);
        let p = a.len();
        Ok((0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| a.get(i, j)).collect())
    }

    /// Entropy of the last woven matrix.
    pub fn last_entropy(&self) -> f64 {
        self.last_entropy
    }

    /// Entropy on the square grid `start:end:step`, as `[λ1, λ2, H]`
    /// triples flattened in grid order. An all-zero matrix reports `H = ∞`.
    pub fn entropy_surface(&self, range: &str) -> Result<Vec<f64>, JsError> {
        let grid = PenaltyPair::square_grid(&parse_range(range).map_err(js_err)?);
        let surface = entropy_surface(&self.plan, &grid).map_err(js_err)?;
        Ok(surface.iter().flat_map(|(pen, h)| [pen.lambda1, pen.lambda2, *h]).collect())
    }

    /// Votes hierarchical clusterings of the `keep` lowest-entropy matrices
    /// on the grid and scores the result against the planted groups.
    pub fn detect(&self, range: &str, keep: usize, min_small: usize) -> Result<String, JsError> {
        let method = SccaMethod {
            weave: WeaveConfig {
                seed: self.seed,
                ..Default::default()
            },
            grid: PenaltyPair::square_grid(&parse_range(range).map_err(js_err)?),
            keep,
        };
        let outcome = run_scca_with_plan(&self.plan, &method, &Detector::hc(min_small)).map_err(js_err)?;
        let detection = Detection {
            scores: score(&outcome.clusters, &self.truth)
                .into_iter()
                .map(|s| (s.precision, s.recall))
                .collect(),
            voters: outcome
                .voters
                .iter()
                .map(|(pen, h)| (pen.lambda1, pen.lambda2, *h))
                .collect(),
            clusters: outcome.clusters,
        };
        serde_json::to_string(&detection).map_err(|e| JsError::new(&e.to_string()))
    }
}
