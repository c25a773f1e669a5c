//! Config-driven runs that persist every intermediate artifact alongside a
//! manifest of SHA-256 digests, and the multi-stage penalty search.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::community::CommunityResult;
use crate::dataset::{filter_genes, ExpressionDataset, FilterThresholds};
use crate::error::{Error, Result};
use crate::evalkit::{score, EvalReport};
use crate::methods::{detect, run_scca_with_plan, Detector, SccaMethod};
use crate::netweave::{parse_range, select_with_plan, WeaveConfig, WeavePlan};
use crate::rng::{derive_seed, TAG_MISC};
use crate::scca::PenaltyPair;
use crate::simgen::{simulate, SimulationSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    Simulate(SimulationSpec),
    Ingest { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    /// `start:end:step`, applied to both penalties.
    pub grid: String,
    pub keep: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            grid: "9:27:3".into(),
            keep: 10,
        }
    }
}

impl TuneConfig {
    pub fn penalties(&self) -> Result<Vec<PenaltyPair>> {
        Ok(PenaltyPair::square_grid(&parse_range(&self.grid)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub source: Source,
    #[serde(default)]
    pub filter: Option<FilterThresholds>,
    #[serde(default)]
    pub weave: WeaveConfig,
    /// Entropy-ranked penalty search with a majority vote; a single weave
    /// at `weave.penalties` when absent.
    #[serde(default)]
    pub tune: Option<TuneConfig>,
    #[serde(default = "default_detector")]
    pub detect: Detector,
}

fn default_detector() -> Detector {
    Detector::hc(1)
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if let Source::Simulate(spec) = &self.source {
            spec.validate()?;
        }
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        if let Some(t) = &self.tune {
            let grid = t.penalties()?;
            if t.keep == 0 || t.keep > grid.len() {
                return Err(Error::InvalidParameter(format!("keep={} with a grid of {}", t.keep, grid.len())));
            }
        }
        self.weave.penalties.validate()
    }

    /// Seeds of the individual stages, derived from the root seed.
    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds {
            simulate: derive_seed(self.seed, TAG_MISC | 11),
            weave: derive_seed(self.seed, TAG_MISC | 12),
            detect: derive_seed(self.seed, TAG_MISC | 13),
        }
    }

    /// SHA-256 of the configuration without its output directory, so the
    /// same computation has the same digest wherever it is written.
    pub fn digest(&self) -> Result<String> {
        let located = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        Ok(sha256_hex(located.to_toml()?.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub simulate: u64,
    pub weave: u64,
    pub detect: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub stage: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_digest: String,
    pub config: PipelineConfig,
    pub seeds: StageSeeds,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub method: String,
    pub params: Detector,
    pub clusters: Vec<Cluster>,
    /// Ids of the detected modules.
    pub selected: Vec<usize>,
    pub voters: Vec<(PenaltyPair, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub genes: Vec<String>,
}

impl ModuleReport {
    /// All blocks of one detection result; block ids start at 1.
    pub fn from_result(result: &CommunityResult, gene_ids: &[String], params: Detector) -> Self {
        let clusters: Vec<Cluster> = result
            .clusters()
            .into_iter()
            .enumerate()
            .map(|(k, members)| Cluster {
                id: k + 1,
                genes: members.iter().map(|&g| gene_ids[g].clone()).collect(),
            })
            .collect();
        Self {
            method: result.method_tag.clone(),
            params,
            clusters,
            selected: result.selected_blocks.iter().map(|k| k + 1).collect(),
            voters: Vec::new(),
        }
    }

    /// Voted modules, all selected.
    pub fn from_modules(method: String, modules: &[Vec<usize>], gene_ids: &[String], params: Detector) -> Self {
        let clusters: Vec<Cluster> = modules
            .iter()
            .enumerate()
            .map(|(k, members)| Cluster {
                id: k + 1,
                genes: members.iter().map(|&g| gene_ids[g].clone()).collect(),
            })
            .collect();
        Self {
            method,
            params,
            selected: (1..=clusters.len()).collect(),
            clusters,
            voters: Vec::new(),
        }
    }

    pub fn selected_clusters(&self) -> Vec<&Cluster> {
        self.clusters.iter().filter(|c| self.selected.contains(&c.id)).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn stage_error(stage: &str, artifact: &Path, source: Error) -> Error {
    Error::Stage {
        stage: stage.into(),
        artifact: artifact.to_path_buf(),
        source: Box::new(source),
    }
}

struct RunDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl RunDir {
    fn write(&mut self, stage: &str, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| stage_error(stage, &path, Error::io("writing artifact", e)))?;
        self.artifacts.push(Artifact {
            stage: stage.into(),
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
    pub modules: ModuleReport,
    pub report: Option<EvalReport>,
}

/// Runs source → filter → weave/tune → detect → score, writing each
/// artifact into `output_dir` and `manifest.json` last.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutcome> {
    config.validate()?;
    let seeds = config.stage_seeds();
    let root = config.output_dir.clone();
    fs::create_dir_all(&root).map_err(|e| stage_error("setup", &root, Error::io("creating run directory", e)))?;
    let mut run = RunDir {
        root: root.clone(),
        artifacts: Vec::new(),
    };
    run.write("setup", "config.toml", config.to_toml()?.as_bytes())?;

    // source
    let (mut dataset, mut truth) = match &config.source {
        Source::Simulate(spec) => {
            let spec = SimulationSpec {
                seed: seeds.simulate,
                ..spec.clone()
            };
            let sim = simulate(&spec).map_err(|e| stage_error("simulate", &root, e))?;
            let truth = sim.truth_ids();
            (sim.dataset, Some(truth))
        }
        Source::Ingest { path } => (
            ExpressionDataset::load(path).map_err(|e| stage_error("ingest", path, e))?,
            None,
        ),
    };
    let mut buf = Vec::new();
    dataset.write(&mut buf)?;
    run.write("source", "dataset.tsv", &buf)?;
    if let Some(t) = &truth {
        run.write("source", "truth.json", &json(t)?)?;
    }

    if let Some(thresholds) = &config.filter {
        let path = root.join("filtered.tsv");
        dataset = filter_genes(&dataset, thresholds).map_err(|e| stage_error("filter", &path, e))?;
        let mut buf = Vec::new();
        dataset.write(&mut buf)?;
        run.write("filter", "filtered.tsv", &buf)?;
        if let Some(t) = truth.as_mut() {
            for group in t.iter_mut() {
                group.retain(|g| dataset.gene_ids().contains(g));
            }
        }
    }

    // weave / tune
    let weave_cfg = WeaveConfig {
        seed: seeds.weave,
        ..config.weave.clone()
    };
    let weave_path = root.join("abar.bin");
    let plan = WeavePlan::prepare(&dataset, &weave_cfg).map_err(|e| stage_error("weave", &weave_path, e))?;
    let modules = match &config.tune {
        None => {
            let a = plan.run(weave_cfg.penalties).map_err(|e| stage_error("weave", &weave_path, e))?;
            let mut buf = Vec::new();
            a.write_binary(&mut buf)?;
            run.write("weave", "abar.bin", &buf)?;
            let path = root.join("modules.json");
            let result = detect(&a, &config.detect, seeds.detect).map_err(|e| stage_error("detect", &path, e))?;
            ModuleReport::from_result(&result, dataset.gene_ids(), config.detect)
        }
        Some(tune) => {
            let grid = tune.penalties()?;
            let (ranked, surface) =
                select_with_plan(&plan, &grid, tune.keep).map_err(|e| stage_error("tune", &weave_path, e))?;
            let mut csv = String::from("lambda1,lambda2,entropy\n");
            for (pen, h) in &surface {
                csv.push_str(&format!("{},{},{h}\n", pen.lambda1, pen.lambda2));
            }
            run.write("tune", "entropy.csv", csv.as_bytes())?;
            for (k, r) in ranked.iter().enumerate() {
                let mut buf = Vec::new();
                r.matrix.write_binary(&mut buf)?;
                run.write("tune", &format!("abar_rank{:02}.bin", k + 1), &buf)?;
            }
            let method = SccaMethod {
                weave: weave_cfg.clone(),
                grid,
                keep: tune.keep,
            };
            let path = root.join("modules.json");
            let outcome =
                run_scca_with_plan(&plan, &method, &config.detect).map_err(|e| stage_error("detect", &path, e))?;
            let mut report =
                ModuleReport::from_modules(outcome.tag.clone(), &outcome.clusters, dataset.gene_ids(), config.detect);
            report.voters = outcome.voters;
            report
        }
    };
    run.write("detect", "modules.json", &json(&modules)?)?;

    let report = match &truth {
        Some(t) => {
            let position = |id: &String| dataset.gene_ids().iter().position(|g| g == id);
            let truth_pos: Vec<Vec<usize>> = t.iter().map(|g| g.iter().filter_map(position).collect()).collect();
            let predicted: Vec<Vec<usize>> = modules
                .selected_clusters()
                .iter()
                .map(|c| c.genes.iter().filter_map(position).collect())
                .collect();
            let report = EvalReport {
                method_tag: modules.method.clone(),
                per_group: score(&predicted, &truth_pos),
                seeds: vec![config.seed],
                config_digest: config.digest()?,
            };
            run.write("score", "report.json", &json(&report)?)?;
            Some(report)
        }
        None => None,
    };

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_digest: config.digest()?,
        config: config.clone(),
        seeds,
        artifacts: run.artifacts,
    };
    let path = root.join("manifest.json");
    fs::write(&path, json(&manifest)?).map_err(|e| stage_error("manifest", &path, Error::io("writing manifest", e)))?;
    Ok(RunOutcome {
        run_dir: root,
        manifest,
        modules,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGroup {
    pub stage: usize,
    pub genes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedSearch {
    pub groups: Vec<StageGroup>,
    /// `(λ, H)` of the voting matrices, per completed stage.
    pub voters: Vec<Vec<(PenaltyPair, f64)>>,
    pub stopped_early: Option<String>,
}

/// Tunes and detects on the current genes with each grid in turn, removing
/// the genes of every group found before the next stage.
pub fn run_staged_search(
    dataset: &ExpressionDataset,
    weave: &WeaveConfig,
    grids: &[Vec<PenaltyPair>],
    keep: usize,
    detector: &Detector,
) -> Result<StagedSearch> {
    if grids.is_empty() {
        return Err(Error::InvalidParameter("staged search needs at least one grid".into()));
    }
    let floor = (4.0 / weave.subsample_fraction).ceil() as usize;
    let mut current = dataset.clone();
    let mut out = StagedSearch {
        groups: Vec::new(),
        voters: Vec::new(),
        stopped_early: None,
    };
    for (stage, grid) in grids.iter().enumerate() {
        if current.genes() < floor {
            out.stopped_early = Some(format!(
                "stage {} skipped: {} genes left, need at least {floor}",
                stage + 1,
                current.genes()
            ));
            break;
        }
        let plan = WeavePlan::prepare(&current, weave)?;
        let method = SccaMethod {
            weave: weave.clone(),
            grid: grid.clone(),
            keep: keep.min(grid.len()),
        };
        let outcome = run_scca_with_plan(&plan, &method, detector)?;
        let mut removed = vec![false; current.genes()];
        for members in &outcome.clusters {
            for &g in members {
                removed[g] = true;
            }
            out.groups.push(StageGroup {
                stage: stage + 1,
                genes: members.iter().map(|&g| current.gene_ids()[g].clone()).collect(),
            });
        }
        out.voters.push(outcome.voters);
        let kept: Vec<usize> = (0..current.genes()).filter(|&g| !removed[g]).collect();
        if kept.len() < 2 {
            out.stopped_early = Some(format!("no genes left after stage {}", stage + 1));
            break;
        }
        current = current.select_genes(&kept)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
output_dir = "run"

[source]
kind = "simulate"
p = 60
groups = [10]

[weave]
rounds = 2
partitions = 5
"#;

    #[test]
    fn config_defaults_and_round_trip() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.weave.subsample_fraction, 0.7);
        assert_eq!(cfg.detect, Detector::hc(1));
        assert!(cfg.tune.is_none());
        let again = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.digest().unwrap(), cfg.digest().unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml("seed = 1"), Err(Error::Format(_))));
        let bad_keep = format!("{MINIMAL}\n[tune]\ngrid = \"9:12:3\"\nkeep = 5\n");
        assert!(matches!(PipelineConfig::from_toml(&bad_keep), Err(Error::InvalidParameter(_))));
        let bad_groups = MINIMAL.replace("groups = [10]", "groups = [100]");
        assert!(PipelineConfig::from_toml(&bad_groups).is_err());
    }

    #[test]
    fn detector_tables() {
        let sbm = format!("{MINIMAL}\n[detect]\nmethod = \"sbm\"\nq = 2\nthreshold = 0.5\n");
        let cfg = PipelineConfig::from_toml(&sbm).unwrap();
        assert_eq!(cfg.detect, Detector::Sbm { q: 2, threshold: 0.5 });
    }

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
