use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scca_net::community::vote_clusters;
use scca_net::dataset::{draw_replicates, filter_genes};
use scca_net::evalkit::{score, summarize, write_table, EvalReport, GroupScore, SummaryRow};
use scca_net::knorm;
use scca_net::methods::{detect, run_pearson, run_scca, Detector, SccaMethod};
use scca_net::netweave::{parse_range, select_with_plan};
use scca_net::pipeline::{run_pipeline, run_staged_search, sha256_hex, ModuleReport, PipelineConfig};
use scca_net::simgen::{simulate, SimulationSpec};
use scca_net::{EdgeWeightMatrix, Error, ExpressionDataset, FilterThresholds, PenaltyPair, Result, WeaveConfig, WeavePlan};

#[derive(Parser)]
#[command(name = "scca-net", version, about = "Gene networks from sparse CCA over random partitions")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "SCCA_NET_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an expression dataset with planted gene groups.
    Simulate(SimulateArgs),
    /// Validate and filter a delimited expression file.
    Ingest(IngestArgs),
    /// Remove experiment dependencies and write the normalized matrix.
    Normalize(NormalizeArgs),
    /// Build the edge weight matrix at one penalty pair.
    Weave(WeaveArgs),
    /// Rank a penalty grid by entropy and keep the sharpest matrices.
    Tune(TuneArgs),
    /// Detect modules in one edge weight matrix, or vote over several.
    Detect(DetectArgs),
    /// Precision and recall of detected modules against known groups.
    Score(ScoreArgs),
    /// Run a whole configured study into a run directory.
    Pipeline(PipelineArgs),
    /// Tune and detect in stages, removing found genes between stages.
    StagedSearch(StagedArgs),
    /// Simulation study over seeds, dependency levels and group counts.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct WeaveOpts {
    /// Fraction of genes kept in every round.
    #[arg(long, default_value_t = 0.7)]
    subsample: f64,
    /// Random partitions per round.
    #[arg(long, default_value_t = 100)]
    partitions: usize,
    /// Rounds of replicate draws and subsampling.
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    /// Weight of the identity in the experiment correlation.
    #[arg(long, default_value_t = knorm::DEFAULT_SHRINKAGE)]
    shrinkage: f64,
    /// Only standardize genes instead of whitening experiments.
    #[arg(long)]
    skip_normalization: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl WeaveOpts {
    fn config(&self, penalties: PenaltyPair) -> WeaveConfig {
        WeaveConfig {
            subsample_fraction: self.subsample,
            partitions: self.partitions,
            rounds: self.rounds,
            penalties,
            skip_normalization: self.skip_normalization,
            shrinkage: self.shrinkage,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 150)]
    p: usize,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    replicates: usize,
    /// Sizes of the planted groups.
    #[arg(long, value_delimiter = ',', default_value = "15")]
    groups: Vec<usize>,
    /// Fraction of mutually correlated experiments.
    #[arg(long, default_value_t = 0.0)]
    dependency: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for dataset.tsv and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterOpts {
    #[arg(long)]
    min_variance: Option<f64>,
    #[arg(long)]
    max_variance: Option<f64>,
    #[arg(long)]
    max_replicate_gap: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    min_expression: Option<f64>,
}

impl FilterOpts {
    fn thresholds(&self) -> FilterThresholds {
        let d = FilterThresholds::default();
        FilterThresholds {
            min_variance: self.min_variance.unwrap_or(d.min_variance),
            max_variance: self.max_variance.unwrap_or(d.max_variance),
            max_replicate_gap: self.max_replicate_gap.unwrap_or(d.max_replicate_gap),
            min_expression: self.min_expression.unwrap_or(d.min_expression),
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Where to write the accepted genes.
    #[arg(long)]
    out: PathBuf,
    /// Only validate; keep every gene.
    #[arg(long)]
    no_filter: bool,
    #[command(flatten)]
    filter: FilterOpts,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = knorm::DEFAULT_SHRINKAGE)]
    shrinkage: f64,
    /// Normalize one random replicate per experiment instead of the
    /// replicate means.
    #[arg(long)]
    replicate_seed: Option<u64>,
}

#[derive(Args)]
struct WeaveArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    weave: WeaveOpts,
    #[arg(long, default_value_t = 9.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 9.0)]
    lambda2: f64,
    /// Binary edge weight matrix.
    #[arg(long)]
    out: PathBuf,
    /// Also write the full matrix as a CSV heatmap.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Also write an edge list of weights at or above `--edge-threshold`.
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    edge_threshold: f64,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    weave: WeaveOpts,
    /// `start:end:step`, used for both penalties.
    #[arg(long, default_value = "9:27:3")]
    grid: String,
    #[arg(long, default_value_t = 10)]
    keep: usize,
    /// Output directory for entropy.csv, ranking.json and the matrices.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Hc,
    Sbm,
}

#[derive(Args)]
struct DetectorOpts {
    #[arg(long, value_enum, default_value_t = Method::Hc)]
    method: Method,
    /// Clusters smaller than this count as modules (hc).
    #[arg(long, default_value_t = 25)]
    small_size: usize,
    /// Cut where this many small clusters first appear (hc).
    #[arg(long, default_value_t = 1)]
    min_small: usize,
    /// Number of blocks (sbm).
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Discretization level of the weights (sbm).
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

impl DetectorOpts {
    fn detector(&self) -> Detector {
        match self.method {
            Method::Hc => Detector::Hc {
                small_size: self.small_size,
                min_small: self.min_small,
            },
            Method::Sbm => Detector::Sbm {
                q: self.q,
                threshold: self.threshold,
            },
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    /// One matrix, or several whose detections are put to a majority vote.
    #[arg(long, num_args = 1.., required = true)]
    abar: Vec<PathBuf>,
    #[command(flatten)]
    detector: DetectorOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// modules.json from `detect`, `tune` or `pipeline`.
    #[arg(long)]
    modules: PathBuf,
    /// JSON list of gene-id lists.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StagedArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    weave: WeaveOpts,
    /// One `start:end:step` grid per stage, in order.
    #[arg(long = "grid", required = true)]
    grids: Vec<String>,
    #[arg(long, default_value_t = 10)]
    keep: usize,
    #[command(flatten)]
    detector: DetectorOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.33,0.67")]
    levels: Vec<f64>,
    /// Numbers of planted 15-gene groups.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    groups: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    p: usize,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "scca.hc,pearson.hc")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    sbm_threshold: f64,
    #[command(flatten)]
    weave: WeaveOpts,
    /// Output directory for the tables and per-dataset reports.
    #[arg(long)]
    out: PathBuf,
}

fn io_err(context: &str, path: &Path) -> impl FnOnce(std::io::Error) -> Error {
    let context = format!("{context} {}", path.display());
    move |e| Error::io(context, e)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err("creating", path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err("writing", path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err("reading", path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn penalties(l1: f64, l2: f64) -> Result<PenaltyPair> {
    PenaltyPair::new(l1, l2)
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let spec = SimulationSpec {
        p: a.p,
        n: a.n,
        replicates: a.replicates,
        dependency_level: a.dependency,
        groups: a.groups.clone(),
        seed: a.seed,
        ..Default::default()
    };
    let sim = simulate(&spec)?;
    create_dir(&a.out)?;
    sim.dataset.save(a.out.join("dataset.tsv"))?;
    write_json(&a.out.join("truth.json"), &sim.truth_ids())?;
    println!(
        "simulated {} genes x {} experiments x {} replicates into {}",
        spec.p,
        spec.n,
        spec.replicates,
        a.out.display()
    );
    Ok(())
}

fn ingest_cmd(a: &IngestArgs) -> Result<()> {
    let d = ExpressionDataset::load(&a.input)?;
    let kept = if a.no_filter { d.clone() } else { filter_genes(&d, &a.filter.thresholds())? };
    kept.save(&a.out)?;
    println!(
        "{} of {} genes kept, {} experiments, {} replicates",
        kept.genes(),
        d.genes(),
        d.experiments(),
        d.replicates()
    );
    Ok(())
}

fn normalize_cmd(a: &NormalizeArgs) -> Result<()> {
    let d = ExpressionDataset::load(&a.input)?;
    let z = match a.replicate_seed {
        Some(seed) => draw_replicates(&d, seed).matrix,
        None => d.replicate_means(),
    };
    let out = knorm::fit_and_normalize(&z, a.shrinkage)?;
    let mut text = String::from("experiment");
    for id in d.gene_ids() {
        text.push('\t');
        text.push_str(id);
    }
    text.push('\n');
    for (e, label) in d.experiment_labels().iter().enumerate() {
        text.push_str(label);
        for g in 0..d.genes() {
            text.push_str(&format!("\t{}", out[(e, g)]));
        }
        text.push('\n');
    }
    write_bytes(&a.out, text.as_bytes())
}

fn heatmap_csv(a: &EdgeWeightMatrix) -> String {
    let mut text = String::from("gene");
    for id in a.gene_ids() {
        text.push(',');
        text.push_str(id);
    }
    text.push('\n');
    for (i, id) in a.gene_ids().iter().enumerate() {
        text.push_str(id);
        for j in 0..a.len() {
            text.push_str(&format!(",{}", a.get(i, j)));
        }
        text.push('\n');
    }
    text
}

fn weave_cmd(a: &WeaveArgs) -> Result<()> {
    let d = ExpressionDataset::load(&a.input)?;
    let cfg = a.weave.config(penalties(a.lambda1, a.lambda2)?);
    let abar = WeavePlan::prepare(&d, &cfg)?.run(cfg.penalties)?;
    abar.save(&a.out)?;
    if let Some(path) = &a.heatmap {
        write_bytes(path, heatmap_csv(&abar).as_bytes())?;
    }
    if let Some(path) = &a.edges {
        let mut buf = Vec::new();
        abar.write_edge_csv(&mut buf, a.edge_threshold)?;
        write_bytes(path, &buf)?;
    }
    println!("entropy {:.6}", scca_net::netweave::entropy(&abar));
    Ok(())
}

#[derive(Serialize)]
struct Ranked {
    rank: usize,
    penalties: PenaltyPair,
    entropy: f64,
    file: String,
}

fn tune_cmd(a: &TuneArgs) -> Result<()> {
    let d = ExpressionDataset::load(&a.input)?;
    let grid = PenaltyPair::square_grid(&parse_range(&a.grid)?);
    let cfg = a.weave.config(grid[0]);
    let plan = WeavePlan::prepare(&d, &cfg)?;
    let (ranked, surface) = select_with_plan(&plan, &grid, a.keep)?;
    create_dir(&a.out)?;
    let mut csv = String::from("lambda1,lambda2,entropy\n");
    for (p, h) in &surface {
        csv.push_str(&format!("{},{},{h}\n", p.lambda1, p.lambda2));
    }
    write_bytes(&a.out.join("entropy.csv"), csv.as_bytes())?;
    let mut listing = Vec::new();
    for (k, r) in ranked.iter().enumerate() {
        let file = format!("abar_rank{:02}.bin", k + 1);
        r.matrix.save(a.out.join(&file))?;
        println!("{:>2}  {}  H={:.6}", k + 1, r.penalties, r.entropy);
        listing.push(Ranked {
            rank: k + 1,
            penalties: r.penalties,
            entropy: r.entropy,
            file,
        });
    }
    write_json(&a.out.join("ranking.json"), &listing)
}

fn detect_cmd(a: &DetectArgs) -> Result<()> {
    let detector = a.detector.detector();
    let matrices = a.abar.iter().map(EdgeWeightMatrix::load).collect::<Result<Vec<_>>>()?;
    let genes = matrices[0].gene_ids().to_vec();
    if matrices.iter().any(|m| m.gene_ids() != genes.as_slice()) {
        return Err(Error::Dimension("matrices cover different genes".into()));
    }
    let report = if matrices.len() == 1 {
        let result = detect(&matrices[0], &detector, a.seed)?;
        ModuleReport::from_result(&result, &genes, detector)
    } else {
        let results = matrices
            .iter()
            .map(|m| detect(m, &detector, a.seed))
            .collect::<Result<Vec<_>>>()?;
        let modules = vote_clusters(&results)?;
        ModuleReport::from_modules(format!("vote.{}", detector.tag()), &modules, &genes, detector)
    };
    for c in report.selected_clusters() {
        println!("module {} ({} genes): {}", c.id, c.genes.len(), c.genes.join(" "));
    }
    write_json(&a.out, &report)
}

fn score_cmd(a: &ScoreArgs) -> Result<()> {
    let modules: ModuleReport = read_json(&a.modules)?;
    let truth: Vec<Vec<String>> = read_json(&a.truth)?;
    // ids are numbered in order of first appearance
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut position = |id: &str| {
        let next = index.len();
        *index.entry(id.to_string()).or_insert(next)
    };
    let predicted: Vec<Vec<usize>> = modules
        .selected_clusters()
        .iter()
        .map(|c| c.genes.iter().map(|g| position(g)).collect())
        .collect();
    let truth_pos: Vec<Vec<usize>> = truth.iter().map(|g| g.iter().map(|id| position(id)).collect()).collect();
    let modules_bytes = fs::read(&a.modules).map_err(io_err("reading", &a.modules))?;
    let report = EvalReport {
        method_tag: modules.method.clone(),
        per_group: score(&predicted, &truth_pos),
        seeds: Vec::new(),
        config_digest: sha256_hex(&modules_bytes),
    };
    for g in &report.per_group {
        let precision = g.precision.map_or("NA".to_string(), |p| format!("{p:.3}"));
        println!("group {}: precision {precision} recall {:.3}", g.group + 1, g.recall);
    }
    match &a.out {
        Some(path) => write_json(path, &report),
        None => Ok(()),
    }
}

fn pipeline_cmd(a: &PipelineArgs) -> Result<()> {
    let mut config = PipelineConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        config.output_dir = out.clone();
    }
    let outcome = run_pipeline(&config)?;
    println!("run directory {}", outcome.run_dir.display());
    for c in outcome.modules.selected_clusters() {
        println!("module {} ({} genes): {}", c.id, c.genes.len(), c.genes.join(" "));
    }
    if let Some(report) = &outcome.report {
        for g in &report.per_group {
            let precision = g.precision.map_or("NA".to_string(), |p| format!("{p:.3}"));
            println!("group {}: precision {precision} recall {:.3}", g.group + 1, g.recall);
        }
    }
    Ok(())
}

fn staged_cmd(a: &StagedArgs) -> Result<()> {
    let d = ExpressionDataset::load(&a.input)?;
    let grids = a
        .grids
        .iter()
        .map(|g| parse_range(g).map(|v| PenaltyPair::square_grid(&v)))
        .collect::<Result<Vec<_>>>()?;
    let cfg = a.weave.config(grids[0][0]);
    let out = run_staged_search(&d, &cfg, &grids, a.keep, &a.detector.detector())?;
    for g in &out.groups {
        println!("stage {} ({} genes): {}", g.stage, g.genes.len(), g.genes.join(" "));
    }
    if let Some(reason) = &out.stopped_early {
        println!("stopped early: {reason}");
    }
    write_json(&a.out, &out)
}

#[derive(Serialize)]
struct DatasetReport<'a> {
    groups: usize,
    dependency: f64,
    seed: u64,
    method: &'a str,
    per_group: &'a [GroupScore],
}

fn benchmark_cmd(a: &BenchmarkArgs) -> Result<()> {
    create_dir(&a.out)?;
    let mut lines = Vec::new();
    for &k in &a.groups {
        let mut rows: Vec<SummaryRow> = Vec::new();
        for &level in &a.levels {
            let mut scores: Vec<Vec<Vec<GroupScore>>> = vec![Vec::new(); a.methods.len()];
            for seed in 0..a.seeds {
                let spec = SimulationSpec {
                    p: a.p,
                    n: a.n,
                    groups: vec![15; k],
                    dependency_level: level,
                    seed,
                    ..Default::default()
                };
                let sim = simulate(&spec)?;
                let weave = WeaveConfig {
                    seed,
                    ..a.weave.config(PenaltyPair::new(9.0, 9.0)?)
                };
                for (m, tag) in a.methods.iter().enumerate() {
                    let (is_scca, kind) = scca_net::methods::parse_method(tag)?;
                    let detector = match kind {
                        "hc" => Detector::hc(k.max(1)),
                        _ => Detector::Sbm {
                            q: k + 1,
                            threshold: a.sbm_threshold,
                        },
                    };
                    let outcome = if is_scca {
                        let method = SccaMethod {
                            weave: weave.clone(),
                            ..Default::default()
                        };
                        run_scca(&sim.dataset, &method, &detector)?
                    } else {
                        run_pearson(&sim.dataset, weave.shrinkage, &detector, seed)?
                    };
                    let s = score(&outcome.clusters, &sim.truth);
                    writeln!(
                        lines,
                        "{}",
                        serde_json::to_string(&DatasetReport {
                            groups: k,
                            dependency: level,
                            seed,
                            method: tag,
                            per_group: &s,
                        })
                        .map_err(|e| Error::Format(e.to_string()))?
                    )
                    .expect("writing to memory");
                    scores[m].push(s);
                }
                eprintln!("groups {k} level {level} seed {seed} done");
            }
            for (m, tag) in a.methods.iter().enumerate() {
                rows.extend(summarize(tag, level, &scores[m]));
            }
        }
        let mut table = Vec::new();
        write_table(&mut table, &rows)?;
        let path = a.out.join(format!("table_{k}group{}.csv", if k == 1 { "" } else { "s" }));
        write_bytes(&path, &table)?;
        print!("{}", String::from_utf8_lossy(&table));
    }
    write_bytes(&a.out.join("datasets.jsonl"), &lines)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Normalize(a) => normalize_cmd(a),
        Command::Weave(a) => weave_cmd(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
        Command::StagedSearch(a) => staged_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
