use std::fs;
use std::path::Path;

use scca_net::methods::Detector;
use scca_net::netweave::parse_range;
use scca_net::pipeline::{run_pipeline, run_staged_search, sha256_hex, Manifest, PipelineConfig, Source};
use scca_net::simgen::{simulate, SimulationSpec};
use scca_net::{EdgeWeightMatrix, Error, ExpressionDataset, FilterThresholds, PenaltyPair, WeaveConfig};

fn small_config(dir: &Path) -> PipelineConfig {
    PipelineConfig::from_toml(&format!(
        r#"
seed = 11
output_dir = "{}"

[source]
kind = "simulate"
p = 60
n = 20
groups = [10]

[weave]
rounds = 4
partitions = 10
penalties = {{ lambda1 = 3.0, lambda2 = 3.0 }}
"#,
        dir.display()
    ))
    .unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn same_config_gives_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&small_config(a.path())).unwrap();
    run_pipeline(&small_config(b.path())).unwrap();
    for name in ["dataset.tsv", "truth.json", "abar.bin", "modules.json", "report.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    // config.toml records the differing output directory
    let hashes = |m: Manifest| -> Vec<_> { m.artifacts.into_iter().filter(|x| x.path != "config.toml").collect() };
    assert_eq!(manifest(a.path()).config_digest, manifest(b.path()).config_digest);
    assert_eq!(hashes(manifest(a.path())), hashes(manifest(b.path())));
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&small_config(dir.path())).unwrap();
    let m = manifest(dir.path());
    assert_eq!(m, out.manifest);
    assert_eq!(m.artifacts.first().unwrap().path, "config.toml");
    for art in &m.artifacts {
        assert_eq!(sha256_hex(&fs::read(dir.path().join(&art.path)).unwrap()), art.sha256, "{}", art.path);
    }
    let reloaded = PipelineConfig::load(dir.path().join("config.toml")).unwrap();
    assert_eq!(reloaded, small_config(dir.path()));
    let a = EdgeWeightMatrix::load(dir.path().join("abar.bin")).unwrap();
    assert_eq!(a.len(), 60);
    assert!(out.report.is_some());
}

#[test]
fn different_seed_changes_the_data() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&small_config(a.path())).unwrap();
    let mut cfg = small_config(b.path());
    cfg.seed = 12;
    run_pipeline(&cfg).unwrap();
    assert_ne!(fs::read(a.path().join("dataset.tsv")).unwrap(), fs::read(b.path().join("dataset.tsv")).unwrap());
}

#[test]
fn tuning_writes_the_entropy_surface_and_ranked_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.tune = Some(scca_net::pipeline::TuneConfig {
        grid: "3:9:3".into(),
        keep: 3,
    });
    let out = run_pipeline(&cfg).unwrap();
    let surface = fs::read_to_string(dir.path().join("entropy.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 9);
    for k in 1..=3 {
        assert!(dir.path().join(format!("abar_rank{k:02}.bin")).exists());
    }
    assert!(!dir.path().join("abar_rank04.bin").exists());
    assert_eq!(out.modules.voters.len(), 3);
    assert!(out.modules.voters.windows(2).all(|w| w[0].1 <= w[1].1));
    assert_eq!(out.modules.method, "scca.hc");
}

#[test]
fn ingested_data_runs_without_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(&SimulationSpec {
        p: 40,
        n: 15,
        replicates: 2,
        groups: vec![8],
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let input = dir.path().join("input.tsv");
    sim.dataset.save(&input).unwrap();
    assert_eq!(ExpressionDataset::load(&input).unwrap(), sim.dataset);

    let out_dir = dir.path().join("run");
    let cfg = PipelineConfig {
        seed: 1,
        output_dir: out_dir.clone(),
        source: Source::Ingest { path: input },
        filter: Some(FilterThresholds::permissive()),
        weave: WeaveConfig {
            rounds: 3,
            partitions: 6,
            ..Default::default()
        },
        tune: None,
        detect: Detector::hc(1),
    };
    let out = run_pipeline(&cfg).unwrap();
    assert!(out.report.is_none());
    assert!(out_dir.join("filtered.tsv").exists());
    assert!(!out_dir.join("report.json").exists());
    assert!(!out.modules.selected.is_empty());
}

#[test]
fn missing_input_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.source = Source::Ingest {
        path: dir.path().join("nope.tsv"),
    };
    match run_pipeline(&cfg) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "ingest"),
        other => panic!("expected a stage error, got {other:?}"),
    }
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn malformed_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.tsv");
    fs::write(&input, "experiment\treplicate\ta\tb\ne1\t1\t1.0\tNA\ne2\t1\t2.0\t3.0\n").unwrap();
    let mut cfg = small_config(dir.path());
    cfg.source = Source::Ingest { path: input };
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn staged_search_removes_found_genes() {
    let sim = simulate(&SimulationSpec {
        p: 80,
        n: 30,
        groups: vec![10, 10],
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let weave = WeaveConfig {
        rounds: 6,
        partitions: 20,
        ..Default::default()
    };
    let grid = PenaltyPair::square_grid(&parse_range("6:12:3").unwrap());
    let out = run_staged_search(&sim.dataset, &weave, &[grid.clone(), grid], 3, &Detector::hc(1)).unwrap();
    assert!(!out.voters.is_empty());
    let mut seen = std::collections::HashSet::new();
    for g in &out.groups {
        assert!(g.stage >= 1 && g.stage <= 2);
        for gene in &g.genes {
            assert!(seen.insert(gene.clone()), "{gene} found twice");
        }
    }
}

#[test]
fn staged_search_stops_below_the_gene_floor() {
    let sim = simulate(&SimulationSpec {
        p: 5,
        n: 12,
        groups: vec![],
        seed: 0,
        ..Default::default()
    })
    .unwrap();
    let weave = WeaveConfig {
        subsample_fraction: 0.5,
        ..Default::default()
    };
    let grid = vec![PenaltyPair::new(1.0, 1.0).unwrap()];
    let out = run_staged_search(&sim.dataset, &weave, &[grid], 1, &Detector::hc(1)).unwrap();
    assert!(out.groups.is_empty());
    assert!(out.stopped_early.unwrap().contains("need at least 8"));
}

#[test]
fn shipped_example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/two_groups.toml");
    let cfg = PipelineConfig::load(path).unwrap();
    assert!(matches!(cfg.source, Source::Simulate(_)));
    assert_eq!(cfg.tune.unwrap().keep, 10);
}
