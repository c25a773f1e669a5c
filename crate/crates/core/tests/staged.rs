use scca_net::methods::Detector;
use scca_net::netweave::parse_range;
use scca_net::pipeline::{run_staged_search, StageGroup};
use scca_net::simgen::{simulate, SimulationSpec};
use scca_net::{PenaltyPair, WeaveConfig};

/// Genes of `planted` covered by reported groups whose majority lies in it.
fn covered(planted: &[String], found: &[StageGroup]) -> usize {
    found
        .iter()
        .map(|g| (g.genes.iter().filter(|x| planted.contains(x)).count(), g.genes.len()))
        .filter(|&(hits, size)| 2 * hits > size)
        .map(|(hits, _)| hits)
        .sum()
}

#[test]
fn two_stages_recover_both_planted_groups() {
    let mut recovered = 0;
    for seed in 0..10u64 {
        let sim = simulate(&SimulationSpec {
            p: 150,
            n: 30,
            groups: vec![15, 15],
            seed,
            ..Default::default()
        })
        .unwrap();
        let weave = WeaveConfig {
            rounds: 20,
            partitions: 50,
            seed,
            ..Default::default()
        };
        let stages = [
            PenaltyPair::square_grid(&parse_range("9:27:3").unwrap()),
            PenaltyPair::square_grid(&parse_range("3:15:3").unwrap()),
        ];
        let out = run_staged_search(&sim.dataset, &weave, &stages, 10, &Detector::hc(2)).unwrap();
        let hits: Vec<usize> = sim.truth_ids().iter().map(|t| covered(t, &out.groups)).collect();
        let ok = hits.iter().all(|&h| 3 * h >= 15);
        println!("seed {seed}: covered {hits:?} {}", if ok { "recovered" } else { "missed" });
        recovered += ok as usize;
    }
    assert!(recovered >= 7, "both groups recovered in {recovered}/10 seeds");
}
