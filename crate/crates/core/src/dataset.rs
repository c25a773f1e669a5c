//! Replicated expression data: loading, writing, gene filtering and
//! per-round replicate draws.
//!
//! The on-disk format is a tab- or comma-delimited table with the header
//! `experiment, replicate, <gene_1>, ..., <gene_p>` and one row per
//! (experiment, replicate) pair.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionDataset {
    gene_ids: Vec<String>,
    experiment_labels: Vec<String>,
    replicates: usize,
    // (experiment, replicate, gene), gene fastest
    values: Vec<f64>,
}

impl ExpressionDataset {
    /// Builds a dataset from values laid out as `[experiment][replicate][gene]`.
    pub fn new(
        gene_ids: Vec<String>,
        experiment_labels: Vec<String>,
        replicates: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let p = gene_ids.len();
        let n = experiment_labels.len();
        if p < 2 || n < 2 || replicates < 1 {
            return Err(Error::Dimension(format!(
                "need p >= 2, n >= 2, r >= 1 (got p={p}, n={n}, r={replicates})"
            )));
        }
        if values.len() != n * replicates * p {
            return Err(Error::Dimension(format!(
                "expected {} values for n={n}, r={replicates}, p={p}, got {}",
                n * replicates * p,
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(p);
        for id in &gene_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateGene(id.clone()));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValue {
                line: 0,
                gene: gene_ids[pos % p].clone(),
            });
        }
        Ok(Self {
            gene_ids,
            experiment_labels,
            replicates,
            values,
        })
    }

    pub fn genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn experiments(&self) -> usize {
        self.experiment_labels.len()
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn experiment_labels(&self) -> &[String] {
        &self.experiment_labels
    }

    pub fn value(&self, experiment: usize, replicate: usize, gene: usize) -> f64 {
        self.values[self.offset(experiment, replicate) + gene]
    }

    /// The `p` expression values of one (experiment, replicate) measurement.
    pub fn row(&self, experiment: usize, replicate: usize) -> &[f64] {
        let start = self.offset(experiment, replicate);
        &self.values[start..start + self.genes()]
    }

    fn offset(&self, experiment: usize, replicate: usize) -> usize {
        (experiment * self.replicates + replicate) * self.genes()
    }

    /// n×p matrix of per-experiment replicate means.
    pub fn replicate_means(&self) -> DMatrix<f64> {
        let (n, r, p) = (self.experiments(), self.replicates, self.genes());
        DMatrix::from_fn(n, p, |e, g| {
            (0..r).map(|k| self.value(e, k, g)).sum::<f64>() / r as f64
        })
    }

    /// Restricts the dataset to the given gene positions, in the given order.
    pub fn select_genes(&self, genes: &[usize]) -> Result<Self> {
        let (n, r) = (self.experiments(), self.replicates);
        let mut values = Vec::with_capacity(n * r * genes.len());
        for e in 0..n {
            for k in 0..r {
                let row = self.row(e, k);
                values.extend(genes.iter().map(|&g| row[g]));
            }
        }
        let ids = genes.iter().map(|&g| self.gene_ids[g].clone()).collect();
        Self::new(ids, self.experiment_labels.clone(), r, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read(file)
    }

    /// Parses the delimited format. The delimiter is a tab if the header line
    /// contains one, otherwise a comma.
    pub fn read(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| Error::io("reading dataset", e))?;
        let header_line = text.lines().next().unwrap_or("");
        let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };

        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let header = rdr.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.len() < 4
            || !header[0].eq_ignore_ascii_case("experiment")
            || !header[1].eq_ignore_ascii_case("replicate")
        {
            return Err(Error::Parse {
                line: 1,
                message: "header must be `experiment, replicate, <gene ids...>` with at least two genes"
                    .into(),
            });
        }
        let gene_ids: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
        let p = gene_ids.len();
        let mut seen = HashSet::with_capacity(p);
        for id in &gene_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateGene(id.clone()));
            }
        }

        // Rows are grouped by experiment in order of first appearance.
        let mut experiments: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != p + 2 {
                return Err(Error::Dimension(format!(
                    "line {line}: expected {} fields, found {}",
                    p + 2,
                    record.len()
                )));
            }
            let mut row = Vec::with_capacity(p);
            for (g, cell) in record.iter().skip(2).enumerate() {
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                    return Err(Error::MissingValue {
                        line,
                        gene: gene_ids[g].clone(),
                    });
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse `{cell}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::MissingValue {
                        line,
                        gene: gene_ids[g].clone(),
                    });
                }
                row.push(v);
            }
            let label = &record[0];
            match experiments.iter_mut().find(|(l, _)| l == label) {
                Some((_, rows)) => rows.push(row),
                None => experiments.push((label.to_owned(), vec![row])),
            }
        }

        let replicates = experiments.first().map_or(0, |(_, rows)| rows.len());
        if let Some((label, rows)) = experiments.iter().find(|(_, rows)| rows.len() != replicates) {
            return Err(Error::Dimension(format!(
                "experiment `{label}` has {} replicates, expected {replicates}",
                rows.len()
            )));
        }
        let labels = experiments.iter().map(|(l, _)| l.clone()).collect();
        let values = experiments.into_iter().flat_map(|(_, rows)| rows).flatten().collect();
        Self::new(gene_ids, labels, replicates, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io("writing dataset", e))
    }

    /// Writes the tab-delimited format. Values use the shortest round-trip
    /// representation, so reading back is lossless.
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let io = |e| Error::io("writing dataset", e);
        write!(w, "experiment\treplicate").map_err(io)?;
        for id in &self.gene_ids {
            write!(w, "\t{id}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for (e, label) in self.experiment_labels.iter().enumerate() {
            for k in 0..self.replicates {
                write!(w, "{label}\t{}", k + 1).map_err(io)?;
                for v in self.row(e, k) {
                    write!(w, "\t{v}").map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub min_variance: f64,
    pub max_variance: f64,
    pub max_replicate_gap: f64,
    pub min_expression: f64,
}

impl Default for FilterThresholds {
    /// Thresholds for log-scale microarray intensities.
    fn default() -> Self {
        Self {
            min_variance: 0.1,
            max_variance: f64::INFINITY,
            max_replicate_gap: 2.0,
            min_expression: 7.0,
        }
    }
}

impl FilterThresholds {
    /// Thresholds that keep every gene with nonzero experiment variance.
    pub fn permissive() -> Self {
        Self {
            min_variance: 0.0,
            max_variance: f64::INFINITY,
            max_replicate_gap: f64::INFINITY,
            min_expression: f64::NEG_INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_variance >= 0.0) || !(self.max_replicate_gap >= 0.0) {
            return Err(Error::InvalidParameter(
                "variance and replicate-gap thresholds must be nonnegative".into(),
            ));
        }
        if !(self.min_variance < self.max_variance) {
            return Err(Error::InvalidParameter(
                "min_variance must be smaller than max_variance".into(),
            ));
        }
        if self.min_expression.is_nan() {
            return Err(Error::InvalidParameter("min_expression is NaN".into()));
        }
        Ok(())
    }
}

/// Per-gene summary statistics the filter is defined on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneStats {
    /// Sample variance of the per-experiment replicate means.
    pub experiment_variance: f64,
    /// Largest within-experiment replicate range (max - min).
    pub max_replicate_gap: f64,
    pub min_expression: f64,
}

pub fn gene_stats(d: &ExpressionDataset, gene: usize) -> GeneStats {
    let (n, r) = (d.experiments(), d.replicates());
    let mut means = Vec::with_capacity(n);
    let mut gap = 0.0f64;
    let mut lowest = f64::INFINITY;
    for e in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for k in 0..r {
            let v = d.value(e, k, gene);
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        means.push(sum / r as f64);
        gap = gap.max(hi - lo);
        lowest = lowest.min(lo);
    }
    let mean = means.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    GeneStats {
        experiment_variance: var,
        max_replicate_gap: gap,
        min_expression: lowest,
    }
}

impl FilterThresholds {
    pub fn accepts(&self, s: &GeneStats) -> bool {
        s.experiment_variance > self.min_variance
            && s.experiment_variance < self.max_variance
            && s.max_replicate_gap < self.max_replicate_gap
            && s.min_expression >= self.min_expression
    }
}

/// Keeps the genes passing all three criteria, preserving their order.
pub fn filter_genes(d: &ExpressionDataset, t: &FilterThresholds) -> Result<ExpressionDataset> {
    t.validate()?;
    let keep: Vec<usize> = (0..d.genes()).filter(|&g| t.accepts(&gene_stats(d, g))).collect();
    match keep.len() {
        0 => Err(Error::EmptyFilterResult),
        1 => Err(Error::Dimension("only one gene passed the filter".into())),
        _ => d.select_genes(&keep),
    }
}

/// One n×p expression matrix built by picking a replicate per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDraw {
    pub matrix: DMatrix<f64>,
    pub source_replicates: Vec<usize>,
}

pub fn draw_replicates(d: &ExpressionDataset, seed: u64) -> ReplicateDraw {
    let mut rng = stream_rng(seed, crate::rng::TAG_REPLICATE);
    let (n, r, p) = (d.experiments(), d.replicates(), d.genes());
    let source_replicates: Vec<usize> = (0..n).map(|_| rng.random_range(0..r)).collect();
    let matrix = DMatrix::from_fn(n, p, |e, g| d.value(e, source_replicates[e], g));
    ReplicateDraw {
        matrix,
        source_replicates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExpressionDataset {
        ExpressionDataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["e1".into(), "e2".into()],
            2,
            vec![
                1.0, 2.0, 3.0, //
                1.5, 2.5, 3.5, //
                4.0, 5.0, 6.0, //
                4.5, 5.5, 6.5,
            ],
        )
        .unwrap()
    }

    #[test]
    fn tsv_round_trip() {
        let d = small();
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        let back = ExpressionDataset::read(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!((back.genes(), back.experiments(), back.replicates()), (3, 2, 2));
    }

    #[test]
    fn reads_comma_delimited() {
        let text = "experiment,replicate,g1,g2\nA,1,1,2\nA,2,1.1,2.1\nB,1,3,4\nB,2,3.1,4.1\n";
        let d = ExpressionDataset::read(text.as_bytes()).unwrap();
        assert_eq!(d.gene_ids(), ["g1", "g2"]);
        assert_eq!(d.value(1, 1, 1), 4.1);
    }

    #[test]
    fn duplicate_gene_rejected() {
        let text = "experiment\treplicate\tg1\tg1\nA\t1\t1\t2\nB\t1\t3\t4\n";
        assert!(matches!(
            ExpressionDataset::read(text.as_bytes()),
            Err(Error::DuplicateGene(id)) if id == "g1"
        ));
    }

    #[test]
    fn empty_cell_rejected_with_line() {
        let text = "experiment\treplicate\tg1\tg2\nA\t1\t1\t2\nB\t1\t\t4\n";
        match ExpressionDataset::read(text.as_bytes()) {
            Err(Error::MissingValue { line, gene }) => {
                assert_eq!(line, 3);
                assert_eq!(gene, "g1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_and_ragged_rows() {
        let text = "experiment\treplicate\tg1\tg2\nA\t1\t1\tx\nB\t1\t3\t4\n";
        assert!(matches!(
            ExpressionDataset::read(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = "experiment\treplicate\tg1\tg2\nA\t1\t1\nB\t1\t3\t4\n";
        assert!(matches!(ExpressionDataset::read(text.as_bytes()), Err(Error::Dimension(_))));
        let text = "experiment\treplicate\tg1\tg2\nA\t1\t1\t2\nA\t2\t1\t2\nB\t1\t3\t4\n";
        assert!(matches!(ExpressionDataset::read(text.as_bytes()), Err(Error::Dimension(_))));
    }

    #[test]
    fn constant_gene_is_filtered() {
        let d = ExpressionDataset::new(
            vec!["flat".into(), "up".into(), "down".into()],
            vec!["e1".into(), "e2".into(), "e3".into()],
            1,
            vec![8.0, 8.0, 9.0, 8.0, 9.0, 8.0, 8.0, 10.0, 7.0],
        )
        .unwrap();
        let t = FilterThresholds {
            min_expression: f64::NEG_INFINITY,
            ..Default::default()
        };
        let f = filter_genes(&d, &t).unwrap();
        assert_eq!(f.gene_ids(), ["up", "down"]);
    }

    #[test]
    fn filter_rejects_bad_thresholds_and_empty_result() {
        let d = small();
        let bad = FilterThresholds {
            min_variance: 1.0,
            max_variance: 0.5,
            ..FilterThresholds::permissive()
        };
        assert!(matches!(filter_genes(&d, &bad), Err(Error::InvalidParameter(_))));
        let strict = FilterThresholds {
            min_expression: 100.0,
            ..FilterThresholds::permissive()
        };
        assert!(matches!(filter_genes(&d, &strict), Err(Error::EmptyFilterResult)));
    }

    #[test]
    fn single_replicate_draw_ignores_seed() {
        let d = small().select_genes(&[0, 1, 2]).unwrap();
        let single = ExpressionDataset::new(
            d.gene_ids().to_vec(),
            d.experiment_labels().to_vec(),
            1,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let a = draw_replicates(&single, 1);
        let b = draw_replicates(&single, 99);
        assert_eq!(a, b);
        assert_eq!(a.matrix, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn draw_rows_come_from_chosen_replicate() {
        let d = small();
        let draw = draw_replicates(&d, 5);
        assert_eq!(draw, draw_replicates(&d, 5));
        for e in 0..2 {
            let row: Vec<f64> = draw.matrix.row(e).iter().copied().collect();
            assert_eq!(row, d.row(e, draw.source_replicates[e]));
        }
    }
}
