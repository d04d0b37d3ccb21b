use std::collections::BTreeMap;
use std::sync::Arc;

use attn_graphs::analysis::{analyze, hop_samples, layer_matrices, AnalysisReport, CorrelationDomain, F1Counts};
use attn_graphs::graph::{shortest_path_lengths, Graph, HopDistanceMatrix};
use attn_graphs::model::{load_attention, AttentionRecord, AttentionVariant};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::layout::{write_atomic, write_csv, write_csv_records, write_json, Layout};
use crate::manifest::{AnalysisSeeds, AnalysisToggles, Cell, Manifest, Shape};
use crate::pbm::write_pbm;
use crate::train_cmd::load_graphs;
use crate::{CliError, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub seed: u64,
    pub threshold: f64,
    pub target_edges: usize,
    pub achieved_edges: usize,
    pub f1_counts: F1Counts,
    pub f1_percent: f64,
    pub attention_ratio: Option<f64>,
    pub gini: f64,
    pub min_head_correlation: Option<f64>,
}

/// Statistics of one cell, averaged over the analyzed seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAnalysis {
    pub cell: Cell,
    pub correlation_domain: CorrelationDomain,
    pub f1_percent: f64,
    /// `None` when undefined for every analyzed seed.
    pub attention_ratio: Option<f64>,
    pub gini: f64,
    pub min_head_correlation: Option<f64>,
    pub seeds: Vec<SeedStats>,
}

/// Top-level `analysis.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisIndex {
    pub format_version: u32,
    pub manifest_sha256: String,
    pub settings: AnalysisToggles,
    pub cells: Vec<CellAnalysis>,
}

#[derive(Serialize)]
struct HopRow {
    dataset: String,
    variant: &'static str,
    config: String,
    seed: u64,
    /// Empty for unreachable pairs.
    hop: Option<u32>,
    attention: f64,
}

#[derive(Serialize)]
struct CorrRow {
    dataset: String,
    variant: &'static str,
    config: String,
    seed: u64,
    /// `head` pairs share a layer; `layer` pairs compare head-averaged layers.
    kind: &'static str,
    layer_a: usize,
    head_a: Option<usize>,
    layer_b: usize,
    head_b: Option<usize>,
    row: usize,
    col: usize,
    a: f64,
    b: f64,
}

#[derive(Serialize)]
struct MassRow {
    dataset: String,
    variant: &'static str,
    config: String,
    seed: u64,
    node: usize,
    mass: f64,
}

#[derive(Default)]
struct Rows {
    hops: Vec<HopRow>,
    corr: Vec<CorrRow>,
    mass: Vec<MassRow>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Up to `limit` evenly strided entry pairs of the domain.
fn sample_pairs(x: &Array2<f64>, y: &Array2<f64>, domain: CorrelationDomain, limit: usize) -> Vec<(usize, usize, f64, f64)> {
    let keep = |a: f64, b: f64| domain == CorrelationDomain::All || a != 0.0 || b != 0.0;
    let total = x.iter().zip(y.iter()).filter(|&(&a, &b)| keep(a, b)).count();
    if total == 0 || limit == 0 {
        return Vec::new();
    }
    let stride = total.div_ceil(limit);
    let mut k = 0;
    let mut out = Vec::new();
    for ((ij, &a), &b) in x.indexed_iter().zip(y.iter()) {
        if keep(a, b) {
            if k % stride == 0 {
                out.push((ij.0, ij.1, a, b));
            }
            k += 1;
        }
    }
    out
}

fn corr_rows(cell: &Cell, seed: u64, rec: &AttentionRecord, domain: CorrelationDomain, limit: usize) -> Vec<CorrRow> {
    let mut out = Vec::new();
    let mut push = |kind, la, ha, lb, hb, x: &Array2<f64>, y: &Array2<f64>| {
        for (row, col, a, b) in sample_pairs(x, y, domain, limit) {
            out.push(CorrRow {
                dataset: cell.dataset.clone(),
                variant: cell.variant.as_str(),
                config: cell.config.to_string(),
                seed,
                kind,
                layer_a: la,
                head_a: ha,
                layer_b: lb,
                head_b: hb,
                row,
                col,
                a,
                b,
            });
        }
    };
    for (l, heads) in rec.matrices.iter().enumerate() {
        let heads: Vec<Array2<f64>> = heads.iter().map(|m| m.mapv(f64::from)).collect();
        for a in 0..heads.len() {
            for b in a + 1..heads.len() {
                push("head", l, Some(a), l, Some(b), &heads[a], &heads[b]);
            }
        }
    }
    if let Ok(layers) = layer_matrices(rec) {
        for a in 0..layers.len() {
            for b in a + 1..layers.len() {
                push("layer", a, None, b, None, &layers[a], &layers[b]);
            }
        }
    }
    out
}

fn analyze_seed(
    m: &Manifest,
    layout: &Layout,
    cell: &Cell,
    seed: u64,
    g: &Graph,
    dist: &HopDistanceMatrix,
    rows: &mut Rows,
) -> Result<(SeedStats, CorrelationDomain), String> {
    let path = layout.attention(cell, seed);
    let rec = load_attention(&path).map_err(|e| format!("seed {seed}: cannot read {}: {e}", path.display()))?;
    if rec.config.variant != cell.variant || rec.n_layers() != cell.config.layers || rec.n_heads() != cell.config.heads {
        return Err(format!("seed {seed}: {} holds a different model", path.display()));
    }
    let settings = &m.analysis;
    let a = analyze(&rec, g, Some(dist), &settings.options).map_err(|e| format!("seed {seed}: {e}"))?;
    write_json(&layout.seed_analysis(cell, seed), &a.report).map_err(|e| e.to_string())?;
    if settings.quasi_adjacency_pbm {
        write_atomic(&layout.quasi_pbm(cell, seed), |w| write_pbm(&a.quasi.binary, w)).map_err(|e| e.to_string())?;
    }
    let r: &AnalysisReport = &a.report;
    let tag = cell.config.to_string();
    for (hop, attention) in hop_samples(&a.graph.matrix, dist, settings.hop_samples_per_bucket) {
        rows.hops.push(HopRow { dataset: cell.dataset.clone(), variant: cell.variant.as_str(), config: tag.clone(), seed, hop, attention });
    }
    for (node, &mass) in r.column_mass.mass.iter().enumerate() {
        rows.mass.push(MassRow { dataset: cell.dataset.clone(), variant: cell.variant.as_str(), config: tag.clone(), seed, node, mass });
    }
    rows.corr.extend(corr_rows(cell, seed, &rec, r.correlation_domain, settings.corr_samples));
    let min_r = r.head_correlations.iter().filter_map(|e| e.correlation.value()).reduce(f64::min);
    let stats = SeedStats {
        seed,
        threshold: r.threshold,
        target_edges: r.target_edges,
        achieved_edges: r.achieved_edges,
        f1_counts: r.f1_counts,
        f1_percent: r.f1_percent,
        attention_ratio: r.attention_ratio,
        gini: r.column_mass.gini,
        min_head_correlation: min_r,
    };
    Ok((stats, r.correlation_domain))
}

fn analyze_cell(m: &Manifest, layout: &Layout, cell: &Cell, g: &Graph, dist: &HopDistanceMatrix) -> Result<(CellAnalysis, Rows), String> {
    let seeds: Vec<u64> = match m.analysis.seeds {
        AnalysisSeeds::First => m.seeds[..1].to_vec(),
        AnalysisSeeds::All => m.seeds.clone(),
    };
    let mut rows = Rows::default();
    let mut stats = Vec::new();
    let mut domain = CorrelationDomain::default_for(cell.variant);
    for seed in seeds {
        let (s, d) = analyze_seed(m, layout, cell, seed, g, dist, &mut rows)?;
        domain = d;
        stats.push(s);
    }
    let analysis = CellAnalysis {
        cell: cell.clone(),
        correlation_domain: domain,
        f1_percent: mean(stats.iter().map(|s| s.f1_percent)).unwrap_or(0.0),
        attention_ratio: mean(stats.iter().filter_map(|s| s.attention_ratio)),
        gini: mean(stats.iter().map(|s| s.gini)).unwrap_or(0.0),
        min_head_correlation: stats.iter().filter_map(|s| s.min_head_correlation).reduce(f64::min),
        seeds: stats,
    };
    Ok((analysis, rows))
}

const F1_VARIANTS: [AttentionVariant; 4] = [AttentionVariant::DLB, AttentionVariant::DL, AttentionVariant::SL, AttentionVariant::SC];
const RATIO_VARIANTS: [AttentionVariant; 4] = [AttentionVariant::SL, AttentionVariant::DLB, AttentionVariant::DL, AttentionVariant::SC];

fn present_shapes(cells: &[CellAnalysis]) -> Vec<Shape> {
    let mut shapes: Vec<Shape> = cells.iter().map(|c| c.cell.config).collect();
    shapes.sort();
    shapes.dedup();
    shapes
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|v| format!("{v:.digits$}")).unwrap_or_default()
}

/// Rows are datasets; columns are shape × variant.
fn write_f1_table(layout: &Layout, datasets: &[String], cells: &[CellAnalysis]) -> std::io::Result<()> {
    let shapes = present_shapes(cells);
    let variants: Vec<AttentionVariant> =
        F1_VARIANTS.into_iter().filter(|v| cells.iter().any(|c| c.cell.variant == *v)).collect();
    let lookup: BTreeMap<(&str, AttentionVariant, Shape), &CellAnalysis> =
        cells.iter().map(|c| ((c.cell.dataset.as_str(), c.cell.variant, c.cell.config), c)).collect();
    let mut header = vec!["dataset".to_owned()];
    let mut columns = Vec::new();
    for &s in &shapes {
        for &v in &variants {
            if v == AttentionVariant::SC && s.heads != 1 {
                continue;
            }
            header.push(format!("{s}_{v}"));
            columns.push((v, s));
        }
    }
    let rows: Vec<Vec<String>> = datasets
        .iter()
        .map(|d| {
            let mut row = vec![d.clone()];
            row.extend(columns.iter().map(|&(v, s)| fmt_opt(lookup.get(&(d.as_str(), v, s)).map(|c| c.f1_percent), 2)));
            row
        })
        .collect();
    write_csv_records(&layout.top("f1.csv"), &header, &rows)
}

/// Rows are shape × variant; columns are datasets.
fn write_ratio_table(layout: &Layout, datasets: &[String], cells: &[CellAnalysis]) -> std::io::Result<()> {
    let lookup: BTreeMap<(&str, AttentionVariant, Shape), &CellAnalysis> =
        cells.iter().map(|c| ((c.cell.dataset.as_str(), c.cell.variant, c.cell.config), c)).collect();
    let mut header = vec!["config".to_owned(), "variant".to_owned()];
    header.extend(datasets.iter().cloned());
    let mut rows = Vec::new();
    for s in present_shapes(cells) {
        for v in RATIO_VARIANTS {
            if !cells.iter().any(|c| c.cell.variant == v && c.cell.config == s) {
                continue;
            }
            let mut row = vec![s.to_string(), v.to_string()];
            row.extend(datasets.iter().map(|d| fmt_opt(lookup.get(&(d.as_str(), v, s)).and_then(|c| c.attention_ratio), 4)));
            rows.push(row);
        }
    }
    write_csv_records(&layout.top("ratio.csv"), &header, &rows)
}

pub struct AnalyzeOutcome {
    pub index: AnalysisIndex,
    pub failures: Vec<String>,
}

pub fn run(manifest: &Manifest, layout: &Layout) -> Result<AnalyzeOutcome, CliError> {
    let graphs = load_graphs(manifest)?;
    let dists: BTreeMap<String, Arc<HopDistanceMatrix>> =
        graphs.par_iter().map(|(k, g)| (k.clone(), Arc::new(shortest_path_lengths(g)))).collect();
    let results: Vec<(Cell, Result<(CellAnalysis, Rows), String>)> = manifest
        .cells
        .par_iter()
        .map(|c| (c.clone(), analyze_cell(manifest, layout, c, &graphs[&c.dataset], &dists[&c.dataset])))
        .collect();
    let mut cells = Vec::new();
    let mut rows = Rows::default();
    let mut failures = Vec::new();
    for (cell, r) in results {
        match r {
            Ok((a, r)) => {
                cells.push(a);
                rows.hops.extend(r.hops);
                rows.corr.extend(r.corr);
                rows.mass.extend(r.mass);
            }
            Err(e) => failures.push(format!("{cell}: {e}")),
        }
    }
    let datasets = manifest.datasets();
    write_f1_table(layout, &datasets, &cells)?;
    write_ratio_table(layout, &datasets, &cells)?;
    write_csv(&layout.top("hops.csv"), &rows.hops)?;
    write_csv(&layout.top("corr.csv"), &rows.corr)?;
    write_csv(&layout.top("column_mass.csv"), &rows.mass)?;
    let index = AnalysisIndex {
        format_version: FORMAT_VERSION,
        manifest_sha256: manifest.sha256.clone(),
        settings: manifest.analysis.clone(),
        cells,
    };
    write_json(&layout.top("analysis.json"), &index)?;
    Ok(AnalyzeOutcome { index, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_sampling_respects_domain_and_limit() {
        let x = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { (i + j) as f64 });
        let y = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { (i * j) as f64 });
        assert_eq!(sample_pairs(&x, &y, CorrelationDomain::All, 100).len(), 16);
        let support = sample_pairs(&x, &y, CorrelationDomain::UnionSupport, 100);
        assert_eq!(support.len(), 12);
        assert!(support.iter().all(|&(i, j, _, _)| i != j));
        assert_eq!(sample_pairs(&x, &y, CorrelationDomain::All, 5).len(), 4);
    }

    #[test]
    fn mean_of_values() {
        assert_eq!(mean([1.0, 2.0, 6.0]), Some(3.0));
        assert_eq!(mean(Vec::<f64>::new()), None);
    }
}
