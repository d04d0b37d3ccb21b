use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use attn_graphs::dataset::{generate_split_with, load_canonical};
use attn_graphs::graph::Graph;
use attn_graphs::model::{write_attention, write_checkpoint, ModelConfig};
use attn_graphs::train::{mean_std, prepare_structure, train_with_structure, RunSummary, TrainConfig};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::layout::{read_json, write_atomic, write_csv, write_json, Layout};
use crate::manifest::{Cell, Manifest};
use crate::CliError;

/// `run.json`: one finished training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub cell: Cell,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Train / validation / test sizes.
    pub split_sizes: [usize; 3],
    #[serde(flatten)]
    pub summary: RunSummary,
}

/// `summary.json` of a cell: test accuracy over the manifest's seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub seeds: Vec<u64>,
    pub test_accuracy: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub best_epochs: Vec<usize>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    dataset: &'a str,
    variant: &'a str,
    config: String,
    seeds: usize,
    mean: f64,
    std: f64,
}

pub fn load_graphs(manifest: &Manifest) -> Result<BTreeMap<String, Arc<Graph>>, CliError> {
    let mut out = BTreeMap::new();
    for name in manifest.datasets() {
        let path = manifest.dataset_path(&name);
        let g = load_canonical(&path).map_err(|e| CliError::Config(format!("dataset {name} ({}): {e}", path.display())))?;
        out.insert(name, Arc::new(g));
    }
    Ok(out)
}

fn is_current(layout: &Layout, cell: &Cell, seed: u64, cfg: &ModelConfig, train: &TrainConfig) -> bool {
    if !layout.attention(cell, seed).exists() || !layout.checkpoint(cell, seed).exists() {
        return false;
    }
    match read_json::<RunFile>(&layout.run_json(cell, seed)) {
        Ok(run) => run.model == *cfg && run.train == *train,
        Err(_) => false,
    }
}

fn train_cell(manifest: &Manifest, layout: &Layout, force: bool, cell: &Cell, g: &Graph, trained: &AtomicUsize) -> Result<CellSummary, String> {
    let cfg = manifest.model_config_for(cell, g);
    cfg.validate().map_err(|e| e.to_string())?;
    let todo: Vec<u64> = manifest
        .seeds
        .iter()
        .copied()
        .filter(|&s| force || !is_current(layout, cell, s, &cfg, &manifest.train))
        .collect();
    if !todo.is_empty() {
        let structure = prepare_structure::<f32>(&cfg, g).map_err(|e| e.to_string())?;
        todo.par_iter()
            .map(|&seed| {
                let split = generate_split_with(g, seed, manifest.train.stratified_split).map_err(|e| format!("seed {seed}: {e}"))?;
                let run = train_with_structure(&cfg, &manifest.train, g, &structure, &split).map_err(|e| format!("seed {seed}: {e}"))?;
                let save = |e: std::io::Error| format!("seed {seed}: {e}");
                write_atomic(&layout.checkpoint(cell, seed), |w| write_checkpoint(&run.checkpoint, w))
                    .map_err(|e| format!("seed {seed}: {e}"))?;
                write_atomic(&layout.attention(cell, seed), |w| write_attention(&run.record, w))
                    .map_err(|e| format!("seed {seed}: {e}"))?;
                let file = RunFile {
                    cell: cell.clone(),
                    model: cfg.clone(),
                    train: manifest.train.clone(),
                    split_sizes: [split.train.len(), split.val.len(), split.test.len()],
                    summary: run.summary(),
                };
                write_json(&layout.run_json(cell, seed), &file).map_err(save)?;
                trained.fetch_add(1, Ordering::Relaxed);
                info!("{cell} seed {seed}: test accuracy {:.4} (epoch {})", run.test_accuracy, run.best_epoch);
                Ok(())
            })
            .collect::<Result<Vec<()>, String>>()?;
    }
    let runs = manifest
        .seeds
        .iter()
        .map(|&s| read_json::<RunFile>(&layout.run_json(cell, s)).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let acc: Vec<f64> = runs.iter().map(|r| r.summary.test_accuracy).collect();
    let (mean, std) = mean_std(&acc);
    let summary = CellSummary {
        cell: cell.clone(),
        seeds: manifest.seeds.clone(),
        test_accuracy: acc,
        mean,
        std,
        best_epochs: runs.iter().map(|r| r.summary.best_epoch).collect(),
    };
    write_json(&layout.cell_summary(cell), &summary).map_err(|e| e.to_string())?;
    Ok(summary)
}

pub struct TrainOutcome {
    pub trained: usize,
    pub summaries: Vec<CellSummary>,
    pub failures: Vec<String>,
}

pub fn run(manifest: &Manifest, layout: &Layout, force: bool) -> Result<TrainOutcome, CliError> {
    let graphs = load_graphs(manifest)?;
    let trained = AtomicUsize::new(0);
    let results: Vec<(Cell, Result<CellSummary, String>)> = manifest
        .cells
        .par_iter()
        .map(|cell| (cell.clone(), train_cell(manifest, layout, force, cell, &graphs[&cell.dataset], &trained)))
        .collect();
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in results {
        match r {
            Ok(s) => summaries.push(s),
            Err(e) => failures.push(format!("{cell}: {e}")),
        }
    }
    let rows: Vec<SummaryRow> = summaries
        .iter()
        .map(|s| SummaryRow {
            dataset: &s.cell.dataset,
            variant: s.cell.variant.as_str(),
            config: s.cell.config.to_string(),
            seeds: s.seeds.len(),
            mean: s.mean,
            std: s.std,
        })
        .collect();
    write_csv(&layout.top("summary.csv"), &rows)?;
    Ok(TrainOutcome { trained: trained.into_inner(), summaries, failures })
}
