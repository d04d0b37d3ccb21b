//! Reproduced values side by side with the bundled reference values, with a
//! tolerance verdict per cell. Reads artifacts only; writes `report.json`
//! and `report.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use attn_graphs::dataset::{dataset_stats, load_canonical, DatasetStats};
use attn_graphs::homophily::ClassShareWeighting;
use attn_graphs::model::AttentionVariant;
use attn_graphs::reference::{HomophilyMetric, ReferenceValues};
use serde::{Deserialize, Serialize};

use crate::analyze_cmd::{AnalysisIndex, CellAnalysis};
use crate::layout::{read_json, write_atomic, write_json, Layout};
use crate::manifest::{Cell, Manifest};
use crate::train_cmd::CellSummary;
use crate::{CliError, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    /// The reproduced value is absent.
    Missing,
    /// Shown for context; no tolerance applies.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coordinate: String,
    pub reproduced: Option<f64>,
    pub reference: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub rule: String,
    pub rows: Vec<Row>,
}

impl Section {
    fn count(&self, v: Verdict) -> usize {
        self.rows.iter().filter(|r| r.verdict == v).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub reference_format_version: u32,
    pub manifest_sha256: String,
    pub sections: Vec<Section>,
}

fn judged(reproduced: Option<f64>, reference: Option<f64>, ok: impl Fn(f64) -> bool) -> Verdict {
    match reproduced {
        None => Verdict::Missing,
        Some(v) if ok(v) => Verdict::Pass,
        Some(_) if reference.is_none() => Verdict::Info,
        Some(_) => Verdict::Fail,
    }
}

fn homophily_section(datasets: &[String], stats: &BTreeMap<String, DatasetStats>, reference: &ReferenceValues) -> Section {
    let mut rows = Vec::new();
    for d in datasets {
        for m in HomophilyMetric::ALL {
            let want = reference.homophily(d, m).map(|v| v / 100.0);
            let got = stats.get(d).and_then(|s| m.of(&s.homophily));
            let verdict = match want {
                None => if got.is_some() { Verdict::Info } else { Verdict::Missing },
                Some(w) => judged(got, Some(w), |v| (v - w).abs() <= 0.005),
            };
            rows.push(Row { coordinate: format!("{d} / {}", m.as_str()), reproduced: got, reference: want, verdict });
        }
    }
    Section { name: "homophily".into(), rule: "|reproduced - reference| <= 0.005 (fractions)".into(), rows }
}

fn size_section(datasets: &[String], stats: &BTreeMap<String, DatasetStats>, reference: &ReferenceValues) -> Section {
    let mut rows = Vec::new();
    for d in datasets {
        let s = stats.get(d);
        let r = reference.size(d);
        let fields: [(&str, Option<f64>, Option<f64>); 3] = [
            ("nodes", s.map(|s| s.nodes as f64), r.map(|r| r.nodes as f64)),
            ("edges", s.map(|s| s.reported_edge_count() as f64), r.map(|r| r.edges as f64)),
            ("classes", s.map(|s| s.classes as f64), r.map(|r| r.classes as f64)),
        ];
        for (name, got, want) in fields {
            let verdict = match want {
                None => if got.is_some() { Verdict::Info } else { Verdict::Missing },
                Some(w) => judged(got, Some(w), |v| v == w),
            };
            rows.push(Row { coordinate: format!("{d} / {name}"), reproduced: got, reference: want, verdict });
        }
    }
    Section { name: "dataset size".into(), rule: "exact match".into(), rows }
}

fn accuracy_section(cells: &[Cell], summaries: &BTreeMap<Cell, CellSummary>, reference: &ReferenceValues) -> Section {
    let rows = cells
        .iter()
        .map(|c| {
            let want = reference.accuracy(&c.dataset, &c.config.to_string(), c.variant).map(|a| a.0);
            let got = summaries.get(c).map(|s| s.mean);
            let verdict = match want {
                None => if got.is_some() { Verdict::Info } else { Verdict::Missing },
                Some(w) => judged(got, Some(w), |v| (v - w).abs() <= 0.05),
            };
            Row { coordinate: c.to_string(), reproduced: got, reference: want, verdict }
        })
        .collect();
    Section { name: "accuracy".into(), rule: "|mean test accuracy - reference| <= 0.05".into(), rows }
}

fn f1_section(cells: &[Cell], analyses: &BTreeMap<Cell, CellAnalysis>, reference: &ReferenceValues) -> Section {
    let rows = cells
        .iter()
        .map(|c| {
            let tag = c.config.to_string();
            let want = reference.f1(&c.dataset, &tag, c.variant);
            let got = analyses.get(c).map(|a| a.f1_percent);
            let verdict = match c.variant {
                AttentionVariant::DL => judged(got, want, |v| v < 4.0),
                AttentionVariant::DLB => {
                    let dl = analyses.get(&Cell { variant: AttentionVariant::DL, ..c.clone() }).map(|a| a.f1_percent);
                    match (got, dl) {
                        (None, _) => Verdict::Missing,
                        (Some(_), None) => Verdict::Info,
                        (Some(v), Some(dl)) => if v > 5.0 * dl { Verdict::Pass } else { Verdict::Fail },
                    }
                }
                _ => if got.is_some() { Verdict::Info } else { Verdict::Missing },
            };
            Row { coordinate: c.to_string(), reproduced: got, reference: want, verdict }
        })
        .collect();
    Section {
        name: "structure recovery F1 (%)".into(),
        rule: "DL: F1 < 4.0; DLB: F1 > 5 x DL F1 of the same dataset and shape; others informational".into(),
        rows,
    }
}

fn ratio_section(cells: &[Cell], analyses: &BTreeMap<Cell, CellAnalysis>, reference: &ReferenceValues) -> Section {
    let rows = cells
        .iter()
        .map(|c| {
            let want = reference.ratio(&c.dataset, &c.config.to_string(), c.variant);
            let got = analyses.get(c).and_then(|a| a.attention_ratio);
            let verdict = match c.variant {
                AttentionVariant::DL => judged(got, want, |v| (0.5..=1.5).contains(&v)),
                AttentionVariant::SL | AttentionVariant::DLB if c.config.layers == 1 => judged(got, want, |v| v < 0.05),
                AttentionVariant::SL | AttentionVariant::DLB => match want {
                    Some(w) => judged(got, want, |v| (v - w).abs() <= 0.05),
                    None => judged(got, None, |_| false),
                },
                AttentionVariant::SC => if got.is_some() { Verdict::Info } else { Verdict::Missing },
            };
            Row { coordinate: c.to_string(), reproduced: got, reference: want, verdict }
        })
        .collect();
    Section {
        name: "attention ratio".into(),
        rule: "1-layer SL/DLB: < 0.05; deeper SL/DLB: |reproduced - reference| <= 0.05; DL: in [0.5, 1.5]".into(),
        rows,
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "reproduction report (format {}, reference values v{})", r.format_version, r.reference_format_version);
    let _ = writeln!(s, "manifest sha256 {}", r.manifest_sha256);
    for sec in &r.sections {
        let _ = writeln!(
            s,
            "\n== {} ==\nrule: {}\npass {} / fail {} / missing {} / info {}",
            sec.name,
            sec.rule,
            sec.count(Verdict::Pass),
            sec.count(Verdict::Fail),
            sec.count(Verdict::Missing),
            sec.count(Verdict::Info)
        );
        let width = sec.rows.iter().map(|r| r.coordinate.len()).max().unwrap_or(0);
        for row in &sec.rows {
            let verdict = serde_json::to_value(row.verdict).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
            let _ = writeln!(
                s,
                "  {:<width$}  reproduced {:>9}  reference {:>9}  {verdict}",
                row.coordinate,
                fmt_value(row.reproduced),
                fmt_value(row.reference),
            );
        }
    }
    s
}

pub fn build(manifest: &Manifest, layout: &Layout, reference: &ReferenceValues) -> Report {
    let datasets = manifest.datasets();
    let mut stats = BTreeMap::new();
    for d in &datasets {
        match load_canonical(manifest.dataset_path(d)) {
            Ok(g) => {
                stats.insert(d.clone(), dataset_stats(&g, ClassShareWeighting::Degree));
            }
            Err(e) => log::warn!("dataset {d}: {e}"),
        }
    }
    let summaries: BTreeMap<Cell, CellSummary> = manifest
        .cells
        .iter()
        .filter_map(|c| read_json::<CellSummary>(&layout.cell_summary(c)).ok().filter(|s| s.seeds == manifest.seeds).map(|s| (c.clone(), s)))
        .collect();
    let analyses: BTreeMap<Cell, CellAnalysis> = read_json::<AnalysisIndex>(&layout.top("analysis.json"))
        .map(|i| i.cells.into_iter().map(|a| (a.cell.clone(), a)).collect())
        .unwrap_or_default();
    let learned_pair = |c: &&Cell| matches!(c.variant, AttentionVariant::DLB | AttentionVariant::DL);
    let f1_cells: Vec<Cell> = manifest.cells.iter().filter(learned_pair).cloned().collect();
    Report {
        format_version: FORMAT_VERSION,
        reference_format_version: reference.format_version,
        manifest_sha256: manifest.sha256.clone(),
        sections: vec![
            homophily_section(&datasets, &stats, reference),
            size_section(&datasets, &stats, reference),
            accuracy_section(&manifest.cells, &summaries, reference),
            f1_section(&f1_cells, &analyses, reference),
            ratio_section(&manifest.cells, &analyses, reference),
        ],
    }
}

pub fn run(manifest: &Manifest, layout: &Layout, reference: &ReferenceValues) -> Result<Report, CliError> {
    let report = build(manifest, layout, reference);
    write_json(&layout.top("report.json"), &report)?;
    let text = render_text(&report);
    write_atomic(&layout.top("report.txt"), |w| w.write_all(text.as_bytes()))?;
    Ok(report)
}
