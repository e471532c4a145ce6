//! Evaluation report, sweep, and comparison outputs (JSON and CSV).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use austeer_core::eval::{EvalReport, ItemRecord, SweepResult};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ProvenanceWire {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemWire {
    id: String,
    predicted: String,
    expected: String,
    correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportWire {
    plan_label: String,
    dataset_id: String,
    n: usize,
    accuracy: f64,
    footprint: usize,
    provenance: ProvenanceWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    items: Vec<ItemWire>,
}

fn report_wire(report: &EvalReport) -> ReportWire {
    ReportWire {
        plan_label: report.plan_label.clone(),
        dataset_id: report.dataset_id.clone(),
        n: report.n,
        accuracy: report.accuracy,
        footprint: report.footprint,
        provenance: ProvenanceWire {
            mode: report.provenance.mode.clone(),
            k: report.provenance.k,
            alpha: report.provenance.alpha,
            seed: report.provenance.seed,
        },
        note: report.note.clone(),
        items: report
            .items
            .iter()
            .map(|r: &ItemRecord| ItemWire {
                id: r.id.clone(),
                predicted: r.predicted.clone(),
                expected: r.expected.clone(),
                correct: r.correct,
                error: r.error.clone(),
            })
            .collect(),
    }
}

pub fn report_to_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(&report_wire(report)).expect("report serializes")
}

pub fn reports_to_json(reports: &[EvalReport]) -> String {
    let wires: Vec<ReportWire> = reports.iter().map(report_wire).collect();
    serde_json::to_string_pretty(&wires).expect("reports serialize")
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from("id,predicted,expected,correct\n");
    for item in &report.items {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_escape(&item.id),
            csv_escape(&item.predicted),
            csv_escape(&item.expected),
            item.correct
        ));
    }
    out
}

pub fn sweep_to_csv(result: &SweepResult) -> String {
    let mut out = String::from("k,alpha,accuracy\n");
    for cell in &result.grid {
        out.push_str(&format!("{},{},{}\n", cell.k, cell.alpha, cell.accuracy));
    }
    out
}

pub fn sweep_to_json(result: &SweepResult) -> String {
    #[derive(Serialize)]
    struct CellWire {
        k: usize,
        alpha: f64,
        accuracy: f64,
    }
    #[derive(Serialize)]
    struct SweepWire {
        grid: Vec<CellWire>,
        best: CellWire,
    }
    let wire = SweepWire {
        grid: result
            .grid
            .iter()
            .map(|c| CellWire {
                k: c.k,
                alpha: c.alpha,
                accuracy: c.accuracy,
            })
            .collect(),
        best: CellWire {
            k: result.best.k,
            alpha: result.best.alpha,
            accuracy: result.best.accuracy,
        },
    };
    serde_json::to_string_pretty(&wire).expect("sweep serializes")
}

/// One row per mode: the comparison table.
pub fn comparison_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("mode,label,footprint,accuracy\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_escape(&r.provenance.mode),
            csv_escape(&r.plan_label),
            r.footprint,
            r.accuracy
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}
