//! Steering plan files: `{label, provenance, entries: [{layer, kind, head?,
//! dim, mode, value}]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use austeer_core::steering::{PlanProvenance, SteerAction, SteeringEntry, SteeringPlan};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ProvenanceWire {
    strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryWire {
    layer: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<usize>,
    dim: usize,
    mode: String,
    value: f32,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanWire {
    label: String,
    provenance: ProvenanceWire,
    entries: Vec<EntryWire>,
}

pub fn plan_to_json(plan: &SteeringPlan) -> String {
    let wire = PlanWire {
        label: plan.label().to_string(),
        provenance: ProvenanceWire {
            strategy: plan.provenance().strategy.clone(),
            k: plan.provenance().k,
            alpha: plan.provenance().alpha,
            seed: plan.provenance().seed,
        },
        entries: plan
            .entries()
            .iter()
            .map(|e| EntryWire {
                layer: e.au.site.layer,
                kind: e.au.site.kind.as_str().to_string(),
                head: e.au.site.head,
                dim: e.au.dim,
                mode: match e.action {
                    SteerAction::Multiplicative { .. } => "multiplicative".to_string(),
                    SteerAction::Additive { .. } => "additive".to_string(),
                },
                value: e.action.value(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&wire).expect("plan serializes")
}

pub fn plan_from_json(text: &str) -> Result<SteeringPlan> {
    let wire: PlanWire = serde_json::from_str(text)
        .map_err(|e| CliError::data(format!("malformed plan JSON: {e}")))?;
    let mut entries = Vec::with_capacity(wire.entries.len());
    for (i, e) in wire.entries.iter().enumerate() {
        let site = crate::formats::wire::SiteWire {
            layer: e.layer,
            kind: e.kind.clone(),
            head: e.head,
        }
        .to_site()
        .map_err(|err| CliError::data(format!("plan entry {i}: {err}")))?;
        let au = austeer_core::audecomp::AUId::new(site, e.dim);
        let entry = match e.mode.as_str() {
            "multiplicative" => SteeringEntry::multiplicative(au, e.value),
            "additive" => SteeringEntry::additive(au, e.value),
            other => {
                return Err(CliError::data(format!(
                    "plan entry {i}: unknown mode `{other}`"
                )))
            }
        };
        entries.push(entry);
    }
    let mut provenance = PlanProvenance::new(&wire.provenance.strategy);
    provenance.k = wire.provenance.k;
    provenance.alpha = wire.provenance.alpha;
    provenance.seed = wire.provenance.seed;
    SteeringPlan::new(wire.label, provenance, entries)
        .map_err(|e| CliError::data(format!("invalid plan: {e}")))
}

pub fn save_plan(path: &Path, plan: &SteeringPlan) -> Result<()> {
    fs::write(path, plan_to_json(plan) + "\n")
        .map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

pub fn load_plan(path: &Path) -> Result<SteeringPlan> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    plan_from_json(&text)
}
