//! Analysis outputs: divergence series (CSV + JSON), top-k token tables,
//! and Taylor-check records.

use serde::Serialize;

use austeer_core::analysis::{DivergenceSeries, SeriesSubject, TaylorRecord, TokenTable};

use crate::formats::wire::AuWire;

pub fn series_to_csv(series: &DivergenceSeries) -> String {
    let mut out = String::from("strength,value\n");
    for (s, v) in series.strengths.iter().zip(&series.values) {
        out.push_str(&format!("{s},{v}\n"));
    }
    out
}

pub fn series_to_json(series: &DivergenceSeries) -> String {
    #[derive(Serialize)]
    struct SeriesWire {
        #[serde(skip_serializing_if = "Option::is_none")]
        au: Option<AuWire>,
        #[serde(skip_serializing_if = "Option::is_none")]
        au_a: Option<AuWire>,
        #[serde(skip_serializing_if = "Option::is_none")]
        au_b: Option<AuWire>,
        strengths: Vec<f64>,
        values: Vec<f64>,
        normalized: bool,
        /// Convention used when `normalized` is true.
        normalization: &'static str,
    }
    let (au, au_a, au_b) = match series.subject {
        SeriesSubject::Single(a) => (Some(AuWire::from_au(&a)), None, None),
        SeriesSubject::Pair(a, b) => (None, Some(AuWire::from_au(&a)), Some(AuWire::from_au(&b))),
    };
    let wire = SeriesWire {
        au,
        au_a,
        au_b,
        strengths: series.strengths.clone(),
        values: series.values.clone(),
        normalized: series.normalized,
        normalization: if series.normalized {
            "first-grid-point"
        } else {
            "none"
        },
    };
    serde_json::to_string_pretty(&wire).expect("series serializes")
}

pub fn token_table_to_json(table: &TokenTable) -> String {
    #[derive(Serialize)]
    struct RowWire<'a> {
        token: &'a str,
        probability: f64,
    }
    #[derive(Serialize)]
    struct TableWire<'a> {
        prompt_id: &'a str,
        plan_label: &'a str,
        k: usize,
        rows: Vec<RowWire<'a>>,
    }
    let wire = TableWire {
        prompt_id: &table.prompt_id,
        plan_label: &table.plan_label,
        k: table.k,
        rows: table
            .rows
            .iter()
            .map(|(t, p)| RowWire {
                token: t,
                probability: *p,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&wire).expect("table serializes")
}

pub fn taylor_to_json(record: &TaylorRecord) -> String {
    #[derive(Serialize)]
    struct TaylorWire {
        delta_logits_norm: f64,
        predicted_norm: f64,
        relative_error: f64,
    }
    serde_json::to_string_pretty(&TaylorWire {
        delta_logits_norm: record.delta_logits_norm,
        predicted_norm: record.predicted_norm,
        relative_error: record.relative_error,
    })
    .expect("record serializes")
}
