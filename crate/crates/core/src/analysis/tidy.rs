//! Tidy metric tables: one `(group, replicate, round, metric, value)` row per observation.

use serde::{Deserialize, Serialize};

use crate::kernel::SimulationResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub group: String,
    pub replicate: u32,
    pub round: u32,
    pub metric: String,
    pub value: f64,
}

/// Rows for every metric of every round (including round 0) of `result`.
pub fn tidy_rows(group: &str, replicate: u32, result: &SimulationResult) -> Vec<TidyRow> {
    result
        .series()
        .flat_map(|(round, metrics)| {
            metrics.iter().map(move |(metric, &value)| TidyRow {
                group: group.to_string(),
                replicate,
                round,
                metric: metric.clone(),
                value,
            })
        })
        .collect()
}

pub fn write_tidy_csv(rows: &[TidyRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    // header is written with the first row; emit it for empty tables too
    if rows.is_empty() {
        return "group,replicate,round,metric,value\n".to_string();
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn read_tidy_csv(text: &str) -> Result<Vec<TidyRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
