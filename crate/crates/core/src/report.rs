//! Comparison tables rendered from an evaluation report.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eval::{EvaluationReport, RMSE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(format!("unknown report format {s:?} (expected csv or markdown)")),
        }
    }
}

/// Mean values laid out with one row per (method, k) and one column per
/// (model, metric), both in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<(String, usize)>,
    pub columns: Vec<(String, String)>,
    /// `cells[r][c]`, `None` where the report has no such aggregate.
    pub cells: Vec<Vec<Option<f64>>>,
    /// Whether `cells[r][c]` is the best value of its column.
    pub best: Vec<Vec<bool>>,
}

fn lower_is_better(metric: &str) -> bool {
    metric == RMSE
}

pub fn table(report: &EvaluationReport) -> Table {
    let mut rows: Vec<(String, usize)> = Vec::new();
    let mut columns: Vec<(String, String)> = Vec::new();
    for a in &report.aggregates {
        let r = (a.method.clone(), a.k);
        if !rows.contains(&r) {
            rows.push(r);
        }
        let c = (a.model.clone(), a.metric.clone());
        if !columns.contains(&c) {
            columns.push(c);
        }
    }
    let cells: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|(method, k)| {
            columns
                .iter()
                .map(|(model, metric)| report.aggregate_for(method, *k, model, metric).map(|a| a.mean))
                .collect()
        })
        .collect();
    let mut best = vec![vec![false; columns.len()]; rows.len()];
    for (c, (_, metric)) in columns.iter().enumerate() {
        let values = cells.iter().filter_map(|row| row[c]);
        let target = if lower_is_better(metric) {
            values.fold(f64::INFINITY, f64::min)
        } else {
            values.fold(f64::NEG_INFINITY, f64::max)
        };
        for (r, row) in cells.iter().enumerate() {
            best[r][c] = row[c] == Some(target);
        }
    }
    Table {
        rows,
        columns,
        cells,
        best,
    }
}

fn cell_text(value: Option<f64>, best: bool) -> String {
    match value {
        None => String::new(),
        Some(v) if best => format!("{v:.6}*"),
        Some(v) => format!("{v:.6}"),
    }
}

/// Render the comparison table; the best value of every column carries a
/// trailing `*`.
pub fn render(report: &EvaluationReport, format: Format) -> String {
    let t = table(report);
    let mut header = vec!["method".to_string(), "k".to_string()];
    header.extend(t.columns.iter().map(|(model, metric)| format!("{model} {metric}")));
    let body: Vec<Vec<String>> = t
        .rows
        .iter()
        .enumerate()
        .map(|(r, (method, k))| {
            let mut line = vec![method.clone(), k.to_string()];
            line.extend((0..t.columns.len()).map(|c| cell_text(t.cells[r][c], t.best[r][c])));
            line
        })
        .collect();

    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).expect("in-memory write");
            for line in &body {
                w.write_record(line).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        Format::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));
            for line in &body {
                let _ = writeln!(out, "| {} |", line.join(" | "));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TargetKind;
    use crate::eval::{aggregate, Row, RunMeta};

    fn report(rows: Vec<Row>) -> EvaluationReport {
        EvaluationReport {
            meta: RunMeta {
                seed: 0,
                k_folds: 2,
                k_list: vec![1],
                methods: vec![],
                models: vec![],
                bins: 10,
                global_selection: false,
                positive_class: 1,
                n_records: 10,
                n_features: 2,
                target_kind: TargetKind::Classification { num_classes: 2 },
            },
            aggregates: aggregate(&rows),
            rows,
            selections: vec![],
        }
    }

    fn row(method: &str, metric: &str, fold: usize, value: f64) -> Row {
        Row {
            method: method.into(),
            k: 1,
            model: "knn:5".into(),
            fold,
            metric: metric.into(),
            value,
        }
    }

    #[test]
    fn single_method_is_best_everywhere() {
        let r = report(vec![row("a", "accuracy", 0, 0.5), row("a", "f1", 0, 0.25)]);
        let t = table(&r);
        assert_eq!(t.best, vec![vec![true, true]]);
        let md = render(&r, Format::Markdown);
        assert!(md.contains("0.500000*") && md.contains("0.250000*"), "{md}");
    }

    #[test]
    fn dominating_method_takes_every_marker() {
        let r = report(vec![
            row("a", "accuracy", 0, 0.9),
            row("a", "rmse", 0, 0.1),
            row("b", "accuracy", 0, 0.8),
            row("b", "rmse", 0, 0.3),
        ]);
        let t = table(&r);
        assert_eq!(t.best, vec![vec![true, true], vec![false, false]]);
        let csv = render(&r, Format::Csv);
        assert_eq!(
            csv,
            "method,k,knn:5 accuracy,knn:5 rmse\na,1,0.900000*,0.100000*\nb,1,0.800000,0.300000\n"
        );
    }
}
