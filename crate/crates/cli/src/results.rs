use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONDITIONS: [&str; 3] = ["plain", "refmod", "model"];

/// One line of `results.csv`. Scores are empty when a metric failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub utterance_id: String,
    pub snr_db: f64,
    pub condition: String,
    pub estoi: Option<f64>,
    pub siib_raw: Option<f64>,
    pub siib_norm: Option<f64>,
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(path.display(), e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::data(path.display(), e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> CliResult<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::data(path.display(), e))?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e| CliError::data(format!("{} row {}", path.display(), i + 1), e))?);
    }
    Ok(out)
}

/// Condition means, skipping empty scores.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub condition: String,
    pub utterances: usize,
    pub estoi: Option<f64>,
    pub siib_raw: Option<f64>,
    pub siib_norm: Option<f64>,
}

fn mean(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in vals.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Per-condition means; known conditions first, then others in order of appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let mut order: Vec<String> = CONDITIONS.iter().map(|s| s.to_string()).collect();
    for r in rows {
        if !order.contains(&r.condition) {
            order.push(r.condition.clone());
        }
    }
    order
        .into_iter()
        .filter_map(|c| {
            let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.condition == c).collect();
            (!sel.is_empty()).then(|| Summary {
                utterances: sel.len(),
                estoi: mean(sel.iter().map(|r| r.estoi)),
                siib_raw: mean(sel.iter().map(|r| r.siib_raw)),
                siib_norm: mean(sel.iter().map(|r| r.siib_norm)),
                condition: c,
            })
        })
        .collect()
}

pub fn write_summary(path: &Path, s: &[Summary]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(path.display(), e))?;
    for r in s {
        w.serialize(r).map_err(|e| CliError::data(path.display(), e))?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table: one row per condition.
pub fn render_table(s: &[Summary]) -> String {
    let cell = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into());
    let header = ["Condition", "N", "ESTOI", "SIIB (norm)", "SIIB (bits/s)"];
    let body: Vec<[String; 5]> = s
        .iter()
        .map(|r| {
            [r.condition.clone(), r.utterances.to_string(), cell(r.estoi, 3), cell(r.siib_norm, 3), cell(r.siib_raw, 1)]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: [&str; 5]| {
        let _ = write!(out, "{:<w$}", cells[0], w = width[0]);
        for (c, w) in cells[1..].iter().zip(&width[1..]) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    };
    line(&mut out, header);
    let total: usize = width.iter().sum::<usize>() + 2 * (width.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in &body {
        line(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out
}
