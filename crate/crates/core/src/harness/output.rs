use std::io::Write;

use serde::de::DeserializeOwned;

use crate::analysis::{CellStats, DidFit, ObservationTable, ZTest};

use super::runner::Report;
use super::HarnessError;

/// Nine significant digits; `NaN`, `inf` and `-inf` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

/// A CSV table with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(io_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(io_err)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_to(&self, out: &mut dyn Write) -> Result<(), HarnessError> {
        out.write_all(self.to_csv()?.as_bytes()).map_err(io_err)
    }
}

pub(crate) fn io_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Io(e.to_string())
}

/// One row per replication plus a final `all` row with the
/// across-replication mean and 95% half-width.
pub fn summary_table(report: &Report) -> Table {
    let mut t = Table::new(&["replication", "mean_loss", "ci", "seed", "pct_of_oracle", "pct_ci"]);
    for e in &report.episodes {
        let s = &e.summary;
        t.push(vec![
            s.replication.to_string(),
            fmt_f64(s.mean_loss),
            fmt_f64(s.loss_ci_halfwidth),
            s.seed.to_string(),
            fmt_f64(s.pct_of_oracle),
            fmt_f64(f64::NAN),
        ]);
    }
    t.push(vec![
        "all".into(),
        fmt_f64(report.mean_loss),
        fmt_f64(report.loss_ci_halfwidth),
        String::new(),
        fmt_f64(report.mean_pct_of_oracle),
        fmt_f64(report.pct_ci_halfwidth),
    ]);
    t
}

/// Per-round logs of every replication.
pub fn round_table(report: &Report) -> Table {
    let ages = report
        .episodes
        .first()
        .and_then(|e| e.logs.first())
        .map_or(0, |l| l.pulls_by_age.len());
    let mut header: Vec<String> = ["replication", "round", "loss", "external", "internal"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..ages).map(|j| format!("pulls_age_{j}")));
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for e in &report.episodes {
        for l in &e.logs {
            let mut row = vec![
                e.summary.replication.to_string(),
                l.round.to_string(),
                fmt_f64(l.loss),
                fmt_f64(l.external_component),
                fmt_f64(l.internal_component),
            ];
            row.extend(l.pulls_by_age.iter().map(u64::to_string));
            t.push(row);
        }
    }
    t
}

/// One row per regression coefficient.
pub fn coefficient_table(fit: &DidFit) -> Table {
    let names = ["intercept", "t", "i", "t_x_i"];
    let mut t = Table::new(&["coef", "estimate", "se", "t_stat", "p_value", "ci_lo", "ci_hi"]);
    for j in 0..4 {
        t.push(vec![
            names[j].into(),
            fmt_f64(fit.beta[j]),
            fmt_f64(fit.se[j]),
            fmt_f64(fit.t_stat[j]),
            fmt_f64(fit.p_value[j]),
            fmt_f64(fit.ci95[j].0),
            fmt_f64(fit.ci95[j].1),
        ]);
    }
    t
}

pub fn z_table(rows: &[(&str, ZTest)]) -> Table {
    let mut t = Table::new(&["test", "delta", "se", "z", "p_one_sided"]);
    for (name, z) in rows {
        t.push(vec![
            (*name).into(),
            fmt_f64(z.delta),
            fmt_f64(z.se),
            fmt_f64(z.z),
            fmt_f64(z.p_one_sided),
        ]);
    }
    t
}

fn read_rows<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| HarnessError::Config {
                field: format!("input row {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Rows `t,i,y`.
pub fn read_observations(text: &str) -> Result<ObservationTable, HarnessError> {
    Ok(ObservationTable { rows: read_rows(text)? })
}

/// Rows `group,period,count,mean,se`.
pub fn read_cells(text: &str) -> Result<Vec<CellStats>, HarnessError> {
    read_rows(text)
}
