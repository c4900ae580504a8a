//! Result rows, tables and their CSV form.

use std::io::Write;

/// Every metric name a report may carry.
pub const METRICS: &[&str] = &[
    "y0",
    "y0_std_error",
    "sup_norm_y",
    "bmo",
    "iterations",
    "converged",
    "y_gap",
    "z_gap",
    "slope",
    "nonincreasing_steps",
    "particle_sup",
    "particle_sup_bound",
    "limit_paths",
    "holds",
    "cases",
    "max_excess",
    "u_pde",
    "y0_bsde",
    "gap",
    "restriction_sup",
    "restriction_q99",
    "restriction_clamped",
    "picard_iterations",
    "L1",
    "L2",
    "L3",
    "L4",
    "L5",
    "L6",
    "eps0",
    "M1",
    "M2",
    "M2_tilde",
    "M1_tilde",
    "C_alpha",
    "picard_lhs",
    "picard_small",
    "max_mean_z",
    "max_var_ratio_dev",
    "intercept",
    "residual_norm",
    "sup_moment",
    "increment_moment",
    "terminal_mean",
    "terminal_var",
];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub metric: &'static str,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl ResultRow {
    pub fn new(experiment: &str, metric: &'static str, value: f64) -> Self {
        assert!(METRICS.contains(&metric), "metric '{metric}' is not registered");
        Self {
            experiment: experiment.to_string(),
            metric,
            value,
            tolerance: None,
            pass: None,
        }
    }

    /// Passes when `value <= tolerance`.
    pub fn at_most(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self.pass = Some(self.value <= tolerance);
        self
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self.pass = Some(self.value >= tolerance);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A table already ordered by its key columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub table: Option<Table>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass != Some(false))
    }

    pub fn write_rows<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["experiment", "metric", "value", "tolerance", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.metric.to_string(),
                fmt_f64(r.value),
                r.tolerance.map(fmt_f64).unwrap_or_default(),
                r.pass.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary rows followed by the table, as one byte string.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_rows(&mut buf).expect("writing to memory");
        if let Some(t) = &self.table {
            t.write_csv(&mut buf).expect("writing to memory");
        }
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_full_precision() {
        let s = fmt_f64(0.1);
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(s, "1.0000000000000001e-1");
    }

    #[test]
    fn pass_flags() {
        let r = Report {
            rows: vec![
                ResultRow::new("x", "gap", 0.5).at_most(1.0),
                ResultRow::new("x", "y0", 2.0),
            ],
            table: None,
        };
        assert!(r.passed());
        let text = String::from_utf8(r.to_bytes()).unwrap();
        assert!(text.starts_with("experiment,metric,value,tolerance,pass\n"));
        assert!(text.contains("x,gap,5.0000000000000000e-1,1.0000000000000000e0,true"));
        assert!(!ResultRow::new("x", "gap", 2.0).at_most(1.0).pass.unwrap());
    }

    #[test]
    #[should_panic(expected = "not registered")]
    fn unknown_metric_panics() {
        ResultRow::new("x", "nonsense", 0.0);
    }
}
