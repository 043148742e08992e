//! Convergence sweeps: one set of quantities per resolution level, observed
//! orders and a convergence flag per quantity.

use lplab::output::{fmt_num, CsvTable};
use serde::Serialize;

use crate::{HarnessError, Result};

/// One quantity measured at one level.
#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub value: f64,
    /// Standard error, for Monte Carlo quantities.
    pub stderr: Option<f64>,
    /// Exact value, when known.
    pub reference: Option<f64>,
}

impl Sample {
    pub fn exact(name: &str, value: f64, reference: f64) -> Self {
        Sample { name: name.into(), value, stderr: None, reference: Some(reference) }
    }

    pub fn plain(name: &str, value: f64) -> Self {
        Sample { name: name.into(), value, stderr: None, reference: None }
    }

    pub fn monte_carlo(name: &str, value: f64, stderr: f64, reference: Option<f64>) -> Self {
        Sample { name: name.into(), value, stderr: Some(stderr), reference }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepQuantity {
    pub name: String,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub reference: Option<f64>,
    /// Observed order from the two finest levels (against the reference) or
    /// Richardson's estimate from the three finest levels.
    pub order: Option<f64>,
    /// `None` when the data cannot decide.
    pub converged: Option<bool>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub levels: Vec<f64>,
    pub quantities: Vec<SweepQuantity>,
}

/// Largest combined z-score at which Monte Carlo values count as consistent.
const Z_MAX: f64 = 3.0;
/// Errors below this count as exact.
const EXACT: f64 = 1e-10;

/// Evaluates `eval` at every level (coarse to fine) and summarizes each quantity.
pub fn convergence_sweep(levels: &[f64], eval: impl Fn(f64) -> Result<Vec<Sample>>) -> Result<SweepTable> {
    if levels.len() < 2 {
        return Err(HarnessError::Validation(format!("a convergence sweep needs at least 2 levels, got {}", levels.len())));
    }
    if levels.iter().any(|&l| !(l > 0.0 && l.is_finite())) || levels.windows(2).any(|w| w[1] == w[0]) {
        return Err(HarnessError::Validation("sweep levels must be positive and distinct".into()));
    }
    let mut per_level = Vec::with_capacity(levels.len());
    for &l in levels {
        per_level.push(eval(l).map_err(|e| e.context(&format!("level {l}")))?);
    }
    let names: Vec<String> = per_level[0].iter().map(|s| s.name.clone()).collect();
    if per_level.iter().any(|row| row.iter().map(|s| &s.name).ne(names.iter())) {
        return Err(HarnessError::Numerical("quantities differ between levels".into()));
    }
    let quantities = names
        .iter()
        .enumerate()
        .map(|(q, name)| {
            let samples: Vec<&Sample> = per_level.iter().map(|row| &row[q]).collect();
            summarize(name, levels, &samples)
        })
        .collect();
    Ok(SweepTable { levels: levels.to_vec(), quantities })
}

fn summarize(name: &str, levels: &[f64], samples: &[&Sample]) -> SweepQuantity {
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let stderr: Option<Vec<f64>> = samples.iter().map(|s| s.stderr).collect();
    let reference = samples[0].reference;
    let n = values.len();
    let (order, converged, note) = if let Some(se) = &stderr {
        let mut worst = 0.0f64;
        for i in 1..n {
            worst = worst.max((values[i] - values[i - 1]).abs() / se[i].hypot(se[i - 1]));
        }
        if let Some(r) = reference {
            worst = worst.max((values[n - 1] - r).abs() / se[n - 1]);
        }
        let ok = worst.is_finite() && worst <= Z_MAX;
        (None, Some(ok), format!("largest z-score {worst:.2}"))
    } else if let Some(r) = reference {
        let errs: Vec<f64> = values.iter().map(|v| (v - r).abs()).collect();
        let scale = r.abs().max(1.0);
        if errs.iter().all(|&e| e <= EXACT * scale) {
            (None, Some(true), "exact at every level".into())
        } else {
            let (e1, e2) = (errs[n - 2], errs[n - 1]);
            let order = (e1 / e2).ln() / (levels[n - 2] / levels[n - 1]).ln();
            let ok = order.is_finite() && order >= 0.5 && e2 < e1;
            (Some(order).filter(|o| o.is_finite()), Some(ok), format!("final error {e2:.3e}"))
        }
    } else if n >= 3 {
        let (d1, d2) = ((values[n - 2] - values[n - 3]).abs(), (values[n - 1] - values[n - 2]).abs());
        if d1 <= EXACT && d2 <= EXACT {
            (None, Some(true), "unchanged across levels".into())
        } else {
            let order = (d1 / d2).ln() / (levels[n - 3] / levels[n - 2]).ln();
            let ok = order.is_finite() && order >= 0.5 && d2 < d1;
            (Some(order).filter(|o| o.is_finite()), Some(ok), format!("final change {d2:.3e}"))
        }
    } else {
        (None, None, "two levels and no reference: order not identifiable".into())
    };
    SweepQuantity { name: name.into(), values, stderr, reference, order, converged, note }
}

impl SweepTable {
    /// Quantities flagged as not converging.
    pub fn non_convergent(&self) -> Vec<&str> {
        self.quantities.iter().filter(|q| q.converged == Some(false)).map(|q| q.name.as_str()).collect()
    }

    /// `level` followed by each quantity and, for Monte Carlo quantities, its standard error.
    pub fn to_csv(&self) -> Result<CsvTable> {
        let mut header = vec!["level".to_string()];
        for q in &self.quantities {
            header.push(q.name.clone());
            if q.stderr.is_some() {
                header.push(format!("{}_stderr", q.name));
            }
        }
        let mut t = CsvTable::new(header);
        for (i, &l) in self.levels.iter().enumerate() {
            let mut row = vec![fmt_num(l)?];
            for q in &self.quantities {
                row.push(fmt_num(q.values[i])?);
                if let Some(se) = &q.stderr {
                    row.push(fmt_num(se[i])?);
                }
            }
            t.push_cells(row)?;
        }
        Ok(t)
    }
}
