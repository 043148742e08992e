//! CSV formatting shared by every table the lab writes.

use std::io::Write;

use crate::error::{invalid, Result};

/// Formats a finite number with 12 significant digits; NaN and infinities are errors.
pub fn fmt_num(x: f64) -> Result<String> {
    if !x.is_finite() {
        return invalid(format!("refusing to emit non-finite value {x}"));
    }
    Ok(format!("{x:.11e}"))
}

/// Header-first CSV table with numeric or text cells.
#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push_numbers(&mut self, row: &[f64]) -> Result<()> {
        let cells = row.iter().map(|&v| fmt_num(v)).collect::<Result<Vec<_>>>()?;
        self.push_cells(cells)
    }

    pub fn push_cells(&mut self, cells: Vec<String>) -> Result<()> {
        if cells.len() != self.header.len() {
            return invalid(format!("row has {} cells, header has {}", cells.len(), self.header.len()));
        }
        self.rows.push(cells);
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_string_lossy(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0 / 72.0).unwrap(), "1.38888888889e-2");
        assert!(fmt_num(f64::NAN).is_err());
    }

    #[test]
    fn row_width_checked() {
        let mut t = CsvTable::new(["a", "b"]);
        assert!(t.push_numbers(&[1.0]).is_err());
        t.push_numbers(&[1.0, 2.0]).unwrap();
        assert_eq!(t.to_string_lossy(), "a,b\n1.00000000000e0,2.00000000000e0\n");
    }
}
