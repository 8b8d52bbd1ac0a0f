//! File output: every number is written with 17 significant digits so that
//! the decimal text round-trips to the same `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// 17 significant digits (one before the point, sixteen after).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// An empty cell for missing values (e.g. an order with no predecessor).
pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

/// A CSV file with a header row naming columns and units.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let writer = csv::Writer::from_path(path)
            .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        let mut t = Self {
            path: path.to_path_buf(),
            writer,
        };
        t.row(header)?;
        Ok(t)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, cells: &[S]) -> Result<(), CliError> {
        self.writer
            .write_record(cells)
            .map_err(|e| CliError::Output(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::Output(format!("{}: {e}", self.path.display())))
    }
}

/// Read a CSV written by [`Table`], header excluded.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    r.records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn table_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::create(&path, &["a [1]", "b [1]"]).unwrap();
        t.row(&[num(0.5), opt_num(None)]).unwrap();
        t.finish().unwrap();
        let rows = read_rows(&path).unwrap();
        assert_eq!(rows, vec![vec![num(0.5), String::new()]]);
    }
}
