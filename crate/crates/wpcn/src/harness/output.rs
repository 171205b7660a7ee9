//! CSV tables and their sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::run::RunOutput;

/// Version of the column layout; bumped whenever columns change meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// One column: name, unit, meaning.
pub type Column = (&'static str, &'static str, &'static str);

/// A table bound for one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
    /// Wall time per row, written to the timing sidecar only.
    pub wall_seconds: Vec<f64>,
}

impl Table {
    pub fn new(path: PathBuf, columns: Vec<Column>) -> Self {
        Table { path, columns, rows: Vec::new(), wall_seconds: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>, wall: f64) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
        self.wall_seconds.push(wall);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.0 == name)
    }

    /// Values of a column parsed as numbers; blanks become NaN.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j].parse().unwrap_or(f64::NAN)).collect())
    }

    /// The CSV text exactly as written to disk.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.0))?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Writes the CSV, `<file>.schema` and `<file>.timing.csv`.
pub fn write_table(t: &Table) -> Result<()> {
    if let Some(dir) = t.path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(&t.path, t.to_csv()?).map_err(|e| io_err(&t.path, e))?;

    let schema_path = sidecar(&t.path, ".schema");
    let mut schema = format!("schema_version = {SCHEMA_VERSION}\nformat = csv, comma separated, '.' decimal, header row\n");
    schema.push_str("# column, unit, description\n");
    for (name, unit, desc) in &t.columns {
        schema.push_str(&format!("{name}, {unit}, {desc}\n"));
    }
    fs::write(&schema_path, schema).map_err(|e| io_err(&schema_path, e))?;

    let timing_path = sidecar(&t.path, ".timing.csv");
    let mut f = fs::File::create(&timing_path).map_err(|e| io_err(&timing_path, e))?;
    writeln!(f, "row,wall_seconds").map_err(|e| io_err(&timing_path, e))?;
    for (i, s) in t.wall_seconds.iter().enumerate() {
        writeln!(f, "{i},{s:.6}").map_err(|e| io_err(&timing_path, e))?;
    }
    Ok(())
}

/// Writes every table of a run.
pub fn write_output(out: &RunOutput) -> Result<()> {
    out.tables.iter().try_for_each(write_table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("out/a.csv"), ".schema"), PathBuf::from("out/a.csv.schema"));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut t = Table::new(PathBuf::from("x.csv"), vec![("a", "-", "first"), ("b", "bit", "second")]);
        t.push(vec!["1".into(), "2.5".into()], 0.1);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n1,2.5\n");
        assert_eq!(t.numeric_column("b").unwrap(), vec![2.5]);
    }
}
