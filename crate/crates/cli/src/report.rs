use std::fs;
use std::io::Write;
use std::path::Path;

use fsmap::Tolerances;

use crate::commands::CliError;

/// Comma-separated table with a `#`-prefixed provenance header.
pub struct ReportTable {
    pub command: &'static str,
    pub spec_name: String,
    pub tolerances: Tolerances,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl ReportTable {
    pub fn new(command: &'static str, spec_name: &str, tol: &Tolerances, columns: &[&str]) -> Self {
        ReportTable {
            command,
            spec_name: spec_name.to_string(),
            tolerances: tol.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<String, CliError> {
        let mut out = String::new();
        out.push_str(&format!("# tool fsmap {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("# command {}\n", self.command));
        out.push_str(&format!("# spec {}\n", self.spec_name));
        for (name, v) in self.tolerances.entries() {
            out.push_str(&format!("# {name}={}\n", num(v)));
        }
        for note in &self.notes {
            out.push_str(&format!("# {note}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(CliError::io)?;
        for row in &self.rows {
            w.write_record(row).map_err(CliError::io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(e.into_error()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is UTF-8"));
        Ok(out)
    }

    /// Writes to `path`, or to stdout when no path is given.
    pub fn emit(&self, path: Option<&Path>) -> Result<(), CliError> {
        let text = self.render()?;
        write_output(path, &text)
    }
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(CliError::io)
        }
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
