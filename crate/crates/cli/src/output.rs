//! CSV tables and their JSON metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::CliError;

/// Sign convention of the `parity` builder, echoed into every sidecar.
pub const PARITY_SIGN: &str = "symbol 0 -> +1, symbol 1 -> -1";

pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Orbit multiplicity convention of any orbit measure behind the rows.
    pub multiplicity: Option<&'static str>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            multiplicity: None,
        }
    }

    pub fn with_multiplicity(mut self, convention: &'static str) -> Self {
        self.multiplicity = Some(convention);
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_error)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Shortest round-trip decimal, switching to scientific notation outside
/// `[1e-4, 1e15)` so huge or tiny weights stay readable.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Run-level context shared by every sidecar.
pub struct RunContext<'a> {
    pub config: &'a Value,
    pub experiment: &'a str,
    pub seed: u64,
    pub threads: usize,
}

pub fn write_tables(dir: &Path, tables: &[Table], ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut written = Vec::new();
    for table in tables {
        let csv_path = dir.join(format!("{}.csv", table.name));
        fs::write(&csv_path, table.to_csv()?)
            .map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
        let meta = json!({
            "file": format!("{}.csv", table.name),
            "experiment": ctx.experiment,
            "columns": table.header,
            "rows": table.rows.len(),
            "seed": ctx.seed,
            "threads": ctx.threads,
            "created_unix": created,
            "versions": {
                "symdyn": symdyn::VERSION,
                "symdyn-cli": env!("CARGO_PKG_VERSION"),
            },
            "conventions": {
                "orbit_multiplicity": table.multiplicity.unwrap_or("not applicable"),
                "parity_sign": PARITY_SIGN,
                "word_alphabet": "one base-36 digit per symbol",
            },
            "config": ctx.config,
        });
        let meta_path = dir.join(format!("{}.meta.json", table.name));
        let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&meta_path, text + "\n")
            .map_err(|e| CliError::Io(format!("{}: {e}", meta_path.display())))?;
        written.push(csv_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, 1.5, -0.4, 1e-9, 3.2e20, 0.1 + 0.2, f64::NEG_INFINITY] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(num(1e20), "1e20");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn csv_has_header_row() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["1".into(), "(01)".into()]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n1,(01)\n");
    }
}
