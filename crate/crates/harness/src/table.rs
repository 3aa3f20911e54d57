//! Named-column tables of reals, written as CSV with a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub scenario_hash: String,
    pub seed: u64,
    pub version: String,
}

impl TableMeta {
    pub fn new(scenario_hash: &str, seed: u64) -> Self {
        Self {
            scenario_hash: scenario_hash.to_owned(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    name: String,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    pub meta: TableMeta,
}

/// Shortest representation that parses back to the same bits.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str], meta: TableMeta) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(HarnessError::Config(format!(
                    "table {name}: duplicate column {c}"
                )));
            }
        }
        Ok(Self {
            name: name.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            meta,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width for table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&x| format_real(x)))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| HarnessError::io("csv buffer", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(name: &str, text: &str, meta: TableMeta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns: Vec<&str> = r.headers()?.iter().collect::<Vec<_>>();
        let mut table = Self::new(name, &columns.clone(), meta)?;
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        HarnessError::Config(format!("table {name}: bad value {f:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != table.columns.len() {
                return Err(HarnessError::Config(format!("table {name}: ragged row")));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    /// Writes `<name>.csv` and `<name>.meta.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv()?).map_err(|e| HarnessError::io(&path, e))?;
        let meta = dir.join(format!("{}.meta.json", self.name));
        std::fs::write(&meta, serde_json::to_string_pretty(&self.meta)?)
            .map_err(|e| HarnessError::io(&meta, e))?;
        Ok(path)
    }

    pub fn read(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(format!("{name}.csv"));
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let meta_path = dir.join(format!("{name}.meta.json"));
        let meta_text =
            std::fs::read_to_string(&meta_path).map_err(|e| HarnessError::io(&meta_path, e))?;
        Self::from_csv(name, &text, serde_json::from_str(&meta_text)?)
    }
}
