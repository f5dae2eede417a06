//! Run directories: manifest, CSV tables with a parameter header, report,
//! and error records. All writes of a run go through one `RunDir`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};

/// Shortest round-trip scientific notation, stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub struct RunDir {
    pub path: PathBuf,
    header: String,
    pub files: Vec<String>,
}

impl RunDir {
    pub fn create(path: &Path, header: String) -> Result<Self> {
        fs::create_dir_all(path)?;
        match fs::remove_file(path.join("error.txt")) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
        Ok(Self { path: path.to_path_buf(), header, files: Vec::new() })
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Header row, column names, then one line per row.
    pub fn write_csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut s = String::with_capacity(64 * (rows.len() + 2));
        s.push_str(&self.header);
        s.push('\n');
        s.push_str(&columns.join(","));
        s.push('\n');
        for r in rows {
            debug_assert_eq!(r.len(), columns.len());
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.write_text(name, &s)
    }

    /// CSV body that already carries its own `#` lines, prefixed by the run
    /// header.
    pub fn write_prefixed(&mut self, name: &str, body: &str) -> Result<()> {
        self.write_text(name, &format!("{}\n{body}", self.header))
    }
}

/// `kind=...` / `message=...` record for failed runs.
pub fn error_record(err: &LabError) -> String {
    let mut s = format!("kind={}\nmessage={}\n", err.kind(), err.to_string().replace('\n', " "));
    if let LabError::Validation(fields) = err {
        for (k, f) in fields.iter().enumerate() {
            s.push_str(&format!("field.{k}={f}\n"));
        }
    }
    s
}

/// A CSV written by [`RunDir::write_csv`]: header parameters and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub params: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LabError::InputNotFound(path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        let mut params = BTreeMap::new();
        let mut lines = text.lines().peekable();
        while let Some(h) = lines.next_if(|l| l.starts_with('#')) {
            for tok in h.trim_start_matches('#').split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    params.insert(k.to_string(), v.to_string());
                }
            }
        }
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| LabError::Parse(format!("{} has no column row", path.display())))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        Ok(Self { params, columns, rows })
    }

    pub fn param(&self, key: &str) -> Result<&str> {
        self.params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| LabError::Parse(format!("input header lacks {key}")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LabError::Parse(format!("input lacks column {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                r.get(idx)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| LabError::Parse(format!("bad value in column {name}")))
            })
            .collect()
    }
}
