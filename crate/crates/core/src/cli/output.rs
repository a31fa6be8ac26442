use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Identifies the run that produced a file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub command: String,
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn header_line(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash, self.seed)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A CSV document whose first line is a `#` comment carrying the run metadata.
pub struct CsvTable {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self {
            header,
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, meta: &Meta) -> io::Result<Vec<u8>> {
        let mut buf = format!("# {}\n", meta.header_line()).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(self.header)?;
            for row in &self.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        Ok(buf)
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    meta: &'a Meta,
    result: &'a T,
}

pub fn render_json<T: Serialize>(meta: &Meta, result: &T) -> io::Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(&Document { meta, result })?;
    buf.push(b'\n');
    Ok(buf)
}

/// Files of one run, written together once the experiment has finished.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>, (PathBuf, io::Error)> {
        fs::create_dir_all(dir).map_err(|e| (dir.to_path_buf(), e))?;
        self.files
            .iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                fs::write(&path, bytes)
                    .map(|_| path.clone())
                    .map_err(|e| (path, e))
            })
            .collect()
    }
}
