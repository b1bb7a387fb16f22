//! Result files. Every write goes to a fresh timestamped path, so earlier
//! results are never overwritten.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use spikeforce::trainer::Evaluation;

use crate::error::{HarnessError, Result};

/// A small table written as CSV with a header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| HarnessError::Run(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| HarnessError::Run(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Run(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Run(e.to_string()))
    }

    /// Cell in the row whose first column is `key`.
    pub fn lookup(&self, key: &str, column: &str) -> Option<&str> {
        let c = self.header.iter().position(|h| h == column)?;
        self.rows.iter().find(|r| r[0] == key).map(|r| r[c].as_str())
    }
}

/// `YYYYmmddTHHMMSS.mmmZ`, safe in file names.
pub fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}

/// Creates `dir/stem-<timestamp><suffix>`, adding a counter if that name
/// is already taken.
pub fn create_unique(dir: &Path, stem: &str, stamp: &str, suffix: &str) -> Result<(PathBuf, File)> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir.display(), e))?;
    for n in 0u32.. {
        let name = if n == 0 { format!("{stem}-{stamp}{suffix}") } else { format!("{stem}-{stamp}-{n}{suffix}") };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(HarnessError::io(path.display(), e)),
        }
    }
    unreachable!("counter exhausted")
}

pub fn write_new(dir: &Path, stem: &str, stamp: &str, suffix: &str, contents: &[u8]) -> Result<PathBuf> {
    let (path, mut f) = create_unique(dir, stem, stamp, suffix)?;
    f.write_all(contents).map_err(|e| HarnessError::io(path.display(), e))?;
    Ok(path)
}

/// Writes `t,f_out_0..,z_0..` rows for an evaluation.
pub fn write_trace<W: Write>(eval: &Evaluation, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let channels = eval.target.output_channels();
    let mut header = vec!["t".to_string()];
    header.extend((0..channels).map(|c| format!("f_out_{c}")));
    header.extend((0..channels).map(|c| format!("z_{c}")));
    let io = |e: std::io::Error| HarnessError::io("trace", e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for k in 0..eval.target.len() {
        let mut line = eval.target.t[k].to_string();
        for v in eval.target.f_out.row(k).iter().chain(eval.response.f_out.row(k)) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a trace written by [`write_trace`] back into `(f_out, z)` rows.
pub fn read_trace(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let table = spikeforce::signals::read_numeric_csv(text.as_bytes())?;
    let f_cols: Vec<usize> = (0..table.header.len()).filter(|&i| table.header[i].starts_with("f_out_")).collect();
    let z_cols: Vec<usize> = (0..table.header.len()).filter(|&i| table.header[i].starts_with("z_")).collect();
    if f_cols.is_empty() || f_cols.len() != z_cols.len() {
        return Err(HarnessError::Run("trace needs matching f_out_* and z_* columns".into()));
    }
    let (mut f, mut z) = (Vec::new(), Vec::new());
    for row in &table.rows {
        f.extend(f_cols.iter().map(|&i| row[i]));
        z.extend(z_cols.iter().map(|&i| row[i]));
    }
    Ok((f, z))
}
