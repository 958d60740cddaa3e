//! Append-only JSON-lines store of generation sequences.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EpisodeRecord;
use crate::error::{file_err, Error, Result};

pub const LOOKUP_FORMAT: &str = "loopcat-lookup";
pub const LOOKUP_VERSION: u32 = 1;

/// `r` and `τ` keys are rounded to three decimals.
pub fn quantize(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    format: String,
    version: u32,
    #[serde(flatten)]
    record: EpisodeRecord,
}

#[derive(Debug, Clone)]
pub struct LookupTable {
    path: PathBuf,
}

impl LookupTable {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[EpisodeRecord]) -> Result<()> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(file_err(dir))?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(file_err(&self.path))?;
        let mut buf = Vec::new();
        for r in records {
            let line = Line { format: LOOKUP_FORMAT.into(), version: LOOKUP_VERSION, record: r.clone() };
            serde_json::to_writer(&mut buf, &line)?;
            buf.push(b'\n');
        }
        f.write_all(&buf).map_err(file_err(&self.path))?;
        Ok(())
    }

    /// Every record; a missing file is an empty table.
    pub fn load(&self) -> Result<Vec<EpisodeRecord>> {
        let f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(file_err(&self.path)(e)),
        };
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(file_err(&self.path))?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line)?;
            if l.format != LOOKUP_FORMAT || l.version != LOOKUP_VERSION {
                return Err(Error::CheckpointVersion { found: l.version, expected: LOOKUP_VERSION });
            }
            out.push(l.record);
        }
        Ok(out)
    }

    /// Records whose first steps match `prefix` as `(r, τ, n)` after quantization.
    pub fn query(&self, prefix: &[(f64, f64, usize)]) -> Result<Vec<EpisodeRecord>> {
        Ok(self.load()?.into_iter().filter(|r| matches_prefix(r, prefix)).collect())
    }
}

pub fn matches_prefix(record: &EpisodeRecord, prefix: &[(f64, f64, usize)]) -> bool {
    record.steps.len() >= prefix.len()
        && record
            .steps
            .iter()
            .zip(prefix)
            .all(|(s, &(r, tau, n))| quantize(s.r) == quantize(r) && quantize(s.tau) == quantize(tau) && s.n == n)
}
