//! On-disk formats: JSON artifacts, CSV tables with a metadata header, and
//! the fixed-point cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::detequiv::FixedPointState;
use crate::error::{Error, Result};

/// Version string embedded in every artifact.
pub const ARTIFACT_VERSION: &str = concat!("spikerf-", env!("CARGO_PKG_VERSION"));

/// Prefix of the metadata line at the top of every CSV file.
pub const CSV_META_PREFIX: &str = "# ";

/// Provenance record of one CLI invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn start(config_hash: &str, command: &str) -> Self {
        let now = unix_now();
        Self {
            config_hash: config_hash.to_string(),
            command: command.to_string(),
            version: ARTIFACT_VERSION.to_string(),
            started: now,
            finished: now,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished = unix_now();
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `value` as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a JSON artifact.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a CSV table preceded by one `# {json}` metadata line.
pub fn write_csv(
    path: &Path,
    meta: &serde_json::Value,
    headers: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{CSV_META_PREFIX}{}", serde_json::to_string(meta)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record(headers)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    file.flush()?;
    Ok(())
}

/// Reads a CSV file written by [`write_csv`]: metadata, headers and rows.
pub fn read_csv(path: &Path) -> Result<(serde_json::Value, Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| Error::Artifact(format!("{} is empty", path.display())))?;
    let meta_text = first
        .strip_prefix(CSV_META_PREFIX)
        .ok_or_else(|| Error::Artifact(format!("{} lacks a metadata line", path.display())))?;
    let meta: serde_json::Value = serde_json::from_str(meta_text)?;
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((meta, headers, rows))
}

/// Formats a float so that parsing it back gives the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

type CacheKey = (u64, u64, u64, u64);

fn cache_key(z: c64, rho: [f64; 2]) -> CacheKey {
    (
        z.re.to_bits(),
        z.im.to_bits(),
        rho[0].to_bits(),
        rho[1].to_bits(),
    )
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    config_hash: String,
    state: FixedPointState,
}

/// Converged fixed points keyed by `(config hash, z, ρ)`, persisted as JSON lines.
///
/// Only entries for the hash given to [`FixedPointCache::open`] are loaded;
/// new entries are appended by [`FixedPointCache::flush`].
#[derive(Debug)]
pub struct FixedPointCache {
    path: PathBuf,
    config_hash: String,
    entries: Mutex<HashMap<CacheKey, FixedPointState>>,
    pending: Mutex<Vec<FixedPointState>>,
}

impl FixedPointCache {
    /// Opens (or prepares to create) the cache file at `path`.
    pub fn open(path: &Path, config_hash: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheLine = serde_json::from_str(&line).map_err(|e| {
                    Error::Artifact(format!("{} line {}: {e}", path.display(), i + 1))
                })?;
                if rec.config_hash == config_hash {
                    entries.insert(cache_key(rec.state.z, rec.state.rho), rec.state);
                }
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            config_hash: config_hash.to_string(),
            entries: Mutex::new(entries),
            pending: Mutex::new(Vec::new()),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, z: c64, rho: [f64; 2]) -> Option<FixedPointState> {
        self.entries
            .lock()
            .expect("cache lock")
            .get(&cache_key(z, rho))
            .cloned()
    }

    pub fn insert(&self, state: &FixedPointState) {
        let key = cache_key(state.z, state.rho);
        let mut entries = self.entries.lock().expect("cache lock");
        if entries.insert(key, state.clone()).is_none() {
            self.pending.lock().expect("cache lock").push(state.clone());
        }
    }

    /// Appends the entries inserted since the last flush.
    pub fn flush(&self) -> Result<()> {
        let mut pending = self.pending.lock().expect("cache lock");
        if pending.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let mut w = BufWriter::new(file);
        for state in pending.drain(..) {
            let line = CacheLine {
                config_hash: self.config_hash.clone(),
                state,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}
