//! Artifact files: a `# boostjet <stage> hash=<hex>` first line, written to a
//! `.partial` sibling and renamed into place only once complete.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

pub const PARTIAL_SUFFIX: &str = ".partial";

/// Header text without the leading `# `, as passed to the core writers.
pub fn header(stage: &str, hash: &str) -> String {
    format!("boostjet {stage} hash={hash}")
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(PARTIAL_SUFFIX);
    PathBuf::from(s)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_owned(),
        source: e,
    }
}

/// Runs `body` against `<path>.partial`, then renames it to `path`. A failed
/// write leaves the `.partial` file behind and `path` untouched.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let tmp = partial_path(path);
    let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| io_err(&tmp, e))?;
    w.flush().map_err(|e| io_err(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// `(stage, hash)` from an artifact's first line, if it carries a header.
pub fn read_header(path: &Path) -> Result<Option<(String, String)>, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| io_err(path, e))?;
    let Some(rest) = first.trim_end().strip_prefix("# boostjet ") else {
        return Ok(None);
    };
    let mut parts = rest.split_whitespace();
    let stage = parts.next().unwrap_or_default().to_owned();
    let hash = parts.find_map(|p| p.strip_prefix("hash=")).unwrap_or_default().to_owned();
    Ok(Some((stage, hash)))
}

/// Fails unless `path` was produced by `stage` under `hash`.
pub fn expect_header(path: &Path, stage: &str, hash: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            path: path.to_owned(),
            stage: stage.to_owned(),
        });
    }
    match read_header(path)? {
        Some((s, h)) if s == stage && h == hash => Ok(()),
        found => Err(CliError::Stale {
            path: path.to_owned(),
            expected: format!("{stage} hash={hash}"),
            found: found.map_or("no header".into(), |(s, h)| format!("{s} hash={h}")),
        }),
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}
