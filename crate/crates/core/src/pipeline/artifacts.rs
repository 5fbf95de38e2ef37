//! Artifact files. Each one records the config hash and seed: JSON files as
//! top-level fields, CSV and text files in a leading `#` comment line, the
//! encoder checkpoint in its header tag. Writes go to a temporary sibling
//! and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_sha256: String,
    pub seed: u64,
}

impl Stamp {
    /// `config_sha256=<hex> seed=<n>`
    pub fn tag(&self) -> String {
        format!("config_sha256={} seed={}", self.config_sha256, self.seed)
    }

    pub fn from_tag(tag: &str) -> Option<Stamp> {
        let rest = tag.trim_end().strip_prefix("config_sha256=")?;
        let (hash, seed) = rest.split_once(" seed=")?;
        Some(Stamp {
            config_sha256: hash.to_string(),
            seed: seed.parse().ok()?,
        })
    }

    /// The tag as a `#` comment line, newline-terminated.
    pub fn comment_line(&self) -> String {
        format!("# {}\n", self.tag())
    }

    fn parse_comment(line: &str) -> Option<Stamp> {
        Stamp::from_tag(line.strip_prefix("# ")?)
    }

    /// Errors unless `found` was produced by this same configuration.
    pub fn check(&self, found: &Stamp, artifact: &Path) -> Result<()> {
        if found == self {
            return Ok(());
        }
        Err(Error::Usage(format!(
            "{} was written by config {} (seed {}), not the current config {} (seed {}); rerun the stage that produces it",
            artifact.display(),
            short(&found.config_sha256),
            found.seed,
            short(&self.config_sha256),
            self.seed
        )))
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    config_sha256: String,
    seed: u64,
    #[serde(flatten)]
    body: T,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Pretty JSON object with the stamp fields first.
pub fn write_json<T: Serialize>(path: &Path, stamp: &Stamp, body: &T) -> Result<()> {
    let stamped = Stamped {
        config_sha256: stamp.config_sha256.clone(),
        seed: stamp.seed,
        body,
    };
    let mut bytes = serde_json::to_vec_pretty(&stamped)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(Stamp, T)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: Stamped<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok((
        Stamp {
            config_sha256: s.config_sha256,
            seed: s.seed,
        },
        s.body,
    ))
}

/// Text or CSV body behind a stamp comment line.
pub fn write_text(path: &Path, stamp: &Stamp, body: &str) -> Result<()> {
    let mut bytes = stamp.comment_line().into_bytes();
    bytes.extend_from_slice(body.as_bytes());
    write_atomic(path, &bytes)
}

/// Reads a file written by [`write_text`], returning the stamp and body.
pub fn read_text(path: &Path) -> Result<(Stamp, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let stamp = Stamp::parse_comment(first)
        .ok_or_else(|| Error::Data(format!("{} lacks a config stamp line", path.display())))?;
    Ok((stamp, body.to_string()))
}

/// Serializes `rows` as CSV with a header row.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Data(format!("csv write: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv write: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv<T: DeserializeOwned>(body: &str, origin: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(body.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Data(format!("{}: {e}", origin.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp() -> Stamp {
        Stamp {
            config_sha256: "ab".repeat(32),
            seed: 3,
        }
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Body {
        x: f64,
        name: String,
    }

    #[test]
    fn json_roundtrip_keeps_stamp_first() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/a.json");
        let body = Body {
            x: 0.1 + 0.2,
            name: "n".into(),
        };
        write_json(&p, &stamp(), &body).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("{\n  \"config_sha256\""));
        let (s, b): (Stamp, Body) = read_json(&p).unwrap();
        assert_eq!((s, b), (stamp(), body));
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn text_stamp_roundtrip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_text(&p, &stamp(), "a,b\n1,2\n").unwrap();
        let (s, body) = read_text(&p).unwrap();
        assert_eq!(s, stamp());
        assert_eq!(body, "a,b\n1,2\n");
        let other = Stamp { seed: 4, ..stamp() };
        assert_eq!(other.check(&s, &p).unwrap_err().exit_code(), 1);
        fs::write(&p, "a,b\n").unwrap();
        assert_eq!(read_text(&p).unwrap_err().exit_code(), 2);
    }
}
