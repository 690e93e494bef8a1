//! One JSON value per line. Writes go through a sibling temporary file that is
//! renamed into place, so a failed write never leaves a partial dataset.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::record::{HoiPairRecord, SCHEMA_VERSION};
use crate::error::{HoiError, Result};

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let tmp = temp_path(path);
    let result = (|| -> Result<()> {
        let mut out = BufWriter::new(File::create(&tmp)?);
        for item in items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(std::fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Parses each non-blank line; errors carry the 1-based line number.
pub fn read_jsonl_values(path: &Path) -> Result<Vec<(usize, Value)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| HoiError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl_values(path)?
        .into_iter()
        .map(|(line, v)| {
            serde_json::from_value(v).map_err(|e| HoiError::Parse {
                line,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[HoiPairRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// Reads records, requiring `schema_version` on every line.
pub fn read_records(path: &Path) -> Result<Vec<HoiPairRecord>> {
    read_jsonl_values(path)?
        .into_iter()
        .map(|(line, v)| {
            match v.get("schema_version").and_then(Value::as_u64) {
                None => {
                    return Err(HoiError::Format(format!("line {line}: missing schema_version")));
                }
                Some(ver) if ver != SCHEMA_VERSION as u64 => {
                    return Err(HoiError::Format(format!(
                        "line {line}: schema_version {ver}, expected {SCHEMA_VERSION}"
                    )));
                }
                _ => {}
            }
            serde_json::from_value(v).map_err(|e| HoiError::Parse {
                line,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::fixtures::record;
    use rand::{Rng, SeedableRng};

    fn many(n: usize) -> Vec<HoiPairRecord> {
        let base = record("x", "x");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        (0..n)
            .map(|i| {
                let mut r = base.clone();
                r.id = format!("r{i}");
                let mut p = *r.next.human.params();
                for v in p.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
                r.next.human = crate::types::HumanPose::from_raw(p);
                r.next.object.translation.x = rng.random::<f64>() * 1e-3;
                r
            })
            .collect()
    }

    #[test]
    fn thousand_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let recs = many(1000);
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
        assert!(!temp_path(&path).exists());
    }

    #[test]
    fn truncated_last_line_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_records(&path, &many(3)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 40]).unwrap();
        match read_records(&path) {
            Err(HoiError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut v = serde_json::to_value(record("r", "s")).unwrap();
        v["annotator_notes"] = serde_json::json!({"k": [1, 2]});
        std::fs::write(&path, format!("{v}\n")).unwrap();
        let recs = read_records(&path).unwrap();
        assert_eq!(recs[0].extra["annotator_notes"], serde_json::json!({"k": [1, 2]}));
        let out = dir.path().join("e.jsonl");
        write_records(&out, &recs).unwrap();
        let back: Value = serde_json::from_str(std::fs::read_to_string(&out).unwrap().trim()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut v = serde_json::to_value(record("r", "s")).unwrap();
        v["schema_version"] = 2.into();
        std::fs::write(&path, format!("{v}\n")).unwrap();
        assert!(matches!(read_records(&path), Err(HoiError::Format(_))));
        v.as_object_mut().unwrap().remove("schema_version");
        std::fs::write(&path, format!("{v}\n")).unwrap();
        assert!(matches!(read_records(&path), Err(HoiError::Format(_))));
    }

    #[test]
    fn field_order_is_stable() {
        let text = serde_json::to_string(&record("r", "s")).unwrap();
        let keys = ["\"schema_version\"", "\"id\"", "\"sequence_id\"", "\"current\"", "\"next\"", "\"split\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    }
}
