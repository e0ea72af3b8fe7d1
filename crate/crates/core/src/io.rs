//! On-disk formats.
//!
//! Embeddings: `VAPC`, version byte `1`, `u32` LE row count, `u32` LE
//! dimension, then row-major `f32` LE values. Metadata: one JSON object per
//! line with keys `index`, `id` (optional), `camera`, `viewpoint`, `split`.
//! Labels: CSV with header `index,label,iteration`. Reports: one JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EmbeddingSet, SampleMeta, Split, Viewpoint};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"VAPC";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub fn encode_embeddings(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * set.as_slice().len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for &x in set.as_slice() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (n, d) = (word(5), word(9));
    let payload = &bytes[HEADER_LEN..];
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Shape(format!("header {n}x{d} overflows")))?;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected: HEADER_LEN + expected,
            actual: bytes.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingBytes {
            actual: payload.len() - expected,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    EmbeddingSet::new(d, data)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

pub fn write_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<()> {
    write_bytes(path.as_ref(), &encode_embeddings(set))
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    camera: String,
    #[serde(default)]
    viewpoint: Option<String>,
    #[serde(default = "default_split")]
    split: String,
}

fn default_split() -> String {
    Split::Train.as_str().to_owned()
}

/// Parses JSON-lines metadata; blank lines are skipped and line numbers in
/// errors are 1-based.
pub fn parse_meta(text: &str) -> Result<Vec<SampleMeta>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: MetaRecord = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let viewpoint = rec
            .viewpoint
            .map(|v| {
                v.parse::<Viewpoint>()
                    .map_err(|_| Error::UnknownViewpoint { line, value: v })
            })
            .transpose()?;
        let split = rec
            .split
            .parse::<Split>()
            .map_err(|message| Error::Parse { line, message })?;
        out.push(SampleMeta {
            index: rec.index,
            camera: rec.camera,
            viewpoint,
            gt_id: rec.id,
            split,
        });
    }
    Ok(out)
}

pub fn format_meta(meta: &[SampleMeta]) -> String {
    let mut out = String::new();
    for m in meta {
        let rec = MetaRecord {
            index: m.index,
            id: m.gt_id.clone(),
            camera: m.camera.clone(),
            viewpoint: m.viewpoint.map(|v| v.as_str().to_owned()),
            split: m.split.as_str().to_owned(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<Vec<SampleMeta>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_meta(&text)
}

pub fn write_meta(path: impl AsRef<Path>, meta: &[SampleMeta]) -> Result<()> {
    write_bytes(path.as_ref(), format_meta(meta).as_bytes())
}

/// Reads both files, checks their counts agree, then normalises and
/// validates.
pub fn load_dataset(embeddings: impl AsRef<Path>, meta: impl AsRef<Path>) -> Result<Dataset> {
    let set = read_embeddings(embeddings)?;
    let meta = read_meta(meta)?;
    if set.len() != meta.len() {
        return Err(Error::CountMismatch {
            metas: meta.len(),
            embeddings: set.len(),
        });
    }
    Dataset::new(set, meta)
}

/// One row of a labels file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelRow {
    pub index: usize,
    pub label: i64,
    pub iteration: usize,
}

pub const LABELS_HEADER: &str = "index,label,iteration";

pub fn format_labels(rows: &[LabelRow]) -> String {
    let mut out = String::with_capacity(16 * (rows.len() + 1));
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.index, r.label, r.iteration));
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<LabelRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == LABELS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {LABELS_HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (n, raw) in lines {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let bad = |message: String| Error::Parse { line, message };
        let [index, label, iteration] = fields.as_slice() else {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        };
        out.push(LabelRow {
            index: index.parse().map_err(|e| bad(format!("index: {e}")))?,
            label: label.parse().map_err(|e| bad(format!("label: {e}")))?,
            iteration: iteration
                .parse()
                .map_err(|e| bad(format!("iteration: {e}")))?,
        });
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn write_labels(path: impl AsRef<Path>, rows: &[LabelRow]) -> Result<()> {
    write_bytes(path.as_ref(), format_labels(rows).as_bytes())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path.as_ref(), text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_header_layout() {
        let set = EmbeddingSet::new(2, vec![1.0, 0.0, 0.5, -0.25]).unwrap();
        let bytes = encode_embeddings(&set);
        assert_eq!(&bytes[..5], b"VAPC\x01");
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 13 + 16);
        assert_eq!(decode_embeddings(&bytes).unwrap(), set);
    }

    #[test]
    fn embedding_errors() {
        let set = EmbeddingSet::new(2, vec![1.0; 10]).unwrap();
        let bytes = encode_embeddings(&set);
        assert!(matches!(
            decode_embeddings(b"NOPE\x01"),
            Err(Error::BadMagic)
        ));
        assert!(matches!(
            decode_embeddings(&bytes[..bytes.len() - 8]),
            Err(Error::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_embeddings(&long),
            Err(Error::TrailingBytes { actual: 1 })
        ));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(
            decode_embeddings(&v2),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn metadata_parsing() {
        let text = "{\"index\":0,\"id\":\"a\",\"camera\":\"c1\",\"viewpoint\":\"front\",\"split\":\"train\"}\n\
                    \n\
                    {\"index\":1,\"camera\":\"c2\",\"viewpoint\":null,\"split\":\"query\"}\n";
        let meta = parse_meta(text).unwrap();
        assert_eq!(meta.len(), 2);
        assert_eq!(meta[0].gt_id.as_deref(), Some("a"));
        assert_eq!(meta[1].viewpoint, None);
        assert_eq!(parse_meta(&format_meta(&meta)).unwrap(), meta);
    }

    #[test]
    fn unknown_viewpoint_names_line() {
        let text = "{\"index\":0,\"camera\":\"c\",\"viewpoint\":\"side\",\"split\":\"train\"}\n\
                    {\"index\":1,\"camera\":\"c\",\"viewpoint\":\"top\",\"split\":\"train\"}\n";
        match parse_meta(text) {
            Err(Error::UnknownViewpoint { line, value }) => {
                assert_eq!(line, 2);
                assert_eq!(value, "top");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_round_trip() {
        let rows = vec![
            LabelRow {
                index: 0,
                label: 3,
                iteration: 2,
            },
            LabelRow {
                index: 4,
                label: 0,
                iteration: 2,
            },
        ];
        let text = format_labels(&rows);
        assert!(text.starts_with("index,label,iteration\n0,3,2\n"));
        assert_eq!(parse_labels(&text).unwrap(), rows);
        assert!(parse_labels("a,b\n").is_err());
        assert!(parse_labels("index,label,iteration\n1,2\n").is_err());
    }
}
