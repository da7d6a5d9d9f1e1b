//! Corpus manifest parsing.
//!
//! The manifest is UTF-8 CSV with the fixed header
//! `path,class_label,location_id,duration_s`, comma-separated, no quoting.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use super::CorpusError;

pub const MANIFEST_HEADER: &str = "path,class_label,location_id,duration_s";

/// One corpus recording: where it lives, what it is, where it was recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub path: String,
    pub class_label: String,
    pub location_id: String,
    pub duration_s: f64,
}

/// Parse a manifest stream. `allowed_classes` (when given) whitelists
/// class labels; any other label is a validation error.
///
/// Errors carry 1-based line numbers counted from the header line.
pub fn load_manifest(
    source: impl BufRead,
    allowed_classes: Option<&BTreeSet<String>>,
) -> Result<Vec<RecordingMeta>, CorpusError> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(CorpusError::Parse {
                line: 1,
                msg: "empty stream, expected header".into(),
            })
        }
    };
    if header.trim_end() != MANIFEST_HEADER {
        return Err(CorpusError::Parse {
            line: 1,
            msg: format!("bad header `{header}`, expected `{MANIFEST_HEADER}`"),
        });
    }

    let mut metas = Vec::new();
    let mut seen_paths: HashMap<String, usize> = HashMap::new();
    let mut location_class: HashMap<String, (String, usize)> = HashMap::new();

    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CorpusError::Parse {
                line: line_no,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let (path, class_label, location_id, duration) =
            (fields[0].trim(), fields[1].trim(), fields[2].trim(), fields[3].trim());
        if path.is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                msg: "empty path".into(),
            });
        }
        let duration_s: f64 = duration.parse().map_err(|_| CorpusError::Parse {
            line: line_no,
            msg: format!("invalid duration_s `{duration}`"),
        })?;
        if !duration_s.is_finite() || duration_s < 0.0 {
            return Err(CorpusError::Parse {
                line: line_no,
                msg: format!("duration_s out of range: {duration_s}"),
            });
        }
        if let Some(allowed) = allowed_classes {
            if !allowed.contains(class_label) {
                return Err(CorpusError::UnknownClass {
                    line: line_no,
                    class: class_label.to_string(),
                });
            }
        }
        if seen_paths.insert(path.to_string(), line_no).is_some() {
            return Err(CorpusError::DuplicatePath {
                line: line_no,
                path: path.to_string(),
            });
        }
        match location_class.get(location_id) {
            Some((first_class, _)) if first_class != class_label => {
                return Err(CorpusError::LocationClassClash {
                    location: location_id.to_string(),
                    first: first_class.clone(),
                    second: class_label.to_string(),
                });
            }
            Some(_) => {}
            None => {
                location_class
                    .insert(location_id.to_string(), (class_label.to_string(), line_no));
            }
        }
        metas.push(RecordingMeta {
            path: path.to_string(),
            class_label: class_label.to_string(),
            location_id: location_id.to_string(),
            duration_s,
        });
    }
    Ok(metas)
}

/// Load a manifest file, resolving recording paths relative to the
/// manifest's own directory.
pub fn load_manifest_path(path: impl AsRef<Path>) -> Result<Vec<RecordingMeta>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut metas = load_manifest(std::io::BufReader::new(file), None)?;
    if let Some(dir) = path.parent() {
        for meta in &mut metas {
            let p = Path::new(&meta.path);
            if p.is_relative() {
                meta.path = dir.join(p).to_string_lossy().into_owned();
            }
        }
    }
    Ok(metas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<Vec<RecordingMeta>, CorpusError> {
        load_manifest(Cursor::new(s.to_string()), None)
    }

    #[test]
    fn two_rows_parse() {
        let metas = parse(
            "path,class_label,location_id,duration_s\n\
             a.wav,beach,loc1,10.0\n\
             b.wav,beach,loc2,10.0\n",
        )
        .unwrap();
        assert_eq!(metas.len(), 2);
        assert_eq!(metas[0].path, "a.wav");
        assert_eq!(metas[1].location_id, "loc2");
    }

    #[test]
    fn header_only_is_empty_not_error() {
        let metas = parse("path,class_label,location_id,duration_s\n").unwrap();
        assert!(metas.is_empty());
    }

    #[test]
    fn bad_duration_names_line_3() {
        let err = parse(
            "path,class_label,location_id,duration_s\n\
             a.wav,beach,loc1,10.0\n\
             b.wav,beach,loc2,abc\n",
        )
        .unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_paths_rejected() {
        let err = parse(
            "path,class_label,location_id,duration_s\n\
             a.wav,beach,loc1,10.0\n\
             a.wav,beach,loc2,10.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicatePath { line: 3, .. }));
    }

    #[test]
    fn class_whitelist_enforced() {
        let allowed: BTreeSet<String> = ["beach".to_string()].into();
        let err = load_manifest(
            Cursor::new(
                "path,class_label,location_id,duration_s\n\
                 a.wav,bus,loc1,10.0\n",
            ),
            Some(&allowed),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::UnknownClass { line: 2, .. }));
    }

    #[test]
    fn location_bound_to_one_class() {
        let err = parse(
            "path,class_label,location_id,duration_s\n\
             a.wav,beach,loc1,10.0\n\
             b.wav,bus,loc1,10.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::LocationClassClash { .. }));
    }
}
