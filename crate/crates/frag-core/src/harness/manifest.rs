//! JSONL task manifests.
//!
//! One JSON object per line binds a question to its media:
//!
//! ```json
//! {"id": "q1", "media_path": "clips/a", "media_kind": "video",
//!  "question": "What color is the car?",
//!  "options": ["red", "blue"], "answer_type": "mcq",
//!  "ground_truths": ["A"]}
//! ```
//!
//! `options` (MCQ only) are texts in order; letters A, B, C... are assigned
//! here. `ground_truths` and `prompt_template` are optional. Relative media
//! paths resolve against the manifest's directory. Every validation error
//! names the offending line.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::answering::{AnswerType, QueryTask};
use crate::media::MediaKind;

/// One manifest line: a task plus its media binding.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub task: QueryTask,
    pub media_path: PathBuf,
    pub media_kind: MediaKind,
    pub prompt_template: Option<String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    Line { line: usize, detail: String },
}

#[derive(Deserialize)]
struct RawEntry {
    id: String,
    media_path: String,
    media_kind: String,
    question: String,
    #[serde(default)]
    options: Vec<String>,
    answer_type: String,
    #[serde(default)]
    ground_truths: Vec<String>,
    #[serde(default)]
    prompt_template: Option<String>,
}

fn line_error(line: usize, detail: impl Into<String>) -> ManifestError {
    ManifestError::Line {
        line,
        detail: detail.into(),
    }
}

/// Load and validate a manifest. Blank lines are allowed and skipped; line
/// numbers in errors are 1-based and count blank lines.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(line).map_err(|e| {
            // The serde position refers to the column within this line;
            // the line number we report is the manifest line.
            let msg = e.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            line_error(line_no, msg)
        })?;
        entries.push(validate_entry(raw, line_no, base, &mut seen_ids)?);
    }
    Ok(entries)
}

fn validate_entry(
    raw: RawEntry,
    line_no: usize,
    base: &Path,
    seen_ids: &mut HashSet<String>,
) -> Result<ManifestEntry, ManifestError> {
    if raw.id.trim().is_empty() {
        return Err(line_error(line_no, "id must not be empty"));
    }
    if !seen_ids.insert(raw.id.clone()) {
        return Err(line_error(line_no, format!("duplicate task id `{}`", raw.id)));
    }
    if raw.question.trim().is_empty() {
        return Err(line_error(line_no, "question must not be empty"));
    }
    let media_kind = MediaKind::from_str(&raw.media_kind).map_err(|_| {
        line_error(
            line_no,
            format!(
                "unknown media_kind `{}` (expected video or document)",
                raw.media_kind
            ),
        )
    })?;
    let answer_type = match raw.answer_type.as_str() {
        "mcq" => AnswerType::Mcq,
        "extractive" => AnswerType::Extractive,
        other => {
            return Err(line_error(
                line_no,
                format!("unknown answer_type `{other}` (expected mcq or extractive)"),
            ))
        }
    };
    match answer_type {
        AnswerType::Extractive if !raw.options.is_empty() => {
            return Err(line_error(
                line_no,
                "options are only valid for mcq tasks",
            ));
        }
        AnswerType::Mcq if raw.options.is_empty() => {
            return Err(line_error(line_no, "mcq task requires options"));
        }
        AnswerType::Mcq if raw.options.len() > 26 => {
            return Err(line_error(line_no, "too many options (maximum 26)"));
        }
        _ => {}
    }
    let media_path = if Path::new(&raw.media_path).is_absolute() {
        PathBuf::from(&raw.media_path)
    } else {
        base.join(&raw.media_path)
    };
    if !media_path.exists() {
        return Err(line_error(
            line_no,
            format!("media path not found: {}", media_path.display()),
        ));
    }
    let options = raw
        .options
        .into_iter()
        .enumerate()
        .map(|(i, text)| ((b'A' + i as u8) as char, text))
        .collect();
    Ok(ManifestEntry {
        task: QueryTask {
            id: raw.id,
            question: raw.question,
            options,
            answer_type,
            ground_truths: raw.ground_truths,
        },
        media_path,
        media_kind,
        prompt_template: raw.prompt_template,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_manifest(dir: &Path, lines: &[&str]) -> PathBuf {
        let path = dir.join("tasks.jsonl");
        fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    fn with_media(dir: &Path) {
        let media = dir.join("clip");
        fs::create_dir_all(&media).unwrap();
        fs::write(media.join("0001.png"), b"x").unwrap();
    }

    #[test]
    fn loads_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        with_media(dir.path());
        let path = write_manifest(
            dir.path(),
            &[
                r#"{"id":"a","media_path":"clip","media_kind":"video","question":"Q1?","options":["x","y"],"answer_type":"mcq","ground_truths":["A"]}"#,
                "",
                r#"{"id":"b","media_path":"clip","media_kind":"document","question":"Q2?","answer_type":"extractive","ground_truths":["42"]}"#,
                r#"{"id":"c","media_path":"clip","media_kind":"video","question":"Q3?","answer_type":"extractive"}"#,
            ],
        );
        let entries = load_manifest(&path).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].task.options, vec![('A', "x".to_string()), ('B', "y".to_string())]);
        assert_eq!(entries[0].media_kind, MediaKind::Video);
        assert!(entries[0].media_path.is_absolute());
        assert_eq!(entries[1].task.answer_type, AnswerType::Extractive);
        assert!(entries[2].task.ground_truths.is_empty());
    }

    #[test]
    fn missing_field_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        with_media(dir.path());
        let path = write_manifest(
            dir.path(),
            &[
                r#"{"id":"a","media_path":"clip","media_kind":"video","question":"Q?","answer_type":"extractive"}"#,
                r#"{"id":"b","media_path":"clip","media_kind":"video","answer_type":"extractive"}"#,
            ],
        );
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.starts_with("line 2:"), "{err}");
        assert!(err.contains("missing field"), "{err}");
        assert!(err.contains("question"), "{err}");
    }

    #[test]
    fn malformed_json_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &["{not json"]);
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.starts_with("line 1:"), "{err}");
    }

    #[test]
    fn unknown_answer_type_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        with_media(dir.path());
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"a","media_path":"clip","media_kind":"video","question":"Q?","answer_type":"freeform"}"#],
        );
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("unknown answer_type `freeform`"), "{err}");
    }

    #[test]
    fn options_on_extractive_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        with_media(dir.path());
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"a","media_path":"clip","media_kind":"video","question":"Q?","options":["x"],"answer_type":"extractive"}"#],
        );
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("options are only valid for mcq"), "{err}");
    }

    #[test]
    fn mcq_without_options_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        with_media(dir.path());
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"a","media_path":"clip","media_kind":"video","question":"Q?","answer_type":"mcq"}"#],
        );
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("mcq task requires options"), "{err}");
    }

    #[test]
    fn missing_media_is_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"a","media_path":"nowhere","media_kind":"video","question":"Q?","answer_type":"extractive"}"#],
        );
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.starts_with("line 1:"), "{err}");
        assert!(err.contains("media path not found"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        with_media(dir.path());
        let line = r#"{"id":"a","media_path":"clip","media_kind":"video","question":"Q?","answer_type":"extractive"}"#;
        let path = write_manifest(dir.path(), &[line, line]);
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.starts_with("line 2:"), "{err}");
        assert!(err.contains("duplicate task id"), "{err}");
    }

    #[test]
    fn empty_manifest_is_empty_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &["", ""]);
        assert!(load_manifest(&path).unwrap().is_empty());
    }
}
