//! Manifest and prediction file parsing, plus free-text answer mapping.
//!
//! Both file kinds are newline-delimited JSON objects, one record per line.
//! Blank lines are skipped. Loading is single pass over a buffered reader.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{
    validate_predictions, AnswerLabel, Category, Cell, PredictionTable, Quadruple, QuadrupleId,
    ValidationReport, Variant,
};

const TRAILING_PUNCTUATION: &[char] = &['.', ',', '!', ';'];

/// A verbatim model output for one cell, kept byte-exact for audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub quadruple_id: QuadrupleId,
    pub cell: Cell,
    pub text: String,
    pub model_id: String,
}

impl RawResponse {
    pub fn label(&self) -> AnswerLabel {
        parse_answer(&self.text)
    }
}

fn normalize(token: &str) -> String {
    let stripped = token.trim().trim_end_matches(TRAILING_PUNCTUATION).trim();
    // upper-then-lower so that e.g. "ſ" folds the same way as "S"
    stripped.to_uppercase().to_lowercase()
}

fn as_label(normalized: &str) -> Option<AnswerLabel> {
    match normalized {
        "yes" => Some(AnswerLabel::Yes),
        "no" => Some(AnswerLabel::No),
        _ => None,
    }
}

/// Maps a free-text model reply to a binary label.
///
/// The whole reply is trimmed, stripped of trailing `. , ! ;` and
/// case-folded; an exact "yes"/"no" wins. Otherwise the first
/// whitespace-delimited token is normalized the same way, so "Yes, because
/// the car stopped" still scores as Yes. Anything else is `Invalid`.
pub fn parse_answer(text: &str) -> AnswerLabel {
    if let Some(label) = as_label(&normalize(text)) {
        return label;
    }
    text.split_whitespace()
        .next()
        .and_then(|first| as_label(&normalize(first)))
        .unwrap_or(AnswerLabel::Invalid)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_object(line: usize, text: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::Parse {
            line,
            message: "record is not a JSON object".into(),
        }),
        Err(e) => Err(Error::Parse {
            line,
            message: e.to_string(),
        }),
    }
}

fn string_field(map: &Map<String, Value>, line: usize, field: &'static str) -> Result<String> {
    match map.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::Field {
            line,
            field,
            message: "expected a string".into(),
        }),
        None => Err(Error::Field {
            line,
            field,
            message: "missing".into(),
        }),
    }
}

fn optional_string(
    map: &Map<String, Value>,
    line: usize,
    field: &'static str,
) -> Result<Option<String>> {
    match map.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => string_field(map, line, field).map(Some),
    }
}

fn index_field(map: &Map<String, Value>, line: usize) -> Result<u64> {
    const FIELD: &str = "pair_index";
    match map.get(FIELD) {
        Some(v) => v.as_u64().ok_or_else(|| Error::Field {
            line,
            field: FIELD,
            message: "expected a non-negative integer".into(),
        }),
        None => Err(Error::Field {
            line,
            field: FIELD,
            message: "missing".into(),
        }),
    }
}

fn variant_field(map: &Map<String, Value>, line: usize, field: &'static str) -> Result<Variant> {
    string_field(map, line, field)?
        .parse()
        .map_err(|e: Error| Error::Field {
            line,
            field,
            message: e.to_string(),
        })
}

fn for_each_record<R: BufRead>(
    reader: R,
    mut f: impl FnMut(usize, Map<String, Value>) -> Result<()>,
) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let number = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: number,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        f(number, parse_object(number, &line)?)?;
    }
    Ok(())
}

/// Parses manifest records from any buffered reader.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<Quadruple>> {
    let mut out = Vec::new();
    for_each_record(reader, |line, map| {
        let scene_id = string_field(&map, line, "scene_id")?;
        let pair_index = index_field(&map, line)?;
        let category = string_field(&map, line, "category")?
            .parse::<Category>()
            .map_err(|e| Error::Field {
                line,
                field: "category",
                message: e.to_string(),
            })?;
        out.push(Quadruple {
            id: QuadrupleId::new(scene_id, pair_index),
            category,
            q_pos_text: string_field(&map, line, "q_pos_text")?,
            q_neg_text: string_field(&map, line, "q_neg_text")?,
            v_pos_ref: string_field(&map, line, "v_pos_ref")?,
            v_neg_ref: string_field(&map, line, "v_neg_ref")?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Loads a manifest file. Duplicate ids are left for
/// [`validate_manifest`](crate::model::validate_manifest) to report.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Quadruple>> {
    read_manifest(open(path.as_ref())?)
}

/// Parses prediction records. Records carry either a `label` or a
/// `raw_text`; raw text is routed through [`parse_answer`]. When no record
/// names a model, `default_model_id` is used.
pub fn read_predictions<R: BufRead>(
    reader: R,
    default_model_id: &str,
) -> Result<PredictionTable> {
    let mut model_id: Option<String> = None;
    let mut entries: BTreeMap<(QuadrupleId, Cell), (AnswerLabel, usize)> = BTreeMap::new();

    for_each_record(reader, |line, map| {
        let id = QuadrupleId::new(string_field(&map, line, "scene_id")?, index_field(&map, line)?);
        let cell = Cell::new(
            variant_field(&map, line, "video_variant")?,
            variant_field(&map, line, "question_variant")?,
        );
        let label = match (
            optional_string(&map, line, "label")?,
            optional_string(&map, line, "raw_text")?,
        ) {
            (Some(label), None) => match label.as_str() {
                "yes" => AnswerLabel::Yes,
                "no" => AnswerLabel::No,
                other => {
                    return Err(Error::Field {
                        line,
                        field: "label",
                        message: format!("expected \"yes\" or \"no\", got `{other}`"),
                    })
                }
            },
            (None, Some(text)) => parse_answer(&text),
            (Some(_), Some(_)) => {
                return Err(Error::Parse {
                    line,
                    message: "record has both `label` and `raw_text`".into(),
                })
            }
            (None, None) => {
                return Err(Error::Parse {
                    line,
                    message: "record has neither `label` nor `raw_text`".into(),
                })
            }
        };

        if let Some(m) = optional_string(&map, line, "model_id")? {
            match &model_id {
                Some(existing) if *existing != m => {
                    return Err(Error::Field {
                        line,
                        field: "model_id",
                        message: format!("`{m}` disagrees with earlier `{existing}`"),
                    })
                }
                Some(_) => {}
                None => model_id = Some(m),
            }
        }

        match entries.get(&(id.clone(), cell)) {
            Some((first, _)) if *first != label => {
                return Err(Error::ConflictingLabel {
                    line,
                    id: id.to_string(),
                    cell: cell.to_string(),
                    first: first.to_string(),
                    second: label.to_string(),
                })
            }
            Some(_) => {}
            None => {
                entries.insert((id, cell), (label, line));
            }
        }
        Ok(())
    })?;

    Ok(PredictionTable {
        model_id: model_id.unwrap_or_else(|| default_model_id.to_string()),
        entries: entries.into_iter().map(|(k, (label, _))| (k, label)).collect(),
    })
}

/// Loads a prediction file and validates it against the manifest. The model
/// id defaults to the file stem when the records do not carry one.
pub fn load_predictions(
    path: impl AsRef<Path>,
    manifest: &[Quadruple],
) -> Result<(PredictionTable, ValidationReport)> {
    let path = path.as_ref();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    let table = read_predictions(open(path)?, &stem)?;
    let report = validate_predictions(manifest, &table);
    Ok((table, report))
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    scene_id: &'a str,
    pair_index: u64,
    video_variant: Variant,
    question_variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<AnswerLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_text: Option<&'a str>,
    model_id: &'a str,
}

/// Serializes a table in the prediction file format, one record per entry in
/// key order. `Invalid` entries are written as an empty `raw_text`, which
/// parses back to `Invalid`.
pub fn write_predictions(table: &PredictionTable) -> String {
    let mut out = String::new();
    for ((id, cell), label) in &table.entries {
        let (label, raw_text) = match label {
            AnswerLabel::Invalid => (None, Some("")),
            concrete => (Some(*concrete), None),
        };
        let record = PredictionRecord {
            scene_id: &id.scene_id,
            pair_index: id.pair_index,
            video_variant: cell.video,
            question_variant: cell.question,
            label,
            raw_text,
            model_id: &table.model_id,
        };
        out.push_str(&serde_json::to_string(&record).expect("prediction record serializes"));
        out.push('\n');
    }
    out
}

/// Serializes a manifest in the manifest file format.
pub fn write_manifest(manifest: &[Quadruple]) -> String {
    let mut out = String::new();
    for q in manifest {
        let record = serde_json::json!({
            "scene_id": q.id.scene_id,
            "pair_index": q.id.pair_index,
            "category": q.category.as_str(),
            "q_pos_text": q.q_pos_text,
            "q_neg_text": q.q_neg_text,
            "v_pos_ref": q.v_pos_ref,
            "v_neg_ref": q.v_neg_ref,
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}
