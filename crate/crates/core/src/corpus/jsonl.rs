use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ActionParseError, ActionStep, Dialogue, Turn, TurnContent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// One dialogue object per line.
    #[default]
    JsonlV1,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl-v1" => Ok(CorpusFormat::JsonlV1),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown corpus format {0:?}")]
    UnknownFormat(String),
    #[error("failed reading corpus: {0}")]
    Io(#[from] io::Error),
    #[error("malformed dialogue at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unknown turn kind at line {line}: {kind:?} in {field}")]
    UnknownTurnKind {
        line: usize,
        field: String,
        kind: String,
    },
    #[error("line {line}: field {field} is required for this turn kind")]
    MissingField { line: usize, field: String },
    #[error("line {line}: field {field} is not allowed for this turn kind")]
    UnexpectedField { line: usize, field: String },
    #[error("line {line}: invalid action in {field}: {source}")]
    InvalidAction {
        line: usize,
        field: String,
        #[source]
        source: ActionParseError,
    },
    #[error("line {line}: duplicate dialogue id {id:?}")]
    DuplicateId { line: usize, id: String },
}

impl CorpusError {
    /// 1-based input line the error refers to, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Malformed { line, .. }
            | CorpusError::UnknownTurnKind { line, .. }
            | CorpusError::MissingField { line, .. }
            | CorpusError::UnexpectedField { line, .. }
            | CorpusError::InvalidAction { line, .. }
            | CorpusError::DuplicateId { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDialogue {
    id: String,
    policy: String,
    #[serde(default)]
    success: Option<bool>,
    turns: Vec<RawTurn>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTurn {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action: Option<RawAction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAction {
    name: String,
    #[serde(default)]
    values: Vec<String>,
}

/// Loads a corpus file, stopping at the first invalid line.
pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
) -> Result<Vec<Dialogue>, CorpusError> {
    match format {
        CorpusFormat::JsonlV1 => read_corpus(BufReader::new(File::open(path)?)),
    }
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Dialogue>, CorpusError> {
    let mut dialogues = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        dialogues.push(parse_unique(&line, idx + 1, &mut seen)?);
    }
    Ok(dialogues)
}

/// Reads every line, collecting the valid dialogues and all line errors.
pub fn read_corpus_lenient<R: BufRead>(
    reader: R,
) -> Result<(Vec<Dialogue>, Vec<CorpusError>), io::Error> {
    let mut dialogues = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_unique(&line, idx + 1, &mut seen) {
            Ok(d) => dialogues.push(d),
            Err(e) => errors.push(e),
        }
    }
    Ok((dialogues, errors))
}

fn parse_unique(
    text: &str,
    line: usize,
    seen: &mut HashSet<String>,
) -> Result<Dialogue, CorpusError> {
    let d = parse_line(text, line)?;
    if !seen.insert(d.id.clone()) {
        return Err(CorpusError::DuplicateId { line, id: d.id });
    }
    Ok(d)
}

fn parse_line(text: &str, line: usize) -> Result<Dialogue, CorpusError> {
    let raw: RawDialogue = serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
        line,
        message: e.to_string(),
    })?;

    let mut turns = Vec::with_capacity(raw.turns.len());
    for (index, turn) in raw.turns.into_iter().enumerate() {
        let field = |name: &str| format!("turns[{index}].{name}");
        let content = match turn.kind.as_str() {
            "user" | "system" => {
                if turn.action.is_some() {
                    return Err(CorpusError::UnexpectedField {
                        line,
                        field: field("action"),
                    });
                }
                let text = turn.text.ok_or_else(|| CorpusError::MissingField {
                    line,
                    field: field("text"),
                })?;
                if turn.kind == "user" {
                    TurnContent::User(text)
                } else {
                    TurnContent::System(text)
                }
            }
            "action" => {
                if turn.text.is_some() {
                    return Err(CorpusError::UnexpectedField {
                        line,
                        field: field("text"),
                    });
                }
                let action = turn.action.ok_or_else(|| CorpusError::MissingField {
                    line,
                    field: field("action"),
                })?;
                let step = ActionStep::new(action.name, action.values).map_err(|source| {
                    CorpusError::InvalidAction {
                        line,
                        field: field("action"),
                        source,
                    }
                })?;
                TurnContent::Action(step)
            }
            other => {
                return Err(CorpusError::UnknownTurnKind {
                    line,
                    field: field("kind"),
                    kind: other.to_string(),
                })
            }
        };
        turns.push(Turn { index, content });
    }

    Ok(Dialogue {
        id: raw.id,
        policy: raw.policy,
        turns,
        success: raw.success,
    })
}

/// Writes dialogues as jsonl-v1, one object per line.
pub fn write_corpus<W: Write>(mut writer: W, dialogues: &[Dialogue]) -> io::Result<()> {
    for d in dialogues {
        let raw = RawDialogue {
            id: d.id.clone(),
            policy: d.policy.clone(),
            success: d.success,
            turns: d
                .turns
                .iter()
                .map(|t| match &t.content {
                    TurnContent::User(text) | TurnContent::System(text) => RawTurn {
                        kind: t.kind().as_str().to_string(),
                        text: Some(text.clone()),
                        action: None,
                    },
                    TurnContent::Action(step) => RawTurn {
                        kind: "action".to_string(),
                        text: None,
                        action: Some(RawAction {
                            name: step.name.clone(),
                            values: step.values.clone(),
                        }),
                    },
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
