use thiserror::Error;

use super::{is_valid_name, is_valid_value, ActionStep};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("unbalanced brackets in action segment {segment:?}")]
    UnbalancedBrackets { segment: String },
    #[error("empty action name in segment {segment:?}")]
    EmptyName { segment: String },
    #[error("invalid action name {segment:?}")]
    InvalidName { segment: String },
    #[error("invalid action value {segment:?}")]
    InvalidValue { segment: String },
}

/// Parses `name [v1, v2]; name; ...` into steps.
///
/// A blank string is the empty sequence. Whitespace around names, values
/// and separators is ignored; `name []` and `name` are the same step.
pub fn parse_action_string(s: &str) -> Result<Vec<ActionStep>, ActionParseError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(parse_step).collect()
}

fn parse_step(raw: &str) -> Result<ActionStep, ActionParseError> {
    let segment = raw.trim();
    let unbalanced = || ActionParseError::UnbalancedBrackets {
        segment: segment.to_string(),
    };

    let (name, values) = match segment.find('[') {
        None => {
            if segment.contains(']') {
                return Err(unbalanced());
            }
            (segment, Vec::new())
        }
        Some(open) => {
            let inner = segment[open + 1..]
                .strip_suffix(']')
                .ok_or_else(unbalanced)?;
            if inner.contains(['[', ']']) {
                return Err(unbalanced());
            }
            let values = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|v| {
                        let v = v.trim();
                        if is_valid_value(v) {
                            Ok(v.to_string())
                        } else {
                            Err(ActionParseError::InvalidValue {
                                segment: segment.to_string(),
                            })
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            (segment[..open].trim(), values)
        }
    };

    if name.is_empty() {
        return Err(ActionParseError::EmptyName {
            segment: segment.to_string(),
        });
    }
    if !is_valid_name(name) {
        return Err(ActionParseError::InvalidName {
            segment: segment.to_string(),
        });
    }
    Ok(ActionStep {
        name: name.to_string(),
        values,
    })
}

/// Renders steps joined by `"; "`. Steps without values are bare names.
pub fn format_action_sequence(steps: &[ActionStep]) -> String {
    steps
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
