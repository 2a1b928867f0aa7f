//! Dialogues, workflow actions, and their on-disk formats.

mod action;
mod jsonl;
mod split;

use std::fmt;

pub use action::{format_action_sequence, parse_action_string, ActionParseError};
pub use jsonl::{
    load_corpus, read_corpus, read_corpus_lenient, write_corpus, CorpusError, CorpusFormat,
};
pub use split::{
    export_stat_targets, render_context, split_at_action, FeatureMode, SplitError, StatTargets,
};

/// One workflow action: a name plus its ordered slot values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionStep {
    pub name: String,
    pub values: Vec<String>,
}

impl ActionStep {
    /// Builds a step, checking the name and value invariants.
    pub fn new<N, I, V>(name: N, values: I) -> Result<Self, ActionParseError>
    where
        N: Into<String>,
        I: IntoIterator<Item = V>,
        V: Into<String>,
    {
        let step = ActionStep {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        };
        step.validate()?;
        Ok(step)
    }

    /// A step without slot values.
    pub fn bare(name: impl Into<String>) -> Self {
        ActionStep {
            name: name.into(),
            values: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ActionParseError> {
        if !is_valid_name(&self.name) {
            return Err(ActionParseError::InvalidName {
                segment: self.name.clone(),
            });
        }
        for value in &self.values {
            if !is_valid_value(value) {
                return Err(ActionParseError::InvalidValue {
                    segment: value.clone(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ActionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.values.is_empty() {
            write!(f, " [{}]", self.values.join(", "))?;
        }
        Ok(())
    }
}

/// Names are single tokens: non-empty, no whitespace, none of `;[],`.
pub(crate) fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| !c.is_whitespace() && !matches!(c, ';' | '[' | ']' | ','))
}

/// Values are non-empty, already trimmed, and free of `;[],`.
pub(crate) fn is_valid_value(value: &str) -> bool {
    !value.is_empty() && value.trim() == value && !value.contains([';', '[', ']', ','])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TurnKind {
    User,
    System,
    Action,
}

impl TurnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TurnKind::User => "user",
            TurnKind::System => "system",
            TurnKind::Action => "action",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnContent {
    User(String),
    System(String),
    Action(ActionStep),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    /// 0-based position within the dialogue.
    pub index: usize,
    pub content: TurnContent,
}

impl Turn {
    pub fn kind(&self) -> TurnKind {
        match self.content {
            TurnContent::User(_) => TurnKind::User,
            TurnContent::System(_) => TurnKind::System,
            TurnContent::Action(_) => TurnKind::Action,
        }
    }

    pub fn action(&self) -> Option<&ActionStep> {
        match &self.content {
            TurnContent::Action(step) => Some(step),
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match &self.content {
            TurnContent::User(text) | TurnContent::System(text) => Some(text),
            TurnContent::Action(_) => None,
        }
    }

    pub fn is_utterance(&self) -> bool {
        !matches!(self.content, TurnContent::Action(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    /// Customer intent label; selects the policy graph.
    pub policy: String,
    pub turns: Vec<Turn>,
    pub success: Option<bool>,
}

impl Dialogue {
    /// Builds a dialogue, assigning contiguous turn indices.
    pub fn new(
        id: impl Into<String>,
        policy: impl Into<String>,
        contents: impl IntoIterator<Item = TurnContent>,
    ) -> Self {
        Dialogue {
            id: id.into(),
            policy: policy.into(),
            turns: contents
                .into_iter()
                .enumerate()
                .map(|(index, content)| Turn { index, content })
                .collect(),
            success: None,
        }
    }

    /// The workflow: action turns in order.
    pub fn workflow(&self) -> impl Iterator<Item = &ActionStep> + '_ {
        self.turns.iter().filter_map(Turn::action)
    }

    pub fn action_count(&self) -> usize {
        self.workflow().count()
    }

    /// Turn positions of the action turns.
    pub fn action_positions(&self) -> Vec<usize> {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.action().is_some())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn utterance_count(&self) -> usize {
        self.turns.iter().filter(|t| t.is_utterance()).count()
    }
}

/// A dialogue cut right after its `k`-th action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSplit {
    pub dialogue_id: String,
    pub policy: String,
    /// Number of actions contained in the context.
    pub k: usize,
    pub context: Vec<Turn>,
    pub future_actions: Vec<ActionStep>,
    pub last_action: Option<ActionStep>,
}
