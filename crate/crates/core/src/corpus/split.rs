use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ContextSplit, Dialogue, Turn, TurnContent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action ordinal {k} out of range for dialogue {dialogue_id:?} with {actions} actions")]
pub struct SplitError {
    pub dialogue_id: String,
    pub k: usize,
    pub actions: usize,
}

/// Where the context ends: right after the `k`-th action turn, or before
/// the first action when `k == 0`.
fn cut_position(d: &Dialogue, k: usize) -> Result<usize, SplitError> {
    let positions = d.action_positions();
    if k > positions.len() {
        return Err(SplitError {
            dialogue_id: d.id.clone(),
            k,
            actions: positions.len(),
        });
    }
    Ok(match k {
        0 => positions.first().copied().unwrap_or(d.turns.len()),
        k => positions[k - 1] + 1,
    })
}

/// Splits `d` after its `k`-th action (`0 <= k <= #actions`).
pub fn split_at_action(d: &Dialogue, k: usize) -> Result<ContextSplit, SplitError> {
    let cut = cut_position(d, k)?;
    let (context, remainder) = d.turns.split_at(cut);
    Ok(ContextSplit {
        dialogue_id: d.id.clone(),
        policy: d.policy.clone(),
        k,
        context: context.to_vec(),
        future_actions: remainder.iter().filter_map(Turn::action).cloned().collect(),
        last_action: context.iter().rev().find_map(Turn::action).cloned(),
    })
}

/// Conversation statistics a downstream regressor may learn at a split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatTargets {
    pub success: Option<u8>,
    pub fraction_complete: f64,
    pub remaining_utterances: usize,
    pub remaining_user_utterances: usize,
    pub remaining_system_utterances: usize,
}

pub fn export_stat_targets(d: &Dialogue, k: usize) -> Result<StatTargets, SplitError> {
    let cut = cut_position(d, k)?;
    let remainder = &d.turns[cut..];
    let count =
        |pred: fn(&TurnContent) -> bool| remainder.iter().filter(|t| pred(&t.content)).count();
    let user = count(|c| matches!(c, TurnContent::User(_)));
    let system = count(|c| matches!(c, TurnContent::System(_)));
    let fraction_complete = if d.turns.is_empty() {
        1.0
    } else {
        cut as f64 / d.turns.len() as f64
    };
    Ok(StatTargets {
        success: d.success.map(u8::from),
        fraction_complete,
        remaining_utterances: user + system,
        remaining_user_utterances: user,
        remaining_system_utterances: system,
    })
}

/// Which context turns a rendering keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FeatureMode {
    #[default]
    #[serde(rename = "utterances+actions")]
    UtterancesAndActions,
    #[serde(rename = "utterances")]
    Utterances,
    #[serde(rename = "actions")]
    Actions,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::UtterancesAndActions => "utterances+actions",
            FeatureMode::Utterances => "utterances",
            FeatureMode::Actions => "actions",
        }
    }

    fn keeps(self, turn: &Turn) -> bool {
        match self {
            FeatureMode::UtterancesAndActions => true,
            FeatureMode::Utterances => turn.is_utterance(),
            FeatureMode::Actions => !turn.is_utterance(),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "utterances+actions" => Ok(FeatureMode::UtterancesAndActions),
            "utterances" => Ok(FeatureMode::Utterances),
            "actions" => Ok(FeatureMode::Actions),
            other => Err(format!(
                "unknown feature mode {other:?} (expected utterances+actions, utterances or actions)"
            )),
        }
    }
}

/// One line per kept turn: `user: ...`, `system: ...`, `action: name [v]`.
pub fn render_context(turns: &[Turn], mode: FeatureMode) -> String {
    turns
        .iter()
        .filter(|t| mode.keeps(t))
        .map(|t| match &t.content {
            TurnContent::User(text) => format!("user: {text}"),
            TurnContent::System(text) => format!("system: {text}"),
            TurnContent::Action(step) => format!("action: {step}"),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ActionStep;
    use proptest::prelude::*;

    fn u(s: &str) -> TurnContent {
        TurnContent::User(s.into())
    }
    fn s(t: &str) -> TurnContent {
        TurnContent::System(t.into())
    }
    fn a(n: &str) -> TurnContent {
        TurnContent::Action(ActionStep::bare(n))
    }

    fn uasbu() -> Dialogue {
        Dialogue::new("d", "p", [u("hi"), a("A"), s("ok"), a("B"), u("bye")])
    }

    #[test]
    fn k_zero_has_no_last_action() {
        let sp = split_at_action(&uasbu(), 0).unwrap();
        assert_eq!(
            sp.future_actions,
            [ActionStep::bare("A"), ActionStep::bare("B")]
        );
        assert_eq!(sp.last_action, None);
        assert_eq!(sp.context.len(), 1);
    }

    #[test]
    fn k_one_cuts_after_first_action() {
        let d = uasbu();
        let sp = split_at_action(&d, 1).unwrap();
        assert_eq!(sp.context, d.turns[..2].to_vec());
        assert_eq!(sp.future_actions, [ActionStep::bare("B")]);
        assert_eq!(sp.last_action, Some(ActionStep::bare("A")));
    }

    #[test]
    fn k_at_end_is_exhausted() {
        let sp = split_at_action(&uasbu(), 2).unwrap();
        assert!(sp.future_actions.is_empty());
        assert_eq!(sp.last_action, Some(ActionStep::bare("B")));
        assert_eq!(sp.context.len(), 4);
    }

    #[test]
    fn k_out_of_range() {
        let err = split_at_action(&uasbu(), 3).unwrap_err();
        assert_eq!(err.actions, 2);
        assert!(export_stat_targets(&uasbu(), 3).is_err());
    }

    #[test]
    fn targets_at_end_of_dialogue() {
        let d = Dialogue::new("d", "p", [u("hi"), a("A"), s("ok"), a("B")]);
        let t = export_stat_targets(&d, 2).unwrap();
        assert_eq!(t.remaining_utterances, 0);
        assert_eq!(t.fraction_complete, 1.0);
    }

    #[test]
    fn targets_at_start() {
        // 4 utterances + 2 actions, two utterances precede the first action
        let mut d = Dialogue::new("d", "p", [u("a"), s("b"), a("A"), u("c"), a("B"), s("d")]);
        d.success = Some(true);
        let t = export_stat_targets(&d, 0).unwrap();
        assert_eq!(t.fraction_complete, 2.0 / 6.0);
        assert_eq!(t.remaining_utterances, 2);
        assert_eq!(t.remaining_user_utterances, 1);
        assert_eq!(t.remaining_system_utterances, 1);
        assert_eq!(t.success, Some(1));
    }

    #[test]
    fn render_modes_filter_turns() {
        let d = uasbu();
        assert_eq!(
            render_context(&d.turns, FeatureMode::UtterancesAndActions),
            "user: hi\naction: A\nsystem: ok\naction: B\nuser: bye"
        );
        assert_eq!(
            render_context(&d.turns, FeatureMode::Actions),
            "action: A\naction: B"
        );
        assert_eq!(
            render_context(&d.turns, FeatureMode::Utterances),
            "user: hi\nsystem: ok\nuser: bye"
        );
    }

    fn arb_dialogue() -> impl Strategy<Value = Dialogue> {
        prop::collection::vec(0u8..3, 0..20).prop_map(|kinds| {
            Dialogue::new(
                "g",
                "p",
                kinds.into_iter().map(|k| match k {
                    0 => u("x"),
                    1 => s("y"),
                    _ => a("A"),
                }),
            )
        })
    }

    proptest! {
        #[test]
        fn split_partitions_turns(d in arb_dialogue()) {
            let n = d.action_count();
            let mut prev: Option<StatTargets> = None;
            for k in 0..=n {
                let sp = split_at_action(&d, k).unwrap();
                let remainder = &d.turns[sp.context.len()..];
                prop_assert_eq!(sp.context.len() + remainder.len(), d.turns.len());
                prop_assert_eq!(&sp.context[..], &d.turns[..sp.context.len()]);
                prop_assert_eq!(sp.future_actions.len(), n - k);
                let t = export_stat_targets(&d, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&t.fraction_complete));
                if let Some(p) = prev {
                    prop_assert!(t.remaining_utterances <= p.remaining_utterances);
                    prop_assert!(t.remaining_user_utterances <= p.remaining_user_utterances);
                    prop_assert!(t.remaining_system_utterances <= p.remaining_system_utterances);
                }
                prev = Some(t);
            }
        }
    }
}
