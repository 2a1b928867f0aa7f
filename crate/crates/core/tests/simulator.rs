use multistep_ast::corpus::format_action_sequence;
use multistep_ast::predictors::{ReplayPredictor, ReplayStore};
use multistep_ast::simulator::{simulate_multi_step, simulate_one_step, Approval};
use multistep_ast::{ActionStep, Dialogue, TurnContent};
use proptest::prelude::*;

const NAMES: [&str; 3] = ["A", "B", "C"];

/// A dialogue of 1..=5 actions with 0..=2 utterances before each and a
/// possible farewell, plus one random rollout per split point.
fn case() -> impl Strategy<Value = (Dialogue, Vec<Vec<&'static str>>)> {
    (
        prop::collection::vec((0usize..=2, prop::sample::select(&NAMES[..])), 1..=5),
        0usize..=2,
    )
        .prop_flat_map(|(actions, tail)| {
            let n = actions.len();
            let rollouts = prop::collection::vec(
                prop::collection::vec(prop::sample::select(&NAMES[..]), 0..=4),
                n,
            );
            (Just((actions, tail)), rollouts)
        })
        .prop_map(|((actions, tail), rollouts)| {
            let mut turns = Vec::new();
            for (utts, name) in actions {
                turns.extend((0..utts).map(|i| TurnContent::User(format!("u{i}"))));
                turns.push(TurnContent::Action(ActionStep::bare(name)));
            }
            turns.extend((0..tail).map(|_| TurnContent::System("bye".into())));
            (Dialogue::new("d", "p", turns), rollouts)
        })
}

fn replay(rollouts: &[Vec<&str>]) -> ReplayPredictor {
    let mut store = ReplayStore::default();
    for (k, r) in rollouts.iter().enumerate() {
        let steps: Vec<ActionStep> = r.iter().map(|n| ActionStep::bare(*n)).collect();
        store.insert("d", k, vec![format_action_sequence(&steps)]);
    }
    ReplayPredictor::new(store, 7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn one_step_recount((d, rollouts) in case()) {
        let truth: Vec<&ActionStep> = d.workflow().collect();
        let expected = (0..truth.len())
            .filter(|&k| rollouts[k].first() == Some(&truth[k].name.as_str()))
            .count();
        let r = simulate_one_step(&replay(&rollouts), &d, Approval::Joint).unwrap();
        prop_assert_eq!(r.suggestions, truth.len());
        prop_assert_eq!(r.steps_automated, expected);
        prop_assert!(r.utterances_automated <= r.total_utterances);
    }

    #[test]
    fn multi_step_bounds((d, rollouts) in case()) {
        let p = replay(&rollouts);
        let one = simulate_one_step(&p, &d, Approval::Joint).unwrap();
        let multi = simulate_multi_step(&p, &d, Approval::Joint).unwrap();
        let n = d.action_count();
        prop_assert!(multi.suggestions <= n);
        prop_assert!(multi.suggestions <= one.suggestions);
        prop_assert!(multi.steps_automated <= multi.total_steps);
        prop_assert!(multi.utterances_automated <= multi.total_utterances);
    }

    #[test]
    fn oracle_automates_all_spanned_utterances((d, _) in case()) {
        let p = ReplayPredictor::new(ReplayStore::from_ground_truth(std::slice::from_ref(&d), None), 7);
        let last = *d.action_positions().last().unwrap();
        let trailing = d.turns[last..].iter().filter(|t| t.is_utterance()).count();
        for r in [
            simulate_one_step(&p, &d, Approval::Joint).unwrap(),
            simulate_multi_step(&p, &d, Approval::Joint).unwrap(),
        ] {
            prop_assert_eq!(r.steps_automated, r.total_steps);
            prop_assert_eq!(r.utterances_automated, r.total_utterances - trailing);
        }
    }
}
