//! Small-alphabet generators that make collisions likely.
#![allow(dead_code)]

use std::collections::BTreeMap;

use multistep_ast::ActionStep;
use proptest::prelude::*;

pub const NAMES: [&str; 4] = ["A", "B", "C", "D"];
pub const NODES: [&str; 5] = ["START", "A", "B", "C", "D"];

pub fn step() -> impl Strategy<Value = ActionStep> {
    (
        prop::sample::select(&NAMES[..]),
        prop::collection::vec(prop::sample::select(&["x", "y", "z w"][..]), 0..=2),
    )
        .prop_map(|(n, vs)| ActionStep::new(n, vs).unwrap())
}

pub fn seq() -> impl Strategy<Value = Vec<ActionStep>> {
    prop::collection::vec(step(), 0..=5)
}

/// Distinct `(from, to)` pairs over [`NODES`] with positive counts.
pub fn edges() -> impl Strategy<Value = Vec<(String, String, u64)>> {
    prop::collection::vec(
        (
            prop::sample::select(&NODES[..]),
            prop::sample::select(&NAMES[..]),
            1u64..=4,
        ),
        0..=12,
    )
    .prop_map(|raw| {
        let mut m = BTreeMap::new();
        for (f, t, c) in raw {
            m.insert((f.to_string(), t.to_string()), c);
        }
        m.into_iter().map(|((f, t), c)| (f, t, c)).collect()
    })
}
