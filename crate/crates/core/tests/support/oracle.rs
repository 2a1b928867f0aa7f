//! Slow, literal reference implementations of the sequence metrics.
//! Shared by the core property tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeSet;

use multistep_ast::ActionStep;

pub const VIEWS: [&str; 3] = ["action", "value", "joint"];

pub fn render(step: &ActionStep, view: &str) -> String {
    let values = format!("[{}]", step.values.join(", "));
    match view {
        "action" => step.name.clone(),
        "value" => values,
        _ if step.values.is_empty() => step.name.clone(),
        _ => format!("{} {}", step.name, values),
    }
}

fn strings(steps: &[ActionStep], view: &str) -> Vec<String> {
    steps.iter().map(|s| render(s, view)).collect()
}

pub fn em(pred: &[ActionStep], gt: &[ActionStep], view: &str) -> f64 {
    let (p, g) = (strings(pred, view), strings(gt, view));
    if p.len() == g.len() && (0..p.len()).all(|i| p[i] == g[i]) {
        1.0
    } else {
        0.0
    }
}

pub fn ce(pred: &[ActionStep], gt: &[ActionStep], view: &str) -> f64 {
    let (p, g) = (strings(pred, view), strings(gt, view));
    if g.is_empty() {
        return if p.is_empty() { 1.0 } else { 0.0 };
    }
    let mut hits = 0;
    for k in 1..=g.len() {
        if p.len() >= k && p[..k] == g[..k] {
            hits += 1;
        }
    }
    hits as f64 / g.len() as f64
}

pub fn f1(pred: &[ActionStep], gt: &[ActionStep], view: &str) -> f64 {
    let p: BTreeSet<String> = strings(pred, view).into_iter().collect();
    let g: BTreeSet<String> = strings(gt, view).into_iter().collect();
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let tp = p.iter().filter(|x| g.contains(*x)).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let (prec, rec) = (tp / p.len() as f64, tp / g.len() as f64);
    2.0 * prec * rec / (prec + rec)
}

pub fn tokens(steps: &[ActionStep], view: &str) -> Vec<String> {
    let mut text = strings(steps, view).join("; ");
    for c in [";", "[", "]", ","] {
        text = text.replace(c, &format!(" {c} "));
    }
    text.split_whitespace().map(String::from).collect()
}

fn count(grams: &[Vec<String>], g: &[String]) -> usize {
    grams.iter().filter(|x| x.as_slice() == g).count()
}

pub fn bleu(pred: &[ActionStep], gt: &[ActionStep], view: &str) -> f64 {
    let (h, r) = (tokens(pred, view), tokens(gt, view));
    if h.is_empty() && r.is_empty() {
        return 100.0;
    }
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut product = 1.0f64;
    for n in 1..=4usize {
        let hg: Vec<Vec<String>> = if h.len() >= n {
            (0..=h.len() - n).map(|i| h[i..i + n].to_vec()).collect()
        } else {
            vec![]
        };
        let rg: Vec<Vec<String>> = if r.len() >= n {
            (0..=r.len() - n).map(|i| r[i..i + n].to_vec()).collect()
        } else {
            vec![]
        };
        let mut seen: Vec<&Vec<String>> = Vec::new();
        let mut matched = 0;
        for g in &hg {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            matched += count(&hg, g).min(count(&rg, g));
        }
        let p = if matched > 0 {
            matched as f64 / hg.len() as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (hg.len() as f64 + 1.0)
        };
        product *= p;
    }
    let bp = if h.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / h.len() as f64).exp()
    };
    100.0 * bp * product.powf(0.25)
}

/// NLL over an explicit edge list, scanning it for every lookup.
pub fn nll(root: &str, edges: &[(String, String, u64)], gt: &[ActionStep]) -> f64 {
    let mut prev = root.to_string();
    let mut total = 0.0;
    for step in gt {
        let out: u64 = edges.iter().filter(|e| e.0 == prev).map(|e| e.2).sum();
        let hit: u64 = edges
            .iter()
            .filter(|e| e.0 == prev && e.1 == step.name)
            .map(|e| e.2)
            .sum();
        let p = if hit > 0 {
            hit as f64 / out as f64
        } else {
            1e-30
        };
        total += -p.ln();
        prev = step.name.clone();
    }
    total
}
