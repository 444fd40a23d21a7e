#![allow(dead_code)]

pub mod oracle;

use quadeval::metrics::QuadOutcome;
use quadeval::model::{AnswerLabel, Category, Cell, PredictionTable, Quadruple, QuadrupleId};
use rand::Rng;

/// `scenes` scenes with `pairs` question pairs each, categories cycling.
pub fn manifest(scenes: usize, pairs: usize) -> Vec<Quadruple> {
    let mut out = Vec::with_capacity(scenes * pairs);
    for s in 0..scenes {
        for k in 0..pairs {
            let n = out.len();
            out.push(Quadruple {
                id: QuadrupleId::new(format!("scene_{s:04}"), k as u64),
                category: Category::ALL[n % 6],
                q_pos_text: format!("Did the vehicle in scene {s} yield (pair {k})?"),
                q_neg_text: format!("Did the vehicle in scene {s} run the light (pair {k})?"),
                v_pos_ref: format!("videos/{s:04}_pos.mp4"),
                v_neg_ref: format!("videos/{s:04}_neg.mp4"),
            });
        }
    }
    out
}

/// Manifest with an uneven number of pairs per scene summing to `pairs`.
pub fn uneven_manifest(scenes: usize, pairs: usize) -> Vec<Quadruple> {
    assert!(pairs >= scenes);
    let mut out = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let s = if i < scenes { i } else { (i * 7919) % scenes };
        let k = out.iter().filter(|q: &&Quadruple| q.id.scene_id == format!("scene_{s:04}")).count();
        out.push(Quadruple {
            id: QuadrupleId::new(format!("scene_{s:04}"), k as u64),
            category: Category::ALL[i % 6],
            q_pos_text: format!("q+ {s}/{k}"),
            q_neg_text: format!("q- {s}/{k}"),
            v_pos_ref: format!("{s}_pos"),
            v_neg_ref: format!("{s}_neg"),
        });
    }
    out
}

pub fn table(model_id: &str, manifest: &[Quadruple], cells: impl Fn(usize, &Quadruple) -> [AnswerLabel; 4]) -> PredictionTable {
    let mut t = PredictionTable::new(model_id);
    for (i, q) in manifest.iter().enumerate() {
        for (cell, label) in Cell::ALL.into_iter().zip(cells(i, q)) {
            t.insert(q.id.clone(), cell, label);
        }
    }
    t
}

pub fn outcomes(manifest: &[Quadruple], cells: impl Fn(usize) -> [AnswerLabel; 4]) -> Vec<QuadOutcome> {
    manifest
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let [a, b, c, d] = cells(i);
            QuadOutcome::new(q.id.clone(), a, b, c, d)
        })
        .collect()
}

pub fn random_label(rng: &mut impl Rng, invalid_rate: f64) -> AnswerLabel {
    if rng.gen_bool(invalid_rate) {
        AnswerLabel::Invalid
    } else if rng.gen_bool(0.5) {
        AnswerLabel::Yes
    } else {
        AnswerLabel::No
    }
}

pub fn random_outcomes(rng: &mut impl Rng, max: usize) -> Vec<QuadOutcome> {
    let n = rng.gen_range(1..=max);
    let invalid_rate = if rng.gen_bool(0.5) { 0.0 } else { 0.15 };
    (0..n)
        .map(|i| {
            QuadOutcome::new(
                QuadrupleId::new(format!("s{}", i / 3), (i % 3) as u64),
                random_label(rng, invalid_rate),
                random_label(rng, invalid_rate),
                random_label(rng, invalid_rate),
                random_label(rng, invalid_rate),
            )
        })
        .collect()
}

pub const PERFECT: [AnswerLabel; 4] = [AnswerLabel::Yes, AnswerLabel::No, AnswerLabel::No, AnswerLabel::No];
pub const ALWAYS_NO: [AnswerLabel; 4] = [AnswerLabel::No; 4];
pub const ALWAYS_YES: [AnswerLabel; 4] = [AnswerLabel::Yes; 4];
