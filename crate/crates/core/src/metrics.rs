//! Quadruple correctness, video/question consistency and global
//! classification metrics.
//!
//! Every score here is a function of additive per-quadruple counts
//! ([`Tally`]), so scores are kept as exact rationals and resampling can
//! reuse per-scene tallies instead of re-reading outcomes.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::diagnostics::{self, FailureFlags};
use crate::error::{Error, Result};
use crate::model::{AnswerLabel, Category, Cell, PredictionTable, Quadruple, QuadrupleId};

/// Exact score value.
pub type Fraction = Ratio<u64>;

pub(crate) fn fraction(numer: u64, denom: u64) -> Fraction {
    debug_assert!(denom > 0);
    Ratio::new(numer, denom)
}

pub fn to_f64(value: Fraction) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// The four answers of one quadruple: ŷ⁺⁺, ŷ⁺⁻, ŷ⁻⁺, ŷ⁻⁻.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct QuadOutcome {
    pub id: QuadrupleId,
    pub pp: AnswerLabel,
    pub pm: AnswerLabel,
    pub mp: AnswerLabel,
    pub mm: AnswerLabel,
}

impl QuadOutcome {
    pub fn new(
        id: QuadrupleId,
        pp: AnswerLabel,
        pm: AnswerLabel,
        mp: AnswerLabel,
        mm: AnswerLabel,
    ) -> Self {
        QuadOutcome { id, pp, pm, mp, mm }
    }

    pub fn cell(&self, cell: Cell) -> AnswerLabel {
        match cell {
            Cell::POS_POS => self.pp,
            Cell::POS_NEG => self.pm,
            Cell::NEG_POS => self.mp,
            _ => self.mm,
        }
    }

    pub fn cells(&self) -> [AnswerLabel; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    /// Yes → No on q⁺ across v⁺ → v⁻.
    pub fn contr_q_pos(&self) -> bool {
        self.pp == AnswerLabel::Yes && self.mp == AnswerLabel::No
    }

    /// q⁻ rejected on both videos.
    pub fn reject_q_neg(&self) -> bool {
        self.pm == AnswerLabel::No && self.mm == AnswerLabel::No
    }

    /// q⁺ endorsed and q⁻ rejected on v⁺.
    pub fn contr_v_pos(&self) -> bool {
        self.pp == AnswerLabel::Yes && self.pm == AnswerLabel::No
    }

    /// Both questions rejected on v⁻.
    pub fn reject_v_neg(&self) -> bool {
        self.mp == AnswerLabel::No && self.mm == AnswerLabel::No
    }
}

/// True iff the quadruple reproduces the whole gold pattern (Yes, No, No, No).
/// An `Invalid` cell never matches.
pub fn quad_correct(outcome: &QuadOutcome) -> bool {
    outcome.pp == AnswerLabel::Yes
        && outcome.pm == AnswerLabel::No
        && outcome.mp == AnswerLabel::No
        && outcome.mm == AnswerLabel::No
}

/// Additive sufficient statistics for every metric and diagnostic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Tally {
    pub quadruples: u64,
    pub quad_correct: u64,
    pub contr_q_pos: u64,
    pub reject_q_neg: u64,
    pub contr_v_pos: u64,
    pub reject_v_neg: u64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub invalid: u64,
    pub failed: u64,
    pub pos_omiss: u64,
    pub pos_swap: u64,
    pub neg_hall: u64,
    pub me_viol: u64,
    pub video_flips: u64,
    pub question_flips: u64,
    pub selective_video: u64,
}

impl Tally {
    pub fn of(outcome: &QuadOutcome) -> Tally {
        let mut t = Tally {
            quadruples: 1,
            ..Tally::default()
        };
        let b = u64::from;
        t.quad_correct = b(quad_correct(outcome));
        t.contr_q_pos = b(outcome.contr_q_pos());
        t.reject_q_neg = b(outcome.reject_q_neg());
        t.contr_v_pos = b(outcome.contr_v_pos());
        t.reject_v_neg = b(outcome.reject_v_neg());

        for cell in Cell::ALL {
            let gold_yes = Quadruple::gold(cell) == AnswerLabel::Yes;
            match (outcome.cell(cell), gold_yes) {
                (AnswerLabel::Invalid, _) => t.invalid += 1,
                (AnswerLabel::Yes, true) => t.tp += 1,
                (AnswerLabel::Yes, false) => t.fp += 1,
                (AnswerLabel::No, true) => t.fn_ += 1,
                (AnswerLabel::No, false) => t.tn += 1,
            }
        }

        if t.quad_correct == 0 {
            let flags = FailureFlags::of(outcome);
            t.failed = 1;
            t.pos_omiss = b(flags.pos_omiss);
            t.pos_swap = b(flags.pos_swap);
            t.neg_hall = b(flags.neg_hall);
            t.me_viol = b(flags.me_viol);
        }
        t.video_flips = b(diagnostics::video_flip(outcome));
        t.question_flips = b(diagnostics::question_flip(outcome));
        t.selective_video = b(diagnostics::selective_video_effect(outcome));
        t
    }

    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a QuadOutcome>) -> Tally {
        let mut total = Tally::default();
        for o in outcomes {
            total.add(&Tally::of(o), 1);
        }
        total
    }

    /// Adds `times` copies of `other`.
    pub fn add(&mut self, other: &Tally, times: u64) {
        self.quadruples += other.quadruples * times;
        self.quad_correct += other.quad_correct * times;
        self.contr_q_pos += other.contr_q_pos * times;
        self.reject_q_neg += other.reject_q_neg * times;
        self.contr_v_pos += other.contr_v_pos * times;
        self.reject_v_neg += other.reject_v_neg * times;
        self.tp += other.tp * times;
        self.fp += other.fp * times;
        self.tn += other.tn * times;
        self.fn_ += other.fn_ * times;
        self.invalid += other.invalid * times;
        self.failed += other.failed * times;
        self.pos_omiss += other.pos_omiss * times;
        self.pos_swap += other.pos_swap * times;
        self.neg_hall += other.neg_hall * times;
        self.me_viol += other.me_viol * times;
        self.video_flips += other.video_flips * times;
        self.question_flips += other.question_flips * times;
        self.selective_video += other.selective_video * times;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConsistencyScores {
    pub quad_acc: Fraction,
    pub contr_q_pos: Fraction,
    pub reject_q_neg: Fraction,
    pub contr_v_pos: Fraction,
    pub reject_v_neg: Fraction,
    pub video_consistency: Fraction,
    pub question_consistency: Fraction,
}

impl ConsistencyScores {
    pub fn from_tally(t: &Tally) -> Result<Self> {
        if t.quadruples == 0 {
            return Err(Error::Empty("consistency scores"));
        }
        let n = t.quadruples;
        let half = fraction(1, 2);
        let contr_q_pos = fraction(t.contr_q_pos, n);
        let reject_q_neg = fraction(t.reject_q_neg, n);
        let contr_v_pos = fraction(t.contr_v_pos, n);
        let reject_v_neg = fraction(t.reject_v_neg, n);
        Ok(ConsistencyScores {
            quad_acc: fraction(t.quad_correct, n),
            contr_q_pos,
            reject_q_neg,
            contr_v_pos,
            reject_v_neg,
            video_consistency: (contr_q_pos + reject_q_neg) * half,
            question_consistency: (contr_v_pos + reject_v_neg) * half,
        })
    }
}

/// Per-instance binary classification quality against the gold pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationScores {
    pub balanced_accuracy: Fraction,
    pub mcc: f64,
    pub mcc_score: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub invalid: u64,
}

/// Matthews correlation from confusion counts; 0 when any marginal is empty.
pub fn matthews(tp: u64, fp: u64, tn: u64, fn_: u64) -> f64 {
    let marginals = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if marginals.contains(&0) {
        return 0.0;
    }
    let numer = tp as i128 * tn as i128 - fp as i128 * fn_ as i128;
    let denom: f64 = marginals.iter().map(|&m| m as f64).product();
    (numer as f64 / denom.sqrt()).clamp(-1.0, 1.0)
}

/// ((mcc + 1) / 2)², mapping [-1, 1] onto [0, 1].
pub fn squash_mcc(mcc: f64) -> f64 {
    let half = (mcc + 1.0) / 2.0;
    half * half
}

impl ClassificationScores {
    pub fn from_tally(t: &Tally) -> Result<Self> {
        if t.quadruples == 0 {
            return Err(Error::Empty("classification scores"));
        }
        // Recall is averaged over the classes that still have support once
        // invalid cells are excluded.
        let recalls: Vec<Fraction> = [(t.tp, t.tp + t.fn_), (t.tn, t.tn + t.fp)]
            .into_iter()
            .filter(|&(_, support)| support > 0)
            .map(|(hit, support)| fraction(hit, support))
            .collect();
        let balanced_accuracy = if recalls.is_empty() {
            fraction(0, 1)
        } else {
            recalls.iter().fold(fraction(0, 1), |acc, r| acc + r)
                / Ratio::from_integer(recalls.len() as u64)
        };
        let mcc = matthews(t.tp, t.fp, t.tn, t.fn_);
        Ok(ClassificationScores {
            balanced_accuracy,
            mcc,
            mcc_score: squash_mcc(mcc),
            tp: t.tp,
            fp: t.fp,
            tn: t.tn,
            fn_: t.fn_,
            invalid: t.invalid,
        })
    }
}

pub fn consistency_scores(outcomes: &[QuadOutcome]) -> Result<ConsistencyScores> {
    ConsistencyScores::from_tally(&Tally::from_outcomes(outcomes))
}

pub fn classification_scores(outcomes: &[QuadOutcome]) -> Result<ClassificationScores> {
    ClassificationScores::from_tally(&Tally::from_outcomes(outcomes))
}

/// Scores restricted to each category present in the outcome list.
pub fn per_category(
    outcomes: &[QuadOutcome],
    manifest: &[Quadruple],
) -> Result<BTreeMap<Category, (ConsistencyScores, ClassificationScores)>> {
    let categories: HashMap<&QuadrupleId, Category> =
        manifest.iter().map(|q| (&q.id, q.category)).collect();
    let mut tallies: BTreeMap<Category, Tally> = BTreeMap::new();
    for o in outcomes {
        let category = categories
            .get(&o.id)
            .ok_or_else(|| Error::UnknownQuadruple(o.id.to_string()))?;
        tallies.entry(*category).or_default().add(&Tally::of(o), 1);
    }
    tallies
        .into_iter()
        .map(|(c, t)| {
            Ok((
                c,
                (ConsistencyScores::from_tally(&t)?, ClassificationScores::from_tally(&t)?),
            ))
        })
        .collect()
}

/// Joins a manifest with a prediction table, in manifest order. Fails if any
/// cell is missing.
pub fn outcomes(manifest: &[Quadruple], table: &PredictionTable) -> Result<Vec<QuadOutcome>> {
    let mut missing = 0;
    let mut out = Vec::with_capacity(manifest.len());
    for q in manifest {
        let mut cells = [AnswerLabel::Invalid; 4];
        for (slot, cell) in cells.iter_mut().zip(Cell::ALL) {
            match table.get(&q.id, cell) {
                Some(label) => *slot = label,
                None => missing += 1,
            }
        }
        let [pp, pm, mp, mm] = cells;
        out.push(QuadOutcome::new(q.id.clone(), pp, pm, mp, mm));
    }
    if missing > 0 {
        return Err(Error::Incomplete {
            model_id: table.model_id.clone(),
            missing,
        });
    }
    Ok(out)
}
