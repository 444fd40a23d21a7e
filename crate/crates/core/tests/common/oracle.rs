//! Naive re-evaluation of every metric straight from the indicator
//! definitions, cell by cell. Shares nothing with the engine beyond the
//! input types: answers become `Option<bool>` (None = invalid) and every
//! score is an unreduced (numerator, denominator) pair.

use quadeval::diagnostics::{failure_profile, sensitivity_scores};
use quadeval::metrics::{classification_scores, consistency_scores, quad_correct, Fraction, QuadOutcome};
use quadeval::model::AnswerLabel;

type Bit = Option<bool>;
type Frac = (u64, u64);

fn bit(label: AnswerLabel) -> Bit {
    match label {
        AnswerLabel::Yes => Some(true),
        AnswerLabel::No => Some(false),
        AnswerLabel::Invalid => None,
    }
}

fn cells(o: &QuadOutcome) -> [Bit; 4] {
    [bit(o.pp), bit(o.pm), bit(o.mp), bit(o.mm)]
}

const Y: Bit = Some(true);
const N: Bit = Some(false);

fn mean(outcomes: &[QuadOutcome], f: impl Fn([Bit; 4]) -> u64) -> Frac {
    let total: u64 = outcomes.iter().map(|o| f(cells(o))).sum();
    (total, outcomes.len() as u64)
}

fn abs_diff(a: Bit, b: Bit) -> u64 {
    match (a, b) {
        (Some(a), Some(b)) => (a as i64 - b as i64).unsigned_abs(),
        _ => 0,
    }
}

pub fn quad(c: [Bit; 4]) -> bool {
    c[0] == Y && c[1] == N && c[2] == N && c[3] == N
}

pub fn pos_omiss(c: [Bit; 4]) -> bool {
    c[0] != Y
}

pub fn pos_swap(c: [Bit; 4]) -> bool {
    c[1] == Y
}

pub fn neg_hall(c: [Bit; 4]) -> bool {
    c[2] == Y || c[3] == Y
}

pub fn me_viol(c: [Bit; 4]) -> bool {
    (c[0] == Y && c[1] == Y) || (c[2] == Y && c[3] == Y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleScores {
    pub quad_acc: Frac,
    pub contr_q_pos: Frac,
    pub reject_q_neg: Frac,
    pub contr_v_pos: Frac,
    pub reject_v_neg: Frac,
    pub video_consistency: Frac,
    pub question_consistency: Frac,
    pub confusion: (u64, u64, u64, u64, u64),
    pub balanced_accuracy: Frac,
    pub mcc: f64,
    pub mcc_score: f64,
    pub failed: u64,
    pub failure: Option<[Frac; 4]>,
    pub vs: Frac,
    pub qs: Frac,
    pub vri: Option<Frac>,
    pub gvrs: Frac,
    pub sve: Frac,
}

pub fn evaluate(outcomes: &[QuadOutcome]) -> OracleScores {
    let n = outcomes.len() as u64;
    let quad_acc = mean(outcomes, |c| quad(c) as u64);
    let contr_q_pos = mean(outcomes, |c| (c[0] == Y && c[2] == N) as u64);
    let reject_q_neg = mean(outcomes, |c| (c[1] == N && c[3] == N) as u64);
    let contr_v_pos = mean(outcomes, |c| (c[0] == Y && c[1] == N) as u64);
    let reject_v_neg = mean(outcomes, |c| (c[2] == N && c[3] == N) as u64);
    // (a/n + b/n) / 2 = (a + b) / 2n
    let video_consistency = (contr_q_pos.0 + reject_q_neg.0, 2 * n);
    let question_consistency = (contr_v_pos.0 + reject_v_neg.0, 2 * n);

    let (mut tp, mut fp, mut tn, mut fn_, mut invalid) = (0, 0, 0, 0, 0);
    for o in outcomes {
        for (i, c) in cells(o).into_iter().enumerate() {
            let gold = i == 0;
            match c {
                None => invalid += 1,
                Some(true) if gold => tp += 1,
                Some(true) => fp += 1,
                Some(false) if gold => fn_ += 1,
                Some(false) => tn += 1,
            }
        }
    }
    let pos = tp + fn_;
    let neg = tn + fp;
    let balanced_accuracy = match (pos > 0, neg > 0) {
        (true, true) => (tp * neg + tn * pos, 2 * pos * neg),
        (true, false) => (tp, pos),
        (false, true) => (tn, neg),
        (false, false) => (0, 1),
    };
    let mcc = if pos == 0 || neg == 0 || tp + fp == 0 || tn + fn_ == 0 {
        0.0
    } else {
        let numer = (tp * tn) as i128 - (fp * fn_) as i128;
        let product = (tp + fp) as u128 * pos as u128 * neg as u128 * (tn + fn_) as u128;
        numer as f64 / (product as f64).sqrt()
    };
    let mcc_score = ((mcc + 1.0) / 2.0).powi(2);

    let failed: Vec<[Bit; 4]> = outcomes.iter().map(cells).filter(|c| !quad(*c)).collect();
    let f = failed.len() as u64;
    let failure = (f > 0).then(|| {
        let rate = |p: fn([Bit; 4]) -> bool| (failed.iter().filter(|c| p(**c)).count() as u64, f);
        [rate(pos_omiss), rate(pos_swap), rate(neg_hall), rate(me_viol)]
    });

    let vs = mean(outcomes, |c| abs_diff(c[0], c[2]));
    let qs = mean(outcomes, |c| abs_diff(c[0], c[1]));
    // VS/(VS+QS) with a shared denominator n
    let vri = (vs.0 + qs.0 > 0).then_some((vs.0, vs.0 + qs.0));
    let gvrs = match vri {
        Some((a, b)) => (2 * a * qs.0, b * n),
        None => (0, 1),
    };
    let sve = mean(outcomes, |c| (abs_diff(c[0], c[2]) == 1 && c[1] == c[3]) as u64);

    OracleScores {
        quad_acc,
        contr_q_pos,
        reject_q_neg,
        contr_v_pos,
        reject_v_neg,
        video_consistency,
        question_consistency,
        confusion: (tp, fp, tn, fn_, invalid),
        balanced_accuracy,
        mcc,
        mcc_score,
        failed: f,
        failure,
        vs,
        qs,
        vri,
        gvrs,
        sve,
    }
}

fn same(name: &str, got: Fraction, want: Frac) -> Result<(), String> {
    if *got.numer() as u128 * want.1 as u128 == want.0 as u128 * *got.denom() as u128 {
        Ok(())
    } else {
        Err(format!("{name}: engine {got} vs oracle {}/{}", want.0, want.1))
    }
}

fn same_opt(name: &str, got: Option<Fraction>, want: Option<Frac>) -> Result<(), String> {
    match (got, want) {
        (Some(g), Some(w)) => same(name, g, w),
        (None, None) => Ok(()),
        _ => Err(format!("{name}: engine {got:?} vs oracle {want:?}")),
    }
}

/// Compares every engine metric against the oracle with zero tolerance.
pub fn check(outcomes: &[QuadOutcome]) -> Result<(), String> {
    let want = evaluate(outcomes);
    let c = consistency_scores(outcomes).map_err(|e| e.to_string())?;
    same("quad_acc", c.quad_acc, want.quad_acc)?;
    same("contr_q_pos", c.contr_q_pos, want.contr_q_pos)?;
    same("reject_q_neg", c.reject_q_neg, want.reject_q_neg)?;
    same("contr_v_pos", c.contr_v_pos, want.contr_v_pos)?;
    same("reject_v_neg", c.reject_v_neg, want.reject_v_neg)?;
    same("video_consistency", c.video_consistency, want.video_consistency)?;
    same("question_consistency", c.question_consistency, want.question_consistency)?;

    let quad_mean = (outcomes.iter().filter(|o| quad_correct(o)).count() as u64, outcomes.len() as u64);
    same("quad_acc as mean of quad_correct", c.quad_acc, quad_mean)?;

    let k = classification_scores(outcomes).map_err(|e| e.to_string())?;
    let confusion = (k.tp, k.fp, k.tn, k.fn_, k.invalid);
    if confusion != want.confusion {
        return Err(format!("confusion: engine {confusion:?} vs oracle {:?}", want.confusion));
    }
    same("balanced_accuracy", k.balanced_accuracy, want.balanced_accuracy)?;
    if k.mcc.to_bits() != want.mcc.to_bits() && !(k.mcc == 0.0 && want.mcc == 0.0) {
        return Err(format!("mcc: engine {} vs oracle {}", k.mcc, want.mcc));
    }
    if k.mcc_score != want.mcc_score {
        return Err(format!("mcc_score: engine {} vs oracle {}", k.mcc_score, want.mcc_score));
    }

    let f = failure_profile(outcomes);
    if f.failed_count != want.failed {
        return Err(format!("failed_count: engine {} vs oracle {}", f.failed_count, want.failed));
    }
    let names = ["pos_omiss", "pos_swap", "neg_hall", "me_viol"];
    let got = [f.pos_omiss, f.pos_swap, f.neg_hall, f.me_viol];
    for (i, name) in names.iter().enumerate() {
        same_opt(name, got[i], want.failure.map(|w| w[i]))?;
    }

    let s = sensitivity_scores(outcomes).map_err(|e| e.to_string())?;
    same("vs", s.vs, want.vs)?;
    same("qs", s.qs, want.qs)?;
    same_opt("vri", s.vri, want.vri)?;
    same("gvrs", s.gvrs, want.gvrs)?;
    same("sve", s.sve, want.sve)?;
    Ok(())
}
