//! Failure-mode decomposition and vision-language sensitivity indices.

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{fraction, Fraction, QuadOutcome, Tally};
use crate::model::AnswerLabel::{self, Yes};

/// Which failure modes a single quadruple exhibits. Only meaningful for
/// failed quadruples; modes are not mutually exclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FailureFlags {
    pub pos_omiss: bool,
    pub pos_swap: bool,
    pub neg_hall: bool,
    pub me_viol: bool,
}

impl FailureFlags {
    /// `Invalid` never counts as a Yes. Positive omission tests ŷ⁺⁺ ≠ Yes, so
    /// an invalid ŷ⁺⁺ is an omission.
    pub fn of(o: &QuadOutcome) -> Self {
        FailureFlags {
            pos_omiss: o.pp != Yes,
            pos_swap: o.pm == Yes,
            neg_hall: o.mp == Yes || o.mm == Yes,
            me_viol: (o.pp == Yes && o.pm == Yes) || (o.mp == Yes && o.mm == Yes),
        }
    }
}

fn differs(a: AnswerLabel, b: AnswerLabel) -> bool {
    a.is_concrete() && b.is_concrete() && a != b
}

/// |ŷ⁺⁺ − ŷ⁻⁺| with invalid comparisons contributing 0.
pub fn video_flip(o: &QuadOutcome) -> bool {
    differs(o.pp, o.mp)
}

/// |ŷ⁺⁺ − ŷ⁺⁻| with invalid comparisons contributing 0.
pub fn question_flip(o: &QuadOutcome) -> bool {
    differs(o.pp, o.pm)
}

/// The video flips the answer to q⁺ while q⁻ answers stay put. Two invalid
/// q⁻ answers count as unchanged.
pub fn selective_video_effect(o: &QuadOutcome) -> bool {
    video_flip(o) && o.pm == o.mm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FailureProfile {
    pub failed_count: u64,
    pub pos_omiss: Option<Fraction>,
    pub pos_swap: Option<Fraction>,
    pub neg_hall: Option<Fraction>,
    pub me_viol: Option<Fraction>,
}

impl FailureProfile {
    pub fn from_tally(t: &Tally) -> Self {
        let rate = |count: u64| (t.failed > 0).then(|| fraction(count, t.failed));
        FailureProfile {
            failed_count: t.failed,
            pos_omiss: rate(t.pos_omiss),
            pos_swap: rate(t.pos_swap),
            neg_hall: rate(t.neg_hall),
            me_viol: rate(t.me_viol),
        }
    }

    pub fn rates(&self) -> [(&'static str, Option<Fraction>); 4] {
        [
            ("pos_omiss", self.pos_omiss),
            ("pos_swap", self.pos_swap),
            ("neg_hall", self.neg_hall),
            ("me_viol", self.me_viol),
        ]
    }

    /// The four rates rescaled to sum to 1. `None` when there are no
    /// failures or no failed quadruple matches any mode.
    pub fn normalized_shares(&self) -> Option<[Fraction; 4]> {
        let rates = [self.pos_omiss?, self.pos_swap?, self.neg_hall?, self.me_viol?];
        let total: Fraction = rates.iter().sum();
        if total == fraction(0, 1) {
            return None;
        }
        Some(rates.map(|r| r / total))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SensitivityScores {
    pub vs: Fraction,
    pub qs: Fraction,
    pub vri: Option<Fraction>,
    pub gvrs: Fraction,
    pub sve: Fraction,
}

impl SensitivityScores {
    pub fn from_tally(t: &Tally) -> Result<Self> {
        if t.quadruples == 0 {
            return Err(Error::Empty("sensitivity scores"));
        }
        let n = t.quadruples;
        let vs = fraction(t.video_flips, n);
        let qs = fraction(t.question_flips, n);
        let vri = (t.video_flips + t.question_flips > 0).then(|| vs / (vs + qs));
        let gvrs = match vri {
            Some(vri) => Ratio::from_integer(2) * vri * qs,
            None => fraction(0, 1),
        };
        Ok(SensitivityScores {
            vs,
            qs,
            vri,
            gvrs,
            sve: fraction(t.selective_video, n),
        })
    }
}

pub fn failure_profile(outcomes: &[QuadOutcome]) -> FailureProfile {
    FailureProfile::from_tally(&Tally::from_outcomes(outcomes))
}

pub fn sensitivity_scores(outcomes: &[QuadOutcome]) -> Result<SensitivityScores> {
    SensitivityScores::from_tally(&Tally::from_outcomes(outcomes))
}
