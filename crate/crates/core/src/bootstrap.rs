//! Scene-level percentile bootstrap and ranking stability.
//!
//! Resampling draws whole scenes with replacement, so every quadruple of a
//! drawn scene enters the replicate with the scene's multiplicity. Replicate
//! `r` draws its scene indices from a ChaCha stream keyed by `(seed, r)`, so
//! any replicate can be regenerated on its own and replicates run in
//! parallel without changing results.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::diagnostics::{FailureProfile, SensitivityScores};
use crate::error::{Error, Result};
use crate::metrics::{
    outcomes, to_f64, ClassificationScores, ConsistencyScores, QuadOutcome, Tally,
};
use crate::model::{PredictionTable, Quadruple};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 2000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn new(replicates: usize, confidence: f64, seed: u64) -> Result<Self> {
        let config = BootstrapConfig {
            replicates,
            confidence,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::BootstrapConfig("replicates must be >= 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::BootstrapConfig(format!(
                "confidence {} is outside (0, 1)",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Every scalar the engine reports, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    QuadAcc,
    ContrQPos,
    RejectQNeg,
    ContrVPos,
    RejectVNeg,
    VideoConsistency,
    QuestionConsistency,
    BalancedAccuracy,
    Mcc,
    MccScore,
    PosOmiss,
    PosSwap,
    NegHall,
    MeViol,
    Vs,
    Qs,
    Vri,
    Gvrs,
    Sve,
}

impl Metric {
    pub const ALL: [Metric; 19] = [
        Metric::QuadAcc,
        Metric::ContrQPos,
        Metric::RejectQNeg,
        Metric::ContrVPos,
        Metric::RejectVNeg,
        Metric::VideoConsistency,
        Metric::QuestionConsistency,
        Metric::BalancedAccuracy,
        Metric::Mcc,
        Metric::MccScore,
        Metric::PosOmiss,
        Metric::PosSwap,
        Metric::NegHall,
        Metric::MeViol,
        Metric::Vs,
        Metric::Qs,
        Metric::Vri,
        Metric::Gvrs,
        Metric::Sve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::QuadAcc => "quad_acc",
            Metric::ContrQPos => "contr_q_pos",
            Metric::RejectQNeg => "reject_q_neg",
            Metric::ContrVPos => "contr_v_pos",
            Metric::RejectVNeg => "reject_v_neg",
            Metric::VideoConsistency => "video_consistency",
            Metric::QuestionConsistency => "question_consistency",
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::Mcc => "mcc",
            Metric::MccScore => "mcc_score",
            Metric::PosOmiss => "pos_omiss",
            Metric::PosSwap => "pos_swap",
            Metric::NegHall => "neg_hall",
            Metric::MeViol => "me_viol",
            Metric::Vs => "vs",
            Metric::Qs => "qs",
            Metric::Vri => "vri",
            Metric::Gvrs => "gvrs",
            Metric::Sve => "sve",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Whether the metric is a fraction shown as a percentage in tables.
    /// MCC lives in [-1, 1] and GVRS in [0, 2], so both stay raw.
    pub fn is_percentage(self) -> bool {
        !matches!(self, Metric::Mcc | Metric::Gvrs)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// All metric values derived from one tally, as floats.
#[derive(Debug, Clone, Copy)]
pub struct MetricValues {
    consistency: ConsistencyScores,
    classification: ClassificationScores,
    failure: FailureProfile,
    sensitivity: SensitivityScores,
}

impl MetricValues {
    pub fn from_tally(t: &Tally) -> Result<Self> {
        Ok(MetricValues {
            consistency: ConsistencyScores::from_tally(t)?,
            classification: ClassificationScores::from_tally(t)?,
            failure: FailureProfile::from_tally(t),
            sensitivity: SensitivityScores::from_tally(t)?,
        })
    }

    pub fn from_parts(
        consistency: ConsistencyScores,
        classification: ClassificationScores,
        failure: FailureProfile,
        sensitivity: SensitivityScores,
    ) -> Self {
        MetricValues {
            consistency,
            classification,
            failure,
            sensitivity,
        }
    }

    /// `None` when the metric is undefined (null failure rate, null VRI).
    pub fn get(&self, metric: Metric) -> Option<f64> {
        let c = &self.consistency;
        let f = &self.failure;
        let s = &self.sensitivity;
        let exact = match metric {
            Metric::QuadAcc => Some(c.quad_acc),
            Metric::ContrQPos => Some(c.contr_q_pos),
            Metric::RejectQNeg => Some(c.reject_q_neg),
            Metric::ContrVPos => Some(c.contr_v_pos),
            Metric::RejectVNeg => Some(c.reject_v_neg),
            Metric::VideoConsistency => Some(c.video_consistency),
            Metric::QuestionConsistency => Some(c.question_consistency),
            Metric::BalancedAccuracy => Some(self.classification.balanced_accuracy),
            Metric::Mcc => return Some(self.classification.mcc),
            Metric::MccScore => return Some(self.classification.mcc_score),
            Metric::PosOmiss => f.pos_omiss,
            Metric::PosSwap => f.pos_swap,
            Metric::NegHall => f.neg_hall,
            Metric::MeViol => f.me_viol,
            Metric::Vs => Some(s.vs),
            Metric::Qs => Some(s.qs),
            Metric::Vri => s.vri,
            Metric::Gvrs => Some(s.gvrs),
            Metric::Sve => Some(s.sve),
        };
        exact.map(to_f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalEstimate {
    /// Metric on the original data; `None` if undefined there.
    pub point: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    /// Replicates in which the metric was defined.
    pub replicates: usize,
}

/// Scene-grouped tallies, in scene-id order.
#[derive(Debug, Clone)]
pub struct SceneTallies {
    pub scene_ids: Vec<String>,
    pub tallies: Vec<Tally>,
}

impl SceneTallies {
    pub fn new(outcomes: &[QuadOutcome], manifest: &[Quadruple]) -> Result<Self> {
        let known: HashSet<_> = manifest.iter().map(|q| &q.id).collect();
        let mut by_scene: BTreeMap<&str, Tally> = BTreeMap::new();
        for o in outcomes {
            if !known.contains(&o.id) {
                return Err(Error::UnknownQuadruple(o.id.to_string()));
            }
            by_scene
                .entry(o.id.scene_id.as_str())
                .or_default()
                .add(&Tally::of(o), 1);
        }
        if by_scene.is_empty() {
            return Err(Error::Empty("a scene-level bootstrap"));
        }
        let (scene_ids, tallies) = by_scene
            .into_iter()
            .map(|(s, t)| (s.to_string(), t))
            .unzip();
        Ok(SceneTallies { scene_ids, tallies })
    }

    pub fn len(&self) -> usize {
        self.tallies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tallies.is_empty()
    }

    pub fn total(&self) -> Tally {
        let mut t = Tally::default();
        for s in &self.tallies {
            t.add(s, 1);
        }
        t
    }

    /// Tally of a resample given as scene indices (with repeats).
    pub fn resampled(&self, indices: &[usize]) -> Tally {
        let mut counts = vec![0u64; self.tallies.len()];
        for &i in indices {
            counts[i] += 1;
        }
        let mut t = Tally::default();
        for (scene, &times) in self.tallies.iter().zip(&counts) {
            if times > 0 {
                t.add(scene, times);
            }
        }
        t
    }
}

/// Draws scene indices for a replicate.
#[derive(Debug, Clone, Copy)]
pub struct Resampler {
    seed: u64,
    scenes: usize,
}

impl Resampler {
    pub fn new(seed: u64, scenes: usize) -> Self {
        Resampler { seed, scenes }
    }

    pub fn indices(&self, replicate: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        (0..self.scenes)
            .map(|_| rng.gen_range(0..self.scenes))
            .collect()
    }
}

/// Linear-interpolation empirical quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-replicate tallies, in replicate order.
pub fn replicate_tallies(scenes: &SceneTallies, config: &BootstrapConfig) -> Vec<Tally> {
    let resampler = Resampler::new(config.seed, scenes.len());
    (0..config.replicates)
        .into_par_iter()
        .map(|r| scenes.resampled(&resampler.indices(r)))
        .collect()
}

/// Percentile intervals for every metric. Metrics undefined in a replicate
/// skip that replicate; metrics undefined in every replicate are omitted.
pub fn bootstrap_metrics(
    outcomes: &[QuadOutcome],
    manifest: &[Quadruple],
    config: &BootstrapConfig,
) -> Result<BTreeMap<Metric, IntervalEstimate>> {
    config.validate()?;
    let scenes = SceneTallies::new(outcomes, manifest)?;
    let original = MetricValues::from_tally(&scenes.total())?;
    let replicates = replicate_tallies(&scenes, config)
        .iter()
        .map(MetricValues::from_tally)
        .collect::<Result<Vec<_>>>()?;

    let tail = (1.0 - config.confidence) / 2.0;
    let mut out = BTreeMap::new();
    for metric in Metric::ALL {
        let mut values: Vec<f64> = replicates.iter().filter_map(|v| v.get(metric)).collect();
        if values.is_empty() {
            continue;
        }
        values.sort_by(f64::total_cmp);
        out.insert(
            metric,
            IntervalEstimate {
                point: original.get(metric),
                lower: quantile(&values, tail),
                upper: quantile(&values, 1.0 - tail),
                replicates: values.len(),
            },
        );
    }
    Ok(out)
}

/// Fraction of replicates in which model A scores above model B on QuadAcc,
/// for every ordered pair of distinct models. Ties count one half.
pub fn ranking_stability(
    tables: &[PredictionTable],
    manifest: &[Quadruple],
    config: &BootstrapConfig,
) -> Result<BTreeMap<(String, String), f64>> {
    ranking_stability_observed(tables, manifest, config, Metric::QuadAcc, |_, _, _| {})
}

/// [`ranking_stability`] on any metric, calling `observe(replicate,
/// model_id, indices)` with the scene indices applied to each model. Every
/// model sees the same index vector within a replicate.
pub fn ranking_stability_observed(
    tables: &[PredictionTable],
    manifest: &[Quadruple],
    config: &BootstrapConfig,
    metric: Metric,
    mut observe: impl FnMut(usize, &str, &[usize]),
) -> Result<BTreeMap<(String, String), f64>> {
    config.validate()?;
    if tables.len() < 2 {
        return Err(Error::Invalid(
            "ranking stability needs at least two models".into(),
        ));
    }
    let per_model = tables
        .iter()
        .map(|t| SceneTallies::new(&outcomes(manifest, t)?, manifest))
        .collect::<Result<Vec<_>>>()?;
    // all tables are complete over the same manifest, so scene order agrees
    let resampler = Resampler::new(config.seed, per_model[0].len());

    let n = tables.len();
    let mut wins = vec![vec![0.0f64; n]; n];
    let mut counted = vec![vec![0usize; n]; n];
    for r in 0..config.replicates {
        let indices = resampler.indices(r);
        let values = tables
            .iter()
            .zip(&per_model)
            .map(|(table, scenes)| {
                observe(r, &table.model_id, &indices);
                Ok(MetricValues::from_tally(&scenes.resampled(&indices))?.get(metric))
            })
            .collect::<Result<Vec<_>>>()?;
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                if let (Some(va), Some(vb)) = (values[a], values[b]) {
                    counted[a][b] += 1;
                    wins[a][b] += if va > vb {
                        1.0
                    } else if va == vb {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && counted[a][b] > 0 {
                out.insert(
                    (tables[a].model_id.clone(), tables[b].model_id.clone()),
                    wins[a][b] / counted[a][b] as f64,
                );
            }
        }
    }
    Ok(out)
}
