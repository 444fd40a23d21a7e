//! Metric reports, their canonical JSON/CSV renderings, and plot-ready
//! tables.
//!
//! Rendering is byte-deterministic: keys are emitted in a fixed order,
//! fractions carry four decimals and percentages two.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bootstrap::{bootstrap_metrics, BootstrapConfig, IntervalEstimate, Metric, MetricValues};
use crate::diagnostics::{FailureProfile, SensitivityScores};
use crate::error::{Error, Result};
use crate::ingest::write_manifest;
use crate::metrics::{
    outcomes, to_f64, ClassificationScores, ConsistencyScores, Fraction, QuadOutcome, Tally,
};
use crate::model::{Category, PredictionTable, Quadruple};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub manifest_sha256: String,
    pub scenes: usize,
    pub quadruples: usize,
    pub bootstrap: Option<BootstrapConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryScores {
    pub quadruples: u64,
    pub consistency: ConsistencyScores,
    pub classification: ClassificationScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub model_id: String,
    pub consistency: ConsistencyScores,
    pub classification: ClassificationScores,
    pub failure: FailureProfile,
    pub sensitivity: SensitivityScores,
    pub per_category: BTreeMap<Category, CategoryScores>,
    pub intervals: Option<BTreeMap<Metric, IntervalEstimate>>,
    pub provenance: Provenance,
}

impl MetricReport {
    /// Point value of any metric, `None` when undefined.
    pub fn value(&self, metric: Metric) -> Option<f64> {
        MetricValues::from_parts(
            self.consistency,
            self.classification,
            self.failure,
            self.sensitivity,
        )
        .get(metric)
    }
}

/// SHA-256 over the manifest serialized in id order, so the digest does not
/// depend on record order or JSON whitespace in the source file.
pub fn manifest_digest(manifest: &[Quadruple]) -> String {
    let mut sorted: Vec<Quadruple> = manifest.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    hex::encode(Sha256::digest(write_manifest(&sorted).as_bytes()))
}

/// Builds the report for one model from its outcomes.
pub fn build_report(
    model_id: &str,
    manifest: &[Quadruple],
    outcomes: &[QuadOutcome],
    bootstrap: Option<&BootstrapConfig>,
) -> Result<MetricReport> {
    let total = Tally::from_outcomes(outcomes);
    let categories: BTreeMap<_, _> = manifest.iter().map(|q| (&q.id, q.category)).collect();
    let mut by_category: BTreeMap<Category, Tally> = BTreeMap::new();
    for o in outcomes {
        let c = categories
            .get(&o.id)
            .ok_or_else(|| Error::UnknownQuadruple(o.id.to_string()))?;
        by_category.entry(*c).or_default().add(&Tally::of(o), 1);
    }
    let per_category = by_category
        .into_iter()
        .map(|(c, t)| {
            Ok((
                c,
                CategoryScores {
                    quadruples: t.quadruples,
                    consistency: ConsistencyScores::from_tally(&t)?,
                    classification: ClassificationScores::from_tally(&t)?,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let intervals = bootstrap
        .map(|config| bootstrap_metrics(outcomes, manifest, config))
        .transpose()?;
    let scenes: std::collections::BTreeSet<_> =
        manifest.iter().map(|q| q.id.scene_id.as_str()).collect();

    Ok(MetricReport {
        model_id: model_id.to_string(),
        consistency: ConsistencyScores::from_tally(&total)?,
        classification: ClassificationScores::from_tally(&total)?,
        failure: FailureProfile::from_tally(&total),
        sensitivity: SensitivityScores::from_tally(&total)?,
        per_category,
        intervals,
        provenance: Provenance {
            manifest_sha256: manifest_digest(manifest),
            scenes: scenes.len(),
            quadruples: manifest.len(),
            bootstrap: bootstrap.copied(),
        },
    })
}

/// One report per table, ordered by model id. Tables must be complete.
pub fn run_eval(
    manifest: &[Quadruple],
    tables: &[PredictionTable],
    bootstrap: Option<&BootstrapConfig>,
) -> Result<Vec<MetricReport>> {
    let mut reports = tables
        .par_iter()
        .map(|t| build_report(&t.model_id, manifest, &outcomes(manifest, t)?, bootstrap))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    Ok(reports)
}

pub fn format_fraction(value: f64) -> String {
    format!("{value:.4}")
}

/// A fraction as a percentage with two decimals: 0.2585 → "25.85".
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

/// "point [lower, upper]" in percent, the layout used by result tables.
pub fn format_percent_ci(point: f64, lower: f64, upper: f64) -> String {
    format!(
        "{} [{}, {}]",
        format_percent(point),
        format_percent(lower),
        format_percent(upper)
    )
}

fn format_metric(metric: Metric, value: f64) -> String {
    if metric.is_percentage() {
        format_percent(value)
    } else {
        format_fraction(value)
    }
}

/// Table cell for a metric: the value, with its interval when available.
pub fn table_cell(metric: Metric, point: Option<f64>, interval: Option<&IntervalEstimate>) -> String {
    let Some(point) = point else {
        return "n/a".to_string();
    };
    match interval {
        Some(i) => format!(
            "{} [{}, {}]",
            format_metric(metric, point),
            format_metric(metric, i.lower),
            format_metric(metric, i.upper)
        ),
        None => format_metric(metric, point),
    }
}

/// Minimal JSON tree with fixed-format numbers.
enum Node {
    Obj(Vec<(String, Node)>),
    Num(String),
    Int(u64),
    Str(String),
    Null,
}

impl Node {
    fn frac(v: Fraction) -> Node {
        Node::Num(format_fraction(to_f64(v)))
    }

    fn float(v: f64) -> Node {
        Node::Num(format_fraction(v))
    }

    fn opt(v: Option<Fraction>) -> Node {
        v.map(Node::frac).unwrap_or(Node::Null)
    }

    fn obj<const N: usize>(entries: [(&str, Node); N]) -> Node {
        Node::Obj(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Node::Null => out.push_str("null"),
            Node::Num(s) => out.push_str(s),
            Node::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Node::Str(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
            Node::Obj(entries) if entries.is_empty() => out.push_str("{}"),
            Node::Obj(entries) => {
                out.push_str("{\n");
                for (i, (key, value)) in entries.iter().enumerate() {
                    out.push_str(&"  ".repeat(indent + 1));
                    out.push_str(&serde_json::to_string(key).expect("key serializes"));
                    out.push_str(": ");
                    value.write(out, indent + 1);
                    if i + 1 < entries.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                out.push_str(&"  ".repeat(indent));
                out.push('}');
            }
        }
    }
}

fn consistency_node(c: &ConsistencyScores) -> Vec<(String, Node)> {
    [
        ("quad_acc", c.quad_acc),
        ("contr_q_pos", c.contr_q_pos),
        ("reject_q_neg", c.reject_q_neg),
        ("contr_v_pos", c.contr_v_pos),
        ("reject_v_neg", c.reject_v_neg),
        ("video_consistency", c.video_consistency),
        ("question_consistency", c.question_consistency),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), Node::frac(v)))
    .collect()
}

fn classification_node(c: &ClassificationScores) -> Vec<(String, Node)> {
    vec![
        ("balanced_accuracy".into(), Node::frac(c.balanced_accuracy)),
        ("mcc".into(), Node::float(c.mcc)),
        ("mcc_score".into(), Node::float(c.mcc_score)),
        ("tp".into(), Node::Int(c.tp)),
        ("fp".into(), Node::Int(c.fp)),
        ("tn".into(), Node::Int(c.tn)),
        ("fn".into(), Node::Int(c.fn_)),
        ("invalid".into(), Node::Int(c.invalid)),
    ]
}

/// Canonical JSON rendering of a report.
pub fn render_report(report: &MetricReport) -> String {
    let p = &report.provenance;
    let provenance = Node::obj([
        ("manifest_sha256", Node::Str(p.manifest_sha256.clone())),
        ("scenes", Node::Int(p.scenes as u64)),
        ("quadruples", Node::Int(p.quadruples as u64)),
        ("instances", Node::Int(4 * p.quadruples as u64)),
        (
            "bootstrap",
            match &p.bootstrap {
                Some(b) => Node::obj([
                    ("replicates", Node::Int(b.replicates as u64)),
                    ("confidence", Node::float(b.confidence)),
                    ("seed", Node::Int(b.seed)),
                    ("method", Node::Str("scene-level percentile".into())),
                ]),
                None => Node::Null,
            },
        ),
    ]);

    let f = &report.failure;
    let normalized = match f.normalized_shares() {
        Some(shares) => Node::Obj(
            f.rates()
                .iter()
                .zip(shares)
                .map(|((name, _), share)| (name.to_string(), Node::frac(share)))
                .collect(),
        ),
        None => Node::Null,
    };
    let mut failure = vec![("failed_count".to_string(), Node::Int(f.failed_count))];
    failure.extend(f.rates().iter().map(|(k, v)| (k.to_string(), Node::opt(*v))));
    failure.push(("normalized".into(), normalized));

    let s = &report.sensitivity;
    let sensitivity = Node::obj([
        ("vs", Node::frac(s.vs)),
        ("qs", Node::frac(s.qs)),
        ("vri", Node::opt(s.vri)),
        ("gvrs", Node::frac(s.gvrs)),
        ("sve", Node::frac(s.sve)),
    ]);

    let per_category = Node::Obj(
        report
            .per_category
            .iter()
            .map(|(c, scores)| {
                let mut entries = vec![("quadruples".to_string(), Node::Int(scores.quadruples))];
                entries.extend(consistency_node(&scores.consistency));
                entries.extend(classification_node(&scores.classification));
                (c.as_str().to_string(), Node::Obj(entries))
            })
            .collect(),
    );

    let intervals = match &report.intervals {
        Some(map) => Node::Obj(
            map.iter()
                .map(|(m, i)| {
                    (
                        m.name().to_string(),
                        Node::obj([
                            ("point", i.point.map(Node::float).unwrap_or(Node::Null)),
                            ("lower", Node::float(i.lower)),
                            ("upper", Node::float(i.upper)),
                            ("replicates", Node::Int(i.replicates as u64)),
                        ]),
                    )
                })
                .collect(),
        ),
        None => Node::Null,
    };

    let table = Node::Obj(
        Metric::ALL
            .iter()
            .map(|&m| {
                let interval = report.intervals.as_ref().and_then(|i| i.get(&m));
                (m.name().to_string(), Node::Str(table_cell(m, report.value(m), interval)))
            })
            .collect(),
    );

    let root = Node::obj([
        ("model_id", Node::Str(report.model_id.clone())),
        ("provenance", provenance),
        ("consistency", Node::Obj(consistency_node(&report.consistency))),
        ("classification", Node::Obj(classification_node(&report.classification))),
        ("failure", Node::Obj(failure)),
        ("sensitivity", sensitivity),
        ("per_category", per_category),
        ("intervals", intervals),
        ("table", table),
    ]);
    let mut out = String::new();
    root.write(&mut out, 0);
    out.push('\n');
    out
}

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>, header: &[&str]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Invalid(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Flat CSV export: one row per (scope, metric), scope being `overall` or a
/// category name.
pub fn render_report_csv(report: &MetricReport) -> Result<String> {
    let mut rows = Vec::new();
    let blank = String::new;
    for m in Metric::ALL {
        let interval = report.intervals.as_ref().and_then(|i| i.get(&m));
        rows.push(vec![
            report.model_id.clone(),
            "overall".into(),
            m.name().into(),
            report.value(m).map(format_fraction).unwrap_or_else(blank),
            interval.map(|i| format_fraction(i.lower)).unwrap_or_else(blank),
            interval.map(|i| format_fraction(i.upper)).unwrap_or_else(blank),
        ]);
    }
    for (c, scores) in &report.per_category {
        let cons = consistency_node(&scores.consistency);
        let class = classification_node(&scores.classification);
        for (name, node) in cons.iter().chain(class.iter()) {
            let value = match node {
                Node::Num(s) => s.clone(),
                Node::Int(i) => i.to_string(),
                _ => String::new(),
            };
            rows.push(vec![
                report.model_id.clone(),
                c.as_str().into(),
                name.clone(),
                value,
                String::new(),
                String::new(),
            ]);
        }
    }
    csv_string(rows, &["model_id", "scope", "metric", "value", "lower", "upper"])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Radar,
    FailureComposition,
    AlphaSweep,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radar" => Ok(PlotKind::Radar),
            "failure-composition" => Ok(PlotKind::FailureComposition),
            "alpha-sweep" => Ok(PlotKind::AlphaSweep),
            other => Err(Error::Invalid(format!("unknown plot kind `{other}`"))),
        }
    }
}

/// Per-category QuadAcc, one row per (model, category).
pub fn radar_rows(reports: &[MetricReport]) -> Result<String> {
    let rows = reports.iter().flat_map(|r| {
        r.per_category.iter().map(|(c, s)| {
            vec![
                r.model_id.clone(),
                c.as_str().to_string(),
                format_fraction(to_f64(s.consistency.quad_acc)),
            ]
        })
    });
    csv_string(rows, &["model", "category", "quad_acc"])
}

/// Raw failure rates and their sum-normalized shares.
pub fn failure_composition_rows(reports: &[MetricReport]) -> Result<String> {
    let rows = reports.iter().flat_map(|r| {
        let shares = r.failure.normalized_shares();
        r.failure
            .rates()
            .into_iter()
            .enumerate()
            .map(move |(i, (mode, rate))| {
                vec![
                    r.model_id.clone(),
                    mode.to_string(),
                    rate.map(|v| format_fraction(to_f64(v))).unwrap_or_default(),
                    shares
                        .map(|s| format_fraction(to_f64(s[i])))
                        .unwrap_or_default(),
                ]
            })
    });
    csv_string(rows, &["model", "mode", "raw_rate", "normalized_share"])
}

/// Pairwise ranking stability: share of replicates where `model_a` beats `model_b`.
pub fn ranking_rows(ranking: &BTreeMap<(String, String), f64>) -> Result<String> {
    let rows = ranking
        .iter()
        .map(|((a, b), frac)| vec![a.clone(), b.clone(), format_fraction(*frac)]);
    csv_string(rows, &["model_a", "model_b", "fraction_a_above_b"])
}

pub const ALPHA_SWEEP_METRICS: [Metric; 4] = [
    Metric::VideoConsistency,
    Metric::QuestionConsistency,
    Metric::BalancedAccuracy,
    Metric::QuadAcc,
];

/// Metrics of replayed decode tables across fusion strengths.
pub fn alpha_sweep_rows(manifest: &[Quadruple], tables: &[(f64, PredictionTable)]) -> Result<String> {
    let mut rows = Vec::new();
    for (alpha, table) in tables {
        let tally = Tally::from_outcomes(&outcomes(manifest, table)?);
        let values = MetricValues::from_tally(&tally)?;
        for m in ALPHA_SWEEP_METRICS {
            rows.push(vec![
                alpha.to_string(),
                m.name().to_string(),
                values.get(m).map(format_fraction).unwrap_or_default(),
            ]);
        }
    }
    csv_string(rows, &["alpha", "metric", "value"])
}
