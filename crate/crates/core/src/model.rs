//! Benchmark domain types and structural validation.
//!
//! A benchmark is a manifest of contrastive quadruples. Each quadruple binds a
//! positive and a counterfactual video of one scene to a mutually exclusive
//! question pair, giving four cells whose gold answers are always
//! (Yes, No, No, No).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Question category of a quadruple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Event,
    KeyEntity,
    Spatial,
    SpatialTemporal,
    Causal,
    Counterfactual,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Event,
        Category::KeyEntity,
        Category::Spatial,
        Category::SpatialTemporal,
        Category::Causal,
        Category::Counterfactual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Event => "event",
            Category::KeyEntity => "key_entity",
            Category::Spatial => "spatial",
            Category::SpatialTemporal => "spatial_temporal",
            Category::Causal => "causal",
            Category::Counterfactual => "counterfactual",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown category `{s}`")))
    }
}

/// Identifies one question pair `k` within scene `s`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuadrupleId {
    pub scene_id: String,
    pub pair_index: u64,
}

impl QuadrupleId {
    pub fn new(scene_id: impl Into<String>, pair_index: u64) -> Self {
        QuadrupleId {
            scene_id: scene_id.into(),
            pair_index,
        }
    }
}

impl fmt::Display for QuadrupleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.scene_id, self.pair_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadruple {
    pub id: QuadrupleId,
    pub category: Category,
    pub q_pos_text: String,
    pub q_neg_text: String,
    pub v_pos_ref: String,
    pub v_neg_ref: String,
}

impl Quadruple {
    /// Gold answer for a cell: Yes only for (v⁺, q⁺).
    pub fn gold(cell: Cell) -> AnswerLabel {
        if cell == Cell::POS_POS {
            AnswerLabel::Yes
        } else {
            AnswerLabel::No
        }
    }

    pub fn video_ref(&self, variant: Variant) -> &str {
        match variant {
            Variant::Pos => &self.v_pos_ref,
            Variant::Neg => &self.v_neg_ref,
        }
    }

    pub fn question_text(&self, variant: Variant) -> &str {
        match variant {
            Variant::Pos => &self.q_pos_text,
            Variant::Neg => &self.q_neg_text,
        }
    }
}

/// A model's answer to one cell. `Invalid` only ever comes out of the
/// answer parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerLabel {
    Yes,
    No,
    Invalid,
}

impl AnswerLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerLabel::Yes => "yes",
            AnswerLabel::No => "no",
            AnswerLabel::Invalid => "invalid",
        }
    }

    pub fn is_concrete(self) -> bool {
        self != AnswerLabel::Invalid
    }
}

impl fmt::Display for AnswerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pos,
    Neg,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pos => "pos",
            Variant::Neg => "neg",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(Variant::Pos),
            "neg" => Ok(Variant::Neg),
            other => Err(Error::Invalid(format!(
                "unknown variant `{other}` (expected \"pos\" or \"neg\")"
            ))),
        }
    }
}

/// One of the four (video, question) combinations of a quadruple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub video: Variant,
    pub question: Variant,
}

impl Cell {
    pub const POS_POS: Cell = Cell::new(Variant::Pos, Variant::Pos);
    pub const POS_NEG: Cell = Cell::new(Variant::Pos, Variant::Neg);
    pub const NEG_POS: Cell = Cell::new(Variant::Neg, Variant::Pos);
    pub const NEG_NEG: Cell = Cell::new(Variant::Neg, Variant::Neg);

    /// The four cells in the order ŷ⁺⁺, ŷ⁺⁻, ŷ⁻⁺, ŷ⁻⁻.
    pub const ALL: [Cell; 4] = [Cell::POS_POS, Cell::POS_NEG, Cell::NEG_POS, Cell::NEG_NEG];

    pub const fn new(video: Variant, question: Variant) -> Self {
        Cell { video, question }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(v_{}, q_{})", self.video.as_str(), self.question.as_str())
    }
}

/// All answers of one model, keyed by quadruple and cell.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionTable {
    pub model_id: String,
    pub entries: BTreeMap<(QuadrupleId, Cell), AnswerLabel>,
}

impl PredictionTable {
    pub fn new(model_id: impl Into<String>) -> Self {
        PredictionTable {
            model_id: model_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: QuadrupleId, cell: Cell, label: AnswerLabel) {
        self.entries.insert((id, cell), label);
    }

    pub fn get(&self, id: &QuadrupleId, cell: Cell) -> Option<AnswerLabel> {
        // BTreeMap lookups need an owned key; ids are short.
        self.entries.get(&(id.clone(), cell)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A single validation problem. Findings are data so callers can print all
/// of them at once.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    DuplicateId { id: QuadrupleId, occurrences: usize },
    MissingField { id: QuadrupleId, field: String },
    IdenticalQuestions { id: QuadrupleId },
    IdenticalVideos { id: QuadrupleId },
    MissingCell { id: QuadrupleId, cell: Cell },
    UnknownQuadruple { id: QuadrupleId, cell: Cell },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateId { id, occurrences } => {
                write!(f, "duplicate quadruple id {id} ({occurrences} occurrences)")
            }
            Finding::MissingField { id, field } => write!(f, "{id}: empty field `{field}`"),
            Finding::IdenticalQuestions { id } => {
                write!(f, "{id}: q_pos_text and q_neg_text are identical")
            }
            Finding::IdenticalVideos { id } => {
                write!(f, "{id}: v_pos_ref and v_neg_ref are identical")
            }
            Finding::MissingCell { id, cell } => write!(f, "{id}: missing cell {cell}"),
            Finding::UnknownQuadruple { id, cell } => {
                write!(f, "{id} {cell}: prediction for a quadruple not in the manifest")
            }
        }
    }
}

/// Structural counts of a manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StructureCounts {
    pub scenes: usize,
    pub pairs: usize,
    pub instances: usize,
}

impl StructureCounts {
    /// Shape of the published benchmark release.
    pub const REFERENCE: StructureCounts = StructureCounts {
        scenes: 305,
        pairs: 1_776,
        instances: 7_104,
    };
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub counts: StructureCounts,
    pub per_category: BTreeMap<Category, usize>,
    pub invalid_count: usize,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks id uniqueness and per-quadruple field sanity, and counts scenes,
/// pairs and implied binary instances (always 4 × pairs).
pub fn validate_manifest(manifest: &[Quadruple]) -> ValidationReport {
    let mut seen: BTreeMap<&QuadrupleId, usize> = BTreeMap::new();
    let mut scenes: BTreeSet<&str> = BTreeSet::new();
    let mut per_category = BTreeMap::new();
    let mut findings = Vec::new();

    for quad in manifest {
        *seen.entry(&quad.id).or_default() += 1;
        scenes.insert(&quad.id.scene_id);
        *per_category.entry(quad.category).or_default() += 1;

        let fields = [
            ("scene_id", quad.id.scene_id.as_str()),
            ("q_pos_text", quad.q_pos_text.as_str()),
            ("q_neg_text", quad.q_neg_text.as_str()),
            ("v_pos_ref", quad.v_pos_ref.as_str()),
            ("v_neg_ref", quad.v_neg_ref.as_str()),
        ];
        for (field, value) in fields {
            if value.trim().is_empty() {
                findings.push(Finding::MissingField {
                    id: quad.id.clone(),
                    field: field.to_string(),
                });
            }
        }
        if quad.q_pos_text == quad.q_neg_text {
            findings.push(Finding::IdenticalQuestions { id: quad.id.clone() });
        }
        if quad.v_pos_ref == quad.v_neg_ref {
            findings.push(Finding::IdenticalVideos { id: quad.id.clone() });
        }
    }

    for (id, occurrences) in &seen {
        if *occurrences > 1 {
            findings.push(Finding::DuplicateId {
                id: (*id).clone(),
                occurrences: *occurrences,
            });
        }
    }
    findings.sort();

    ValidationReport {
        findings,
        counts: StructureCounts {
            scenes: scenes.len(),
            pairs: manifest.len(),
            instances: 4 * manifest.len(),
        },
        per_category,
        invalid_count: 0,
    }
}

/// Checks that a prediction table covers every cell of every manifest
/// quadruple and nothing else, and counts `Invalid` labels.
pub fn validate_predictions(manifest: &[Quadruple], table: &PredictionTable) -> ValidationReport {
    let mut report = validate_manifest(manifest);
    report.findings.clear();

    let known: BTreeSet<&QuadrupleId> = manifest.iter().map(|q| &q.id).collect();
    for id in &known {
        for cell in Cell::ALL {
            if table.get(id, cell).is_none() {
                report.findings.push(Finding::MissingCell {
                    id: (*id).clone(),
                    cell,
                });
            }
        }
    }
    for ((id, cell), label) in &table.entries {
        if !known.contains(id) {
            report.findings.push(Finding::UnknownQuadruple {
                id: id.clone(),
                cell: *cell,
            });
        }
        if *label == AnswerLabel::Invalid {
            report.invalid_count += 1;
        }
    }
    report.findings.sort();
    report
}
