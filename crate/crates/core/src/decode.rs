//! Contrastive logit fusion and the runner protocol that feeds it.
//!
//! A runner (an external process holding the video model) streams paired
//! logits for each decoding step: one set computed on the original video and
//! one on a contrast input. The engine fuses them as
//! `(1 + alpha) * original - alpha * contrast`, picks the greedy token, and
//! sends it back so the runner can extend its context.
//!
//! Messages are JSON objects, one per line, tagged by `type`. A recorded
//! session file is the same message stream persisted verbatim, which lets
//! any alpha be replayed offline.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::parse_answer;
use crate::model::{AnswerLabel, Cell, PredictionTable, Quadruple, QuadrupleId, Variant};

pub const DEFAULT_STEP_LIMIT: usize = 8;

/// Logits over a restricted candidate vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector(BTreeMap<String, f64>);

impl LogitVector {
    pub fn new(entries: BTreeMap<String, f64>) -> Result<Self> {
        let v = LogitVector(entries);
        v.check()?;
        Ok(v)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    fn check(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::EmptyLogits);
        }
        match self.0.iter().find(|(_, v)| !v.is_finite()) {
            Some((token, _)) => Err(Error::NonFinite(token.clone())),
            None => Ok(()),
        }
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.0.get(token).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> BTreeMap<String, f64> {
        self.0
    }
}

/// How the contrast input was built upstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FusionMode {
    /// Noise-corrupted frames of the original video.
    #[serde(rename = "vcd")]
    Vcd,
    /// Temporally downsampled original video.
    #[serde(rename = "tcd")]
    Tcd,
    /// The paired counterfactual video of the same scene.
    #[serde(rename = "c-tcd")]
    CTcd,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Vcd => "vcd",
            FusionMode::Tcd => "tcd",
            FusionMode::CTcd => "c-tcd",
        }
    }

    /// Degradation the runner applies to the original video, if any.
    pub fn degradation_tag(self) -> Option<&'static str> {
        match self {
            FusionMode::Vcd => Some("vcd-noise"),
            FusionMode::Tcd => Some("tcd-downsample"),
            FusionMode::CTcd => None,
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vcd" => Ok(FusionMode::Vcd),
            "tcd" => Ok(FusionMode::Tcd),
            "c-tcd" => Ok(FusionMode::CTcd),
            other => Err(Error::Invalid(format!("unknown fusion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FusionConfig {
    pub alpha: f64,
    pub mode: FusionMode,
}

impl FusionConfig {
    pub fn new(alpha: f64, mode: FusionMode) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(FusionConfig { alpha, mode })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::Alpha(alpha))
    }
}

/// Tokenwise `(1 + alpha) * original - alpha * contrast`.
pub fn fuse(original: &LogitVector, contrast: &LogitVector, alpha: f64) -> Result<LogitVector> {
    check_alpha(alpha)?;
    original.check()?;
    contrast.check()?;
    let missing_original: Vec<String> = contrast
        .0
        .keys()
        .filter(|k| !original.0.contains_key(*k))
        .cloned()
        .collect();
    let missing_contrast: Vec<String> = original
        .0
        .keys()
        .filter(|k| !contrast.0.contains_key(*k))
        .cloned()
        .collect();
    if !missing_original.is_empty() || !missing_contrast.is_empty() {
        return Err(Error::KeyMismatch {
            missing_original,
            missing_contrast,
        });
    }
    let fused = original
        .0
        .iter()
        .map(|(token, &ori)| {
            // (1 + alpha) * ori - alpha * con, arranged so that equal inputs
            // and alpha = 0 both return `ori` bit for bit
            let z = ori + alpha * (ori - contrast.0[token]);
            if z.is_finite() {
                Ok((token.clone(), z))
            } else {
                Err(Error::NonFinite(token.clone()))
            }
        })
        .collect::<Result<_>>()?;
    Ok(LogitVector(fused))
}

/// Greedy choice; ties go to the lexicographically smallest token.
pub fn select_token(logits: &LogitVector) -> &str {
    let mut best: Option<(&str, f64)> = None;
    for (token, value) in logits.iter() {
        match best {
            Some((_, b)) if value <= b => {}
            _ => best = Some((token, value)),
        }
    }
    best.map(|(t, _)| t).unwrap_or_default()
}

/// The video the runner should use as contrast input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContrastInput {
    pub video_ref: String,
    /// Set when the runner must degrade `video_ref` itself.
    pub degradation: Option<&'static str>,
}

/// Picks the contrast input for one instance. In c-tcd mode this is the
/// other video of the same scene; otherwise it is the original video tagged
/// with the degradation the runner applies.
pub fn contrast_selector(
    id: &QuadrupleId,
    cell: Cell,
    manifest: &[Quadruple],
    mode: FusionMode,
) -> Result<ContrastInput> {
    let quad = manifest
        .iter()
        .find(|q| &q.id == id)
        .ok_or_else(|| Error::UnknownQuadruple(id.to_string()))?;
    Ok(match mode {
        FusionMode::CTcd => {
            let other = match cell.video {
                Variant::Pos => Variant::Neg,
                Variant::Neg => Variant::Pos,
            };
            ContrastInput {
                video_ref: quad.video_ref(other).to_string(),
                degradation: None,
            }
        }
        FusionMode::Vcd | FusionMode::Tcd => ContrastInput {
            video_ref: quad.video_ref(cell.video).to_string(),
            degradation: mode.degradation_tag(),
        },
    })
}

/// Identifies which quadruple cell a session answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRef {
    pub scene_id: String,
    pub pair_index: u64,
    pub video_variant: Variant,
    pub question_variant: Variant,
}

impl InstanceRef {
    pub fn new(id: &QuadrupleId, cell: Cell) -> Self {
        InstanceRef {
            scene_id: id.scene_id.clone(),
            pair_index: id.pair_index,
            video_variant: cell.video,
            question_variant: cell.question,
        }
    }

    pub fn id(&self) -> QuadrupleId {
        QuadrupleId::new(self.scene_id.clone(), self.pair_index)
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.video_variant, self.question_variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Eos,
    Error,
    /// Sent by the engine when the runner offers a step past the limit.
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Init {
        session_id: String,
        video_ref: String,
        contrast_video_ref: String,
        mode: FusionMode,
        question_text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instance: Option<InstanceRef>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degradation: Option<String>,
    },
    StepLogits {
        session_id: String,
        step: usize,
        logits_ori: LogitVector,
        logits_con: LogitVector,
    },
    Chosen {
        session_id: String,
        step: usize,
        token: String,
    },
    End {
        session_id: String,
        reason: EndReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
}

impl Message {
    pub fn session_id(&self) -> &str {
        match self {
            Message::Init { session_id, .. }
            | Message::StepLogits { session_id, .. }
            | Message::Chosen { session_id, .. }
            | Message::End { session_id, .. } => session_id,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol message serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

/// One bidirectional connection to a runner.
pub trait RunnerLink {
    fn send(&mut self, message: &Message) -> Result<()>;
    fn recv(&mut self) -> Result<Message>;
}

/// Line-delimited JSON over any reader/writer pair (child stdio, sockets).
pub struct LineLink<R, W> {
    reader: R,
    writer: W,
    buf: String,
}

impl<R: BufRead, W: Write> LineLink<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineLink {
            reader,
            writer,
            buf: String::new(),
        }
    }
}

impl<R: BufRead, W: Write> RunnerLink for LineLink<R, W> {
    fn send(&mut self, message: &Message) -> Result<()> {
        let line = message.to_line();
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Protocol(format!("write to runner failed: {e}")))
    }

    fn recv(&mut self) -> Result<Message> {
        loop {
            self.buf.clear();
            let n = self
                .reader
                .read_line(&mut self.buf)
                .map_err(|e| Error::Protocol(format!("read from runner failed: {e}")))?;
            if n == 0 {
                return Err(Error::Protocol("runner closed the stream".into()));
            }
            if self.buf.trim().is_empty() {
                continue;
            }
            return Message::from_line(self.buf.trim_end())
                .map_err(|e| Error::Protocol(format!("malformed line: {e}")));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionStep {
    pub original: LogitVector,
    pub contrast: LogitVector,
    pub chosen: String,
}

/// One decoding interaction and its result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionSession {
    pub session_id: String,
    pub instance: Option<InstanceRef>,
    pub config: FusionConfig,
    pub steps: Vec<FusionStep>,
    pub label: AnswerLabel,
    /// Every message exchanged, in order, for the recorded-session file.
    #[serde(skip)]
    pub transcript: Vec<Message>,
}

impl FusionSession {
    pub fn tokens(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.chosen.as_str()).collect()
    }
}

/// Joins chosen tokens verbatim (runners send surface forms with their own
/// whitespace) and maps the result to a label.
pub fn label_tokens<S: AsRef<str>>(tokens: &[S]) -> AnswerLabel {
    let text: String = tokens.iter().map(|t| t.as_ref()).collect();
    parse_answer(&text)
}

/// Drives one session: send `init`, then fuse/select/feed back until the
/// runner ends the answer. If the runner offers step `step_limit`, the engine
/// answers with `end` (reason `step_limit`) instead of a token; the runner
/// must drop the session.
pub fn decode_binary(
    link: &mut impl RunnerLink,
    init: Message,
    config: FusionConfig,
    step_limit: usize,
) -> Result<FusionSession> {
    let (session_id, instance) = match &init {
        Message::Init {
            session_id,
            instance,
            ..
        } => (session_id.clone(), instance.clone()),
        _ => return Err(Error::Protocol("a session must start with `init`".into())),
    };
    check_alpha(config.alpha)?;
    link.send(&init)?;
    let mut transcript = vec![init];
    let mut steps = Vec::new();

    loop {
        let message = link.recv()?;
        if message.session_id() != session_id {
            return Err(Error::Protocol(format!(
                "message for session `{}` during session `{session_id}`",
                message.session_id()
            )));
        }
        transcript.push(message.clone());
        match message {
            Message::StepLogits { step, .. } if step == step_limit && steps.len() == step_limit => {
                transcript.pop();
                let end = Message::End {
                    session_id: session_id.clone(),
                    reason: EndReason::StepLimit,
                    detail: None,
                };
                link.send(&end)?;
                transcript.push(end);
                break;
            }
            Message::StepLogits {
                step,
                logits_ori,
                logits_con,
                ..
            } => {
                if step != steps.len() {
                    return Err(Error::Protocol(format!(
                        "expected step {}, runner sent step {step}",
                        steps.len()
                    )));
                }
                let fused = fuse(&logits_ori, &logits_con, config.alpha)
                    .map_err(|e| Error::Protocol(format!("step {step}: {e}")))?;
                let token = select_token(&fused).to_string();
                let chosen = Message::Chosen {
                    session_id: session_id.clone(),
                    step,
                    token: token.clone(),
                };
                link.send(&chosen)?;
                transcript.push(chosen);
                steps.push(FusionStep {
                    original: logits_ori,
                    contrast: logits_con,
                    chosen: token,
                });
            }
            Message::End {
                reason: EndReason::Eos | EndReason::StepLimit,
                ..
            } => break,
            Message::End {
                reason: EndReason::Error,
                detail,
                ..
            } => return Err(Error::Runner(detail.unwrap_or_default())),
            other => {
                return Err(Error::Protocol(format!(
                    "unexpected `{}` message from runner",
                    other.to_line()
                )))
            }
        }
    }

    let label = label_tokens(&steps.iter().map(|s| s.chosen.as_str()).collect::<Vec<_>>());
    Ok(FusionSession {
        session_id,
        instance,
        config,
        steps,
        label,
        transcript,
    })
}

/// A session read back from a recorded-session file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedSession {
    pub session_id: String,
    pub mode: FusionMode,
    pub instance: Option<InstanceRef>,
    pub steps: Vec<(LogitVector, LogitVector)>,
    /// Tokens chosen during the live run.
    pub chosen: Vec<String>,
    pub ended: Option<EndReason>,
}

impl RecordedSession {
    /// Re-runs fusion over the recorded logits. Later steps were conditioned
    /// on the tokens chosen live, so this is exact for single-step answers.
    pub fn replay(&self, alpha: f64, step_limit: usize) -> Result<(AnswerLabel, Vec<String>)> {
        let mut tokens = Vec::new();
        for (original, contrast) in self.steps.iter().take(step_limit) {
            let fused = fuse(original, contrast, alpha)?;
            tokens.push(select_token(&fused).to_string());
        }
        Ok((label_tokens(&tokens), tokens))
    }

    /// Greedy decode of the original-video logits alone.
    pub fn vanilla_label(&self, step_limit: usize) -> AnswerLabel {
        let tokens: Vec<&str> = self
            .steps
            .iter()
            .take(step_limit)
            .map(|(original, _)| select_token(original))
            .collect();
        label_tokens(&tokens)
    }
}

/// Parses a recorded-session file. Sessions are returned in the order their
/// `init` messages appear; messages of different sessions may interleave.
pub fn read_sessions<R: BufRead>(reader: R) -> Result<Vec<RecordedSession>> {
    let mut sessions: Vec<RecordedSession> = Vec::new();
    let mut index_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut message_index = 0;

    for line in reader.lines() {
        let line = line.map_err(|e| Error::Session {
            index: message_index,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let index = message_index;
        message_index += 1;
        let fail = |message: String| Error::Session { index, message };

        let message = Message::from_line(&line).map_err(|e| fail(e.to_string()))?;
        let id = message.session_id().to_string();
        if let Message::Init { mode, instance, .. } = &message {
            if index_of.contains_key(&id) {
                return Err(fail(format!("session `{id}` initialized twice")));
            }
            index_of.insert(id.clone(), sessions.len());
            sessions.push(RecordedSession {
                session_id: id,
                mode: *mode,
                instance: instance.clone(),
                steps: Vec::new(),
                chosen: Vec::new(),
                ended: None,
            });
            continue;
        }
        let session = index_of
            .get(&id)
            .map(|&i| &mut sessions[i])
            .ok_or_else(|| fail(format!("message for unknown session `{id}`")))?;
        if session.ended.is_some() {
            return Err(fail(format!("message after end of session `{id}`")));
        }
        match message {
            Message::StepLogits {
                step,
                logits_ori,
                logits_con,
                ..
            } => {
                if step != session.steps.len() {
                    return Err(fail(format!(
                        "expected step {}, found step {step}",
                        session.steps.len()
                    )));
                }
                logits_ori.check().map_err(|e| fail(e.to_string()))?;
                logits_con.check().map_err(|e| fail(e.to_string()))?;
                session.steps.push((logits_ori, logits_con));
            }
            Message::Chosen { step, token, .. } => {
                if step != session.chosen.len() || step >= session.steps.len() {
                    return Err(fail(format!("`chosen` for unexpected step {step}")));
                }
                session.chosen.push(token);
            }
            Message::End { reason, .. } => session.ended = Some(reason),
            Message::Init { .. } => unreachable!(),
        }
    }
    Ok(sessions)
}

/// Writes messages one per line.
pub fn write_transcript(out: &mut impl Write, messages: &[Message]) -> std::io::Result<()> {
    for m in messages {
        writeln!(out, "{}", m.to_line())?;
    }
    Ok(())
}

/// Replays every session at each alpha and collects the labels into one
/// prediction table per alpha. Sessions that ended in a runner error are
/// labeled `Invalid`.
pub fn replay_tables(
    sessions: &[RecordedSession],
    alphas: &[f64],
    model_id: &str,
    step_limit: usize,
) -> Result<Vec<(f64, PredictionTable)>> {
    alphas
        .iter()
        .map(|&alpha| {
            check_alpha(alpha)?;
            let mut table = PredictionTable::new(format!("{model_id}@alpha={alpha}"));
            for s in sessions {
                let instance = s.instance.as_ref().ok_or_else(|| {
                    Error::Invalid(format!(
                        "session `{}` has no instance reference",
                        s.session_id
                    ))
                })?;
                let label = if s.ended == Some(EndReason::Error) {
                    AnswerLabel::Invalid
                } else {
                    s.replay(alpha, step_limit)?.0
                };
                table.insert(instance.id(), instance.cell(), label);
            }
            Ok((alpha, table))
        })
        .collect()
}
