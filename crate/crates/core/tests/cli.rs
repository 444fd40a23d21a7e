mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{ALWAYS_YES, PERFECT};
use quadeval::decode::{write_transcript, EndReason, FusionMode, InstanceRef, LogitVector, Message};
use quadeval::ingest::{write_manifest, write_predictions};
use quadeval::model::{AnswerLabel, Cell};
use tempfile::TempDir;

fn quadeval(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadeval"))
        .args(args)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

struct Fixture {
    dir: TempDir,
    manifest: PathBuf,
}

impl Fixture {
    fn new(scenes: usize, pairs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.jsonl");
        fs::write(&manifest, write_manifest(&common::manifest(scenes, pairs))).unwrap();
        Fixture { dir, manifest }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn predictions(&self, name: &str, cells: impl Fn(usize) -> [AnswerLabel; 4]) -> PathBuf {
        let m = quadeval::ingest::load_manifest(&self.manifest).unwrap();
        let path = self.path(&format!("{name}.jsonl"));
        fs::write(&path, write_predictions(&common::table(name, &m, |i, _| cells(i)))).unwrap();
        path
    }

    fn str(&self, p: &Path) -> String {
        p.to_str().unwrap().to_string()
    }
}

fn mixed(i: usize) -> [AnswerLabel; 4] {
    match i % 4 {
        0 => PERFECT,
        1 => ALWAYS_YES,
        2 => [AnswerLabel::Yes, AnswerLabel::No, AnswerLabel::Yes, AnswerLabel::Invalid],
        _ => [AnswerLabel::No, AnswerLabel::No, AnswerLabel::No, AnswerLabel::Yes],
    }
}

#[test]
fn validate_exit_codes() {
    let fx = Fixture::new(4, 2);
    let good = fx.predictions("good", mixed);
    let out = quadeval(&["validate", "--manifest", &fx.str(&fx.manifest), "--predictions"], &[&good]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("instances 32"));

    // drop one cell
    let text = fs::read_to_string(&good).unwrap();
    let short = fx.path("short.jsonl");
    fs::write(&short, text.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>()).unwrap();
    let out = quadeval(&["validate", "--manifest", &fx.str(&fx.manifest), "--predictions"], &[&short]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));

    let out = quadeval(&["validate", "--expect-reference-shape", "--manifest", &fx.str(&fx.manifest)], &[]);
    assert_eq!(code(&out), 1);

    let broken = fx.path("broken.jsonl");
    fs::write(&broken, "{not json\n").unwrap();
    let out = quadeval(&["validate", "--manifest"], &[&broken]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn eval_is_byte_deterministic_and_ignores_record_order() {
    let fx = Fixture::new(9, 3);
    let preds = fx.predictions("model", mixed);
    // same model, records reversed, in another directory so the stem matches
    fs::create_dir(fx.path("shuffled")).unwrap();
    let reversed = fx.path("shuffled/model.jsonl");
    let lines: Vec<String> = fs::read_to_string(&preds).unwrap().lines().rev().map(|l| format!("{l}\n")).collect();
    fs::write(&reversed, lines.concat()).unwrap();

    let mut bodies = Vec::new();
    for (input, out) in [(&preds, "a"), (&preds, "b"), (&reversed, "c")] {
        let out_dir = fx.path(out);
        let run = quadeval(
            &["eval", "--seed", "5", "--replicates", "200", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&out_dir), "--predictions"],
            &[input],
        );
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        bodies.push(fs::read(out_dir.join("model.report.json")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[0], bodies[2]);

    let csv_dir = fx.path("csv");
    let run = quadeval(
        &["eval", "--format", "csv", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&csv_dir), "--predictions"],
        &[&preds],
    );
    assert_eq!(code(&run), 0);
    let csv = fs::read_to_string(csv_dir.join("model.report.csv")).unwrap();
    assert!(csv.starts_with("model_id,scope,metric,value,lower,upper\n"));
}

#[test]
fn bootstrap_requires_a_seed_and_ranks_models() {
    let fx = Fixture::new(8, 2);
    let a = fx.predictions("strong", |_| PERFECT);
    let b = fx.predictions("weak", |_| ALWAYS_YES);
    let out_dir = fx.path("boot");
    let base = ["bootstrap", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&out_dir)];

    let no_seed = quadeval(&[&base[..], &["--predictions"]].concat(), &[&a, &b]);
    assert_eq!(code(&no_seed), 2);
    assert!(String::from_utf8_lossy(&no_seed.stderr).contains("--seed"));

    let eval_no_seed = quadeval(
        &["eval", "--replicates", "10", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&out_dir), "--predictions"],
        &[&a],
    );
    assert_eq!(code(&eval_no_seed), 2);

    let ok = quadeval(&[&base[..], &["--seed", "9", "--replicates", "100", "--predictions"]].concat(), &[&a, &b]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let ranking = fs::read_to_string(out_dir.join("ranking.csv")).unwrap();
    assert!(ranking.contains("strong,weak,1.0000"), "{ranking}");
    assert!(ranking.contains("weak,strong,0.0000"), "{ranking}");
}

#[test]
fn plot_tables() {
    let fx = Fixture::new(6, 2);
    let yes = fx.predictions("yes_model", |_| ALWAYS_YES);
    let out_dir = fx.path("plots");
    for kind in ["radar", "failure-composition"] {
        let out = quadeval(
            &["plot-data", "--kind", kind, "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&out_dir), "--predictions"],
            &[&yes],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let radar = fs::read_to_string(out_dir.join("radar.csv")).unwrap();
    assert_eq!(radar.lines().count(), 7);
    let composition = fs::read_to_string(out_dir.join("failure_composition.csv")).unwrap();
    let shares: Vec<&str> = composition.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(shares, ["0.0000", "0.3333", "0.3333", "0.3333"]);

    let bad = quadeval(&["plot-data", "--kind", "pie", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&out_dir)], &[]);
    assert_eq!(code(&bad), 2);
}

fn record_sessions(fx: &Fixture) -> PathBuf {
    let m = common::manifest(3, 1);
    let mut file = Vec::new();
    for q in &m {
        for cell in Cell::ALL {
            let id = format!("{}/{}", q.id, cell);
            // yes wins on the original, contrast pulls toward no
            let (ori_yes, con_yes) = if cell == Cell::POS_POS { (1.0, 0.0) } else { (0.2, 1.0) };
            let msgs = [
                Message::Init {
                    session_id: id.clone(),
                    video_ref: q.video_ref(cell.video).into(),
                    contrast_video_ref: "c".into(),
                    mode: FusionMode::CTcd,
                    question_text: q.question_text(cell.question).into(),
                    instance: Some(InstanceRef::new(&q.id, cell)),
                    degradation: None,
                },
                Message::StepLogits {
                    session_id: id.clone(),
                    step: 0,
                    logits_ori: LogitVector::from_pairs([("Yes", ori_yes), ("No", 0.0)]).unwrap(),
                    logits_con: LogitVector::from_pairs([("Yes", con_yes), ("No", 0.0)]).unwrap(),
                },
                Message::Chosen { session_id: id.clone(), step: 0, token: "Yes".into() },
                Message::End { session_id: id, reason: EndReason::Eos, detail: None },
            ];
            write_transcript(&mut file, &msgs).unwrap();
        }
    }
    let path = fx.path("sessions.jsonl");
    fs::write(&path, file).unwrap();
    path
}

#[test]
fn decode_replay_and_alpha_sweep() {
    let fx = Fixture::new(3, 1);
    let sessions = record_sessions(&fx);
    let out_dir = fx.path("replay");
    let out = quadeval(
        &["decode-replay", "--alpha", "0", "1", "--model-id", "stub", "--out-dir", &fx.str(&out_dir), "--sessions"],
        &[&sessions],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let vanilla = fs::read_to_string(out_dir.join("predictions_alpha_0.jsonl")).unwrap();
    let fused = fs::read_to_string(out_dir.join("predictions_alpha_1.jsonl")).unwrap();
    assert_eq!(vanilla.matches("\"label\":\"yes\"").count(), 12);
    assert_eq!(fused.matches("\"label\":\"yes\"").count(), 3);
    assert!(fused.contains("stub@alpha=1"));

    let plots = fx.path("sweep");
    let out = quadeval(
        &["plot-data", "--kind", "alpha-sweep", "--alpha", "0", "1", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&plots), "--sessions"],
        &[&sessions],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(plots.join("alpha_sweep.csv")).unwrap();
    assert!(sweep.contains("0,quad_acc,0.0000"), "{sweep}");
    assert!(sweep.contains("1,quad_acc,1.0000"), "{sweep}");
}

const STUB_RUNNER: &str = r#"
import json, sys
for line in sys.stdin:
    msg = json.loads(line)
    if msg["type"] != "init":
        continue
    sid = msg["session_id"]
    yes = 1.0 if msg["video_ref"].endswith("_pos.mp4") and "yield" in msg["question_text"] else -1.0
    con = 1.0 if msg["contrast_video_ref"].endswith("_pos.mp4") else -1.0
    print(json.dumps({"type": "step_logits", "session_id": sid, "step": 0,
                      "logits_ori": {"Yes": yes, "No": 0.0},
                      "logits_con": {"Yes": con * 0.1, "No": 0.0}}), flush=True)
    chosen = json.loads(sys.stdin.readline())
    assert chosen["type"] == "chosen"
    print(json.dumps({"type": "end", "session_id": sid, "reason": "eos"}), flush=True)
"#;

#[test]
fn decode_live_against_a_stub_runner() {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not available, skipping");
        return;
    }
    let fx = Fixture::new(3, 2);
    let script = fx.path("runner.py");
    fs::write(&script, STUB_RUNNER).unwrap();
    let out_dir = fx.path("live");
    let out = quadeval(
        &["decode-live", "--runner", "python3", "--alpha", "0.5", "--model-id", "stub", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&out_dir), "--", &fx.str(&script)],
        &[],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let preds = fx.path("live/predictions.jsonl");
    let eval_dir = fx.path("live_eval");
    let out = quadeval(
        &["eval", "--manifest", &fx.str(&fx.manifest), "--out-dir", &fx.str(&eval_dir), "--predictions"],
        &[&preds],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(eval_dir.join("stub.report.json")).unwrap();
    assert!(report.contains("\"quad_acc\": 1.0000"), "{report}");

    // the transcript replays to the same labels
    let replay_dir = fx.path("live_replay");
    let out = quadeval(
        &["decode-replay", "--alpha", "0.5", "--model-id", "stub", "--out-dir", &fx.str(&replay_dir), "--sessions"],
        &[&out_dir.join("sessions.jsonl")],
    );
    assert_eq!(code(&out), 0);
    let replayed = fs::read_to_string(replay_dir.join("predictions_alpha_0.5.jsonl")).unwrap();
    let live = fs::read_to_string(&preds).unwrap();
    assert_eq!(replayed.replace("stub@alpha=0.5", "stub"), live);
}
