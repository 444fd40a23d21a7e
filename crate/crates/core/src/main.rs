use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};

use clap::{Args, Parser, Subcommand, ValueEnum};

use quadeval::bootstrap::{ranking_stability, BootstrapConfig};
use quadeval::decode::{
    contrast_selector, decode_binary, read_sessions, replay_tables, write_transcript,
    FusionConfig, FusionMode, InstanceRef, LineLink, Message, DEFAULT_STEP_LIMIT,
};
use quadeval::ingest::{load_manifest, load_predictions, write_predictions};
use quadeval::model::{validate_manifest, Cell, PredictionTable, Quadruple, StructureCounts};
use quadeval::report::{
    alpha_sweep_rows, failure_composition_rows, format_fraction, radar_rows, ranking_rows, render_report,
    render_report_csv, run_eval, MetricReport, PlotKind,
};
use quadeval::Error;

#[derive(Parser)]
#[command(name = "quadeval", version, about = "Contrastive-consistency evaluation for paired-video binary QA")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a manifest and, optionally, prediction files against it.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, num_args = 1..)]
        predictions: Vec<PathBuf>,
        /// Also require the published benchmark shape (305 scenes, 1,776 pairs).
        #[arg(long)]
        expect_reference_shape: bool,
    },
    /// Compute metric reports, one per prediction file.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        boot: BootArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Report)]
        format: Format,
    },
    /// Reports with scene-level bootstrap intervals plus pairwise ranking stability.
    Bootstrap {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        boot: BootArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Emit plot-ready CSV tables.
    PlotData {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, num_args = 1..)]
        predictions: Vec<PathBuf>,
        /// Recorded decode sessions (alpha-sweep only).
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long = "alpha", num_args = 1..)]
        alphas: Vec<f64>,
        #[arg(long, default_value = "replay")]
        model_id: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-run fusion over recorded sessions for each alpha.
    DecodeReplay {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long = "alpha", required = true, num_args = 1..)]
        alphas: Vec<f64>,
        #[arg(long, default_value = "replay")]
        model_id: String,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Decode every manifest cell against a runner process speaking the line protocol.
    DecodeLive {
        #[arg(long)]
        manifest: PathBuf,
        /// Runner executable; arguments follow `--`.
        #[arg(long)]
        runner: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value = "c-tcd")]
        mode: String,
        #[arg(long, default_value = "live")]
        model_id: String,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(last = true)]
        runner_args: Vec<String>,
    },
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    predictions: Vec<PathBuf>,
}

#[derive(Args)]
struct BootArgs {
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl BootArgs {
    /// Intervals are computed only when asked for, and then a seed is mandatory.
    fn config(&self, required: bool) -> Result<Option<BootstrapConfig>, Failure> {
        let requested = required || self.replicates.is_some() || self.confidence.is_some();
        match (requested || self.seed.is_some(), self.seed) {
            (false, _) => Ok(None),
            (true, None) => Err(Failure::Usage(
                "--seed is required when bootstrap intervals are requested".into(),
            )),
            (true, Some(seed)) => {
                let defaults = BootstrapConfig::default();
                Ok(Some(BootstrapConfig::new(
                    self.replicates.unwrap_or(defaults.replicates),
                    self.confidence.unwrap_or(defaults.confidence),
                    seed,
                )?))
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Report,
    Csv,
}

enum Failure {
    Validation,
    Usage(String),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Usage(format!("{}: {e}", path.display()))
}

fn file_name(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_' | '@' | '=') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Loads the manifest and all prediction files, printing every finding
/// with its file before failing.
fn load_inputs(manifest: &Path, predictions: &[PathBuf]) -> Result<(Vec<Quadruple>, Vec<PredictionTable>), Failure> {
    let quads = load_manifest(manifest)?;
    let mut clean = true;
    let report = validate_manifest(&quads);
    for f in &report.findings {
        eprintln!("{}: {f}", manifest.display());
        clean = false;
    }
    let mut tables = Vec::new();
    for path in predictions {
        let (table, report) = load_predictions(path, &quads)?;
        for f in &report.findings {
            eprintln!("{}: {f}", path.display());
            clean = false;
        }
        tables.push(table);
    }
    let mut ids: Vec<&str> = tables.iter().map(|t| t.model_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        eprintln!("model id `{}` appears in more than one prediction file", w[0]);
        clean = false;
    }
    if !clean {
        return Err(Failure::Validation);
    }
    Ok((quads, tables))
}

fn write_reports(reports: &[MetricReport], out_dir: &Path, format: Format) -> Result<(), Failure> {
    create_dir(out_dir)?;
    for r in reports {
        let (ext, body) = match format {
            Format::Report => ("report.json", render_report(r)),
            Format::Csv => ("report.csv", render_report_csv(r)?),
        };
        let path = out_dir.join(format!("{}.{ext}", file_name(&r.model_id)));
        write_file(&path, &body)?;
        println!("{}: quad_acc {} -> {}", r.model_id, format_fraction(r.value(quadeval::bootstrap::Metric::QuadAcc).unwrap_or(0.0)), path.display());
    }
    Ok(())
}

fn validate(manifest: &Path, predictions: &[PathBuf], expect_reference: bool) -> Result<(), Failure> {
    let quads = load_manifest(manifest)?;
    let report = validate_manifest(&quads);
    let c = report.counts;
    println!("scenes {}  pairs {}  instances {}", c.scenes, c.pairs, c.instances);
    for (category, n) in &report.per_category {
        println!("  {category}: {n}");
    }
    let mut clean = report.is_clean();
    for f in &report.findings {
        eprintln!("{}: {f}", manifest.display());
    }
    if expect_reference && c != StructureCounts::REFERENCE {
        let r = StructureCounts::REFERENCE;
        eprintln!(
            "{}: expected {} scenes / {} pairs / {} instances",
            manifest.display(),
            r.scenes,
            r.pairs,
            r.instances
        );
        clean = false;
    }
    for path in predictions {
        let (table, report) = load_predictions(path, &quads)?;
        println!(
            "{}: model {}  entries {}  invalid {}",
            path.display(),
            table.model_id,
            table.len(),
            report.invalid_count
        );
        for f in &report.findings {
            eprintln!("{}: {f}", path.display());
        }
        clean &= report.is_clean();
    }
    if clean {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn load_sessions(path: &Path) -> Result<Vec<quadeval::decode::RecordedSession>, Failure> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(read_sessions(BufReader::new(file))?)
}

fn decode_live(
    manifest: &Path,
    runner: &Path,
    runner_args: &[String],
    config: FusionConfig,
    model_id: &str,
    step_limit: usize,
    out_dir: &Path,
) -> Result<(), Failure> {
    let quads = load_manifest(manifest)?;
    create_dir(out_dir)?;
    let mut child = Command::new(runner)
        .args(runner_args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(io_err(runner))?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
    let mut link = LineLink::new(stdout, BufWriter::new(stdin));

    let sessions_path = out_dir.join("sessions.jsonl");
    let mut transcript =
        BufWriter::new(fs::File::create(&sessions_path).map_err(io_err(&sessions_path))?);
    let mut table = PredictionTable::new(model_id);
    let mut result = Ok(());
    'outer: for q in &quads {
        for cell in Cell::ALL {
            let contrast = contrast_selector(&q.id, cell, &quads, config.mode)?;
            let init = Message::Init {
                session_id: format!("{}#{}/{}{}", q.id.scene_id, q.id.pair_index, cell.video.as_str(), cell.question.as_str()),
                video_ref: q.video_ref(cell.video).to_string(),
                contrast_video_ref: contrast.video_ref,
                mode: config.mode,
                question_text: q.question_text(cell.question).to_string(),
                instance: Some(InstanceRef::new(&q.id, cell)),
                degradation: contrast.degradation.map(str::to_string),
            };
            match decode_binary(&mut link, init, config, step_limit) {
                Ok(session) => {
                    write_transcript(&mut transcript, &session.transcript).map_err(io_err(&sessions_path))?;
                    table.insert(q.id.clone(), cell, session.label);
                }
                Err(e) => {
                    result = Err(Failure::Engine(e));
                    break 'outer;
                }
            }
        }
    }
    transcript.flush().map_err(io_err(&sessions_path))?;
    drop(link);
    let _ = child.wait();
    result?;
    let path = out_dir.join("predictions.jsonl");
    write_file(&path, &write_predictions(&table))?;
    println!("{} sessions -> {}", table.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Validate {
            manifest,
            predictions,
            expect_reference_shape,
        } => validate(&manifest, &predictions, expect_reference_shape),
        Cmd::Eval {
            inputs,
            boot,
            out_dir,
            format,
        } => {
            let config = boot.config(false)?;
            let (quads, tables) = load_inputs(&inputs.manifest, &inputs.predictions)?;
            let reports = run_eval(&quads, &tables, config.as_ref())?;
            write_reports(&reports, &out_dir, format)
        }
        Cmd::Bootstrap {
            inputs,
            boot,
            out_dir,
        } => {
            let config = boot.config(true)?.expect("bootstrap config is required");
            let (quads, tables) = load_inputs(&inputs.manifest, &inputs.predictions)?;
            let reports = run_eval(&quads, &tables, Some(&config))?;
            write_reports(&reports, &out_dir, Format::Report)?;
            if tables.len() >= 2 {
                let ranking = ranking_stability(&tables, &quads, &config)?;
                write_file(&out_dir.join("ranking.csv"), &ranking_rows(&ranking)?)?;
            }
            Ok(())
        }
        Cmd::PlotData {
            kind,
            manifest,
            predictions,
            sessions,
            alphas,
            model_id,
            out_dir,
        } => {
            let kind: PlotKind = kind.parse()?;
            let body = match kind {
                PlotKind::Radar | PlotKind::FailureComposition => {
                    let (quads, tables) = load_inputs(&manifest, &predictions)?;
                    let reports = run_eval(&quads, &tables, None)?;
                    if kind == PlotKind::Radar {
                        radar_rows(&reports)?
                    } else {
                        failure_composition_rows(&reports)?
                    }
                }
                PlotKind::AlphaSweep => {
                    let sessions = sessions.ok_or_else(|| {
                        Failure::Usage("alpha-sweep needs --sessions".into())
                    })?;
                    if alphas.is_empty() {
                        return Err(Failure::Usage("alpha-sweep needs at least one --alpha".into()));
                    }
                    let quads = load_manifest(&manifest)?;
                    let recorded = load_sessions(&sessions)?;
                    let tables = replay_tables(&recorded, &alphas, &model_id, DEFAULT_STEP_LIMIT)?;
                    alpha_sweep_rows(&quads, &tables)?
                }
            };
            create_dir(&out_dir)?;
            let name = match kind {
                PlotKind::Radar => "radar.csv",
                PlotKind::FailureComposition => "failure_composition.csv",
                PlotKind::AlphaSweep => "alpha_sweep.csv",
            };
            write_file(&out_dir.join(name), &body)
        }
        Cmd::DecodeReplay {
            sessions,
            alphas,
            model_id,
            step_limit,
            out_dir,
        } => {
            let recorded = load_sessions(&sessions)?;
            let tables = replay_tables(&recorded, &alphas, &model_id, step_limit)?;
            create_dir(&out_dir)?;
            for (alpha, table) in tables {
                let path = out_dir.join(format!("predictions_alpha_{alpha}.jsonl"));
                write_file(&path, &write_predictions(&table))?;
                println!("alpha {alpha}: {} labels -> {}", table.len(), path.display());
            }
            Ok(())
        }
        Cmd::DecodeLive {
            manifest,
            runner,
            alpha,
            mode,
            model_id,
            step_limit,
            out_dir,
            runner_args,
        } => {
            let mode: FusionMode = mode.parse()?;
            let config = FusionConfig::new(alpha, mode)?;
            decode_live(&manifest, &runner, &runner_args, config, &model_id, step_limit, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Engine(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
