//! `teampulse` — badge-audio team interaction analytics.
//!
//! Stages are exposed as subcommands that compose through files, plus an
//! `analyze` command that runs the whole pipeline and writes one bundle.
//! Every knob can also be set through a `TEAMPULSE_`-prefixed
//! environment variable.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use teampulse_core::complexity::{
    complexity_series, series_from_csv, series_to_csv, team_average, ComplexitySeries, ScalePolicy,
};
use teampulse_core::error::{read_input, Error};
use teampulse_core::ingest::{
    parse_badge_log, recording_to_csv, recording_to_jsonl, resample_series, LogFormat,
};
use teampulse_core::instability::{
    detect_instabilities, detection_from_json, detection_to_json, segment_phases,
};
use teampulse_core::model::{align_members, Interval, Recording, Timestamp};
use teampulse_core::netmetrics::{build_network, network_from_json, network_to_json};
use teampulse_core::pipeline::{run_pipeline, PipelineConfig, StageError};
use teampulse_core::render::{annotations_from_json, emit_network_dot, render_heatmap, DotScale};
use teampulse_core::synth::{generate_recording, ScenarioSpec};
use teampulse_core::vad::{activity_from_jsonl, activity_to_jsonl, detect_voice_activity, VadParams};

#[derive(Parser)]
#[command(
    name = "teampulse",
    version,
    about = "Turn wearable-badge volume logs into dynamic-complexity heatmaps and interaction networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic badge log with planted regime transitions
    Simulate(SimulateArgs),
    /// Parse and validate a badge log, printing a summary
    Ingest(InputArgs),
    /// Detect per-second speakers, emitting JSONL
    Vad(VadCmdArgs),
    /// Compute sliding-window complexity per member, emitting CSV
    Complexity(ComplexityCmdArgs),
    /// Detect critical instabilities from a complexity CSV
    Detect(DetectCmdArgs),
    /// Build per-phase interaction networks from VAD output
    Networks(NetworksCmdArgs),
    /// Render the heatmap and network DOT files from stage outputs
    Render(RenderCmdArgs),
    /// Run the whole pipeline and write an analysis bundle
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Badge log to read
    #[arg(long, env = "TEAMPULSE_INPUT")]
    input: PathBuf,
    /// Input format (jsonl or csv)
    #[arg(long, default_value = "jsonl", env = "TEAMPULSE_FORMAT")]
    format: LogFormat,
    /// Badge frame length in seconds
    #[arg(long, default_value_t = 0.05, env = "TEAMPULSE_SAMPLE_PERIOD")]
    sample_period: f64,
}

#[derive(Args)]
struct VadFlags {
    /// Pairwise correlation threshold for cross-talk demotion
    #[arg(long, default_value_t = 0.40, env = "TEAMPULSE_VAD_THRESHOLD")]
    vad_threshold: f64,
    /// Noise floor margin over the rolling median
    #[arg(long, default_value_t = 1.5, env = "TEAMPULSE_VAD_FLOOR_MARGIN")]
    vad_floor_margin: f64,
    /// Rolling-median window in seconds
    #[arg(long, default_value_t = 60.0, env = "TEAMPULSE_VAD_FLOOR_WINDOW")]
    vad_floor_window: f64,
}

impl VadFlags {
    fn params(&self) -> VadParams {
        VadParams {
            threshold: self.vad_threshold,
            floor_margin: self.vad_floor_margin,
            floor_window_secs: self.vad_floor_window,
        }
    }
}

#[derive(Args)]
struct ComplexityFlags {
    /// Analysis period in seconds (series are averaged into bins this long)
    #[arg(long, default_value_t = 5.0, env = "TEAMPULSE_RESAMPLE_PERIOD")]
    resample_period: f64,
    /// Minimum non-missing fraction for a resampled bin
    #[arg(long, default_value_t = 0.5, env = "TEAMPULSE_MIN_BIN_COVERAGE")]
    min_bin_coverage: f64,
    /// Sliding window length in samples
    #[arg(long, default_value_t = 12, env = "TEAMPULSE_DC_WINDOW")]
    dc_window: usize,
    /// Window increment in samples
    #[arg(long, default_value_t = 1, env = "TEAMPULSE_DC_STEP")]
    dc_step: usize,
    /// Scale policy: global, window, or fixed:<lo>:<hi>
    #[arg(long, default_value = "global", env = "TEAMPULSE_SCALE")]
    scale: ScalePolicy<f64>,
}

#[derive(Args)]
struct DetectFlags {
    /// Trailing statistics window in complexity points
    #[arg(long, default_value_t = 60, env = "TEAMPULSE_DETECT_WINDOW")]
    detect_window: usize,
    /// Standard-deviation multiplier for flagging
    #[arg(long, default_value_t = 2.0, env = "TEAMPULSE_SD_MULT")]
    sd_mult: f64,
    /// Merge gap in seconds between flagged points
    #[arg(long, default_value_t = 60.0, env = "TEAMPULSE_MERGE_GAP")]
    merge_gap: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Where to write the badge log
    #[arg(long)]
    out: PathBuf,
    /// Where to write the ground-truth sidecar JSON
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Scenario description JSON (defaults to the built-in four-phase scenario)
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Member count for the built-in scenario
    #[arg(long, default_value_t = 7)]
    members: usize,
    /// Random seed
    #[arg(long, default_value_t = 42, env = "TEAMPULSE_SEED")]
    seed: u64,
    /// Output format (jsonl or csv)
    #[arg(long, default_value = "jsonl", env = "TEAMPULSE_FORMAT")]
    format: LogFormat,
}

#[derive(Args)]
struct VadCmdArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    vad: VadFlags,
    /// Write JSONL here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityCmdArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    complexity: ComplexityFlags,
    /// Write CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectCmdArgs {
    /// Complexity CSV produced by the complexity stage
    #[arg(long)]
    complexity: PathBuf,
    #[command(flatten)]
    detect: DetectFlags,
    /// Recording start for the phase partition (defaults to the first window end)
    #[arg(long)]
    span_start: Option<String>,
    /// Recording end for the phase partition (defaults to the last window end)
    #[arg(long)]
    span_end: Option<String>,
    /// Write JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NetworksCmdArgs {
    /// Activity JSONL produced by the vad stage
    #[arg(long)]
    activity: PathBuf,
    /// Events/phases JSON produced by the detect stage
    #[arg(long)]
    phases: PathBuf,
    /// Response window in seconds
    #[arg(long, default_value_t = 5.0, env = "TEAMPULSE_RESPONSE_WINDOW")]
    response_window: f64,
    /// Include directed response counts
    #[arg(long)]
    directed: bool,
    /// Directory for phase_NN.json files
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RenderCmdArgs {
    /// Complexity CSV for the heatmap
    #[arg(long)]
    complexity: PathBuf,
    /// Events/phases JSON for the instability row
    #[arg(long)]
    events: PathBuf,
    /// Directory of phase_NN.json networks to render as DOT
    #[arg(long)]
    networks: Option<PathBuf>,
    /// Annotations JSON drawn along the heatmap top
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    vad: VadFlags,
    #[command(flatten)]
    complexity: ComplexityFlags,
    #[command(flatten)]
    detect: DetectFlags,
    /// Response window in seconds
    #[arg(long, default_value_t = 5.0, env = "TEAMPULSE_RESPONSE_WINDOW")]
    response_window: f64,
    /// Include directed response counts in network JSON
    #[arg(long)]
    directed: bool,
    /// Annotations JSON drawn along the heatmap top
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Output directory for the bundle
    #[arg(long, env = "TEAMPULSE_OUT_DIR")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &CliError) -> u8 {
    match e {
        CliError::Stage(s) => {
            if s.source.is_data_error() {
                2
            } else {
                3
            }
        }
        CliError::Core(c) => {
            if c.is_data_error() {
                2
            } else {
                3
            }
        }
    }
}

enum CliError {
    Core(Error),
    Stage(StageError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Stage(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        CliError::Stage(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Ingest(args) => ingest_summary(args),
        Command::Vad(args) => vad_cmd(args),
        Command::Complexity(args) => complexity_cmd(args),
        Command::Detect(args) => detect_cmd(args),
        Command::Networks(args) => networks_cmd(args),
        Command::Render(args) => render_cmd(args),
        Command::Analyze(args) => analyze_cmd(args),
    }
}

fn load_recording(args: &InputArgs) -> Result<Recording<f64>, Error> {
    let rec = parse_badge_log(&args.input, args.format, args.sample_period)?;
    align_members(rec)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let spec = match &args.scenario {
        Some(path) => {
            let text = read_input(path)?;
            serde_json::from_str::<ScenarioSpec>(&text).map_err(Error::from)?
        }
        None => ScenarioSpec::four_phase(args.members, args.seed),
    };
    let (rec, truth) = generate_recording(&spec)?;
    let log = match args.format {
        LogFormat::Jsonl => recording_to_jsonl(&rec),
        LogFormat::Csv => recording_to_csv(&rec),
    };
    std::fs::write(&args.out, log).map_err(Error::from)?;
    if let Some(truth_path) = &args.truth {
        std::fs::write(truth_path, truth.to_json()).map_err(Error::from)?;
    }
    eprintln!(
        "wrote {} ({} members, {} s, {} transitions)",
        args.out.display(),
        rec.members.len(),
        truth.speakers.len(),
        truth.transitions.len()
    );
    Ok(())
}

fn ingest_summary(args: InputArgs) -> Result<(), CliError> {
    let rec = load_recording(&args)?;
    let span = rec.span();
    let coverage: std::collections::BTreeMap<&str, f64> = rec
        .series
        .iter()
        .map(|s| {
            (
                s.member.as_str(),
                s.defined_count() as f64 / s.len().max(1) as f64,
            )
        })
        .collect();
    let doc = serde_json::json!({
        "members": rec.members.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "samples_per_member": rec.series[0].len(),
        "sample_period": rec.sample_period(),
        "start": span.start.to_iso_millis(),
        "end": span.end.to_iso_millis(),
        "coverage": coverage,
    });
    println!("{}", serde_json::to_string_pretty(&doc).map_err(Error::from)?);
    Ok(())
}

fn vad_cmd(args: VadCmdArgs) -> Result<(), CliError> {
    let rec = load_recording(&args.input)?;
    let activity = detect_voice_activity(&rec, &args.vad.params())?;
    write_or_print(&args.out, &activity_to_jsonl(&activity))?;
    Ok(())
}

fn member_complexity(
    rec: &Recording<f64>,
    flags: &ComplexityFlags,
) -> Result<Vec<ComplexitySeries<f64>>, Error> {
    rec.series
        .iter()
        .map(|s| {
            let resampled = resample_series(s, flags.resample_period, flags.min_bin_coverage)?;
            let series = complexity_series(&resampled, flags.dc_window, flags.dc_step, flags.scale)?;
            if series.is_empty() {
                eprintln!(
                    "warning: member {} has fewer than {} analysis samples; no windows computed",
                    s.member, flags.dc_window
                );
            }
            Ok(series)
        })
        .collect()
}

fn complexity_cmd(args: ComplexityCmdArgs) -> Result<(), CliError> {
    let rec = load_recording(&args.input)?;
    let series = member_complexity(&rec, &args.complexity)?;
    let refs: Vec<&ComplexitySeries<f64>> = series.iter().collect();
    write_or_print(&args.out, &series_to_csv(&refs))?;
    Ok(())
}

fn detect_cmd(args: DetectCmdArgs) -> Result<(), CliError> {
    let text = read_input(&args.complexity)?;
    let series = series_from_csv(&text)?;
    let average = team_average(&series)?;
    let events = detect_instabilities(
        &average,
        args.detect.detect_window,
        args.detect.sd_mult,
        args.detect.merge_gap,
    )?;
    let start = match &args.span_start {
        Some(s) => Timestamp::parse_iso(s)?,
        None => average.window_end_times[0],
    };
    let end = match &args.span_end {
        Some(s) => Timestamp::parse_iso(s)?,
        None => *average.window_end_times.last().unwrap(),
    };
    let segmentation = segment_phases(&events, Interval::new(start, end))?;
    write_or_print(&args.out, &detection_to_json(&events, &segmentation))?;
    Ok(())
}

fn networks_cmd(args: NetworksCmdArgs) -> Result<(), CliError> {
    let activity_text = read_input(&args.activity)?;
    let activity = activity_from_jsonl(&activity_text)?;
    let events_text = read_input(&args.phases)?;
    let (_, segmentation) = detection_from_json(&events_text)?;
    std::fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    for (i, phase) in segmentation.phases.iter().enumerate() {
        let network = build_network(&activity, *phase, args.response_window)?;
        let path = args.out_dir.join(format!("phase_{i:02}.json"));
        std::fs::write(&path, network_to_json(&network, args.directed)).map_err(Error::from)?;
    }
    eprintln!(
        "wrote {} phase networks to {}",
        segmentation.phases.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn render_cmd(args: RenderCmdArgs) -> Result<(), CliError> {
    let text = read_input(&args.complexity)?;
    let series = series_from_csv(&text)?;
    let average = team_average(&series)?;
    let events_text = read_input(&args.events)?;
    let (events, _) = detection_from_json(&events_text)?;
    let annotations = match &args.annotations {
        Some(path) => {
            let text = read_input(path)?;
            annotations_from_json(&text)?
        }
        None => Vec::new(),
    };
    std::fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    let refs: Vec<&ComplexitySeries<f64>> = series.iter().collect();
    let svg = render_heatmap(&refs, &average, &events, &annotations)?;
    std::fs::write(args.out_dir.join("heatmap.svg"), svg).map_err(Error::from)?;

    if let Some(dir) = &args.networks {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(Error::from)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.extension().is_some_and(|x| x == "json")
                    && p.file_stem()
                        .and_then(|s| s.to_str())
                        .is_some_and(|s| s.starts_with("phase_"))
            })
            .collect();
        paths.sort();
        let networks = paths
            .iter()
            .map(|p| {
                let text = read_input(p)?;
                network_from_json(&text)
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let scale = DotScale::from_networks(networks.iter());
        for (path, network) in paths.iter().zip(&networks) {
            let dot = emit_network_dot(network, &scale)?;
            let out = args
                .out_dir
                .join(path.file_stem().unwrap())
                .with_extension("dot");
            std::fs::write(out, dot).map_err(Error::from)?;
        }
    }
    Ok(())
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<(), CliError> {
    let mut config = PipelineConfig::new(&args.input.input, &args.out_dir);
    config.format = args.input.format;
    config.sample_period = args.input.sample_period;
    config.resample_period = args.complexity.resample_period;
    config.min_bin_coverage = args.complexity.min_bin_coverage;
    config.dc_window = args.complexity.dc_window;
    config.dc_step = args.complexity.dc_step;
    config.scale = args.complexity.scale;
    config.detect_window = args.detect.detect_window;
    config.sd_mult = args.detect.sd_mult;
    config.merge_gap_secs = args.detect.merge_gap;
    config.vad = args.vad.params();
    config.response_window_secs = args.response_window;
    config.annotations = args.annotations.clone();
    config.directed = args.directed;

    let outputs = run_pipeline(&config)?;
    println!(
        "{} members, {} complexity windows, {} instabilities, {} phases",
        outputs.recording.members.len(),
        outputs.average.len(),
        outputs.events.len(),
        outputs.segmentation.phases.len()
    );
    for f in &outputs.files {
        println!("  {}", Path::new(&args.out_dir).join(f).display());
    }
    Ok(())
}
