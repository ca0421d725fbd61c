//! End-to-end pipeline: badge log in, analysis bundle out.
//!
//! One call runs ingest, voice activity detection, complexity analysis,
//! instability detection, per-phase network construction and figure
//! rendering, then writes the whole bundle plus a manifest capturing
//! every parameter and the input hash. Identical inputs and parameters
//! produce a byte-identical bundle.

use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::complexity::{self, complexity_series, team_average, ComplexitySeries, ScalePolicy};
use crate::error::{Error, Result};
use crate::ingest::{self, parse_badge_log, resample_series, LogFormat};
use crate::instability::{detect_instabilities, segment_phases, InstabilityEvent, PhaseSegmentation};
use crate::model::{align_members, Recording};
use crate::netmetrics::{build_network, network_to_json, InteractionNetwork};
use crate::render::{annotations_from_json, emit_network_dot, render_heatmap, Annotation, DotScale};
use crate::vad::{activity_to_jsonl, detect_voice_activity, SpeakerActivity, VadParams};

/// Pipeline stage names, used to attribute failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Vad,
    Complexity,
    Detect,
    Networks,
    Render,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Vad => "vad",
            Stage::Complexity => "complexity",
            Stage::Detect => "detect",
            Stage::Networks => "networks",
            Stage::Render => "render",
            Stage::Write => "write",
        })
    }
}

/// A pipeline failure, attributed to the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Full parameter set for one run. Defaults follow the published
/// configuration: 5 s resampling, window 12 step 1, detection window 60
/// at 2 standard deviations, VAD threshold 0.40, 5 s response window.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: LogFormat,
    pub out_dir: PathBuf,
    /// Badge frame length in seconds.
    pub sample_period: f64,
    /// Analysis rate for complexity, in seconds per sample.
    pub resample_period: f64,
    /// Minimum non-missing fraction for a resampled bin to be defined.
    pub min_bin_coverage: f64,
    pub dc_window: usize,
    pub dc_step: usize,
    pub scale: ScalePolicy<f64>,
    pub detect_window: usize,
    pub sd_mult: f64,
    pub merge_gap_secs: f64,
    pub vad: VadParams,
    pub response_window_secs: f64,
    /// Optional annotations JSON drawn along the heatmap top.
    pub annotations: Option<PathBuf>,
    /// Include directed response counts in network JSON.
    pub directed: bool,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            format: LogFormat::Jsonl,
            out_dir: out_dir.into(),
            sample_period: ingest::BADGE_FRAME_SECS,
            resample_period: 5.0,
            min_bin_coverage: 0.5,
            dc_window: complexity::DEFAULT_WINDOW,
            dc_step: complexity::DEFAULT_STEP,
            scale: ScalePolicy::Global,
            detect_window: crate::instability::DEFAULT_DETECT_WINDOW,
            sd_mult: crate::instability::DEFAULT_SD_MULT,
            merge_gap_secs: crate::instability::DEFAULT_MERGE_GAP_SECS,
            vad: VadParams::default(),
            response_window_secs: crate::netmetrics::DEFAULT_RESPONSE_WINDOW_SECS,
            annotations: None,
            directed: false,
        }
    }
}

/// Everything a run computed, before or after writing.
#[derive(Debug)]
pub struct PipelineOutputs {
    pub recording: Recording<f64>,
    pub activity: SpeakerActivity,
    pub per_member: Vec<ComplexitySeries<f64>>,
    pub average: ComplexitySeries<f64>,
    pub events: Vec<InstabilityEvent>,
    pub segmentation: PhaseSegmentation,
    pub networks: Vec<InteractionNetwork>,
    pub heatmap_svg: String,
    pub network_dots: Vec<String>,
    /// Files written, relative to the output directory.
    pub files: Vec<PathBuf>,
}

fn stage(s: Stage) -> impl FnOnce(Error) -> StageError {
    move |source| StageError { stage: s, source }
}

/// Run every stage in memory (no files written). Useful for tests and
/// for callers that want the intermediate products.
pub fn run_stages(config: &PipelineConfig) -> std::result::Result<PipelineOutputs, StageError> {
    let recording: Recording<f64> =
        parse_badge_log(&config.input, config.format, config.sample_period)
            .and_then(align_members)
            .map_err(stage(Stage::Ingest))?;

    analyze_recording(config, recording)
}

/// Like [`run_stages`] but starting from an in-memory recording.
pub fn analyze_recording(
    config: &PipelineConfig,
    recording: Recording<f64>,
) -> std::result::Result<PipelineOutputs, StageError> {
    let recording = align_members(recording).map_err(stage(Stage::Ingest))?;
    let activity = detect_voice_activity(&recording, &config.vad).map_err(stage(Stage::Vad))?;

    let per_member: Vec<ComplexitySeries<f64>> = recording
        .series
        .iter()
        .map(|s| {
            let resampled = resample_series(s, config.resample_period, config.min_bin_coverage)?;
            complexity_series(&resampled, config.dc_window, config.dc_step, config.scale)
        })
        .collect::<Result<_>>()
        .map_err(stage(Stage::Complexity))?;

    let average = team_average(&per_member).map_err(stage(Stage::Complexity))?;
    let events = detect_instabilities(
        &average,
        config.detect_window,
        config.sd_mult,
        config.merge_gap_secs,
    )
    .map_err(stage(Stage::Detect))?;
    let span = recording.span();
    let segmentation = segment_phases(&events, span).map_err(stage(Stage::Detect))?;

    let networks: Vec<InteractionNetwork> = segmentation
        .phases
        .iter()
        .map(|p| build_network(&activity, *p, config.response_window_secs))
        .collect::<Result<_>>()
        .map_err(stage(Stage::Networks))?;

    let annotations: Vec<Annotation> = match &config.annotations {
        Some(path) => crate::error::read_input(path)
            .and_then(|text| annotations_from_json(&text))
            .map_err(stage(Stage::Render))?,
        None => Vec::new(),
    };
    let member_refs: Vec<&ComplexitySeries<f64>> = per_member.iter().collect();
    let heatmap_svg = render_heatmap(&member_refs, &average, &events, &annotations)
        .map_err(stage(Stage::Render))?;
    let dot_scale = DotScale::from_networks(networks.iter());
    let network_dots: Vec<String> = networks
        .iter()
        .map(|n| emit_network_dot(n, &dot_scale))
        .collect::<Result<_>>()
        .map_err(stage(Stage::Render))?;

    Ok(PipelineOutputs {
        recording,
        activity,
        per_member,
        average,
        events,
        segmentation,
        networks,
        heatmap_svg,
        network_dots,
        files: Vec::new(),
    })
}

fn scale_to_string(scale: &ScalePolicy<f64>) -> String {
    match scale {
        ScalePolicy::Global => "global".into(),
        ScalePolicy::Window => "window".into(),
        ScalePolicy::Fixed { lo, hi } => format!("fixed:{lo}:{hi}"),
    }
}

fn manifest_json(config: &PipelineConfig, input_sha256: &str, files: &[PathBuf]) -> String {
    let files: Vec<String> = files
        .iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    let doc = serde_json::json!({
        "input": config.input.to_string_lossy(),
        "input_sha256": input_sha256,
        "format": config.format.to_string(),
        "parameters": {
            "sample_period": config.sample_period,
            "resample_period": config.resample_period,
            "min_bin_coverage": config.min_bin_coverage,
            "dc_window": config.dc_window,
            "dc_step": config.dc_step,
            "scale": scale_to_string(&config.scale),
            "detect_window": config.detect_window,
            "sd_mult": config.sd_mult,
            "merge_gap_secs": config.merge_gap_secs,
            "vad_threshold": config.vad.threshold,
            "vad_floor_margin": config.vad.floor_margin,
            "vad_floor_window_secs": config.vad.floor_window_secs,
            "response_window_secs": config.response_window_secs,
            "directed": config.directed,
        },
        "outputs": files,
        "version": env!("CARGO_PKG_VERSION"),
    });
    serde_json::to_string_pretty(&doc).expect("manifest serializes")
}

/// Run the pipeline and write the bundle: `vad.jsonl`, `complexity.csv`,
/// `events.json`, `networks/phase_NN.{json,dot}`, `heatmap.svg` and
/// `manifest.json`. On any failure every file written so far is removed.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<PipelineOutputs, StageError> {
    let mut outputs = run_stages(config)?;

    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_bundle(config, &mut outputs, &mut written);
    match result {
        Ok(()) => Ok(outputs),
        Err(e) => {
            for f in written.iter().rev() {
                let _ = std::fs::remove_file(config.out_dir.join(f));
            }
            let _ = std::fs::remove_dir(config.out_dir.join("networks"));
            Err(StageError {
                stage: Stage::Write,
                source: e,
            })
        }
    }
}

fn write_bundle(
    config: &PipelineConfig,
    outputs: &mut PipelineOutputs,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let out = &config.out_dir;
    std::fs::create_dir_all(out.join("networks"))?;

    let write = |rel: PathBuf, content: &str, written: &mut Vec<PathBuf>| -> Result<()> {
        std::fs::write(out.join(&rel), content)?;
        written.push(rel);
        Ok(())
    };

    write(
        PathBuf::from("vad.jsonl"),
        &activity_to_jsonl(&outputs.activity),
        written,
    )?;
    let member_refs: Vec<&ComplexitySeries<f64>> = outputs.per_member.iter().collect();
    write(
        PathBuf::from("complexity.csv"),
        &complexity::series_to_csv(&member_refs),
        written,
    )?;
    write(
        PathBuf::from("events.json"),
        &crate::instability::detection_to_json(&outputs.events, &outputs.segmentation),
        written,
    )?;
    for (i, (network, dot)) in outputs
        .networks
        .iter()
        .zip(&outputs.network_dots)
        .enumerate()
    {
        write(
            PathBuf::from(format!("networks/phase_{i:02}.json")),
            &network_to_json(network, config.directed),
            written,
        )?;
        write(PathBuf::from(format!("networks/phase_{i:02}.dot")), dot, written)?;
    }
    write(PathBuf::from("heatmap.svg"), &outputs.heatmap_svg, written)?;

    let digest = sha256_file(&config.input)?;
    let manifest = manifest_json(config, &digest, written);
    write(PathBuf::from("manifest.json"), &manifest, written)?;

    outputs.files = written.clone();
    Ok(())
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
