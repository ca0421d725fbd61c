//! Batch analytics for multi-person wearable-badge audio logs.
//!
//! Given per-badge microphone amplitude series, the crate can
//!
//! * detect which members genuinely spoke each second ([`vad`]),
//! * score windowed dynamic complexity per member ([`complexity`]),
//! * locate critical instabilities in the team average and cut the
//!   recording into phases ([`instability`]),
//! * summarize each phase as a speaker-energy / pairwise-engagement
//!   network ([`netmetrics`]),
//! * render a complexity heatmap (SVG) and the phase networks (DOT)
//!   deterministically ([`render`]),
//! * and generate synthetic recordings with planted ground truth for
//!   end-to-end validation ([`synth`]).
//!
//! [`pipeline`] wires the stages together behind one config. The
//! windowed math is generic over the scalar type through [`num::Real`]
//! (`f32` or `f64`); the aliases below fix the pipeline's scalar to
//! [`Value`].

pub mod complexity;
pub mod error;
pub mod ingest;
pub mod instability;
pub mod model;
pub mod netmetrics;
pub mod num;
pub mod pipeline;
pub mod render;
pub mod synth;
pub mod vad;

/// Scalar type the pipeline runs on.
pub type Value = f64;

/// Pipeline-scalar volume series.
pub type VolumeSeries = model::VolumeSeries<Value>;
/// Pipeline-scalar recording.
pub type Recording = model::Recording<Value>;
/// Pipeline-scalar analysis window.
pub type AnalysisWindow = complexity::AnalysisWindow<Value>;
/// Pipeline-scalar complexity series.
pub type ComplexitySeries = complexity::ComplexitySeries<Value>;
/// Pipeline-scalar window scale policy.
pub type ScalePolicy = complexity::ScalePolicy<Value>;

pub use error::{Error, Result};
pub use model::{Interval, MemberId, Timestamp};
