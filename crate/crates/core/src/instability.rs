//! Critical-instability detection over a team-average complexity series,
//! and the phase segmentation the events induce.
//!
//! A point is flagged when its DC value exceeds the mean of a trailing
//! window by a multiple of that window's standard deviation; runs of
//! flags closer together than a merge gap collapse into a single event at
//! their highest-DC point. The recording interval cut at the event times
//! gives the phases that the network stage summarizes one by one.

use serde::{Deserialize, Serialize};

use crate::complexity::ComplexitySeries;
use crate::error::{Error, Result};
use crate::model::{Interval, Timestamp};
use crate::num::{mean, population_sd};

/// Default trailing statistics window, in DC points (five minutes at the
/// one-window-per-5 s rate).
pub const DEFAULT_DETECT_WINDOW: usize = 60;
/// Default standard-deviation multiplier.
pub const DEFAULT_SD_MULT: f64 = 2.0;
/// Default merge gap in seconds: flags closer than this become one event.
pub const DEFAULT_MERGE_GAP_SECS: f64 = 60.0;

/// One detected critical instability, with the local statistics that
/// triggered it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityEvent {
    pub time: Timestamp,
    pub peak_dc: f64,
    pub window_mean: f64,
    pub window_sd: f64,
}

/// Ordered, gap-free partition of a recording interval at event times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSegmentation {
    pub phases: Vec<Interval>,
}

impl PhaseSegmentation {
    /// The event times this segmentation was cut at.
    pub fn cut_times(&self) -> Vec<Timestamp> {
        self.phases.iter().skip(1).map(|p| p.start).collect()
    }
}

/// Flag DC values exceeding `mean + sd_mult * sd` of their trailing
/// window (the window includes the point itself), then merge flags closer
/// than `merge_gap_secs` into single events at their maximum-DC point.
///
/// Undefined DC values are skipped: they are neither flaggable nor part
/// of the statistics. A full-size window with fewer than half its values
/// defined yields no flag.
pub fn detect_instabilities(
    avg: &ComplexitySeries<f64>,
    window: usize,
    sd_mult: f64,
    merge_gap_secs: f64,
) -> Result<Vec<InstabilityEvent>> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!(
            "detect window must be at least 2, got {window}"
        )));
    }
    if avg.len() < window {
        return Err(Error::TooShort(format!(
            "complexity series has {} points but the statistics window needs {window}; \
             use a smaller --detect-window",
            avg.len()
        )));
    }
    let min_defined = window.div_ceil(2);

    struct Flag {
        time: Timestamp,
        dc: f64,
        mean: f64,
        sd: f64,
    }

    let mut flags: Vec<Flag> = Vec::new();
    for t in (window - 1)..avg.len() {
        let Some(dc) = avg.dc[t] else { continue };
        let defined: Vec<f64> = avg.dc[t + 1 - window..=t].iter().flatten().copied().collect();
        if defined.len() < min_defined {
            continue;
        }
        let m = mean(&defined);
        let sd = population_sd(&defined);
        if dc > m + sd_mult * sd {
            flags.push(Flag {
                time: avg.window_end_times[t],
                dc,
                mean: m,
                sd,
            });
        }
    }

    let mut events = Vec::new();
    let mut group: Vec<Flag> = Vec::new();
    let flush = |group: &mut Vec<Flag>, events: &mut Vec<InstabilityEvent>| {
        if group.is_empty() {
            return;
        }
        let best = group
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.dc.partial_cmp(&b.dc)
                    .unwrap()
                    .then(ib.cmp(ia)) // ties: earliest flag wins
            })
            .map(|(_, f)| f)
            .unwrap();
        events.push(InstabilityEvent {
            time: best.time,
            peak_dc: best.dc,
            window_mean: best.mean,
            window_sd: best.sd,
        });
        group.clear();
    };
    for flag in flags {
        if let Some(last) = group.last() {
            if flag.time.secs_since(last.time) >= merge_gap_secs {
                flush(&mut group, &mut events);
            }
        }
        group.push(flag);
    }
    flush(&mut group, &mut events);
    Ok(events)
}

/// Cut `span` at the event times. Events must be sorted and lie within
/// the span; the result has exactly one more phase than there are events.
pub fn segment_phases(
    events: &[InstabilityEvent],
    span: Interval,
) -> Result<PhaseSegmentation> {
    let mut cuts = Vec::with_capacity(events.len());
    for e in events {
        if e.time < span.start || e.time > span.end {
            return Err(Error::OutOfSpan(format!(
                "event at {} lies outside recording span [{}, {}]",
                e.time, span.start, span.end
            )));
        }
        if let Some(&prev) = cuts.last() {
            if e.time < prev {
                return Err(Error::InvalidArgument(
                    "events must be sorted by time".into(),
                ));
            }
        }
        cuts.push(e.time);
    }

    let mut phases = Vec::with_capacity(cuts.len() + 1);
    let mut start = span.start;
    for cut in cuts {
        phases.push(Interval::new(start, cut));
        start = cut;
    }
    phases.push(Interval::new(start, span.end));
    Ok(PhaseSegmentation { phases })
}

/// JSON document with the event list and the phase partition, timestamps
/// in ISO-8601 milliseconds.
pub fn detection_to_json(events: &[InstabilityEvent], phases: &PhaseSegmentation) -> String {
    let events_json: Vec<serde_json::Value> = events
        .iter()
        .map(|e| {
            serde_json::json!({
                "t": e.time.to_iso_millis(),
                "dc": e.peak_dc,
                "mean": e.window_mean,
                "sd": e.window_sd,
            })
        })
        .collect();
    let phases_json: Vec<serde_json::Value> = phases
        .phases
        .iter()
        .map(|p| {
            serde_json::json!({
                "start": p.start.to_iso_millis(),
                "end": p.end.to_iso_millis(),
            })
        })
        .collect();
    let doc = serde_json::json!({ "events": events_json, "phases": phases_json });
    serde_json::to_string_pretty(&doc).expect("detection document serializes")
}

/// Parse the JSON produced by [`detection_to_json`].
pub fn detection_from_json(text: &str) -> Result<(Vec<InstabilityEvent>, PhaseSegmentation)> {
    #[derive(Deserialize)]
    struct EventDoc {
        t: String,
        dc: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default)]
        sd: f64,
    }
    #[derive(Deserialize)]
    struct PhaseDoc {
        start: String,
        end: String,
    }
    #[derive(Deserialize)]
    struct Doc {
        events: Vec<EventDoc>,
        phases: Vec<PhaseDoc>,
    }
    let doc: Doc = serde_json::from_str(text)?;
    let events = doc
        .events
        .iter()
        .map(|e| {
            Ok(InstabilityEvent {
                time: Timestamp::parse_iso(&e.t)?,
                peak_dc: e.dc,
                window_mean: e.mean,
                window_sd: e.sd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let phases = doc
        .phases
        .iter()
        .map(|p| Ok(Interval::new(Timestamp::parse_iso(&p.start)?, Timestamp::parse_iso(&p.end)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((events, PhaseSegmentation { phases }))
}
