//! Windowed dynamic-complexity measures.
//!
//! Dynamic complexity (DC) scores how complex a stretch of a regularly
//! sampled series is. It is the product of two components, each in
//! `[0, 1]`:
//!
//! * **Fluctuation (F)** — how often and how strongly the series swings
//!   between points of return (indices where the gradient changes sign
//!   class), normalized by the largest swing the window could show: a
//!   full-scale flip at every step.
//! * **Distribution (D)** — how evenly the window's sorted values fill
//!   the measurement scale. For every sub-window and every value pair
//!   inside it, the shortfall of the observed gap against the gap an
//!   evenly spaced series would show is accumulated (only positive
//!   shortfalls count), each normalized by the even-spacing gap; the
//!   grand total is averaged over the number of tuples and subtracted
//!   from one.
//!
//! Both components, hence DC, peak for busy, evenly spread windows and
//! vanish for constant ones. Sliding DC over a series and watching for
//! local spikes is what the instability detector does downstream.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{MemberId, Timestamp, VolumeSeries};
use crate::num::Real;

/// Smallest window the measures accept.
pub const MIN_WINDOW: usize = 7;
/// Default sliding-window length in samples (one minute at the 5 s rate).
pub const DEFAULT_WINDOW: usize = 12;
/// Default window increment in samples.
pub const DEFAULT_STEP: usize = 1;
/// Label given to the team-average series.
pub const AVERAGE_LABEL: &str = "Average";

/// A gap-free window of samples together with the measurement-scale
/// bounds used for normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisWindow<R: Real> {
    values: Vec<R>,
    scale_min: R,
    scale_max: R,
}

impl<R: Real> AnalysisWindow<R> {
    /// The bounds must envelop the values; a degenerate scale
    /// (`scale_min == scale_max`) is allowed and makes F and D zero by
    /// convention.
    pub fn new(values: Vec<R>, scale_min: R, scale_max: R) -> Result<Self> {
        if values.len() < MIN_WINDOW {
            return Err(Error::InvalidArgument(format!(
                "window needs at least {MIN_WINDOW} samples, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("window contains non-finite values".into()));
        }
        if scale_min > scale_max {
            return Err(Error::InvalidArgument("scale_min must not exceed scale_max".into()));
        }
        let lo = values.iter().copied().fold(R::infinity(), R::min);
        let hi = values.iter().copied().fold(R::neg_infinity(), R::max);
        if scale_min > lo || scale_max < hi {
            return Err(Error::InvalidArgument(format!(
                "scale bounds [{:?}, {:?}] do not cover window range [{lo:?}, {hi:?}]",
                scale_min, scale_max
            )));
        }
        Ok(AnalysisWindow {
            values,
            scale_min,
            scale_max,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn scale(&self) -> (R, R) {
        (self.scale_min, self.scale_max)
    }
}

/// Indices of the window's first point, every point of return (where the
/// gradient stops being positive, zero, or negative), and the last point.
/// Between consecutive indices the series is weakly monotone one way.
pub fn return_point_indices<R: Real>(values: &[R]) -> Vec<usize> {
    let m = values.len();
    let mut indices = vec![0];
    if m >= 2 {
        let class = |a: R, b: R| -> Ordering {
            b.partial_cmp(&a).expect("window values are finite")
        };
        let mut prev = class(values[0], values[1]);
        for i in 1..m - 1 {
            let next = class(values[i], values[i + 1]);
            if next != prev {
                indices.push(i);
                prev = next;
            }
        }
        indices.push(m - 1);
    }
    indices
}

/// Fluctuation: summed per-segment rates of change between points of
/// return, over the maximum possible fluctuation for the window size.
pub fn fluctuation<R: Real>(window: &AnalysisWindow<R>) -> R {
    let range = window.scale_max - window.scale_min;
    if range <= R::zero() {
        return R::zero();
    }
    let x = &window.values;
    let pts = return_point_indices(x);
    let mut sum = R::zero();
    for pair in pts.windows(2) {
        let (n1, n2) = (pair[0], pair[1]);
        sum = sum + (x[n2] - x[n1]).abs() / R::from_count(n2 - n1);
    }
    sum / (range * R::from_count(window.len() - 1))
}

/// Distribution: one minus the mean normalized positive disparity between
/// observed sorted gaps and the evenly spaced expectation, taken over
/// every (sub-window, pair) tuple.
///
/// A pair `a < b` (1-based positions in the sorted window) appears in
/// `a * (m - b + 1)` sub-windows, so the quadruple sum over sub-windows
/// and pairs collapses to one weighted pass over the pairs.
pub fn distribution<R: Real>(window: &AnalysisWindow<R>) -> R {
    let m = window.len();
    let range = window.scale_max - window.scale_min;
    if range <= R::zero() {
        return R::zero();
    }
    let mut sorted = window.values.clone();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("window values are finite"));
    let spacing = range / R::from_count(m - 1);

    let mut sum = R::zero();
    let mut tuples: u64 = 0;
    for a in 1..m {
        for b in (a + 1)..=m {
            let weight = (a * (m - b + 1)) as u64;
            let expected = spacing * R::from_count(b - a);
            let observed = sorted[b - 1] - sorted[a - 1];
            let disparity = expected - observed;
            if disparity > R::zero() {
                // Dividing before weighting keeps the degenerate cases
                // exact: a constant window contributes exactly 1 per tuple.
                sum = sum + R::from_count(weight as usize) * (disparity / expected);
            }
            tuples += weight;
        }
    }
    R::one() - sum / R::from_count(tuples as usize)
}

/// Dynamic complexity: the product of fluctuation and distribution.
pub fn dynamic_complexity<R: Real>(window: &AnalysisWindow<R>) -> R {
    fluctuation(window) * distribution(window)
}

/// How the scale bounds of each analysis window are chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalePolicy<R: Real> {
    /// Min/max over the member's full series (default: badge volume has
    /// no fixed instrument scale, so the series itself defines one).
    Global,
    /// Min/max of each window by itself.
    Window,
    /// Fixed bounds, widened per window if a window falls outside them.
    Fixed { lo: R, hi: R },
}

impl std::str::FromStr for ScalePolicy<f64> {
    type Err = Error;

    /// `global`, `window`, or `fixed:<lo>:<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ScalePolicy::Global),
            "window" => Ok(ScalePolicy::Window),
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                if parts.len() == 3 && parts[0] == "fixed" {
                    let lo: f64 = parts[1]
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad scale bound {:?}", parts[1])))?;
                    let hi: f64 = parts[2]
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad scale bound {:?}", parts[2])))?;
                    if lo.is_nan() || hi.is_nan() || lo >= hi {
                        return Err(Error::InvalidArgument(format!(
                            "fixed scale needs lo < hi, got {lo}..{hi}"
                        )));
                    }
                    Ok(ScalePolicy::Fixed { lo, hi })
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown scale policy {other:?} (expected global, window, or fixed:<lo>:<hi>)"
                    )))
                }
            }
        }
    }
}

/// Sliding F, D and DC values for one member, each window stamped at the
/// time of its last sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexitySeries<R: Real> {
    pub member: MemberId,
    pub window_end_times: Vec<Timestamp>,
    pub f: Vec<Option<R>>,
    pub d: Vec<Option<R>>,
    pub dc: Vec<Option<R>>,
    /// Members contributing per point: 0/1 for a per-member series, the
    /// defined-member count for a team average.
    pub contributors: Vec<u32>,
}

impl<R: Real> ComplexitySeries<R> {
    pub fn len(&self) -> usize {
        self.dc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dc.is_empty()
    }

    pub fn defined_dc(&self) -> usize {
        self.dc.iter().filter(|v| v.is_some()).count()
    }
}

/// Slide a window over a resampled series and evaluate the three measures
/// at each position. Windows containing any missing sample yield an
/// undefined triple. A series shorter than the window yields an empty
/// result (callers may warn).
pub fn complexity_series<R: Real>(
    series: &VolumeSeries<R>,
    window: usize,
    step: usize,
    policy: ScalePolicy<R>,
) -> Result<ComplexitySeries<R>> {
    if window < MIN_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "window must be at least {MIN_WINDOW}, got {window}"
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }

    let mut out = ComplexitySeries {
        member: series.member.clone(),
        window_end_times: Vec::new(),
        f: Vec::new(),
        d: Vec::new(),
        dc: Vec::new(),
        contributors: Vec::new(),
    };
    if series.len() < window {
        return Ok(out);
    }

    let global = {
        let defined: Vec<R> = series.samples.iter().flatten().copied().collect();
        if defined.is_empty() {
            (R::zero(), R::zero())
        } else {
            (
                defined.iter().copied().fold(R::infinity(), R::min),
                defined.iter().copied().fold(R::neg_infinity(), R::max),
            )
        }
    };

    let mut pos = 0;
    while pos + window <= series.len() {
        let slice = &series.samples[pos..pos + window];
        out.window_end_times.push(series.time_at(pos + window - 1));
        if slice.iter().any(|s| s.is_none()) {
            out.f.push(None);
            out.d.push(None);
            out.dc.push(None);
            out.contributors.push(0);
        } else {
            let values: Vec<R> = slice.iter().flatten().copied().collect();
            let wmin = values.iter().copied().fold(R::infinity(), R::min);
            let wmax = values.iter().copied().fold(R::neg_infinity(), R::max);
            let (lo, hi) = match policy {
                ScalePolicy::Global => global,
                ScalePolicy::Window => (wmin, wmax),
                ScalePolicy::Fixed { lo, hi } => (lo.min(wmin), hi.max(wmax)),
            };
            let aw = AnalysisWindow::new(values, lo, hi)?;
            let f = fluctuation(&aw);
            let d = distribution(&aw);
            out.f.push(Some(f));
            out.d.push(Some(d));
            out.dc.push(Some(f * d));
            out.contributors.push(1);
        }
        pos += step;
    }
    Ok(out)
}

/// Pointwise mean of per-member complexity values. A point is defined
/// whenever at least one member is defined there; the contributor count
/// records how many were.
pub fn team_average<R: Real>(per_member: &[ComplexitySeries<R>]) -> Result<ComplexitySeries<R>> {
    let first = per_member
        .first()
        .ok_or_else(|| Error::EmptyInput("team_average needs at least one series".into()))?;
    for s in per_member {
        if s.window_end_times != first.window_end_times {
            return Err(Error::InvalidArgument(format!(
                "complexity series for {} is not on the common window grid",
                s.member
            )));
        }
    }

    let n = first.len();
    let mut out = ComplexitySeries {
        member: MemberId::new(AVERAGE_LABEL),
        window_end_times: first.window_end_times.clone(),
        f: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        dc: Vec::with_capacity(n),
        contributors: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mean_of = |pick: fn(&ComplexitySeries<R>) -> &Vec<Option<R>>| -> Option<R> {
            let defined: Vec<R> = per_member.iter().filter_map(|s| pick(s)[i]).collect();
            if defined.is_empty() {
                None
            } else {
                Some(crate::num::mean(&defined))
            }
        };
        let count = per_member.iter().filter(|s| s.dc[i].is_some()).count() as u32;
        out.f.push(mean_of(|s| &s.f));
        out.d.push(mean_of(|s| &s.d));
        out.dc.push(mean_of(|s| &s.dc));
        out.contributors.push(count);
    }
    Ok(out)
}

/// CSV with a `member,window_end_t,F,D,DC` header, one row per window and
/// series, undefined measures left empty.
pub fn series_to_csv<R: Real>(series: &[&ComplexitySeries<R>]) -> String {
    let mut out = String::from("member,window_end_t,F,D,DC\n");
    for s in series {
        for i in 0..s.len() {
            let cell = |v: Option<R>| match v {
                Some(x) => format!("{}", x.to_f64().unwrap_or(f64::NAN)),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.member,
                s.window_end_times[i].to_iso_millis(),
                cell(s.f[i]),
                cell(s.d[i]),
                cell(s.dc[i]),
            ));
        }
    }
    out
}

/// Parse the CSV emitted by [`series_to_csv`] back into per-member series
/// (in first-appearance order).
pub fn series_from_csv(text: &str) -> Result<Vec<ComplexitySeries<f64>>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut order: Vec<MemberId> = Vec::new();
    let mut map: std::collections::BTreeMap<MemberId, ComplexitySeries<f64>> =
        std::collections::BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line_no = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if record.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 5 fields, got {}", record.len()),
            });
        }
        let member = MemberId::new(record[0].to_string());
        let t = Timestamp::parse_iso(&record[1])?;
        let parse_cell = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })
            }
        };
        let f = parse_cell(&record[2])?;
        let d = parse_cell(&record[3])?;
        let dc = parse_cell(&record[4])?;
        if !map.contains_key(&member) {
            order.push(member.clone());
            map.insert(
                member.clone(),
                ComplexitySeries {
                    member: member.clone(),
                    window_end_times: Vec::new(),
                    f: Vec::new(),
                    d: Vec::new(),
                    dc: Vec::new(),
                    contributors: Vec::new(),
                },
            );
        }
        let s = map.get_mut(&member).unwrap();
        s.window_end_times.push(t);
        s.f.push(f);
        s.d.push(d);
        s.dc.push(dc);
        s.contributors.push(if dc.is_some() { 1 } else { 0 });
    }
    if order.is_empty() {
        return Err(Error::EmptyInput("complexity CSV has no rows".into()));
    }
    Ok(order.into_iter().map(|m| map.remove(&m).unwrap()).collect())
}
