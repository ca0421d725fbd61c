//! Shared domain types: the time axis, member identities, volume series
//! and whole recordings. Everything here is an immutable value object;
//! operations return new values.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// A point in time, stored as non-negative seconds since the Unix epoch.
///
/// Series never carry per-sample timestamps; sample `i` of a series lives
/// at `start + i * sample_period`. All series of one recording share one
/// origin.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(f64);

impl Timestamp {
    pub fn from_epoch_secs(secs: f64) -> Self {
        Timestamp(secs)
    }

    pub fn epoch_secs(&self) -> f64 {
        self.0
    }

    /// Offset by a signed number of seconds.
    pub fn offset(&self, secs: f64) -> Self {
        Timestamp(self.0 + secs)
    }

    /// Seconds from `earlier` to `self`.
    pub fn secs_since(&self, earlier: Timestamp) -> f64 {
        self.0 - earlier.0
    }

    /// ISO-8601 with millisecond precision, e.g. `2024-03-01T12:00:00.050`.
    pub fn to_iso_millis(&self) -> String {
        let millis = (self.0 * 1000.0).round() as i64;
        match DateTime::from_timestamp_millis(millis) {
            Some(dt) => dt.naive_utc().format("%Y-%m-%dT%H:%M:%S%.3f").to_string(),
            None => format!("{}", self.0),
        }
    }

    /// Wall-clock `HH:MM:SS` label (UTC), used on figure axes.
    pub fn to_clock(&self) -> String {
        let millis = (self.0 * 1000.0).round() as i64;
        match DateTime::from_timestamp_millis(millis) {
            Some(dt) => dt.naive_utc().format("%H:%M:%S").to_string(),
            None => format!("{}", self.0),
        }
    }

    /// Parse an ISO-8601 timestamp (with or without sub-second digits) to
    /// millisecond precision.
    pub fn parse_iso(s: &str) -> Result<Self> {
        let fmts = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"];
        for fmt in fmts {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                let millis = dt.and_utc().timestamp_millis();
                return Ok(Timestamp(millis as f64 / 1000.0));
            }
        }
        Err(Error::InvalidArgument(format!("unparseable timestamp {s:?}")))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_iso_millis())
    }
}

/// Opaque member label ("A".."G" in a typical session). Unique within a
/// recording and stable through every pipeline stage.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemberId(String);

impl MemberId {
    pub fn new(id: impl Into<String>) -> Self {
        MemberId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MemberId {
    fn from(s: &str) -> Self {
        MemberId(s.to_string())
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Interval {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Interval { start, end }
    }

    pub fn duration_secs(&self) -> f64 {
        self.end.secs_since(self.start)
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t < self.end
    }
}

/// Regularly sampled microphone amplitude for one badge. `None` samples
/// mark recording gaps; gaps are never imputed, downstream windows decide
/// for themselves whether they tolerate them.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeSeries<R: Real> {
    pub member: MemberId,
    pub start: Timestamp,
    pub sample_period: f64,
    pub samples: Vec<Option<R>>,
}

impl<R: Real> VolumeSeries<R> {
    pub fn new(
        member: MemberId,
        start: Timestamp,
        sample_period: f64,
        samples: Vec<Option<R>>,
    ) -> Result<Self> {
        if sample_period.is_nan() || sample_period <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sample_period must be positive, got {sample_period}"
            )));
        }
        Ok(VolumeSeries {
            member,
            start,
            sample_period,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `i`.
    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start.offset(i as f64 * self.sample_period)
    }

    /// Time just past the last sample.
    pub fn end(&self) -> Timestamp {
        self.start.offset(self.samples.len() as f64 * self.sample_period)
    }

    /// Count of non-missing samples.
    pub fn defined_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }
}

/// One session: a set of members and exactly one volume series per member,
/// all on the same sampling period.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording<R: Real> {
    pub members: Vec<MemberId>,
    pub series: Vec<VolumeSeries<R>>,
    pub meta: BTreeMap<String, String>,
}

impl<R: Real> Recording<R> {
    /// Build a recording from per-member series. Member order follows the
    /// series order; ids must be unique and periods consistent.
    pub fn new(series: Vec<VolumeSeries<R>>, meta: BTreeMap<String, String>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptyInput("recording has no series".into()));
        }
        let expected = series[0].sample_period;
        for s in &series {
            if s.sample_period != expected {
                return Err(Error::PeriodMismatch {
                    member: s.member.clone(),
                    expected,
                    found: s.sample_period,
                });
            }
        }
        let members: Vec<MemberId> = series.iter().map(|s| s.member.clone()).collect();
        {
            let mut seen = members.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != members.len() {
                return Err(Error::InvalidArgument("duplicate member id".into()));
            }
        }
        Ok(Recording {
            members,
            series,
            meta,
        })
    }

    pub fn sample_period(&self) -> f64 {
        self.series[0].sample_period
    }

    pub fn series_for(&self, member: &MemberId) -> Option<&VolumeSeries<R>> {
        self.series.iter().find(|s| &s.member == member)
    }

    /// True when all series share one start and one length.
    pub fn is_aligned(&self) -> bool {
        let first = &self.series[0];
        self.series
            .iter()
            .all(|s| s.start == first.start && s.len() == first.len())
    }

    /// Recording interval, valid only on aligned recordings.
    pub fn span(&self) -> Interval {
        Interval::new(self.series[0].start, self.series[0].end())
    }
}

/// Pad every series with missing samples onto the common
/// `[min start, max end]` grid so all members have equal sample counts.
///
/// Padding only ever adds `None`; no amplitude value is created or
/// altered. Applying this twice equals applying it once.
pub fn align_members<R: Real>(recording: Recording<R>) -> Result<Recording<R>> {
    let period = recording.sample_period();
    // Recording::new has already rejected mismatched periods; re-check so a
    // hand-assembled value cannot slip through.
    for s in &recording.series {
        if s.sample_period != period {
            return Err(Error::PeriodMismatch {
                member: s.member.clone(),
                expected: period,
                found: s.sample_period,
            });
        }
    }
    if recording.is_aligned() {
        return Ok(recording);
    }

    let start = recording
        .series
        .iter()
        .map(|s| s.start.epoch_secs())
        .fold(f64::INFINITY, f64::min);
    let end = recording
        .series
        .iter()
        .map(|s| s.end().epoch_secs())
        .fold(f64::NEG_INFINITY, f64::max);
    let total = ((end - start) / period).round() as usize;

    let mut aligned = Vec::with_capacity(recording.series.len());
    for s in recording.series {
        let offset_f = (s.start.epoch_secs() - start) / period;
        let offset = offset_f.round() as usize;
        if (offset_f - offset as f64).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "member {}: series start is off the common grid by {:.6} samples",
                s.member,
                (offset_f - offset as f64).abs()
            )));
        }
        let mut samples = Vec::with_capacity(total);
        samples.resize(offset, None);
        samples.extend(s.samples.iter().copied());
        samples.resize(total, None);
        aligned.push(VolumeSeries {
            member: s.member,
            start: Timestamp::from_epoch_secs(start),
            sample_period: period,
            samples,
        });
    }
    Recording::new(aligned, recording.meta)
}
