//! Correlation-based voice activity detection.
//!
//! Badge microphones pick up everyone at the table, so a loud frame alone
//! does not prove its wearer spoke. Per one-second frame the detector
//! works in three steps:
//!
//! 1. gate members whose mean frame volume exceeds an adaptive noise
//!    floor (a rolling median of recent frame volumes times a margin),
//! 2. correlate every pair of gated members over the frame's raw
//!    samples; a pair moving together above the threshold is one voice
//!    heard twice, and the quieter badge is demoted as cross-talk,
//! 3. the surviving members are the frame's active set.
//!
//! Multiple genuinely simultaneous speakers survive because their badges
//! do not correlate strongly enough to trip step 2.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{MemberId, Recording, Timestamp};
use crate::num::{median, Real};

/// Default correlation threshold above which a frame pair is treated as
/// one voice heard on two badges.
pub const DEFAULT_THRESHOLD: f64 = 0.40;
/// Default multiplier applied to the rolling median to form the noise floor.
pub const DEFAULT_FLOOR_MARGIN: f64 = 1.5;
/// Default trailing window, in seconds, for the rolling median.
pub const DEFAULT_FLOOR_WINDOW_SECS: f64 = 60.0;

/// Tuning knobs for [`detect_voice_activity`].
#[derive(Clone, Copy, Debug)]
pub struct VadParams {
    /// Pairwise correlation above which the quieter member is demoted.
    pub threshold: f64,
    /// Noise floor = margin * rolling median of frame volumes.
    pub floor_margin: f64,
    /// Trailing window for the rolling median, in seconds.
    pub floor_window_secs: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        VadParams {
            threshold: DEFAULT_THRESHOLD,
            floor_margin: DEFAULT_FLOOR_MARGIN,
            floor_window_secs: DEFAULT_FLOOR_WINDOW_SECS,
        }
    }
}

/// Per-second speaking decisions for a whole recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerActivity {
    pub start: Timestamp,
    /// Frame length; always one second.
    pub frame_period: f64,
    /// Members judged to be genuinely speaking in each second.
    pub active: Vec<BTreeSet<MemberId>>,
    /// Whether each member's badge produced any data in each second.
    pub coverage: BTreeMap<MemberId, Vec<bool>>,
}

impl SpeakerActivity {
    pub fn frames(&self) -> usize {
        self.active.len()
    }

    pub fn members(&self) -> Vec<MemberId> {
        self.coverage.keys().cloned().collect()
    }

    /// Time of frame `i`.
    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start.offset(i as f64 * self.frame_period)
    }

    pub fn span(&self) -> crate::model::Interval {
        crate::model::Interval::new(
            self.start,
            self.start.offset(self.frames() as f64 * self.frame_period),
        )
    }
}

/// Pearson correlation between two equally long windows, pairing only the
/// positions where both samples are present.
///
/// Returns `None` when fewer than 3 paired samples exist, and zero when
/// either window has no variance over the paired positions.
pub fn frame_correlation<R: Real>(a: &[Option<R>], b: &[Option<R>]) -> Option<R> {
    debug_assert_eq!(a.len(), b.len());
    let pairs: Vec<(R, R)> = a
        .iter()
        .zip(b.iter())
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if pairs.len() < 3 {
        return None;
    }
    let n = R::from_count(pairs.len());
    let mean_a = pairs.iter().map(|p| p.0).sum::<R>() / n;
    let mean_b = pairs.iter().map(|p| p.1).sum::<R>() / n;
    let mut cov = R::zero();
    let mut var_a = R::zero();
    let mut var_b = R::zero();
    for (x, y) in pairs {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov = cov + dx * dy;
        var_a = var_a + dx * dx;
        var_b = var_b + dy * dy;
    }
    if var_a == R::zero() || var_b == R::zero() {
        return Some(R::zero());
    }
    Some(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Classify every second of an aligned recording into the set of members
/// genuinely speaking.
pub fn detect_voice_activity<R: Real>(
    recording: &Recording<R>,
    params: &VadParams,
) -> Result<SpeakerActivity> {
    if !recording.is_aligned() {
        return Err(Error::InvalidArgument(
            "recording is not aligned; run align_members first".into(),
        ));
    }
    if params.threshold.is_nan() || params.threshold <= 0.0 || params.threshold >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "VAD threshold must lie in (0, 1), got {}",
            params.threshold
        )));
    }
    let period = recording.sample_period();
    let frame_len = (1.0 / period).round() as usize;
    let frames = recording.series[0].len() / frame_len.max(1);
    if frame_len == 0 || frames == 0 {
        return Err(Error::TooShort(
            "recording shorter than one second".into(),
        ));
    }
    let floor_window = (params.floor_window_secs / 1.0).round().max(1.0) as usize;
    let margin = R::from_f64(params.floor_margin)
        .ok_or_else(|| Error::InvalidArgument("floor margin not representable".into()))?;

    let members = recording.members.clone();
    let n_members = members.len();

    // Per member: mean volume of each one-second frame (None where the
    // badge produced nothing that second).
    let mut frame_means: Vec<Vec<Option<R>>> = Vec::with_capacity(n_members);
    for s in &recording.series {
        let means = (0..frames)
            .map(|f| {
                let bin = &s.samples[f * frame_len..(f + 1) * frame_len];
                let defined: Vec<R> = bin.iter().flatten().copied().collect();
                if defined.is_empty() {
                    None
                } else {
                    Some(crate::num::mean(&defined))
                }
            })
            .collect();
        frame_means.push(means);
    }

    // Materialize the rolling-median noise floor sequentially per member;
    // frame decisions below depend only on these precomputed floors.
    let mut floors: Vec<Vec<Option<R>>> = Vec::with_capacity(n_members);
    for means in &frame_means {
        let mut member_floors = Vec::with_capacity(frames);
        for f in 0..frames {
            let lo = f.saturating_sub(floor_window - 1);
            let window: Vec<R> = means[lo..=f].iter().flatten().copied().collect();
            member_floors.push(median(&window).map(|m| m * margin));
        }
        floors.push(member_floors);
    }

    let mut active = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut candidates: Vec<usize> = Vec::new();
        for m in 0..n_members {
            if let (Some(mean), Some(floor)) = (frame_means[m][f], floors[m][f]) {
                if mean > floor {
                    candidates.push(m);
                }
            }
        }

        // Cross-talk demotion over the original candidate set: dropping a
        // member can therefore only remove demotions, never add them.
        let mut demoted = vec![false; n_members];
        for (idx, &i) in candidates.iter().enumerate() {
            for &j in &candidates[idx + 1..] {
                let si = &recording.series[i].samples[f * frame_len..(f + 1) * frame_len];
                let sj = &recording.series[j].samples[f * frame_len..(f + 1) * frame_len];
                let Some(corr) = frame_correlation(si, sj) else {
                    continue;
                };
                if corr.to_f64().unwrap_or(0.0) > params.threshold {
                    let vi = frame_means[i][f].unwrap();
                    let vj = frame_means[j][f].unwrap();
                    // Ties keep both members.
                    if vi < vj {
                        demoted[i] = true;
                    } else if vj < vi {
                        demoted[j] = true;
                    }
                }
            }
        }

        let set: BTreeSet<MemberId> = candidates
            .into_iter()
            .filter(|&m| !demoted[m])
            .map(|m| members[m].clone())
            .collect();
        active.push(set);
    }

    let coverage = members
        .iter()
        .enumerate()
        .map(|(m, id)| {
            let flags = (0..frames).map(|f| frame_means[m][f].is_some()).collect();
            (id.clone(), flags)
        })
        .collect();

    Ok(SpeakerActivity {
        start: recording.series[0].start,
        frame_period: 1.0,
        active,
        coverage,
    })
}

/// Serialize activity as JSONL, one `{"t", "active", "covered"}` object
/// per second.
pub fn activity_to_jsonl(activity: &SpeakerActivity) -> String {
    let mut out = String::new();
    let members = activity.members();
    for f in 0..activity.frames() {
        let covered: Vec<&str> = members
            .iter()
            .filter(|m| activity.coverage[*m][f])
            .map(|m| m.as_str())
            .collect();
        let active: Vec<&str> = activity.active[f].iter().map(|m| m.as_str()).collect();
        let line = serde_json::json!({
            "t": activity.time_at(f).to_iso_millis(),
            "active": active,
            "covered": covered,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// Parse the JSONL produced by [`activity_to_jsonl`].
pub fn activity_from_jsonl(text: &str) -> Result<SpeakerActivity> {
    #[derive(serde::Deserialize)]
    struct Line {
        t: String,
        active: Vec<String>,
        #[serde(default)]
        covered: Vec<String>,
    }

    let mut times: Vec<Timestamp> = Vec::new();
    let mut active: Vec<BTreeSet<MemberId>> = Vec::new();
    let mut covered: Vec<Vec<MemberId>> = Vec::new();
    let mut members: BTreeSet<MemberId> = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        times.push(Timestamp::parse_iso(&parsed.t)?);
        let set: BTreeSet<MemberId> = parsed.active.iter().map(|s| MemberId::new(s.clone())).collect();
        let cov: Vec<MemberId> = parsed.covered.iter().map(|s| MemberId::new(s.clone())).collect();
        members.extend(set.iter().cloned());
        members.extend(cov.iter().cloned());
        active.push(set);
        covered.push(cov);
    }
    if times.is_empty() {
        return Err(Error::EmptyInput("activity stream has no frames".into()));
    }
    let coverage = members
        .iter()
        .map(|m| {
            let flags = covered.iter().map(|c| c.contains(m)).collect();
            (m.clone(), flags)
        })
        .collect();
    Ok(SpeakerActivity {
        start: times[0],
        frame_period: 1.0,
        active,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VolumeSeries;
    use std::collections::BTreeMap;

    fn ts(secs: f64) -> Timestamp {
        Timestamp::from_epoch_secs(secs)
    }

    fn recording(series: Vec<(&str, Vec<Option<f64>>)>) -> Recording<f64> {
        let series = series
            .into_iter()
            .map(|(m, samples)| {
                VolumeSeries::new(MemberId::from(m), ts(0.0), 0.05, samples).unwrap()
            })
            .collect();
        Recording::new(series, BTreeMap::new()).unwrap()
    }

    /// A frame whose samples alternate so correlation is well defined.
    fn bursty_frame(level: f64) -> Vec<Option<f64>> {
        (0..20)
            .map(|i| Some(if i % 4 < 2 { level } else { 0.1 * level }))
            .collect()
    }

    fn quiet_frame() -> Vec<Option<f64>> {
        vec![Some(0.01); 20]
    }

    #[test]
    fn identical_windows_correlate_to_one() {
        let w: Vec<Option<f64>> = (0..20).map(|i| Some(i as f64)).collect();
        let c = frame_correlation(&w, &w).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negated_window_correlates_to_minus_one() {
        let w: Vec<Option<f64>> = (0..20).map(|i| Some(i as f64)).collect();
        let neg: Vec<Option<f64>> = (0..20).map(|i| Some(19.0 - i as f64)).collect();
        let c = frame_correlation(&w, &neg).unwrap();
        assert!((c + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_windows_correlate_to_zero() {
        let a = vec![Some(2.0); 20];
        let b = vec![Some(5.0); 20];
        assert_eq!(frame_correlation(&a, &b), Some(0.0));
    }

    #[test]
    fn too_few_pairs_is_undefined() {
        let a = vec![Some(1.0), Some(2.0), None, None];
        let b = vec![Some(1.0), Some(2.0), Some(3.0), None];
        assert_eq!(frame_correlation(&a, &b), None);
    }

    #[test]
    fn lone_loud_member_is_active() {
        // 4 quiet seconds to seed the rolling median, then A speaks.
        let mut a: Vec<Option<f64>> = Vec::new();
        let mut b: Vec<Option<f64>> = Vec::new();
        for _ in 0..4 {
            a.extend(quiet_frame());
            b.extend(quiet_frame());
        }
        a.extend(bursty_frame(1.0));
        // B stays quiet with an uncorrelated wiggle below its floor.
        b.extend((0..20).map(|i| Some(0.01 + 0.001 * ((i % 3) as f64))));
        let rec = recording(vec![("A", a), ("B", b)]);
        let act = detect_voice_activity(&rec, &VadParams::default()).unwrap();
        assert_eq!(act.frames(), 5);
        assert!(act.active[4].contains(&MemberId::from("A")));
        assert!(!act.active[4].contains(&MemberId::from("B")));
    }

    #[test]
    fn correlated_quieter_member_demoted_as_cross_talk() {
        let mut a: Vec<Option<f64>> = Vec::new();
        let mut b: Vec<Option<f64>> = Vec::new();
        for _ in 0..4 {
            a.extend(quiet_frame());
            b.extend(quiet_frame());
        }
        // Same burst shape on both badges, B at a third of the amplitude:
        // high correlation, lower volume -> cross-talk.
        let burst = bursty_frame(1.0);
        a.extend(burst.iter().copied());
        b.extend(burst.iter().map(|s| s.map(|v| 0.01 + 0.3 * v)));
        let rec = recording(vec![("A", a), ("B", b)]);
        let act = detect_voice_activity(&rec, &VadParams::default()).unwrap();
        let last = &act.active[4];
        assert!(last.contains(&MemberId::from("A")));
        assert!(!last.contains(&MemberId::from("B")));
    }

    #[test]
    fn silence_yields_empty_sets() {
        let a: Vec<Option<f64>> = (0..100).map(|_| Some(0.01)).collect();
        let b = a.clone();
        let rec = recording(vec![("A", a), ("B", b)]);
        let act = detect_voice_activity(&rec, &VadParams::default()).unwrap();
        assert!(act.active.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn all_missing_frame_excludes_member() {
        let mut a: Vec<Option<f64>> = Vec::new();
        for _ in 0..4 {
            a.extend(quiet_frame());
        }
        a.extend(bursty_frame(1.0));
        let b: Vec<Option<f64>> = vec![None; 100];
        let rec = recording(vec![("A", a), ("B", b)]);
        let act = detect_voice_activity(&rec, &VadParams::default()).unwrap();
        assert!(!act.coverage[&MemberId::from("B")][4]);
        assert!(!act.active[4].contains(&MemberId::from("B")));
        assert!(act.active[4].contains(&MemberId::from("A")));
    }

    #[test]
    fn sub_second_recording_rejected() {
        let rec = recording(vec![("A", vec![Some(1.0); 10])]);
        assert!(matches!(
            detect_voice_activity(&rec, &VadParams::default()),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn relabeling_members_permutes_active_sets() {
        let mut a: Vec<Option<f64>> = Vec::new();
        let mut b: Vec<Option<f64>> = Vec::new();
        for _ in 0..4 {
            a.extend(quiet_frame());
            b.extend(quiet_frame());
        }
        let burst = bursty_frame(1.0);
        a.extend(burst.iter().copied());
        b.extend(burst.iter().map(|s| s.map(|v| 0.01 + 0.3 * v)));

        let rec = recording(vec![("A", a.clone()), ("B", b.clone())]);
        let act = detect_voice_activity(&rec, &VadParams::default()).unwrap();
        // Swap labels: what was A's signal is now called B and vice versa.
        let swapped = recording(vec![("A", b), ("B", a)]);
        let act_swapped = detect_voice_activity(&swapped, &VadParams::default()).unwrap();
        for f in 0..act.frames() {
            let mapped: BTreeSet<MemberId> = act.active[f]
                .iter()
                .map(|m| {
                    if m == &MemberId::from("A") {
                        MemberId::from("B")
                    } else {
                        MemberId::from("A")
                    }
                })
                .collect();
            assert_eq!(mapped, act_swapped.active[f]);
        }
    }

    #[test]
    fn common_power_of_two_scaling_leaves_sets_unchanged() {
        let mut a: Vec<Option<f64>> = Vec::new();
        let mut b: Vec<Option<f64>> = Vec::new();
        for _ in 0..4 {
            a.extend(quiet_frame());
            b.extend(quiet_frame());
        }
        let burst = bursty_frame(1.0);
        a.extend(burst.iter().copied());
        b.extend(burst.iter().map(|s| s.map(|v| 0.01 + 0.3 * v)));
        let rec = recording(vec![("A", a.clone()), ("B", b.clone())]);
        let act = detect_voice_activity(&rec, &VadParams::default()).unwrap();

        let scale = |v: Vec<Option<f64>>| v.into_iter().map(|s| s.map(|x| x * 4.0)).collect();
        let scaled = recording(vec![("A", scale(a)), ("B", scale(b))]);
        let act_scaled = detect_voice_activity(&scaled, &VadParams::default()).unwrap();
        assert_eq!(act.active, act_scaled.active);
    }

    #[test]
    fn activity_jsonl_round_trip() {
        let mut a: Vec<Option<f64>> = Vec::new();
        for _ in 0..4 {
            a.extend(quiet_frame());
        }
        a.extend(bursty_frame(1.0));
        let rec = recording(vec![("A", a), ("B", vec![Some(0.01); 100])]);
        let act = detect_voice_activity(&rec, &VadParams::default()).unwrap();
        let text = activity_to_jsonl(&act);
        let parsed = activity_from_jsonl(&text).unwrap();
        assert_eq!(parsed.active, act.active);
        assert_eq!(parsed.coverage, act.coverage);
    }
}
