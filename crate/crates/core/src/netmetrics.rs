//! Per-phase communication networks: speaker energy and pairwise
//! engagement, both derived from the per-second activity sets.
//!
//! An utterance is a maximal run of consecutive active seconds. Energy is
//! a member's rate of utterance starts inside a phase; engagement between
//! two members counts the times either one begins an utterance within the
//! response window after the other was heard speaking.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Interval, MemberId, Timestamp};
use crate::vad::SpeakerActivity;

/// Default response window in seconds: a start at `t` responds to
/// activity anywhere in `[t - 5, t - 1]`.
pub const DEFAULT_RESPONSE_WINDOW_SECS: f64 = 5.0;
/// Phase coverage below which a member's metrics are flagged low-confidence.
pub const LOW_CONFIDENCE_COVERAGE: f64 = 0.5;

/// A maximal run of consecutive speaking seconds; `start`/`end` are the
/// first and last active second (inclusive).
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub member: MemberId,
    pub start: Timestamp,
    pub end: Timestamp,
    start_frame: usize,
}

impl Utterance {
    pub fn start_frame(&self) -> usize {
        self.start_frame
    }
}

/// One phase summarized as node energies and edge engagement rates.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionNetwork {
    pub phase: Interval,
    /// Utterance starts per second, per member.
    pub energy: BTreeMap<MemberId, f64>,
    /// Raw utterance-start counts behind `energy`.
    pub energy_count: BTreeMap<MemberId, u64>,
    /// Undirected response rate per unordered pair (key is the sorted pair).
    pub engagement: BTreeMap<(MemberId, MemberId), f64>,
    /// Raw response counts behind `engagement`.
    pub engagement_count: BTreeMap<(MemberId, MemberId), u64>,
    /// Directed response counts: `(responder, speaker)` — the responder
    /// began an utterance shortly after the speaker was active.
    pub directed_count: BTreeMap<(MemberId, MemberId), u64>,
    /// Fraction of the phase each member's badge produced data for.
    pub data_coverage: BTreeMap<MemberId, f64>,
}

impl InteractionNetwork {
    pub fn members(&self) -> Vec<MemberId> {
        self.energy.keys().cloned().collect()
    }

    pub fn is_low_confidence(&self, member: &MemberId) -> bool {
        self.data_coverage
            .get(member)
            .is_some_and(|c| *c < LOW_CONFIDENCE_COVERAGE)
    }
}

/// Extract every member's maximal consecutive-second speaking runs.
pub fn utterances_from_activity(activity: &SpeakerActivity) -> Vec<Utterance> {
    let mut utterances = Vec::new();
    for member in activity.members() {
        let mut run_start: Option<usize> = None;
        for f in 0..=activity.frames() {
            let speaking = f < activity.frames() && activity.active[f].contains(&member);
            match (speaking, run_start) {
                (true, None) => run_start = Some(f),
                (false, Some(s)) => {
                    utterances.push(Utterance {
                        member: member.clone(),
                        start: activity.time_at(s),
                        end: activity.time_at(f - 1),
                        start_frame: s,
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    utterances
}

/// Utterance-start rate for one member within a phase: starts inside the
/// phase divided by the phase length in seconds. An utterance entering
/// the phase from outside does not count.
pub fn energy(utterances: &[Utterance], member: &MemberId, phase: Interval) -> Result<f64> {
    let secs = phase.duration_secs();
    if secs.is_nan() || secs <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "phase [{}, {}] has non-positive duration",
            phase.start, phase.end
        )));
    }
    let count = utterances
        .iter()
        .filter(|u| &u.member == member && phase.contains(u.start))
        .count();
    Ok(count as f64 / secs)
}

fn directed_response_count(
    activity: &SpeakerActivity,
    utterances: &[Utterance],
    responder: &MemberId,
    speaker: &MemberId,
    phase: Interval,
    response_window_secs: f64,
) -> u64 {
    let window = response_window_secs.round().max(1.0) as usize;
    let mut count = 0;
    for u in utterances {
        if &u.member != responder || !phase.contains(u.start) {
            continue;
        }
        let t = u.start_frame();
        let lo = t.saturating_sub(window);
        let heard = (lo..t).any(|s| activity.active[s].contains(speaker));
        if heard {
            count += 1;
        }
    }
    count
}

/// Undirected engagement rate between two distinct members within a
/// phase: responses in both directions divided by the phase seconds.
pub fn engagement(
    activity: &SpeakerActivity,
    utterances: &[Utterance],
    pair: (&MemberId, &MemberId),
    phase: Interval,
    response_window_secs: f64,
) -> Result<f64> {
    let (i, j) = pair;
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "engagement needs two distinct members, got {i} twice"
        )));
    }
    let secs = phase.duration_secs();
    if secs.is_nan() || secs <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "phase [{}, {}] has non-positive duration",
            phase.start, phase.end
        )));
    }
    let forward = directed_response_count(activity, utterances, i, j, phase, response_window_secs);
    let backward = directed_response_count(activity, utterances, j, i, phase, response_window_secs);
    Ok((forward + backward) as f64 / secs)
}

/// Build the full network for one phase: energy for every member,
/// engagement for every unordered pair, and per-member data coverage.
pub fn build_network(
    activity: &SpeakerActivity,
    phase: Interval,
    response_window_secs: f64,
) -> Result<InteractionNetwork> {
    let span = activity.span();
    if phase.start < span.start || phase.end > span.end {
        return Err(Error::OutOfSpan(format!(
            "phase [{}, {}] lies outside activity span [{}, {}]",
            phase.start, phase.end, span.start, span.end
        )));
    }
    let secs = phase.duration_secs();
    if secs.is_nan() || secs <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "phase [{}, {}] has non-positive duration",
            phase.start, phase.end
        )));
    }

    let members = activity.members();
    let utterances = utterances_from_activity(activity);

    let mut energy_map = BTreeMap::new();
    let mut energy_count = BTreeMap::new();
    for m in &members {
        let rate = energy(&utterances, m, phase)?;
        energy_count.insert(m.clone(), (rate * secs).round() as u64);
        energy_map.insert(m.clone(), rate);
    }

    let mut engagement_map = BTreeMap::new();
    let mut engagement_count = BTreeMap::new();
    let mut directed_count = BTreeMap::new();
    for (idx, i) in members.iter().enumerate() {
        for j in &members[idx + 1..] {
            let fwd =
                directed_response_count(activity, &utterances, i, j, phase, response_window_secs);
            let bwd =
                directed_response_count(activity, &utterances, j, i, phase, response_window_secs);
            directed_count.insert((i.clone(), j.clone()), fwd);
            directed_count.insert((j.clone(), i.clone()), bwd);
            engagement_count.insert((i.clone(), j.clone()), fwd + bwd);
            engagement_map.insert((i.clone(), j.clone()), (fwd + bwd) as f64 / secs);
        }
    }

    // coverage over the whole seconds the phase overlaps
    let first = (phase.start.secs_since(activity.start) / activity.frame_period).ceil() as usize;
    let last = ((phase.end.secs_since(activity.start) / activity.frame_period).ceil() as usize)
        .min(activity.frames());
    let mut data_coverage = BTreeMap::new();
    for m in &members {
        let flags = &activity.coverage[m];
        let covered = (first..last).filter(|&s| flags[s]).count();
        let total = last.saturating_sub(first).max(1);
        data_coverage.insert(m.clone(), covered as f64 / total as f64);
    }

    Ok(InteractionNetwork {
        phase,
        energy: energy_map,
        energy_count,
        engagement: engagement_map,
        engagement_count,
        directed_count,
        data_coverage,
    })
}

/// JSON document for one phase network:
/// `{"phase": {...}, "energy": {...}, "engagement": [["A","B",rate], ...],
/// "coverage": {...}}`, plus directed counts when requested.
pub fn network_to_json(network: &InteractionNetwork, include_directed: bool) -> String {
    let energy: BTreeMap<&str, f64> = network
        .energy
        .iter()
        .map(|(m, &v)| (m.as_str(), v))
        .collect();
    let coverage: BTreeMap<&str, f64> = network
        .data_coverage
        .iter()
        .map(|(m, &v)| (m.as_str(), v))
        .collect();
    let engagement: Vec<serde_json::Value> = network
        .engagement
        .iter()
        .map(|((i, j), &v)| serde_json::json!([i.as_str(), j.as_str(), v]))
        .collect();
    let mut doc = serde_json::json!({
        "phase": {
            "start": network.phase.start.to_iso_millis(),
            "end": network.phase.end.to_iso_millis(),
        },
        "energy": energy,
        "engagement": engagement,
        "coverage": coverage,
    });
    if include_directed {
        let directed: Vec<serde_json::Value> = network
            .directed_count
            .iter()
            .map(|((r, s), &c)| serde_json::json!([r.as_str(), s.as_str(), c]))
            .collect();
        doc.as_object_mut()
            .unwrap()
            .insert("directed_responses".into(), serde_json::Value::Array(directed));
    }
    serde_json::to_string_pretty(&doc).expect("network document serializes")
}

/// Parse the JSON produced by [`network_to_json`]. Counts are
/// reconstructed from the rates and the phase duration.
pub fn network_from_json(text: &str) -> Result<InteractionNetwork> {
    #[derive(serde::Deserialize)]
    struct PhaseDoc {
        start: String,
        end: String,
    }
    #[derive(serde::Deserialize)]
    struct Doc {
        phase: PhaseDoc,
        energy: BTreeMap<String, f64>,
        engagement: Vec<(String, String, f64)>,
        coverage: BTreeMap<String, f64>,
        #[serde(default)]
        directed_responses: Vec<(String, String, u64)>,
    }
    let doc: Doc = serde_json::from_str(text)?;
    let phase = Interval::new(
        Timestamp::parse_iso(&doc.phase.start)?,
        Timestamp::parse_iso(&doc.phase.end)?,
    );
    let secs = phase.duration_secs();
    let energy: BTreeMap<MemberId, f64> = doc
        .energy
        .into_iter()
        .map(|(m, v)| (MemberId::new(m), v))
        .collect();
    let energy_count = energy
        .iter()
        .map(|(m, &v)| (m.clone(), (v * secs).round() as u64))
        .collect();
    let mut engagement = BTreeMap::new();
    let mut engagement_count = BTreeMap::new();
    for (i, j, v) in doc.engagement {
        let key = (MemberId::new(i), MemberId::new(j));
        engagement_count.insert(key.clone(), (v * secs).round() as u64);
        engagement.insert(key, v);
    }
    let directed_count = doc
        .directed_responses
        .into_iter()
        .map(|(r, s, c)| ((MemberId::new(r), MemberId::new(s)), c))
        .collect();
    let data_coverage = doc
        .coverage
        .into_iter()
        .map(|(m, v)| (MemberId::new(m), v))
        .collect();
    Ok(InteractionNetwork {
        phase,
        energy,
        energy_count,
        engagement,
        engagement_count,
        directed_count,
        data_coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ts(secs: f64) -> Timestamp {
        Timestamp::from_epoch_secs(secs)
    }

    fn activity(frames: usize, active: &[(&str, &[usize])]) -> SpeakerActivity {
        let mut sets: Vec<BTreeSet<MemberId>> = vec![BTreeSet::new(); frames];
        let mut coverage = BTreeMap::new();
        for (member, seconds) in active {
            let id = MemberId::from(*member);
            for &s in *seconds {
                sets[s].insert(id.clone());
            }
            coverage.insert(id, vec![true; frames]);
        }
        SpeakerActivity {
            start: ts(0.0),
            frame_period: 1.0,
            active: sets,
            coverage,
        }
    }

    #[test]
    fn single_run_is_one_utterance() {
        let act = activity(10, &[("A", &[3, 4, 5, 6, 7])]);
        let utts = utterances_from_activity(&act);
        assert_eq!(utts.len(), 1);
        assert_eq!(utts[0].start, ts(3.0));
        assert_eq!(utts[0].end, ts(7.0));
    }

    #[test]
    fn gap_splits_runs() {
        let act = activity(10, &[("A", &[3, 4, 6])]);
        let utts = utterances_from_activity(&act);
        assert_eq!(utts.len(), 2);
        assert_eq!((utts[0].start, utts[0].end), (ts(3.0), ts(4.0)));
        assert_eq!((utts[1].start, utts[1].end), (ts(6.0), ts(6.0)));
    }

    #[test]
    fn empty_activity_yields_no_utterances() {
        let act = activity(10, &[("A", &[])]);
        assert!(utterances_from_activity(&act).is_empty());
    }

    #[test]
    fn energy_counts_starts_inside_phase_only() {
        let frames = 120;
        let seconds: Vec<usize> = (0..6).map(|k| 10 + 15 * k).collect(); // 6 one-second utterances
        let act = activity(frames, &[("A", &seconds)]);
        let utts = utterances_from_activity(&act);
        let rate = energy(&utts, &MemberId::from("A"), Interval::new(ts(0.0), ts(120.0))).unwrap();
        assert_eq!(rate, 6.0 / 120.0);

        // utterance straddling the phase start is not counted
        let act = activity(20, &[("A", &[4, 5, 6])]);
        let utts = utterances_from_activity(&act);
        let rate = energy(&utts, &MemberId::from("A"), Interval::new(ts(5.0), ts(15.0))).unwrap();
        assert_eq!(rate, 0.0);

        let rate = energy(&utts, &MemberId::from("B"), Interval::new(ts(0.0), ts(20.0))).unwrap();
        assert_eq!(rate, 0.0);

        assert!(energy(&utts, &MemberId::from("A"), Interval::new(ts(5.0), ts(5.0))).is_err());
    }

    #[test]
    fn response_within_five_seconds_counts_once() {
        // A speaks second 10; B starts at 12 -> one response B->A
        let act = activity(30, &[("A", &[10]), ("B", &[12])]);
        let utts = utterances_from_activity(&act);
        let phase = Interval::new(ts(0.0), ts(30.0));
        let rate = engagement(
            &act,
            &utts,
            (&MemberId::from("A"), &MemberId::from("B")),
            phase,
            5.0,
        )
        .unwrap();
        assert_eq!(rate, 1.0 / 30.0);

        // B starting 6 s after A's activity is out of window
        let act = activity(30, &[("A", &[10]), ("B", &[16])]);
        let utts = utterances_from_activity(&act);
        let rate = engagement(
            &act,
            &utts,
            (&MemberId::from("A"), &MemberId::from("B")),
            phase,
            5.0,
        )
        .unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn simultaneous_start_does_not_count_as_response() {
        let act = activity(20, &[("A", &[10]), ("B", &[10])]);
        let utts = utterances_from_activity(&act);
        let rate = engagement(
            &act,
            &utts,
            (&MemberId::from("A"), &MemberId::from("B")),
            Interval::new(ts(0.0), ts(20.0)),
            5.0,
        )
        .unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn engagement_rejects_identical_members() {
        let act = activity(10, &[("A", &[2])]);
        let utts = utterances_from_activity(&act);
        assert!(engagement(
            &act,
            &utts,
            (&MemberId::from("A"), &MemberId::from("A")),
            Interval::new(ts(0.0), ts(10.0)),
            5.0,
        )
        .is_err());
    }

    #[test]
    fn alternating_dialogue_matches_hand_enumeration() {
        // A speaks seconds 0-2, 6-8, ...; B speaks 3-5, 9-11, ...
        let a: Vec<usize> = (0..60).filter(|s| s % 6 < 3).collect();
        let b: Vec<usize> = (0..60).filter(|s| s % 6 >= 3).collect();
        let act = activity(60, &[("A", &a), ("B", &b)]);
        let utts = utterances_from_activity(&act);
        let phase = Interval::new(ts(0.0), ts(60.0));

        // brute-force enumeration straight from the definition
        let mut expected = 0u64;
        for u in &utts {
            let t = u.start_frame();
            let other = if u.member == MemberId::from("A") { "B" } else { "A" };
            let other = MemberId::from(other);
            if (t.saturating_sub(5)..t).any(|s| act.active[s].contains(&other)) {
                expected += 1;
            }
        }
        let rate = engagement(
            &act,
            &utts,
            (&MemberId::from("A"), &MemberId::from("B")),
            phase,
            5.0,
        )
        .unwrap();
        assert_eq!(rate, expected as f64 / 60.0);
        // every utterance after the first responds to the other speaker
        assert_eq!(expected, 19);
    }

    #[test]
    fn silent_phase_builds_all_zero_network() {
        let act = activity(30, &[("A", &[]), ("B", &[])]);
        let net = build_network(&act, Interval::new(ts(0.0), ts(30.0)), 5.0).unwrap();
        assert!(net.energy.values().all(|&v| v == 0.0));
        assert!(net.engagement.values().all(|&v| v == 0.0));
        assert_eq!(net.data_coverage[&MemberId::from("A")], 1.0);
    }

    #[test]
    fn lone_speaker_has_energy_but_no_edges() {
        let act = activity(30, &[("A", &[5, 10, 15]), ("B", &[])]);
        let net = build_network(&act, Interval::new(ts(0.0), ts(30.0)), 5.0).unwrap();
        assert!(net.energy[&MemberId::from("A")] > 0.0);
        assert_eq!(net.energy[&MemberId::from("B")], 0.0);
        assert!(net.engagement.values().all(|&v| v == 0.0));
    }

    #[test]
    fn phase_outside_span_rejected() {
        let act = activity(30, &[("A", &[5])]);
        assert!(build_network(&act, Interval::new(ts(0.0), ts(31.0)), 5.0).is_err());
        assert!(build_network(&act, Interval::new(ts(-1.0), ts(30.0)), 5.0).is_err());
    }

    #[test]
    fn energy_times_duration_is_integral() {
        let act = activity(90, &[("A", &[1, 5, 9, 33, 34, 35, 80]), ("B", &[2, 40])]);
        let net = build_network(&act, Interval::new(ts(0.0), ts(90.0)), 5.0).unwrap();
        for (m, rate) in &net.energy {
            let raw = rate * 90.0;
            assert!((raw - raw.round()).abs() < 1e-9);
            assert_eq!(raw.round() as u64, net.energy_count[m]);
        }
    }

    #[test]
    fn adjacent_phase_counts_add_exactly() {
        let a: Vec<usize> = (0..120).filter(|s| s % 7 < 2).collect();
        let b: Vec<usize> = (0..120).filter(|s| s % 5 == 0).collect();
        let act = activity(120, &[("A", &a), ("B", &b)]);
        let whole = build_network(&act, Interval::new(ts(0.0), ts(120.0)), 5.0).unwrap();
        let left = build_network(&act, Interval::new(ts(0.0), ts(50.0)), 5.0).unwrap();
        let right = build_network(&act, Interval::new(ts(50.0), ts(120.0)), 5.0).unwrap();
        for m in whole.energy.keys() {
            assert_eq!(
                whole.energy_count[m],
                left.energy_count[m] + right.energy_count[m]
            );
        }
        for pair in whole.engagement_count.keys() {
            assert_eq!(
                whole.engagement_count[pair],
                left.engagement_count[pair] + right.engagement_count[pair]
            );
        }
    }

    #[test]
    fn permuting_labels_permutes_network() {
        let a: Vec<usize> = vec![1, 2, 10, 11];
        let b: Vec<usize> = vec![4, 5, 13];
        let act = activity(30, &[("A", &a), ("B", &b)]);
        let net = build_network(&act, Interval::new(ts(0.0), ts(30.0)), 5.0).unwrap();
        let swapped = activity(30, &[("A", &b), ("B", &a)]);
        let net_swapped = build_network(&swapped, Interval::new(ts(0.0), ts(30.0)), 5.0).unwrap();
        assert_eq!(
            net.energy[&MemberId::from("A")],
            net_swapped.energy[&MemberId::from("B")]
        );
        assert_eq!(
            net.energy[&MemberId::from("B")],
            net_swapped.energy[&MemberId::from("A")]
        );
        assert_eq!(
            net.engagement[&(MemberId::from("A"), MemberId::from("B"))],
            net_swapped.engagement[&(MemberId::from("A"), MemberId::from("B"))]
        );
    }

    #[test]
    fn network_json_round_trip() {
        let act = activity(60, &[("A", &[1, 2, 10]), ("B", &[4, 12]), ("C", &[])]);
        let net = build_network(&act, Interval::new(ts(0.0), ts(60.0)), 5.0).unwrap();
        let parsed = network_from_json(&network_to_json(&net, true)).unwrap();
        assert_eq!(parsed.phase, net.phase);
        assert_eq!(parsed.energy, net.energy);
        assert_eq!(parsed.engagement, net.engagement);
        assert_eq!(parsed.energy_count, net.energy_count);
        assert_eq!(parsed.engagement_count, net.engagement_count);
        assert_eq!(parsed.directed_count, net.directed_count);
        assert_eq!(parsed.data_coverage, net.data_coverage);
    }

    #[test]
    fn network_json_shape() {
        let act = activity(30, &[("A", &[1, 2]), ("B", &[4])]);
        let net = build_network(&act, Interval::new(ts(0.0), ts(30.0)), 5.0).unwrap();
        let json = network_to_json(&net, false);
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(doc["phase"]["start"].is_string());
        assert!(doc["energy"]["A"].is_number());
        assert!(doc["engagement"].as_array().unwrap()[0].as_array().unwrap().len() == 3);
        assert!(doc["coverage"]["B"].is_number());
        assert!(doc.get("directed_responses").is_none());
        let with_directed = network_to_json(&net, true);
        let doc: serde_json::Value = serde_json::from_str(&with_directed).unwrap();
        assert!(doc["directed_responses"].is_array());
    }
}
