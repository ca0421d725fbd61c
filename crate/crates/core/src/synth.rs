//! Synthetic badge recordings with planted interaction regimes.
//!
//! The generator builds an integer-second speaking schedule per phase,
//! then synthesizes 50 ms amplitude samples: speakers get syllable-like
//! bursts, everyone else receives an attenuated copy of those bursts
//! (cross-talk) on top of a low noise floor. The planted schedule and the
//! phase boundaries come back as ground truth, which is what the
//! end-to-end tests grade the pipeline against.
//!
//! All arithmetic is add/multiply on uniform random draws, so a given
//! seed reproduces the same recording bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MemberId, Recording, Timestamp, VolumeSeries};

/// Constant microphone floor present in every sample.
const BASE_FLOOR: f64 = 0.02;
/// Syllable burst amplitude range.
const BURST_AMP: (f64, f64) = (0.8, 1.2);
/// Syllable on/off run lengths in 50 ms samples (100-300 ms / 100-250 ms).
const SYLLABLE_ON: (usize, usize) = (2, 6);
const SYLLABLE_OFF: (usize, usize) = (2, 5);

/// Default cross-talk attenuation: what fraction of a speaker's burst
/// lands on everyone else's badge.
pub const DEFAULT_CROSSTALK: f64 = 0.3;
/// Default peak amplitude of the uniform per-sample noise.
pub const DEFAULT_NOISE_AMP: f64 = 0.008;
/// Every regime opens with a denser burst of activity for this long
/// before settling into its steady rhythm.
const REGIME_ONSET_SECS: u64 = 60;

/// What the room is doing during one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// Nobody speaks.
    Silence,
    /// One member holds the floor, pausing between utterances.
    Monologue { speaker: usize },
    /// Two members alternate turns of `turn_secs` with 1 s handovers.
    Dialogue { a: usize, b: usize, turn_secs: u64 },
    /// Every member independently speaks each second with `speak_prob`.
    FreeForAll { speak_prob: f64 },
}

/// One phase of the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub duration_secs: u64,
    pub regime: Regime,
}

/// Full scenario description; serializable so scenarios can live in files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub members: usize,
    pub phases: Vec<PhaseSpec>,
    /// Peak amplitude of the uniform per-sample noise.
    #[serde(default = "default_noise")]
    pub noise_amp: f64,
    /// Fraction of a speaker's burst heard on other badges.
    #[serde(default = "default_crosstalk")]
    pub crosstalk: f64,
    /// Uniform jitter, in whole seconds, applied to each phase boundary.
    #[serde(default)]
    pub transition_jitter_secs: u64,
    pub seed: u64,
    /// Recording origin; defaults to 2024-03-01T12:00:00 UTC.
    #[serde(default)]
    pub start_iso: Option<String>,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_AMP
}

fn default_crosstalk() -> f64 {
    DEFAULT_CROSSTALK
}

impl ScenarioSpec {
    /// The four-regime benchmark scenario: silence, then a monologue,
    /// then a dialogue, then a free-for-all, over half an hour.
    pub fn four_phase(members: usize, seed: u64) -> Self {
        ScenarioSpec {
            members,
            phases: vec![
                PhaseSpec {
                    duration_secs: 360,
                    regime: Regime::Silence,
                },
                PhaseSpec {
                    duration_secs: 480,
                    regime: Regime::Monologue { speaker: 0 },
                },
                PhaseSpec {
                    duration_secs: 480,
                    regime: Regime::Dialogue {
                        a: 1,
                        b: 2,
                        turn_secs: 2,
                    },
                },
                PhaseSpec {
                    duration_secs: 480,
                    regime: Regime::FreeForAll { speak_prob: 0.35 },
                },
            ],
            noise_amp: DEFAULT_NOISE_AMP,
            crosstalk: DEFAULT_CROSSTALK,
            transition_jitter_secs: 0,
            seed,
        start_iso: None,
        }
    }

    pub fn member_ids(&self) -> Vec<MemberId> {
        (0..self.members)
            .map(|i| {
                if self.members <= 26 {
                    MemberId::new(((b'A' + i as u8) as char).to_string())
                } else {
                    MemberId::new(format!("M{i:02}"))
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::InvalidArgument("scenario needs at least one member".into()));
        }
        if self.phases.is_empty() {
            return Err(Error::InvalidArgument("scenario needs at least one phase".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.duration_secs == 0 {
                return Err(Error::InvalidArgument(format!("phase {i} has zero duration")));
            }
            match &p.regime {
                Regime::Monologue { speaker } if *speaker >= self.members => {
                    return Err(Error::InvalidArgument(format!(
                        "phase {i}: speaker index {speaker} out of range"
                    )));
                }
                Regime::Dialogue { a, b, turn_secs } => {
                    if *a >= self.members || *b >= self.members || a == b {
                        return Err(Error::InvalidArgument(format!(
                            "phase {i}: dialogue needs two distinct member indices"
                        )));
                    }
                    if *turn_secs == 0 {
                        return Err(Error::InvalidArgument(format!(
                            "phase {i}: dialogue turn length must be positive"
                        )));
                    }
                }
                Regime::FreeForAll { speak_prob } => {
                    if !(0.0..=1.0).contains(speak_prob) {
                        return Err(Error::InvalidArgument(format!(
                            "phase {i}: speak_prob must lie in [0, 1]"
                        )));
                    }
                }
                _ => {}
            }
        }
        if !(0.0..1.0).contains(&self.crosstalk) {
            return Err(Error::InvalidArgument("crosstalk must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// What the generator planted: actual phase boundaries and the true
/// per-second speaker sets.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub start: Timestamp,
    pub transitions: Vec<Timestamp>,
    pub speakers: Vec<BTreeSet<MemberId>>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        let speakers: Vec<Vec<&str>> = self
            .speakers
            .iter()
            .map(|set| set.iter().map(|m| m.as_str()).collect())
            .collect();
        let doc = serde_json::json!({
            "start": self.start.to_iso_millis(),
            "transitions": self.transitions.iter().map(|t| t.to_iso_millis()).collect::<Vec<_>>(),
            "transition_secs": self
                .transitions
                .iter()
                .map(|t| t.secs_since(self.start))
                .collect::<Vec<_>>(),
            "speakers_per_second": speakers,
        });
        serde_json::to_string_pretty(&doc).expect("ground truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            start: String,
            transitions: Vec<String>,
            speakers_per_second: Vec<Vec<String>>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        Ok(GroundTruth {
            start: Timestamp::parse_iso(&doc.start)?,
            transitions: doc
                .transitions
                .iter()
                .map(|t| Timestamp::parse_iso(t))
                .collect::<Result<Vec<_>>>()?,
            speakers: doc
                .speakers_per_second
                .into_iter()
                .map(|v| v.into_iter().map(MemberId::new).collect())
                .collect(),
        })
    }
}

/// Generate the recording and its ground truth for a scenario.
///
/// The same spec (seed included) always produces the identical pair.
pub fn generate_recording(spec: &ScenarioSpec) -> Result<(Recording<f64>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let members = spec.member_ids();
    let start = match &spec.start_iso {
        Some(iso) => Timestamp::parse_iso(iso)?,
        None => Timestamp::parse_iso("2024-03-01T12:00:00.000")?,
    };

    // Phase boundaries, optionally jittered but kept strictly ordered.
    let nominal: Vec<u64> = spec
        .phases
        .iter()
        .scan(0u64, |acc, p| {
            *acc += p.duration_secs;
            Some(*acc)
        })
        .collect();
    let total_secs = *nominal.last().unwrap();
    let mut boundaries: Vec<u64> = Vec::with_capacity(nominal.len() - 1);
    let j = spec.transition_jitter_secs as i64;
    for (i, &b) in nominal[..nominal.len() - 1].iter().enumerate() {
        let jitter = if j > 0 { rng.gen_range(-j..=j) } else { 0 };
        let lo = if i == 0 { 1 } else { boundaries[i - 1] + 1 };
        let hi = total_secs - 1;
        boundaries.push((b as i64 + jitter).clamp(lo as i64, hi as i64) as u64);
    }

    // Integer-second speaking schedule. Each regime is a deterministic
    // rhythm: a short, denser onset (people diving into the new mode)
    // followed by a steady periodic pattern. Periodic steady states keep
    // the downstream complexity of a phase inside a stable band, so the
    // planted boundaries are the only structural breaks in the recording.
    let mut speaking = vec![vec![false; total_secs as usize]; spec.members];
    let phase_range = |i: usize| -> (u64, u64) {
        let lo = if i == 0 { 0 } else { boundaries[i - 1] };
        let hi = if i == spec.phases.len() - 1 {
            total_secs
        } else {
            boundaries[i]
        };
        (lo, hi)
    };
    let ffa_rotation = rng.gen_range(0..6u64);
    for (i, phase) in spec.phases.iter().enumerate() {
        let (lo, hi) = phase_range(i);
        if hi <= lo {
            continue;
        }
        let onset_end = lo + REGIME_ONSET_SECS.min((hi - lo) / 2);
        match &phase.regime {
            Regime::Silence => {}
            Regime::Monologue { speaker } => {
                for s in lo..hi {
                    let rel = s - lo;
                    let on = if s < onset_end {
                        rel % 2 == 0 // onset: speak every other second
                    } else {
                        rel % 3 == 0 // steady: one second on, two off
                    };
                    if on {
                        speaking[*speaker][s as usize] = true;
                    }
                }
            }
            Regime::Dialogue { a, b, turn_secs } => {
                for s in lo..hi {
                    let rel = s - lo;
                    if s < onset_end {
                        // onset: rapid one-second exchanges
                        let current = if rel % 2 == 0 { *a } else { *b };
                        speaking[current][s as usize] = true;
                    } else {
                        // steady: turns with a one-second handover gap
                        let cycle = 2 * (*turn_secs + 1);
                        let pos = rel % cycle;
                        if pos < *turn_secs {
                            speaking[*a][s as usize] = true;
                        } else if pos > *turn_secs && pos < cycle - 1 {
                            speaking[*b][s as usize] = true;
                        }
                    }
                }
            }
            Regime::FreeForAll { speak_prob } => {
                // staggered duty cycles realize the per-member speaking
                // probability; the rotation varies placement per seed
                let on_len = ((speak_prob * 6.0).round() as u64).clamp(1, 5);
                for m in 0..spec.members {
                    let offset = (ffa_rotation + m as u64 * 5) % 6;
                    for s in lo..hi {
                        let rel = s - lo;
                        let on = if s < onset_end {
                            (rel + m as u64) % 2 == 0 // onset: everyone half-duty
                        } else {
                            (rel + offset) % 6 < on_len
                        };
                        if on {
                            speaking[m][s as usize] = true;
                        }
                    }
                }
            }
        }
    }

    // Per-sample burst waveforms: a syllable on/off process runs through
    // each maximal speaking run.
    let samples_per_sec = 20usize;
    let total_samples = total_secs as usize * samples_per_sec;
    let mut burst = vec![vec![0.0f64; total_samples]; spec.members];
    for m in 0..spec.members {
        let mut s = 0usize;
        while s < total_secs as usize {
            if !speaking[m][s] {
                s += 1;
                continue;
            }
            let run_start = s;
            while s < total_secs as usize && speaking[m][s] {
                s += 1;
            }
            let first = run_start * samples_per_sec;
            let last = s * samples_per_sec;
            let mut pos = first;
            loop {
                let on = rng.gen_range(SYLLABLE_ON.0..=SYLLABLE_ON.1);
                let amp = rng.gen_range(BURST_AMP.0..BURST_AMP.1);
                for p in pos..(pos + on).min(last) {
                    burst[m][p] = amp;
                }
                pos += on + rng.gen_range(SYLLABLE_OFF.0..=SYLLABLE_OFF.1);
                if pos >= last {
                    break;
                }
            }
        }
    }

    // Mix: own burst + attenuated sum of the others + noise floor.
    let mut series = Vec::with_capacity(spec.members);
    for m in 0..spec.members {
        let mut samples = Vec::with_capacity(total_samples);
        for t in 0..total_samples {
            let others: f64 = (0..spec.members)
                .filter(|&o| o != m)
                .map(|o| burst[o][t])
                .sum();
            let amp = BASE_FLOOR
                + rng.gen::<f64>() * spec.noise_amp
                + burst[m][t]
                + spec.crosstalk * others;
            samples.push(Some(amp));
        }
        series.push(VolumeSeries::new(
            members[m].clone(),
            start,
            0.05,
            samples,
        )?);
    }

    let mut meta = BTreeMap::new();
    meta.insert("source".to_string(), "synthetic".to_string());
    meta.insert("seed".to_string(), spec.seed.to_string());
    let recording = Recording::new(series, meta)?;

    let truth = GroundTruth {
        start,
        transitions: boundaries
            .iter()
            .map(|&b| start.offset(b as f64))
            .collect(),
        speakers: (0..total_secs as usize)
            .map(|s| {
                (0..spec.members)
                    .filter(|&m| speaking[m][s])
                    .map(|m| members[m].clone())
                    .collect()
            })
            .collect(),
    };
    Ok((recording, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(regime: Regime, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            members: 3,
            phases: vec![PhaseSpec {
                duration_secs: 30,
                regime,
            }],
            noise_amp: DEFAULT_NOISE_AMP,
            crosstalk: DEFAULT_CROSSTALK,
            transition_jitter_secs: 0,
            seed,
            start_iso: None,
        }
    }

    #[test]
    fn silence_scenario_floats_near_the_noise_floor() {
        let (rec, truth) = generate_recording(&tiny_spec(Regime::Silence, 7)).unwrap();
        for s in &rec.series {
            for v in s.samples.iter().flatten() {
                assert!(*v >= BASE_FLOOR && *v <= BASE_FLOOR + DEFAULT_NOISE_AMP);
            }
        }
        assert!(truth.speakers.iter().all(|set| set.is_empty()));
        assert!(truth.transitions.is_empty());
    }

    #[test]
    fn monologue_truth_covers_only_the_speaker() {
        let (_, truth) =
            generate_recording(&tiny_spec(Regime::Monologue { speaker: 1 }, 7)).unwrap();
        let b = MemberId::from("B");
        assert!(truth.speakers.iter().any(|set| set.contains(&b)));
        for set in &truth.speakers {
            for m in set {
                assert_eq!(m, &b);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_bit_identical_recordings() {
        let spec = ScenarioSpec::four_phase(4, 42);
        let (rec1, truth1) = generate_recording(&spec).unwrap();
        let (rec2, truth2) = generate_recording(&spec).unwrap();
        assert_eq!(rec1, rec2);
        assert_eq!(truth1, truth2);
        let (rec3, _) = generate_recording(&ScenarioSpec::four_phase(4, 43)).unwrap();
        assert_ne!(rec1, rec3);
    }

    #[test]
    fn transition_count_is_phases_minus_one() {
        let spec = ScenarioSpec::four_phase(7, 5);
        let (_, truth) = generate_recording(&spec).unwrap();
        assert_eq!(truth.transitions.len(), 3);
        assert_eq!(
            truth.transitions,
            vec![
                truth.start.offset(360.0),
                truth.start.offset(840.0),
                truth.start.offset(1320.0)
            ]
        );
    }

    #[test]
    fn jitter_moves_boundaries_but_keeps_order() {
        let mut spec = ScenarioSpec::four_phase(4, 11);
        spec.transition_jitter_secs = 20;
        let (_, truth) = generate_recording(&spec).unwrap();
        assert_eq!(truth.transitions.len(), 3);
        for w in truth.transitions.windows(2) {
            assert!(w[0] < w[1]);
        }
        for (t, nominal) in truth.transitions.iter().zip([360.0, 840.0, 1320.0]) {
            assert!((t.secs_since(truth.start) - nominal).abs() <= 20.0);
        }
    }

    #[test]
    fn crosstalk_stays_below_speaker_at_frame_level() {
        let spec = ScenarioSpec::four_phase(5, 3);
        let (rec, truth) = generate_recording(&spec).unwrap();
        let ids = spec.member_ids();
        for (sec, speakers) in truth.speakers.iter().enumerate() {
            for speaker in speakers {
                let sp = rec.series_for(speaker).unwrap();
                let lo = sec * 20;
                let sp_mean: f64 =
                    sp.samples[lo..lo + 20].iter().flatten().sum::<f64>() / 20.0;
                for other in &ids {
                    if other == speaker || speakers.contains(other) {
                        continue;
                    }
                    let ot = rec.series_for(other).unwrap();
                    let ot_mean: f64 =
                        ot.samples[lo..lo + 20].iter().flatten().sum::<f64>() / 20.0;
                    assert!(
                        ot_mean < sp_mean,
                        "second {sec}: {other} at {ot_mean} not below {speaker} at {sp_mean}"
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = ScenarioSpec::four_phase(0, 1);
        assert!(generate_recording(&spec).is_err());
        spec = ScenarioSpec::four_phase(3, 1);
        spec.phases.clear();
        assert!(generate_recording(&spec).is_err());
        spec = ScenarioSpec::four_phase(3, 1);
        spec.phases[1].regime = Regime::Monologue { speaker: 9 };
        assert!(generate_recording(&spec).is_err());
    }

    #[test]
    fn ground_truth_json_round_trip() {
        let (_, truth) = generate_recording(&tiny_spec(Regime::FreeForAll { speak_prob: 0.4 }, 9))
            .unwrap();
        let json = truth.to_json();
        let parsed = GroundTruth::from_json(&json).unwrap();
        assert_eq!(parsed, truth);
    }

    #[test]
    fn scenario_spec_json_round_trip() {
        let spec = ScenarioSpec::four_phase(7, 42);
        let json = serde_json::to_string(&spec).unwrap();
        let parsed: ScenarioSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, spec);
    }
}
