//! Badge log parsing and resampling to the analysis rate.
//!
//! Input is one record per (member, 50 ms frame): JSONL objects
//! `{"t": "2024-03-01T12:00:00.050", "member": "A", "volume": 0.0312}`
//! or CSV rows under a `t,member,volume` header. Records need not be
//! sorted; frames nobody reported become missing samples.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{MemberId, Recording, Timestamp, VolumeSeries};
use crate::num::Real;

/// Default badge frame length in seconds.
pub const BADGE_FRAME_SECS: f64 = 0.05;

/// On-disk formats for badge volume logs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogFormat {
    Jsonl,
    Csv,
}

impl FromStr for LogFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(LogFormat::Jsonl),
            "csv" => Ok(LogFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown log format {other:?} (expected jsonl or csv)"
            ))),
        }
    }
}

impl fmt::Display for LogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogFormat::Jsonl => "jsonl",
            LogFormat::Csv => "csv",
        })
    }
}

/// One parsed log record.
#[derive(Debug, Clone, Deserialize)]
pub struct BadgeLogLine {
    pub t: String,
    pub member: String,
    pub volume: f64,
}

struct ParsedLine {
    time: Timestamp,
    member: MemberId,
    volume: f64,
}

fn validate_line(raw: BadgeLogLine, line_no: usize) -> Result<ParsedLine> {
    let time = Timestamp::parse_iso(&raw.t).map_err(|_| Error::Parse {
        line: line_no,
        msg: format!("unparseable timestamp {:?}", raw.t),
    })?;
    if !raw.volume.is_finite() || raw.volume < 0.0 {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("volume must be a non-negative number, got {}", raw.volume),
        });
    }
    Ok(ParsedLine {
        time,
        member: MemberId::new(raw.member),
        volume: raw.volume,
    })
}

fn parse_lines(path: &Path, format: LogFormat) -> Result<Vec<ParsedLine>> {
    let mut lines = Vec::new();
    match format {
        LogFormat::Jsonl => {
            let text = crate::error::read_input(path)?;
            for (idx, line) in text.lines().enumerate() {
                let line_no = idx + 1;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: BadgeLogLine =
                    serde_json::from_str(line).map_err(|e| Error::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })?;
                lines.push(validate_line(raw, line_no)?);
            }
        }
        LogFormat::Csv => {
            let text = crate::error::read_input(path)?;
            let mut reader = csv::Reader::from_reader(text.as_bytes());
            for (idx, record) in reader.deserialize::<BadgeLogLine>().enumerate() {
                let line_no = idx + 2; // header occupies line 1
                let raw = record.map_err(|e| Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?;
                lines.push(validate_line(raw, line_no)?);
            }
        }
    }
    Ok(lines)
}

/// Parse a badge volume log into a recording on a shared `sample_period`
/// grid (50 ms by default).
///
/// Every member gets a series spanning the full log; frames with no record
/// are missing, duplicate records for one (member, frame) are averaged.
pub fn parse_badge_log<R: Real>(
    path: impl AsRef<Path>,
    format: LogFormat,
    sample_period: f64,
) -> Result<Recording<R>> {
    let path = path.as_ref();
    let lines = parse_lines(path, format)?;
    if lines.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no records", path.display())));
    }

    let t_min = lines
        .iter()
        .map(|l| l.time.epoch_secs())
        .fold(f64::INFINITY, f64::min);
    let t_max = lines
        .iter()
        .map(|l| l.time.epoch_secs())
        .fold(f64::NEG_INFINITY, f64::max);
    let frames = ((t_max - t_min) / sample_period).round() as usize + 1;

    // (sum, count) accumulators so duplicate frames average order-independently.
    let mut acc: BTreeMap<MemberId, Vec<(f64, u32)>> = BTreeMap::new();
    for l in &lines {
        let slot = ((l.time.epoch_secs() - t_min) / sample_period).round() as usize;
        let cells = acc
            .entry(l.member.clone())
            .or_insert_with(|| vec![(0.0, 0); frames]);
        cells[slot].0 += l.volume;
        cells[slot].1 += 1;
    }

    let start = Timestamp::from_epoch_secs(t_min);
    let series = acc
        .into_iter()
        .map(|(member, cells)| {
            let samples = cells
                .into_iter()
                .map(|(sum, n)| {
                    if n == 0 {
                        None
                    } else {
                        R::from_f64(sum / n as f64)
                    }
                })
                .collect();
            VolumeSeries::new(member, start, sample_period, samples)
        })
        .collect::<Result<Vec<_>>>()?;

    Recording::new(series, BTreeMap::new())
}

/// Serialize a recording as a badge log in JSONL form, one record per
/// non-missing sample, ordered by time then member.
pub fn recording_to_jsonl<R: Real>(recording: &Recording<R>) -> String {
    let mut out = String::new();
    let len = recording.series.iter().map(|s| s.len()).max().unwrap_or(0);
    for i in 0..len {
        for s in &recording.series {
            let Some(Some(v)) = s.samples.get(i) else {
                continue;
            };
            let line = serde_json::json!({
                "t": s.time_at(i).to_iso_millis(),
                "member": s.member.as_str(),
                "volume": v.to_f64().unwrap_or(0.0),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    out
}

/// Serialize a recording as a badge log in CSV form with a
/// `t,member,volume` header.
pub fn recording_to_csv<R: Real>(recording: &Recording<R>) -> String {
    let mut out = String::from("t,member,volume\n");
    let len = recording.series.iter().map(|s| s.len()).max().unwrap_or(0);
    for i in 0..len {
        for s in &recording.series {
            let Some(Some(v)) = s.samples.get(i) else {
                continue;
            };
            out.push_str(&format!(
                "{},{},{}\n",
                s.time_at(i).to_iso_millis(),
                s.member.as_str(),
                v.to_f64().unwrap_or(0.0)
            ));
        }
    }
    out
}

/// Downsample a series by averaging bins of `target_period / sample_period`
/// input samples (the target must be an integer multiple of the source).
///
/// Each output sample is the mean of the non-missing inputs in its bin. A
/// bin whose non-missing fraction falls below `min_bin_coverage` (of the
/// full nominal bin size, so a short trailing bin counts its absent slots
/// as missing) yields a missing sample.
pub fn resample_series<R: Real>(
    series: &VolumeSeries<R>,
    target_period: f64,
    min_bin_coverage: f64,
) -> Result<VolumeSeries<R>> {
    let ratio_f = target_period / series.sample_period;
    let ratio = ratio_f.round();
    if ratio < 1.0 || (ratio_f - ratio).abs() > 1e-9 {
        return Err(Error::NonIntegerRatio {
            source_period: series.sample_period,
            target_period,
        });
    }
    let ratio = ratio as usize;

    let mut out = Vec::with_capacity(series.len().div_ceil(ratio));
    for bin in series.samples.chunks(ratio) {
        let defined: Vec<R> = bin.iter().flatten().copied().collect();
        let coverage = defined.len() as f64 / ratio as f64;
        if coverage >= min_bin_coverage && !defined.is_empty() {
            out.push(Some(crate::num::mean(&defined)));
        } else {
            out.push(None);
        }
    }

    VolumeSeries::new(series.member.clone(), series.start, target_period, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn vseries(values: Vec<Option<f64>>, period: f64) -> VolumeSeries<f64> {
        VolumeSeries::new(MemberId::from("A"), Timestamp::from_epoch_secs(0.0), period, values)
            .unwrap()
    }

    #[test]
    fn jsonl_three_frames_direct_mapping() {
        let f = write_temp(
            concat!(
                "{\"t\": \"2024-03-01T12:00:00.000\", \"member\": \"A\", \"volume\": 1.0}\n",
                "{\"t\": \"2024-03-01T12:00:00.050\", \"member\": \"A\", \"volume\": 2.0}\n",
                "{\"t\": \"2024-03-01T12:00:00.100\", \"member\": \"A\", \"volume\": 3.0}\n",
            ),
            ".jsonl",
        );
        let rec: Recording<f64> = parse_badge_log(f.path(), LogFormat::Jsonl, 0.05).unwrap();
        let s = rec.series_for(&MemberId::from("A")).unwrap();
        assert_eq!(s.sample_period, 0.05);
        assert_eq!(s.samples, vec![Some(1.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn missing_frame_becomes_gap() {
        let f = write_temp(
            concat!(
                "{\"t\": \"2024-03-01T12:00:00.000\", \"member\": \"A\", \"volume\": 1.0}\n",
                "{\"t\": \"2024-03-01T12:00:00.100\", \"member\": \"A\", \"volume\": 3.0}\n",
                "{\"t\": \"2024-03-01T12:00:00.000\", \"member\": \"B\", \"volume\": 5.0}\n",
                "{\"t\": \"2024-03-01T12:00:00.050\", \"member\": \"B\", \"volume\": 5.0}\n",
                "{\"t\": \"2024-03-01T12:00:00.100\", \"member\": \"B\", \"volume\": 5.0}\n",
            ),
            ".jsonl",
        );
        let rec: Recording<f64> = parse_badge_log(f.path(), LogFormat::Jsonl, 0.05).unwrap();
        let a = rec.series_for(&MemberId::from("A")).unwrap();
        assert_eq!(a.samples, vec![Some(1.0), None, Some(3.0)]);
    }

    #[test]
    fn duplicate_frames_average() {
        let f = write_temp(
            concat!(
                "{\"t\": \"2024-03-01T12:00:00.000\", \"member\": \"A\", \"volume\": 2.0}\n",
                "{\"t\": \"2024-03-01T12:00:00.000\", \"member\": \"A\", \"volume\": 4.0}\n",
            ),
            ".jsonl",
        );
        let rec: Recording<f64> = parse_badge_log(f.path(), LogFormat::Jsonl, 0.05).unwrap();
        let a = rec.series_for(&MemberId::from("A")).unwrap();
        assert_eq!(a.samples, vec![Some(3.0)]);
    }

    #[test]
    fn csv_parses_and_reports_line_numbers_on_bad_rows() {
        let ok = write_temp("t,member,volume\n2024-03-01T12:00:00.000,A,1.5\n", ".csv");
        let rec: Recording<f64> = parse_badge_log(ok.path(), LogFormat::Csv, 0.05).unwrap();
        assert_eq!(rec.members, vec![MemberId::from("A")]);

        let bad = write_temp(
            "t,member,volume\n2024-03-01T12:00:00.000,A,1.5\nnot-a-time,A,1.0\n",
            ".csv",
        );
        let err = parse_badge_log::<f64>(bad.path(), LogFormat::Csv, 0.05).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn negative_volume_and_empty_file_rejected() {
        let neg = write_temp(
            "{\"t\": \"2024-03-01T12:00:00.000\", \"member\": \"A\", \"volume\": -1.0}\n",
            ".jsonl",
        );
        assert!(matches!(
            parse_badge_log::<f64>(neg.path(), LogFormat::Jsonl, 0.05),
            Err(Error::Parse { line: 1, .. })
        ));
        let empty = write_temp("", ".jsonl");
        assert!(matches!(
            parse_badge_log::<f64>(empty.path(), LogFormat::Jsonl, 0.05),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn resample_constant_bin_yields_constant() {
        let s = vseries(vec![Some(2.0); 100], 0.05);
        let out = resample_series(&s, 5.0, 0.5).unwrap();
        assert_eq!(out.samples, vec![Some(2.0)]);
        assert_eq!(out.sample_period, 5.0);
    }

    #[test]
    fn bin_over_half_missing_yields_missing() {
        let mut values: Vec<Option<f64>> = vec![Some(1.0); 100];
        for v in values.iter_mut().take(60) {
            *v = None;
        }
        let s = vseries(values, 0.05);
        let out = resample_series(&s, 5.0, 0.5).unwrap();
        assert_eq!(out.samples, vec![None]);

        // exactly half present stays defined
        let mut values: Vec<Option<f64>> = vec![Some(1.0); 100];
        for v in values.iter_mut().take(50) {
            *v = None;
        }
        let out = resample_series(&vseries(values, 0.05), 5.0, 0.5).unwrap();
        assert_eq!(out.samples, vec![Some(1.0)]);
    }

    #[test]
    fn ramp_bin_mean_is_arithmetic_mean() {
        let values: Vec<Option<f64>> = (0..100).map(|i| Some(i as f64)).collect();
        let s = vseries(values, 0.05);
        let out = resample_series(&s, 5.0, 0.5).unwrap();
        assert_eq!(out.samples, vec![Some(49.5)]);
    }

    #[test]
    fn non_integer_ratio_names_both_periods() {
        let s = vseries(vec![Some(1.0); 10], 0.05);
        let err = resample_series(&s, 0.12, 0.5).unwrap_err();
        match err {
            Error::NonIntegerRatio {
                source_period,
                target_period,
            } => {
                assert_eq!(source_period, 0.05);
                assert_eq!(target_period, 0.12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trailing_partial_bin_counts_absent_slots_as_missing() {
        // 120 samples at 0.05 s -> bins of 100; the second bin holds 20
        // real slots out of a nominal 100, so it stays undefined.
        let s = vseries(vec![Some(1.0); 120], 0.05);
        let out = resample_series(&s, 5.0, 0.5).unwrap();
        assert_eq!(out.samples.len(), 2);
        assert_eq!(out.samples[0], Some(1.0));
        assert_eq!(out.samples[1], None);
    }

    #[test]
    fn output_stays_within_bin_bounds() {
        let values: Vec<Option<f64>> = (0..40).map(|i| Some((i % 7) as f64)).collect();
        let s = vseries(values.clone(), 0.05);
        let out = resample_series(&s, 1.0, 0.5).unwrap();
        for (bin, sample) in values.chunks(20).zip(&out.samples) {
            let lo = bin.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
            let hi = bin.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = sample.unwrap();
            assert!(v >= lo && v <= hi);
        }
    }
}
