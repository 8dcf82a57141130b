//! RTTM reading and writing.
//!
//! Only `SPEAKER` records are used:
//! `SPEAKER <file> 1 <tbeg> <tdur> <NA> <NA> <speaker> <NA> <NA>`.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{Interval, LabeledTimeline};
use crate::error::{Error, Result};

const FIELDS: usize = 10;

struct Record<'a> {
    file: &'a str,
    speaker: &'a str,
    start: f64,
    duration: f64,
}

fn parse_line(line: &str, number: usize) -> Result<Option<Record<'_>>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(";;") {
        return Ok(None);
    }
    let err = |reason: String| Error::Parse { line: number, reason };
    let fields: Vec<&str> = trimmed.split_whitespace().collect();
    if fields.len() != FIELDS {
        return Err(err(format!("expected {FIELDS} fields, found {}", fields.len())));
    }
    if fields[0] != "SPEAKER" {
        // other record types (SPKR-INFO, LEXEME, ...) carry no speech turns
        return Ok(None);
    }
    let start: f64 = fields[3]
        .parse()
        .map_err(|e| err(format!("bad onset {:?}: {e}", fields[3])))?;
    let duration: f64 = fields[4]
        .parse()
        .map_err(|e| err(format!("bad duration {:?}: {e}", fields[4])))?;
    if !start.is_finite() || start < 0.0 {
        return Err(err(format!("negative or non-finite onset {start}")));
    }
    if !duration.is_finite() || duration < 0.0 {
        return Err(err(format!("negative or non-finite duration {duration}")));
    }
    Ok(Some(Record {
        file: fields[1],
        speaker: fields[7],
        start,
        duration,
    }))
}

/// Parses every file in an RTTM document. Each timeline's duration is the
/// end of its last segment.
pub fn parse_rttm_files(text: &str) -> Result<BTreeMap<String, LabeledTimeline>> {
    let mut files: BTreeMap<String, BTreeMap<String, Vec<Interval>>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(rec) = parse_line(line, i + 1)? {
            files
                .entry(rec.file.to_string())
                .or_default()
                .entry(rec.speaker.to_string())
                .or_default()
                .push(Interval::new(rec.start, rec.start + rec.duration));
        }
    }
    Ok(files
        .into_iter()
        .map(|(file, speakers)| {
            let end = speakers.values().flatten().map(|iv| iv.end).fold(0.0, f64::max);
            (file, LabeledTimeline::new(speakers, end))
        })
        .collect())
}

/// Parses an RTTM document, pooling all of its records into one timeline
/// whose duration is the end of the last segment.
pub fn parse_rttm(text: &str) -> Result<LabeledTimeline> {
    let mut speakers: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    let mut end = 0.0f64;
    for (i, line) in text.lines().enumerate() {
        if let Some(rec) = parse_line(line, i + 1)? {
            end = end.max(rec.start + rec.duration);
            speakers
                .entry(rec.speaker.to_string())
                .or_default()
                .push(Interval::new(rec.start, rec.start + rec.duration));
        }
    }
    Ok(LabeledTimeline::new(speakers, end))
}

/// One `SPEAKER` line per interval, ordered by onset then speaker.
pub fn emit_rttm(timeline: &LabeledTimeline, file_id: &str) -> String {
    let mut rows: Vec<(&str, Interval)> = timeline
        .speakers()
        .flat_map(|(name, ivs)| ivs.iter().map(move |iv| (name, *iv)))
        .collect();
    rows.sort_by(|a, b| a.1.start.total_cmp(&b.1.start).then_with(|| a.0.cmp(b.0)));
    let mut out = String::new();
    for (name, iv) in rows {
        let _ = writeln!(
            out,
            "SPEAKER {file_id} 1 {:.3} {:.3} <NA> <NA> {name} <NA> <NA>",
            iv.start,
            iv.duration()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_single_line() {
        let t = parse_rttm("SPEAKER ep1 1 0.000 5.000 <NA> <NA> alice <NA> <NA>\n").unwrap();
        assert_eq!(t.intervals("alice").unwrap(), &[Interval::new(0.0, 5.0)]);
        assert_eq!(t.total_duration(), 5.0);
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let text = "SPEAKER ep1 1 0.000 5.000 <NA> <NA> alice <NA> <NA>\n\nSPEAKER ep1 1 0.0 5.0 <NA> bob\n";
        match parse_rttm(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_duration_is_rejected() {
        let text = "SPEAKER ep1 1 3.0 -1.0 <NA> <NA> a <NA> <NA>";
        assert!(matches!(parse_rttm(text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_three_speakers() {
        let text = "\
SPEAKER f 1 0.000 2.500 <NA> <NA> a <NA> <NA>
SPEAKER f 1 2.000 1.250 <NA> <NA> b <NA> <NA>
SPEAKER f 1 7.125 0.375 <NA> <NA> c <NA> <NA>
SPEAKER f 1 4.000 1.000 <NA> <NA> a <NA> <NA>
";
        let t = parse_rttm(text).unwrap();
        let again = parse_rttm(&emit_rttm(&t, "f")).unwrap();
        assert_eq!(again.speaker_count(), 3);
        for (name, ivs) in t.speakers() {
            let back = again.intervals(name).unwrap();
            assert_eq!(back.len(), ivs.len());
            for (x, y) in ivs.iter().zip(back) {
                assert!((x.start - y.start).abs() <= 1e-3);
                assert!((x.end - y.end).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn multiple_files_are_split() {
        let text = "\
SPEAKER a 1 0 1 <NA> <NA> x <NA> <NA>
SPEAKER b 1 0 3 <NA> <NA> y <NA> <NA>
";
        let files = parse_rttm_files(text).unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files["b"].total_duration(), 3.0);
    }

    #[test]
    fn emit_format() {
        let t = parse_rttm("SPEAKER ep 1 1.5 2 <NA> <NA> spk00 <NA> <NA>").unwrap();
        assert_eq!(
            emit_rttm(&t, "ep"),
            "SPEAKER ep 1 1.500 2.000 <NA> <NA> spk00 <NA> <NA>\n"
        );
    }
}
