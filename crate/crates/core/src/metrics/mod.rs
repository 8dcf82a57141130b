//! Diarization scoring: DER, purity, coverage and their harmonic mean.
//!
//! All measures are computed on exact interval arithmetic rather than on a
//! frame grid.

mod assignment;
mod interval;
mod rttm;

use std::collections::BTreeMap;

pub use assignment::max_weight_assignment;
pub use interval::{complement_within, covers, intersection_duration, normalize, total_duration, Interval};
pub use rttm::{emit_rttm, parse_rttm, parse_rttm_files};

use crate::error::{Error, Result};

const DURATION_TOL: f64 = 1e-9;

/// Per-speaker speech intervals on a `[0, total_duration]` timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTimeline {
    speakers: BTreeMap<String, Vec<Interval>>,
    total_duration: f64,
}

impl LabeledTimeline {
    /// Builds a timeline; each speaker's intervals are sorted, clipped and
    /// merged. Speakers left without speech are dropped.
    pub fn new(speakers: BTreeMap<String, Vec<Interval>>, total_duration: f64) -> Self {
        let speakers = speakers
            .into_iter()
            .map(|(name, ivs)| (name, normalize(ivs, total_duration)))
            .filter(|(_, ivs)| !ivs.is_empty())
            .collect();
        Self {
            speakers,
            total_duration,
        }
    }

    pub fn empty(total_duration: f64) -> Self {
        Self::new(BTreeMap::new(), total_duration)
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    /// Same speech on a different timeline length.
    pub fn with_total_duration(&self, total_duration: f64) -> Self {
        Self::new(self.speakers.clone(), total_duration)
    }

    pub fn speakers(&self) -> impl Iterator<Item = (&str, &[Interval])> {
        self.speakers.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn speaker_count(&self) -> usize {
        self.speakers.len()
    }

    pub fn intervals(&self, speaker: &str) -> Option<&[Interval]> {
        self.speakers.get(speaker).map(Vec::as_slice)
    }

    /// Summed speech over speakers; overlapped time counts once per speaker.
    pub fn speech_duration(&self) -> f64 {
        self.speakers.values().map(|v| total_duration(v)).sum()
    }

    /// Latest interval end across all speakers.
    pub fn last_end(&self) -> f64 {
        self.speakers
            .values()
            .filter_map(|v| v.last().map(|iv| iv.end))
            .fold(0.0, f64::max)
    }

    fn rename(&self, f: impl Fn(&str) -> String) -> Self {
        Self {
            speakers: self.speakers.iter().map(|(k, v)| (f(k), v.clone())).collect(),
            total_duration: self.total_duration,
        }
    }
}

/// Renames every speaker through `f`; used in label-invariance checks.
pub fn relabel(timeline: &LabeledTimeline, f: impl Fn(&str) -> String) -> LabeledTimeline {
    timeline.rename(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerReport {
    pub false_alarm_seconds: f64,
    pub missed_seconds: f64,
    pub confusion_seconds: f64,
    pub total_reference_speech_seconds: f64,
    pub der: f64,
}

impl DerReport {
    fn from_parts(false_alarm: f64, missed: f64, confusion: f64, reference: f64) -> Self {
        let errors = false_alarm + missed + confusion;
        let der = if reference > 0.0 {
            errors / reference
        } else if errors > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        Self {
            false_alarm_seconds: false_alarm,
            missed_seconds: missed,
            confusion_seconds: confusion,
            total_reference_speech_seconds: reference,
            der,
        }
    }
}

fn check_durations(reference: &LabeledTimeline, hypothesis: &LabeledTimeline) -> Result<()> {
    let (r, h) = (reference.total_duration, hypothesis.total_duration);
    if (r - h).abs() > DURATION_TOL * r.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "timeline durations differ: reference {r}s, hypothesis {h}s"
        )));
    }
    Ok(())
}

/// Regions that count towards scoring: everything except `collar` seconds
/// around every reference segment boundary.
fn scored_region(reference: &LabeledTimeline, collar: f64) -> Vec<Interval> {
    let total = reference.total_duration;
    if collar <= 0.0 {
        return vec![Interval::new(0.0, total)];
    }
    let holes: Vec<Interval> = reference
        .speakers
        .values()
        .flatten()
        .flat_map(|iv| {
            [
                Interval::new(iv.start - collar, iv.start + collar),
                Interval::new(iv.end - collar, iv.end + collar),
            ]
        })
        .collect();
    complement_within(&normalize(holes, total), total)
}

fn crop(intervals: &[Interval], region: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < intervals.len() && j < region.len() {
        let lo = intervals[i].start.max(region[j].start);
        let hi = intervals[i].end.min(region[j].end);
        if hi > lo {
            out.push(Interval::new(lo, hi));
        }
        if intervals[i].end < region[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Diarization error rate with an optimal one-to-one speaker mapping.
///
/// Time where `n_ref` reference and `n_hyp` hypothesis speakers are active
/// contributes `max(0, n_ref - n_hyp)` missed, `max(0, n_hyp - n_ref)` false
/// alarm and `min(n_ref, n_hyp) - n_correct` confusion, where `n_correct`
/// counts mapped pairs active together.
pub fn der(reference: &LabeledTimeline, hypothesis: &LabeledTimeline, collar_seconds: f64) -> Result<DerReport> {
    check_durations(reference, hypothesis)?;
    if !(collar_seconds.is_finite() && collar_seconds >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "collar must be >= 0, got {collar_seconds}"
        )));
    }
    let region = scored_region(reference, collar_seconds);
    let refs: Vec<Vec<Interval>> = reference.speakers.values().map(|v| crop(v, &region)).collect();
    let hyps: Vec<Vec<Interval>> = hypothesis.speakers.values().map(|v| crop(v, &region)).collect();

    let mut bounds: Vec<f64> = refs
        .iter()
        .chain(hyps.iter())
        .flatten()
        .flat_map(|iv| [iv.start, iv.end])
        .collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut missed = 0.0;
    let mut false_alarm = 0.0;
    let mut matched_capacity = 0.0;
    let mut reference_speech = 0.0;
    let mut cooccurrence = vec![vec![0.0f64; hyps.len()]; refs.len()];
    let mut active_ref = Vec::with_capacity(refs.len());
    let mut active_hyp = Vec::with_capacity(hyps.len());

    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let d = hi - lo;
        if d <= 0.0 {
            continue;
        }
        let mid = lo + 0.5 * d;
        active_ref.clear();
        active_hyp.clear();
        active_ref.extend((0..refs.len()).filter(|&i| covers(&refs[i], mid)));
        active_hyp.extend((0..hyps.len()).filter(|&j| covers(&hyps[j], mid)));
        let (nr, nh) = (active_ref.len() as f64, active_hyp.len() as f64);
        reference_speech += d * nr;
        missed += d * (nr - nh).max(0.0);
        false_alarm += d * (nh - nr).max(0.0);
        matched_capacity += d * nr.min(nh);
        for &i in &active_ref {
            for &j in &active_hyp {
                cooccurrence[i][j] += d;
            }
        }
    }

    let mapping = max_weight_assignment(&cooccurrence);
    let correct: f64 = mapping
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| cooccurrence[i][j]))
        .sum();
    let confusion = (matched_capacity - correct).max(0.0);
    Ok(DerReport::from_parts(false_alarm, missed, confusion, reference_speech))
}

/// Numerator and denominator of a purity-style ratio.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Ratio {
    pub matched: f64,
    pub total: f64,
}

impl Ratio {
    /// `matched / total`, or 1.0 when there is nothing to score.
    pub fn value(&self) -> f64 {
        if self.total > 0.0 {
            self.matched / self.total
        } else {
            1.0
        }
    }
}

/// For every cluster of `clusters`, its best overlap with any speaker of
/// `speakers`, summed, against the summed cluster durations.
fn best_overlap_ratio(speakers: &LabeledTimeline, clusters: &LabeledTimeline) -> Ratio {
    let mut ratio = Ratio::default();
    for cluster in clusters.speakers.values() {
        ratio.total += total_duration(cluster);
        ratio.matched += speakers
            .speakers
            .values()
            .map(|s| intersection_duration(cluster, s))
            .fold(0.0, f64::max);
    }
    ratio
}

pub fn purity_ratio(reference: &LabeledTimeline, hypothesis: &LabeledTimeline) -> Ratio {
    best_overlap_ratio(reference, hypothesis)
}

pub fn coverage_ratio(reference: &LabeledTimeline, hypothesis: &LabeledTimeline) -> Ratio {
    best_overlap_ratio(hypothesis, reference)
}

/// Share of hypothesis speech attributable to each cluster's dominant
/// reference speaker. 1.0 when the hypothesis is silent.
pub fn purity(reference: &LabeledTimeline, hypothesis: &LabeledTimeline) -> f64 {
    purity_ratio(reference, hypothesis).value()
}

/// Share of reference speech captured by each speaker's dominant cluster.
/// 1.0 when the reference is silent.
pub fn coverage(reference: &LabeledTimeline, hypothesis: &LabeledTimeline) -> f64 {
    coverage_ratio(reference, hypothesis).value()
}

/// Harmonic mean of purity and coverage; 0 when both are 0.
pub fn f_score(purity: f64, coverage: f64) -> f64 {
    if purity + coverage <= 0.0 {
        0.0
    } else {
        2.0 * purity * coverage / (purity + coverage)
    }
}

/// Every measure for one file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FileScore {
    pub der: DerReport,
    pub purity: Ratio,
    pub coverage: Ratio,
}

impl FileScore {
    pub fn f_score(&self) -> f64 {
        f_score(self.purity.value(), self.coverage.value())
    }

    /// Whether purity or coverage fell back to the empty-denominator value.
    pub fn has_empty_side(&self) -> bool {
        self.purity.total <= 0.0 || self.coverage.total <= 0.0
    }
}

pub fn score(reference: &LabeledTimeline, hypothesis: &LabeledTimeline, collar_seconds: f64) -> Result<FileScore> {
    Ok(FileScore {
        der: der(reference, hypothesis, collar_seconds)?,
        purity: purity_ratio(reference, hypothesis),
        coverage: coverage_ratio(reference, hypothesis),
    })
}

/// Headline numbers of a (possibly aggregated) evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub der: f64,
    pub false_alarm_seconds: f64,
    pub missed_seconds: f64,
    pub confusion_seconds: f64,
    pub purity: f64,
    pub coverage: f64,
    pub f_score: f64,
}

impl From<&FileScore> for Summary {
    fn from(s: &FileScore) -> Self {
        Self {
            der: s.der.der,
            false_alarm_seconds: s.der.false_alarm_seconds,
            missed_seconds: s.der.missed_seconds,
            confusion_seconds: s.der.confusion_seconds,
            purity: s.purity.value(),
            coverage: s.coverage.value(),
            f_score: s.f_score(),
        }
    }
}

/// Corpus-level aggregation of per-file scores.
///
/// `micro` pools durations across files (summed DER components,
/// duration-weighted purity and coverage); `macro_` averages the per-file
/// values, computing F per file first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSummary {
    pub files: usize,
    pub micro: Summary,
    pub macro_: Summary,
}

pub fn aggregate(scores: &[FileScore]) -> Option<CorpusSummary> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let sum = |f: &dyn Fn(&FileScore) -> f64| scores.iter().map(f).sum::<f64>();

    let der = DerReport::from_parts(
        sum(&|s| s.der.false_alarm_seconds),
        sum(&|s| s.der.missed_seconds),
        sum(&|s| s.der.confusion_seconds),
        sum(&|s| s.der.total_reference_speech_seconds),
    );
    let purity = Ratio {
        matched: sum(&|s| s.purity.matched),
        total: sum(&|s| s.purity.total),
    };
    let coverage = Ratio {
        matched: sum(&|s| s.coverage.matched),
        total: sum(&|s| s.coverage.total),
    };
    let micro = Summary::from(&FileScore { der, purity, coverage });

    let per_file: Vec<Summary> = scores.iter().map(Summary::from).collect();
    let mean = |f: &dyn Fn(&Summary) -> f64| per_file.iter().map(f).sum::<f64>() / n;
    let macro_ = Summary {
        der: mean(&|s| s.der),
        false_alarm_seconds: mean(&|s| s.false_alarm_seconds),
        missed_seconds: mean(&|s| s.missed_seconds),
        confusion_seconds: mean(&|s| s.confusion_seconds),
        purity: mean(&|s| s.purity),
        coverage: mean(&|s| s.coverage),
        f_score: mean(&|s| s.f_score),
    };
    Some(CorpusSummary {
        files: scores.len(),
        micro,
        macro_,
    })
}
