//! Turns an activation matrix into timed speaker segments.
//!
//! Each activation column is attributed to the step interval its chunk
//! starts, `[t * step, (t + 1) * step)`. Different speakers may be active on
//! the same step, so the resulting diarization can contain overlapping
//! segments.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::{Interval, LabeledTimeline};
use crate::optimizer::{ActivationMatrix, BasisMatrix, Factorization};
use crate::signal::ChunkGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub speaker: String,
    pub start_seconds: f64,
    pub end_seconds: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end_seconds - self.start_seconds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diarization {
    /// Sorted by start time, then speaker label.
    pub segments: Vec<Segment>,
    pub total_duration: f64,
}

impl Diarization {
    pub fn empty(total_duration: f64) -> Self {
        Self {
            segments: Vec::new(),
            total_duration,
        }
    }

    /// Distinct speaker labels, sorted.
    pub fn speakers(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.segments.iter().map(|s| s.speaker.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn speech_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    pub fn to_timeline(&self) -> LabeledTimeline {
        let mut by_speaker: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
        for s in &self.segments {
            by_speaker
                .entry(s.speaker.clone())
                .or_default()
                .push(Interval::new(s.start_seconds, s.end_seconds));
        }
        LabeledTimeline::new(by_speaker, self.total_duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    /// A speaker is active at a step when its activation is at least this.
    pub threshold: f64,
    /// Shorter active runs are dropped.
    pub min_segment_steps: usize,
    /// Rows with less than this fraction of the largest row mass are pruned.
    pub min_fraction: f64,
    /// Basis columns at least this cosine-similar are treated as one speaker
    /// by [`decode_factorization`]. Values above 1 disable merging.
    pub merge_cosine: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            threshold: 0.4,
            min_segment_steps: 2,
            min_fraction: 0.05,
            merge_cosine: 0.8,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.min_segment_steps == 0 {
            return Err(Error::InvalidArgument("min_segment_steps must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err(Error::InvalidArgument(format!(
                "min_fraction must lie in [0, 1], got {}",
                self.min_fraction
            )));
        }
        if !(self.merge_cosine > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "merge_cosine must be positive, got {}",
                self.merge_cosine
            )));
        }
        Ok(())
    }
}

/// Folds together activation rows whose basis columns point the same way.
///
/// Columns are grouped by single linkage on cosine similarity. Each group is
/// collapsed into its lowest row as `sum_r |psi_r| * a_r` clipped to 1, the
/// other rows of the group become zero. Zero columns are never merged.
pub fn merge_duplicate_columns(psi: &BasisMatrix, a: &ActivationMatrix, min_cosine: f64) -> Result<ActivationMatrix> {
    let psi = psi.as_matrix();
    let acts = a.as_matrix();
    if psi.ncols() != acts.nrows() {
        return Err(Error::Shape(format!(
            "basis has {} columns but activations have {} rows",
            psi.ncols(),
            acts.nrows()
        )));
    }
    let k = psi.ncols();
    let norms: Vec<f64> = (0..k).map(|r| psi.column(r).norm()).collect();
    let mut parent: Vec<usize> = (0..k).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..k {
        for j in i + 1..k {
            if norms[i] <= 0.0 || norms[j] <= 0.0 {
                continue;
            }
            let cos = psi.column(i).dot(&psi.column(j)) / (norms[i] * norms[j]);
            if cos >= min_cosine {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                // keep the lower index as representative
                let (lo, hi) = (ri.min(rj), ri.max(rj));
                parent[hi] = lo;
            }
        }
    }
    let groups: Vec<usize> = (0..k).map(|r| root(&mut parent, r)).collect();
    let mut size = vec![0usize; k];
    for &g in &groups {
        size[g] += 1;
    }
    let mut merged = nalgebra::DMatrix::zeros(k, acts.ncols());
    for (r, &g) in groups.iter().enumerate() {
        if size[g] == 1 {
            merged.row_mut(r).copy_from(&acts.row(r));
            continue;
        }
        for t in 0..acts.ncols() {
            merged[(g, t)] += norms[r] * acts[(r, t)];
        }
    }
    ActivationMatrix::new(merged.map(|v| v.clamp(0.0, 1.0)))
}

/// Decodes a fitted factorization: duplicate basis columns are merged first,
/// then the activations go through [`decode`].
pub fn decode_factorization(f: &Factorization, grid: &ChunkGrid, params: &DecodeParams) -> Result<Diarization> {
    params.validate()?;
    let a = merge_duplicate_columns(&f.psi, &f.activations, params.merge_cosine)?;
    decode(&a, grid, params)
}

/// Rows whose total activation reaches `min_fraction` of the heaviest row,
/// in ascending row order. Empty when every row is zero.
pub fn prune_speakers(a: &ActivationMatrix, min_fraction: f64) -> Vec<usize> {
    let mass = a.row_mass();
    let largest = mass.iter().copied().fold(0.0, f64::max);
    if largest <= 0.0 {
        return Vec::new();
    }
    let cutoff = min_fraction * largest;
    mass.iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0 && m >= cutoff)
        .map(|(r, _)| r)
        .collect()
}

/// Label for the speaker of rank `i` (0 = most active).
pub fn speaker_label(i: usize) -> String {
    format!("spk{i:02}")
}

pub fn decode(a: &ActivationMatrix, grid: &ChunkGrid, params: &DecodeParams) -> Result<Diarization> {
    params.validate()?;
    if a.steps() != grid.num_chunks {
        return Err(Error::Shape(format!(
            "activation matrix has {} steps but the grid has {} chunks",
            a.steps(),
            grid.num_chunks
        )));
    }
    let total_duration = grid.timeline_seconds();
    let mass = a.row_mass();
    let mut retained = prune_speakers(a, params.min_fraction);
    // stable: ties keep row order
    retained.sort_by(|&x, &y| mass[y].total_cmp(&mass[x]));

    let matrix = a.as_matrix();
    let mut segments = Vec::new();
    for (rank, &row) in retained.iter().enumerate() {
        let label = speaker_label(rank);
        let active: Vec<bool> = matrix.row(row).iter().map(|&v| v >= params.threshold).collect();
        for (first, last) in active_runs(&active) {
            if last - first + 1 < params.min_segment_steps {
                continue;
            }
            segments.push(Segment {
                speaker: label.clone(),
                start_seconds: first as f64 * grid.step_seconds,
                end_seconds: (last + 1) as f64 * grid.step_seconds,
            });
        }
    }
    segments.sort_by(|x, y| {
        x.start_seconds
            .total_cmp(&y.start_seconds)
            .then_with(|| x.speaker.cmp(&y.speaker))
    });
    Ok(Diarization {
        segments,
        total_duration,
    })
}

/// Maximal runs of `true` as inclusive `(first, last)` index pairs.
fn active_runs(active: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, &on) in active.iter().enumerate() {
        match (on, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, active.len() - 1));
    }
    runs
}
