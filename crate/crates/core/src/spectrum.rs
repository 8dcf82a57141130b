//! Speaker-budget estimation from the singular-value spectrum.
//!
//! The embedding signal is approximately low rank: every speech column is a
//! (possibly mixed) copy of a few speaker embeddings. The head of the sorted
//! spectrum therefore holds one large value per speaker followed by a noise
//! floor, and the knee of that curve gives a rough speaker count which is
//! then inflated to an upper bound.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::signal::EmbeddingSignal;

pub const DEFAULT_SENSITIVITY: f64 = 1.0;
/// Knee detection only looks at this many leading singular values.
pub const KNEE_HEAD_LEN: usize = 64;
pub const SPEAKER_MARGIN: f64 = 2.5;
pub const MIN_SPEAKER_BUDGET: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Full spectrum, descending.
    pub singular_values: Vec<f64>,
    pub knee_index: usize,
    pub k_max: usize,
}

/// All `min(M, T)` singular values of the signal in descending order.
pub fn singular_values(signal: &EmbeddingSignal) -> Vec<f64> {
    singular_values_of(&signal.to_f64())
}

pub fn singular_values_of(matrix: &DMatrix<f64>) -> Vec<f64> {
    // bidiagonalize the short side: work on the T x M transpose for wide inputs
    let svd_input = if matrix.nrows() < matrix.ncols() {
        matrix.transpose()
    } else {
        matrix.clone()
    };
    let mut values: Vec<f64> = svd_input.singular_values().iter().map(|v| v.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Kneedle knee of a descending curve.
///
/// Returns the number of values that precede the knee point, i.e. the
/// zero-based position where the curve flattens out. For a spectrum with `s`
/// dominant values followed by a flat floor this is `s`. Always `>= 1`.
pub fn kneedle_knee(values: &[f64], sensitivity: f64) -> Result<usize> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "knee detection needs at least 3 values, got {n}"
        )));
    }
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sensitivity must be positive, got {sensitivity}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in curve".into()));
    }
    let diff = difference_curve(values);
    let Some(diff) = diff else {
        return Ok(1);
    };

    let x_spacing = 1.0 / (n - 1) as f64;
    let threshold_drop = sensitivity * x_spacing;

    let is_local_max = |i: usize| diff[i] > diff[i - 1] && diff[i] >= diff[i + 1];
    let local_maxima: Vec<usize> = (1..n - 1).filter(|&i| is_local_max(i)).collect();

    for (pos, &candidate) in local_maxima.iter().enumerate() {
        let threshold = diff[candidate] - threshold_drop;
        let end = local_maxima.get(pos + 1).copied().unwrap_or(n);
        if diff[candidate + 1..end].iter().any(|&d| d < threshold) {
            return Ok(candidate.max(1));
        }
    }

    let global = diff
        .iter()
        .enumerate()
        .fold(
            (0usize, f64::NEG_INFINITY),
            |best, (i, &d)| {
                if d > best.1 {
                    (i, d)
                } else {
                    best
                }
            },
        )
        .0;
    Ok(global.max(1))
}

/// `(1 - y_norm) - x_norm` over the min-max normalized curve, or `None` for a
/// constant curve.
fn difference_curve(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    if range <= 0.0 {
        return None;
    }
    Some(
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = i as f64 / (n - 1) as f64;
                let y = (v - lo) / range;
                (1.0 - y) - x
            })
            .collect(),
    )
}

/// `ceil(2.5 * knee)`, floored at 2.
pub fn speaker_budget(knee_index: usize) -> usize {
    ((SPEAKER_MARGIN * knee_index as f64).ceil() as usize).max(MIN_SPEAKER_BUDGET)
}

pub fn estimate_max_speakers(signal: &EmbeddingSignal, sensitivity: f64) -> Result<SpectrumReport> {
    let singular_values = singular_values(signal);
    let head = &singular_values[..singular_values.len().min(KNEE_HEAD_LEN)];
    let knee_index = if head.len() < 3 {
        // too short for a curve; count the clearly nonzero values instead
        let top = head.first().copied().unwrap_or(0.0);
        head.iter().filter(|&&v| v > 1e-8 * top).count().max(1)
    } else {
        kneedle_knee(head, sensitivity)?
    };
    Ok(SpectrumReport {
        k_max: speaker_budget(knee_index),
        singular_values,
        knee_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(m: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        v
    }

    fn signal_from_columns(m: usize, cols: &[Vec<f32>]) -> EmbeddingSignal {
        let data: Vec<f32> = cols.iter().flatten().copied().collect();
        EmbeddingSignal::new(DMatrix::from_vec(m, cols.len(), data), 1.0, 6.0).unwrap()
    }

    #[test]
    fn rank_one_signal_spectrum() {
        let cols = vec![unit(8, 2); 100];
        let sv = singular_values(&signal_from_columns(8, &cols));
        assert_eq!(sv.len(), 8);
        assert!((sv[0] - 10.0).abs() < 1e-12);
        assert!(sv[1..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn two_orthogonal_blocks() {
        let mut cols = vec![unit(6, 0); 50];
        cols.extend(vec![unit(6, 3); 50]);
        let sv = singular_values(&signal_from_columns(6, &cols));
        assert!((sv[0] - 50f64.sqrt()).abs() < 1e-12);
        assert!((sv[1] - 50f64.sqrt()).abs() < 1e-12);
        assert!(sv[2..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn knee_of_step_spectrum() {
        let mut values = vec![10.0; 4];
        values.extend(vec![0.01; 16]);
        assert_eq!(kneedle_knee(&values, 1.0).unwrap(), 4);
    }

    #[test]
    fn knee_of_constant_is_one() {
        assert_eq!(kneedle_knee(&[5.0; 5], 1.0).unwrap(), 1);
    }

    #[test]
    fn knee_needs_three_values() {
        assert!(kneedle_knee(&[2.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn budget_rounds_up_with_floor() {
        assert_eq!(speaker_budget(1), 3);
        assert_eq!(speaker_budget(4), 10);
        assert_eq!(speaker_budget(3), 8);
        assert_eq!(speaker_budget(5), 13);
    }

    #[test]
    fn rank_one_budget() {
        let cols = vec![unit(8, 1); 40];
        let report = estimate_max_speakers(&signal_from_columns(8, &cols), 1.0).unwrap();
        assert_eq!(report.knee_index, 1);
        assert_eq!(report.k_max, 3);
    }

    #[test]
    fn tiny_signal_falls_back_to_counting() {
        let cols = vec![unit(2, 0), unit(2, 1), unit(2, 1)];
        let report = estimate_max_speakers(&signal_from_columns(2, &cols), 1.0).unwrap();
        assert_eq!(report.knee_index, 2);
        assert_eq!(report.k_max, 5);
    }
}
