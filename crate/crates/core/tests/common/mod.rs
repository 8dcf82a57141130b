//! Brute-force reference implementations used by the integration tests.
//!
//! Everything here is written independently of the library code it checks:
//! plain loops, dense frame grids, exhaustive search.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use sparse_diarize::metrics::{Interval, LabeledTimeline};

/// Speaker sets on a frame grid: `frames[f]` holds the speakers active on
/// frame `f`.
#[derive(Debug, Clone)]
pub struct FrameLabels {
    pub frames: Vec<Vec<usize>>,
    pub speakers: usize,
}

impl FrameLabels {
    /// Interval form with frames of `frame_len` seconds; speaker `i` is named
    /// `{prefix}{i}`.
    pub fn to_timeline(&self, frame_len: f64, prefix: &str) -> LabeledTimeline {
        let mut by_speaker: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
        for s in 0..self.speakers {
            let mut runs = Vec::new();
            let mut start: Option<usize> = None;
            for f in 0..=self.frames.len() {
                let on = f < self.frames.len() && self.frames[f].contains(&s);
                match (on, start) {
                    (true, None) => start = Some(f),
                    (false, Some(b)) => {
                        runs.push(Interval::new(b as f64 * frame_len, f as f64 * frame_len));
                        start = None;
                    }
                    _ => {}
                }
            }
            if !runs.is_empty() {
                by_speaker.insert(format!("{prefix}{s}"), runs);
            }
        }
        LabeledTimeline::new(by_speaker, self.frames.len() as f64 * frame_len)
    }
}

/// Random labels built from runs: each speaker toggles on and off with
/// geometric-ish run lengths.
pub fn random_frames<R: Rng>(rng: &mut R, num_frames: usize, speakers: usize) -> FrameLabels {
    let mut frames = vec![Vec::new(); num_frames];
    for s in 0..speakers {
        let density: f64 = rng.random_range(0.0..0.6);
        let mut f = 0;
        let mut on = rng.random_bool(density);
        while f < num_frames {
            let len = rng.random_range(1..120usize);
            if on {
                for frame in frames.iter_mut().skip(f).take(len) {
                    frame.push(s);
                }
            }
            f += len;
            on = rng.random_bool(density);
        }
    }
    FrameLabels { frames, speakers }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub false_alarm: f64,
    pub missed: f64,
    pub confusion: f64,
    pub reference_speech: f64,
    pub der: f64,
    pub purity: f64,
    pub coverage: f64,
}

/// All injective partial maps from `0..n` into `0..m`.
fn partial_injections(n: usize, m: usize) -> Vec<Vec<Option<usize>>> {
    fn go(
        i: usize,
        n: usize,
        m: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        go(i + 1, n, m, used, cur, out);
        cur.pop();
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                go(i + 1, n, m, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, n, m, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}

/// Cluster purity on frames: for every cluster, the frames of its best
/// matching class, over all cluster frames. 1 when there are none.
fn frame_purity(clusters: &FrameLabels, classes: &FrameLabels) -> f64 {
    let mut matched = 0usize;
    let mut total = 0usize;
    for c in 0..clusters.speakers {
        let mine: Vec<usize> = (0..clusters.frames.len())
            .filter(|&f| clusters.frames[f].contains(&c))
            .collect();
        total += mine.len();
        let best = (0..classes.speakers)
            .map(|s| mine.iter().filter(|&&f| classes.frames[f].contains(&s)).count())
            .max()
            .unwrap_or(0);
        matched += best;
    }
    if total == 0 {
        1.0
    } else {
        matched as f64 / total as f64
    }
}

/// Frame-counting DER (exhaustive optimal mapping), purity and coverage.
/// Frames whose span lies within `collar_frames` frames of a reference
/// boundary are not scored for DER.
pub fn frame_oracle(
    reference: &FrameLabels,
    hypothesis: &FrameLabels,
    frame_len: f64,
    collar_frames: usize,
) -> FrameScore {
    let n = reference.frames.len();
    assert_eq!(n, hypothesis.frames.len());
    let mut scored = vec![true; n];
    if collar_frames > 0 {
        // boundaries sit between frames b-1 and b (b in 0..=n)
        for s in 0..reference.speakers {
            for b in 0..=n {
                let before = b > 0 && reference.frames[b - 1].contains(&s);
                let after = b < n && reference.frames[b].contains(&s);
                if before != after {
                    let lo = b.saturating_sub(collar_frames);
                    let hi = (b + collar_frames).min(n);
                    for flag in &mut scored[lo..hi] {
                        *flag = false;
                    }
                }
            }
        }
    }

    let maps = partial_injections(reference.speakers, hypothesis.speakers);
    let mut best_correct = 0usize;
    for map in &maps {
        let mut correct = 0usize;
        for f in (0..n).filter(|&f| scored[f]) {
            for &r in &reference.frames[f] {
                if let Some(h) = map[r] {
                    if hypothesis.frames[f].contains(&h) {
                        correct += 1;
                    }
                }
            }
        }
        best_correct = best_correct.max(correct);
    }

    let (mut fa, mut miss, mut cap, mut speech) = (0usize, 0usize, 0usize, 0usize);
    for f in (0..n).filter(|&f| scored[f]) {
        let nr = reference.frames[f].len();
        let nh = hypothesis.frames[f].len();
        speech += nr;
        fa += nh.saturating_sub(nr);
        miss += nr.saturating_sub(nh);
        cap += nr.min(nh);
    }
    let conf = cap - best_correct;
    let errors = (fa + miss + conf) as f64;
    let der = if speech > 0 {
        errors / speech as f64
    } else if errors > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    FrameScore {
        false_alarm: fa as f64 * frame_len,
        missed: miss as f64 * frame_len,
        confusion: conf as f64 * frame_len,
        reference_speech: speech as f64 * frame_len,
        der,
        purity: frame_purity(hypothesis, reference),
        coverage: frame_purity(reference, hypothesis),
    }
}

/// Singular values by one-sided Jacobi rotations, sorted descending.
pub fn jacobi_singular_values(matrix: &DMatrix<f64>) -> Vec<f64> {
    let mut u = if matrix.nrows() >= matrix.ncols() {
        matrix.clone()
    } else {
        matrix.transpose()
    };
    let cols = u.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = u.column(p).norm_squared();
                let beta: f64 = u.column(q).norm_squared();
                let gamma: f64 = u.column(p).dot(&u.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut values: Vec<f64> = (0..cols).map(|j| u.column(j).norm()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// `||E - Psi A||_1 + lambda3 * J(A)` written out with loops.
pub fn smooth_loss(e: &DMatrix<f64>, psi: &DMatrix<f64>, a: &DMatrix<f64>, lambda3: f64) -> f64 {
    let (m, t) = e.shape();
    let k = psi.ncols();
    let mut rec = 0.0;
    for i in 0..m {
        for j in 0..t {
            let mut model = 0.0;
            for r in 0..k {
                model += psi[(i, r)] * a[(r, j)];
            }
            rec += (e[(i, j)] - model).abs();
        }
    }
    let mut jitter = 0.0;
    if t > 1 {
        for r in 0..k {
            for j in 1..t {
                jitter += (a[(r, j)] - a[(r, j - 1)]).abs();
            }
        }
        jitter /= (k * t) as f64;
    }
    rec + lambda3 * jitter
}

/// Distance of the point from the nearest kink of the smooth loss: the
/// smallest residual magnitude or adjacent activation difference.
pub fn kink_distance(e: &DMatrix<f64>, psi: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let residual = e - psi * a;
    let mut d = residual.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    for r in 0..a.nrows() {
        for j in 1..a.ncols() {
            d = d.min((a[(r, j)] - a[(r, j - 1)]).abs());
        }
    }
    d
}

/// Central finite differences of `f` with respect to every entry of `x`.
pub fn central_differences(x: &DMatrix<f64>, h: f64, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// Largest `|x - y| / max(|x|, |y|, floor)` over matching entries.
pub fn max_relative_error(x: &DMatrix<f64>, y: &DMatrix<f64>, floor: f64) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
