//! Synthetic embedding signals with known speaker activity.
//!
//! Speakers take alternating turns with geometric lengths. Some steps are
//! silent (all-zero columns); in overlap regions the column is the weighted
//! average of the two active speakers' embeddings, the linear mixing that
//! real utterance embedders approximately obey. Optional Gaussian noise is
//! added before the columns are renormalized.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, StandardNormal};

use crate::decoder::{decode, DecodeParams, Diarization};
use crate::error::{Error, Result};
use crate::optimizer::ActivationMatrix;
use crate::signal::{normalize_columns, EmbeddingSignal};

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub num_speakers: usize,
    pub embedding_dim: usize,
    pub num_steps: usize,
    pub step_seconds: f64,
    pub window_seconds: f64,
    pub mean_turn_steps: usize,
    /// Fraction of speech steps on which a second speaker is mixed in.
    pub overlap_fraction: f64,
    /// Fraction of all steps that are silent.
    pub silence_fraction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Gram-Schmidt the speaker embeddings into an orthonormal set.
    pub orthogonal: bool,
    /// Weight of the turn owner in an overlap mix; the partner gets the rest.
    pub mix_weight: f64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            num_speakers: 3,
            embedding_dim: 32,
            num_steps: 300,
            step_seconds: 1.0,
            window_seconds: 6.0,
            mean_turn_steps: 20,
            overlap_fraction: 0.0,
            silence_fraction: 0.1,
            noise_sigma: 0.0,
            seed: 0,
            orthogonal: false,
            mix_weight: 0.5,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.num_speakers == 0 {
            return bad("num_speakers must be >= 1".into());
        }
        if self.embedding_dim == 0 || self.num_steps == 0 {
            return bad("embedding_dim and num_steps must be >= 1".into());
        }
        if self.num_speakers > self.embedding_dim {
            return bad(format!(
                "num_speakers ({}) exceeds embedding_dim ({})",
                self.num_speakers, self.embedding_dim
            ));
        }
        if !(self.step_seconds.is_finite() && self.step_seconds > 0.0) {
            return bad(format!("step_seconds must be > 0, got {}", self.step_seconds));
        }
        if !(self.window_seconds.is_finite() && self.window_seconds >= self.step_seconds) {
            return bad("window_seconds must be >= step_seconds".into());
        }
        if self.mean_turn_steps == 0 {
            return bad("mean_turn_steps must be >= 1".into());
        }
        for (name, v) in [
            ("overlap_fraction", self.overlap_fraction),
            ("silence_fraction", self.silence_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.overlap_fraction + self.silence_fraction >= 1.0 {
            return bad(format!(
                "overlap_fraction + silence_fraction must be < 1, got {}",
                self.overlap_fraction + self.silence_fraction
            ));
        }
        if self.overlap_fraction > 0.0 && self.num_speakers < 2 {
            return bad("overlap needs at least two speakers".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.mix_weight > 0.0 && self.mix_weight < 1.0) {
            return bad(format!("mix_weight must lie in (0, 1), got {}", self.mix_weight));
        }
        Ok(())
    }

    /// Applies `key=value` lines (`#` comments allowed) on top of `self`.
    /// Keys are the field names.
    pub fn apply_config(mut self, text: &str) -> Result<Self> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| err(format!("{key}: {e}"));
            match key {
                "num_speakers" => self.num_speakers = value.parse().map_err(|e| bad(&e))?,
                "embedding_dim" => self.embedding_dim = value.parse().map_err(|e| bad(&e))?,
                "num_steps" => self.num_steps = value.parse().map_err(|e| bad(&e))?,
                "step_seconds" => self.step_seconds = value.parse().map_err(|e| bad(&e))?,
                "window_seconds" => self.window_seconds = value.parse().map_err(|e| bad(&e))?,
                "mean_turn_steps" => self.mean_turn_steps = value.parse().map_err(|e| bad(&e))?,
                "overlap_fraction" => self.overlap_fraction = value.parse().map_err(|e| bad(&e))?,
                "silence_fraction" => self.silence_fraction = value.parse().map_err(|e| bad(&e))?,
                "noise_sigma" => self.noise_sigma = value.parse().map_err(|e| bad(&e))?,
                "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
                "orthogonal" => self.orthogonal = value.parse().map_err(|e| bad(&e))?,
                "mix_weight" => self.mix_weight = value.parse().map_err(|e| bad(&e))?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(self)
    }
}

/// Everything [`simulate`] produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub signal: EmbeddingSignal,
    /// Speaker `s`'s embedding is column `s`.
    pub embeddings: DMatrix<f64>,
    /// 1.0 where a speaker is active, 0.0 elsewhere.
    pub truth: ActivationMatrix,
    pub reference: Diarization,
    /// Steps where two speakers are mixed.
    pub overlap_steps: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Turn {
    speaker: usize,
    len: usize,
}

pub fn simulate(scenario: &SimScenario) -> Result<Simulation> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let s = scenario.num_speakers;
    let m = scenario.embedding_dim;
    let t_len = scenario.num_steps;

    let embeddings = speaker_embeddings(m, s, scenario.orthogonal, &mut rng);

    let silent_steps = (scenario.silence_fraction * t_len as f64).round() as usize;
    let speech_steps = t_len - silent_steps.min(t_len);
    let turns = draw_turns(speech_steps, s, scenario.mean_turn_steps, &mut rng)?;

    // per-step owner (None = silence); silence goes into the gaps between turns
    let gaps = silence_gaps(silent_steps, turns.len(), scenario.mean_turn_steps, &mut rng);
    let mut owner: Vec<Option<usize>> = Vec::with_capacity(t_len);
    let mut turn_spans = Vec::with_capacity(turns.len());
    for (i, turn) in turns.iter().enumerate() {
        owner.extend(std::iter::repeat_n(None, gaps[i]));
        turn_spans.push((owner.len(), turn.len));
        owner.extend(std::iter::repeat_n(Some(turn.speaker), turn.len));
    }
    owner.extend(std::iter::repeat_n(None, gaps[turns.len()]));
    debug_assert_eq!(owner.len(), t_len);

    let overlap_target = (scenario.overlap_fraction * speech_steps as f64).round() as usize;
    let partner = place_overlaps(&turns, &turn_spans, overlap_target, s, t_len, &mut rng);

    let p = scenario.mix_weight;
    let q = 1.0 - p;
    let mut raw = DMatrix::<f64>::zeros(m, t_len);
    let mut truth = DMatrix::<f64>::zeros(s, t_len);
    let mut overlap_steps = Vec::new();
    for t in 0..t_len {
        let Some(a) = owner[t] else { continue };
        truth[(a, t)] = 1.0;
        match partner[t] {
            Some(b) => {
                truth[(b, t)] = 1.0;
                overlap_steps.push(t);
                let mix = (embeddings.column(a) * p + embeddings.column(b) * q) / (p + q);
                raw.set_column(t, &mix);
            }
            None => raw.set_column(t, &embeddings.column(a)),
        }
    }

    if scenario.noise_sigma > 0.0 {
        let noise =
            Normal::new(0.0, scenario.noise_sigma).map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
        for t in 0..t_len {
            if owner[t].is_some() {
                for v in raw.column_mut(t).iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
        }
    }

    let normalized = normalize_columns(&raw)?;
    let signal = EmbeddingSignal::new(
        normalized.map(|v| v as f32),
        scenario.step_seconds,
        scenario.window_seconds,
    )?;
    let truth = ActivationMatrix::new(truth)?;
    let reference = decode(
        &truth,
        &signal.grid(),
        &DecodeParams {
            threshold: 0.5,
            min_segment_steps: 1,
            min_fraction: 0.0,
            ..DecodeParams::default()
        },
    )?;

    Ok(Simulation {
        signal,
        embeddings,
        truth,
        reference,
        overlap_steps,
    })
}

fn speaker_embeddings(m: usize, s: usize, orthogonal: bool, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let mut e = DMatrix::<f64>::from_fn(m, s, |_, _| rng.sample(StandardNormal));
        let mut ok = true;
        for c in 0..s {
            let mut col: DVector<f64> = e.column(c).into_owned();
            if orthogonal {
                for prev in 0..c {
                    let basis = e.column(prev);
                    let proj = basis.dot(&col);
                    col -= basis * proj;
                }
            }
            let norm = col.norm();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            e.set_column(c, &(col / norm));
        }
        if ok {
            return e;
        }
    }
}

fn draw_turns(speech_steps: usize, speakers: usize, mean_turn: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Turn>> {
    let mut turns = Vec::new();
    if speech_steps == 0 {
        return Ok(turns);
    }
    // failures before the first success, shifted to start at 1: mean = 1/p
    let lengths =
        Geometric::new(1.0 / mean_turn as f64).map_err(|e| Error::InvalidArgument(format!("turn length: {e}")))?;
    let mut speaker = rng.random_range(0..speakers);
    let mut filled = 0;
    while filled < speech_steps {
        let len = ((lengths.sample(rng) + 1) as usize).min(speech_steps - filled);
        turns.push(Turn { speaker, len });
        filled += len;
        if speakers > 1 {
            let step = rng.random_range(1..speakers);
            speaker = (speaker + step) % speakers;
        }
    }
    Ok(turns)
}

/// Silence lengths for the `turns + 1` gaps around the turns.
fn silence_gaps(silent: usize, turns: usize, mean_turn: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let slots = turns + 1;
    let mut gaps = vec![0usize; slots];
    if silent == 0 {
        return gaps;
    }
    let typical = (mean_turn / 2).max(1);
    let blocks = silent.div_ceil(typical).clamp(1, slots).min(silent);
    // random composition of `silent` into `blocks` positive parts
    let mut cuts: Vec<usize> = if blocks > 1 {
        sample(rng, silent - 1, blocks - 1).into_iter().map(|c| c + 1).collect()
    } else {
        Vec::new()
    };
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(blocks);
    let mut prev = 0;
    for c in cuts {
        parts.push(c - prev);
        prev = c;
    }
    parts.push(silent - prev);
    let mut positions: Vec<usize> = sample(rng, slots, blocks).into_vec();
    positions.sort_unstable();
    for (pos, len) in positions.into_iter().zip(parts) {
        gaps[pos] = len;
    }
    gaps
}

/// Chooses contiguous overlap blocks inside the longest turns. Returns the
/// mixed-in partner for each step.
fn place_overlaps(
    turns: &[Turn],
    spans: &[(usize, usize)],
    mut remaining: usize,
    speakers: usize,
    t_len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Option<usize>> {
    let mut partner = vec![None; t_len];
    if remaining == 0 {
        return partner;
    }
    let mut order: Vec<usize> = (0..turns.len()).collect();
    order.sort_by(|&a, &b| turns[b].len.cmp(&turns[a].len).then(a.cmp(&b)));
    for i in order {
        if remaining == 0 {
            break;
        }
        let (start, len) = spans[i];
        // the turn owner keeps at least one solo step
        if len < 2 {
            break;
        }
        let block = remaining.min(len - 1);
        let offset = rng.random_range(0..=len - block);
        let owner = turns[i].speaker;
        let other = (owner + rng.random_range(1..speakers)) % speakers;
        for p in partner.iter_mut().skip(start + offset).take(block) {
            *p = Some(other);
        }
        remaining -= block;
    }
    partner
}
