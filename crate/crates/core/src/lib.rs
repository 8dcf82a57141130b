//! Overlap-aware speaker diarization by sparse factorization.
//!
//! A recording is summarized as an embedding signal `E` (one unit-norm
//! speaker embedding per sliding-window chunk, zero columns for non-speech).
//! The signal is factored as `E ~ Psi A` with an L1-regularized objective:
//! columns of `Psi` are speaker embeddings and rows of `A` are their activity
//! over time. Unused speakers are driven to zero, so only an upper bound on
//! the speaker count is needed, and overlapping speech shows up as two rows
//! active at the same step.
//!
//! The pipeline is
//!
//! 1. [`spectrum::estimate_max_speakers`] picks the speaker budget `k` from
//!    the knee of the singular-value spectrum,
//! 2. [`optimizer::factorize`] solves for `Psi` and `A`, keeping the best
//!    of several seeded restarts,
//! 3. [`decoder::decode_factorization`] merges near-collinear atoms and
//!    thresholds `A` into timed segments,
//! 4. [`metrics`] scores segments against a reference.
//!
//! [`simulator`] produces signals with known ground truth for testing.

pub mod decoder;
pub mod error;
pub mod metrics;
pub mod optimizer;
pub mod signal;
pub mod simulator;
pub mod spectrum;

pub use decoder::{
    decode, decode_factorization, merge_duplicate_columns, prune_speakers, DecodeParams, Diarization, Segment,
};
pub use error::{Error, Result};
pub use optimizer::{factorize, ActivationMatrix, BasisMatrix, Factorization, Hyperparams, LossBreakdown, ShrinkStep};
pub use signal::{load_signal, save_signal, ChunkGrid, EmbeddingSignal, SignalFormat};
pub use simulator::{simulate, SimScenario, Simulation};
pub use spectrum::{estimate_max_speakers, SpectrumReport};

/// Writes `bytes` to `path` through a temporary sibling file and a rename.
pub fn write_file_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    signal::write_atomic(path, bytes)
}
