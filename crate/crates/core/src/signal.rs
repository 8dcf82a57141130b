//! Embedding signals: an `M x T` matrix whose columns are per-chunk speaker
//! embeddings, plus the sliding-window grid that produced them.
//!
//! Two on-disk encodings are supported. The binary `EMBSIG01` layout is
//!
//! ```text
//! offset  size  field
//! 0       8     magic "EMBSIG01"
//! 8       4     M (u32 LE)
//! 12      4     T (u32 LE)
//! 16      8     step_seconds (f64 LE)
//! 24      8     window_seconds (f64 LE)
//! 32      4*M*T f32 LE values, column-major
//! ```
//!
//! and the CSV layout is a `M,T,step,window` header row, one row with those
//! values, then one line per column (time step) holding `M` comma-separated
//! values.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EMBSIG01";
const HEADER_LEN: usize = 32;
const CSV_HEADER: &str = "M,T,step,window";

/// Columns with an L2 norm at or below this are treated as non-speech.
pub const ZERO_NORM_EPS: f64 = 1e-12;
/// Allowed deviation from unit norm for speech columns.
pub const UNIT_NORM_TOL: f64 = 1e-6;

pub const DEFAULT_WINDOW_SECONDS: f64 = 6.0;
pub const DEFAULT_MAX_STEP_SECONDS: f64 = 1.0;
pub const DEFAULT_MIN_CHUNKS: usize = 3600;

/// Encoding used by [`save_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    Binary,
    Csv,
}

/// A validated embedding signal.
///
/// Every column is either unit-norm (speech) or exactly zero (non-speech).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSignal {
    data: DMatrix<f32>,
    step_seconds: f64,
    window_seconds: f64,
}

impl EmbeddingSignal {
    /// Wraps `data` after checking every invariant; the data is not modified.
    pub fn new(data: DMatrix<f32>, step_seconds: f64, window_seconds: f64) -> Result<Self> {
        let signal = Self {
            data,
            step_seconds,
            window_seconds,
        };
        signal.validate()?;
        Ok(signal)
    }

    /// Normalizes the columns of `raw` and wraps the result.
    pub fn from_raw(raw: &DMatrix<f64>, step_seconds: f64, window_seconds: f64) -> Result<Self> {
        let normalized = normalize_columns(raw)?;
        Self::new(normalized.map(|v| v as f32), step_seconds, window_seconds)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    pub fn window_seconds(&self) -> f64 {
        self.window_seconds
    }

    pub fn data(&self) -> &DMatrix<f32> {
        &self.data
    }

    /// The signal widened to `f64` for numerical work.
    pub fn to_f64(&self) -> DMatrix<f64> {
        self.data.map(f64::from)
    }

    pub fn is_speech(&self, t: usize) -> bool {
        self.data.column(t).iter().any(|&v| v != 0.0)
    }

    pub fn speech_steps(&self) -> usize {
        (0..self.len()).filter(|&t| self.is_speech(t)).count()
    }

    /// The chunk grid implied by the signal's timing metadata.
    pub fn grid(&self) -> ChunkGrid {
        ChunkGrid {
            step_seconds: self.step_seconds,
            window_seconds: self.window_seconds,
            num_chunks: self.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let (m, t) = self.data.shape();
        if m == 0 || t == 0 {
            return Err(Error::InvalidSignal(format!("empty signal ({m}x{t})")));
        }
        if !(self.step_seconds.is_finite() && self.step_seconds > 0.0) {
            return Err(Error::InvalidSignal(format!(
                "step_seconds must be positive, got {}",
                self.step_seconds
            )));
        }
        if !(self.window_seconds.is_finite() && self.window_seconds >= self.step_seconds) {
            return Err(Error::InvalidSignal(format!(
                "window_seconds ({}) must be >= step_seconds ({})",
                self.window_seconds, self.step_seconds
            )));
        }
        for (c, col) in self.data.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSignal(format!("column {c} has non-finite entries")));
            }
            if col.iter().all(|&v| v == 0.0) {
                continue;
            }
            let norm = col.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidSignal(format!(
                    "column {c} has norm {norm}, expected 1 or an all-zero column"
                )));
            }
        }
        Ok(())
    }
}

/// Scales every column to unit L2 norm; columns with norm `<= 1e-12` become
/// exactly zero.
pub fn normalize_columns(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSignal("matrix contains non-finite entries".into()));
    }
    let mut out = matrix.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > ZERO_NORM_EPS {
            col /= norm;
        } else {
            col.fill(0.0);
        }
    }
    Ok(out)
}

/// Sliding-window chunk layout over an audio recording.
///
/// Chunk `i` starts at `i * step_seconds` and spans `window_seconds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkGrid {
    pub step_seconds: f64,
    pub window_seconds: f64,
    pub num_chunks: usize,
}

impl ChunkGrid {
    pub fn chunk_start(&self, i: usize) -> f64 {
        i as f64 * self.step_seconds
    }

    /// Length of the timeline covered by the per-step attribution of chunks.
    pub fn timeline_seconds(&self) -> f64 {
        self.num_chunks as f64 * self.step_seconds
    }
}

/// Outcome of [`make_chunk_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPlan {
    pub grid: ChunkGrid,
    /// Set when the recording cannot yield the requested number of chunks.
    pub shortfall: Option<usize>,
}

/// Chooses the largest step `<= max_step_seconds` that still produces at
/// least `min_chunks` full windows. A trailing partial window is dropped.
pub fn make_chunk_grid(
    duration_seconds: f64,
    window_seconds: f64,
    max_step_seconds: f64,
    min_chunks: usize,
) -> Result<GridPlan> {
    for (name, v) in [
        ("duration_seconds", duration_seconds),
        ("window_seconds", window_seconds),
        ("max_step_seconds", max_step_seconds),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    if min_chunks == 0 {
        return Err(Error::InvalidArgument("min_chunks must be at least 1".into()));
    }
    if duration_seconds <= window_seconds {
        return Err(Error::AudioTooShort {
            duration: duration_seconds,
            window: window_seconds,
        });
    }
    let span = duration_seconds - window_seconds;
    let step = if min_chunks > 1 {
        max_step_seconds.min(span / (min_chunks - 1) as f64)
    } else {
        max_step_seconds
    };
    // span / step can land a hair under an integer when step was derived from it
    let num_chunks = ((span / step) + 1e-9).floor() as usize + 1;
    let shortfall = (num_chunks < min_chunks).then(|| min_chunks - num_chunks);
    Ok(GridPlan {
        grid: ChunkGrid {
            step_seconds: step,
            window_seconds,
            num_chunks,
        },
        shortfall,
    })
}

pub fn encode_binary(signal: &EmbeddingSignal) -> Result<Vec<u8>> {
    let (m, t) = signal.data.shape();
    let m32 = u32::try_from(m).map_err(|_| Error::InvalidSignal(format!("M={m} exceeds u32")))?;
    let t32 = u32::try_from(t).map_err(|_| Error::InvalidSignal(format!("T={t} exceeds u32")))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * m * t);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&m32.to_le_bytes());
    buf.extend_from_slice(&t32.to_le_bytes());
    buf.extend_from_slice(&signal.step_seconds.to_le_bytes());
    buf.extend_from_slice(&signal.window_seconds.to_le_bytes());
    // nalgebra storage is column-major already
    for v in signal.data.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingSignal> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            found: bytes[..bytes.len().min(MAGIC.len())].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            what: "header",
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let t = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let step = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let window = f64::from_le_bytes(bytes[24..32].try_into().unwrap());

    let payload = &bytes[HEADER_LEN..];
    let expected = m
        .checked_mul(t)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidSignal(format!("header dimensions {m}x{t} overflow")))?;
    if payload.len() < expected {
        return Err(Error::Truncated {
            what: "payload",
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::DimensionMismatch {
            declared: m * t,
            actual: payload.len() / 4,
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    EmbeddingSignal::new(DMatrix::from_vec(m, t, values), step, window)
}

pub fn encode_csv(signal: &EmbeddingSignal) -> String {
    let (m, t) = signal.data.shape();
    let mut out = String::with_capacity(16 * m * t + 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    out.push_str(&format!("{m},{t},{},{}\n", signal.step_seconds, signal.window_seconds));
    for col in signal.data.column_iter() {
        let line: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> Result<EmbeddingSignal> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, reason: String| Error::Parse { line: line + 1, reason };

    let (_, header) = lines.next().ok_or(Error::Truncated {
        what: "csv header",
        expected: 1,
        found: 0,
    })?;
    if header.trim() != CSV_HEADER {
        return Err(Error::BadMagic {
            found: header.as_bytes()[..header.len().min(MAGIC.len())].to_vec(),
        });
    }
    let (n, dims) = lines.next().ok_or(Error::Truncated {
        what: "csv dimension row",
        expected: 1,
        found: 0,
    })?;
    let fields: Vec<&str> = dims.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(parse_err(
            n,
            format!("expected 4 header values, found {}", fields.len()),
        ));
    }
    let m: usize = fields[0].parse().map_err(|e| parse_err(n, format!("M: {e}")))?;
    let t: usize = fields[1].parse().map_err(|e| parse_err(n, format!("T: {e}")))?;
    let step: f64 = fields[2].parse().map_err(|e| parse_err(n, format!("step: {e}")))?;
    let window: f64 = fields[3].parse().map_err(|e| parse_err(n, format!("window: {e}")))?;

    let mut values = Vec::with_capacity(m * t);
    let mut rows = 0usize;
    for (n, line) in lines {
        if rows == t {
            return Err(Error::DimensionMismatch {
                declared: m * t,
                actual: m * t + line.split(',').count(),
            });
        }
        let before = values.len();
        for field in line.split(',') {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|e| parse_err(n, format!("value {field:?}: {e}")))?;
            values.push(v);
        }
        if values.len() - before != m {
            return Err(Error::DimensionMismatch {
                declared: m,
                actual: values.len() - before,
            });
        }
        rows += 1;
    }
    if rows < t {
        return Err(Error::Truncated {
            what: "csv rows",
            expected: t,
            found: rows,
        });
    }
    EmbeddingSignal::new(DMatrix::from_vec(m, t, values), step, window)
}

/// Writes `signal` to `path`. The file is written to a sibling temporary and
/// renamed into place, so a failed save never leaves a partial file.
pub fn save_signal(signal: &EmbeddingSignal, path: &Path, format: SignalFormat) -> Result<()> {
    let bytes = match format {
        SignalFormat::Binary => encode_binary(signal)?,
        SignalFormat::Csv => encode_csv(signal).into_bytes(),
    };
    write_atomic(path, &bytes)
}

/// Reads a signal in either encoding, detected from the file contents.
pub fn load_signal(path: &Path) -> Result<EmbeddingSignal> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CSV_HEADER.as_bytes()) {
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            line: 0,
            reason: format!("csv is not utf-8: {e}"),
        })?;
        decode_csv(&text)
    } else {
        decode_binary(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if path.file_name().is_none() {
        return Err(Error::InvalidArgument(format!("not a file path: {}", path.display())));
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
