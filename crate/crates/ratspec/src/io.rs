//! File formats: WAV and CSV signals, JSON models.
//!
//! WAV support is deliberately minimal: single-channel 16-bit PCM only.
//! Multichannel files are rejected rather than silently mixed down, since
//! averaging channels changes the spectrum being modeled. Model JSON uses
//! full-precision decimal floats, so save/load round-trips bit-identically.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RationalModel, Signal};

/// On-disk model schema.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    /// `[re, im]` pairs in continuous-time rad/s.
    poles: Vec<[f64; 2]>,
    gain: f64,
    sample_rate: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Reads a model from its JSON representation, validating the declared order.
pub fn load_model(path: &Path) -> Result<RationalModel> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
    if file.order != file.poles.len() {
        return Err(Error::ModelOrderMismatch {
            path: path.display().to_string(),
            declared: file.order,
            actual: file.poles.len(),
        });
    }
    let poles = file.poles.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
    RationalModel::new(poles, file.gain, file.sample_rate)
}

/// Writes a model as JSON with full round-trip precision.
pub fn save_model(path: &Path, model: &RationalModel) -> Result<()> {
    let file = ModelFile {
        order: model.order(),
        poles: model.poles().iter().map(|p| [p.re, p.im]).collect(),
        gain: model.gain(),
        sample_rate: model.sample_rate(),
    };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a signal from CSV with one sample per line. Blank lines and lines
/// starting with `#` are skipped.
pub fn load_csv_signal(path: &Path, sample_rate: f64) -> Result<Signal> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut samples = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::CsvParse {
            path: path.display().to_string(),
            line: k + 1,
            content: line.to_string(),
        })?;
        samples.push(value);
    }
    Signal::new(samples, sample_rate)
}

/// Writes a signal as CSV, one sample per line, full precision.
pub fn save_csv_signal(path: &Path, signal: &Signal) -> Result<()> {
    let mut out = String::new();
    for s in signal.samples() {
        out.push_str(&format!("{s}\n"));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a single-channel 16-bit PCM WAV file. Samples are scaled to
/// `[-1, 1)`; the sample rate comes from the header.
pub fn load_wav(path: &Path) -> Result<Signal> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let unsupported = |reason: &str| Error::UnsupportedWav {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(unsupported("not a RIFF/WAVE file"));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap()) as usize;
        let body_end = (at + 8 + size).min(bytes.len());
        let body = &bytes[at + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(unsupported("truncated fmt chunk"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        at = at + 8 + size + (size & 1);
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| unsupported("missing fmt chunk"))?;
    if format != 1 {
        return Err(unsupported(&format!("format tag {format}, only PCM (1) is supported")));
    }
    if channels != 1 {
        return Err(unsupported(&format!(
            "{channels} channels; only single-channel files are supported because \
             mixing channels down would change the spectrum"
        )));
    }
    if bits != 16 {
        return Err(unsupported(&format!("{bits}-bit samples, only 16-bit PCM is supported")));
    }
    let data = data.ok_or_else(|| unsupported("missing data chunk"))?;
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Signal::new(samples, rate as f64)
}

/// Writes a signal as single-channel 16-bit PCM WAV, clamping to `[-1, 1)`.
/// The sample rate is rounded to the nearest integral Hz.
pub fn save_wav(path: &Path, signal: &Signal) -> Result<()> {
    let n = signal.samples().len() as u32;
    let rate = signal.sample_rate().round().max(1.0) as u32;
    let data_size = 2 * n;
    let mut out = Vec::with_capacity(44 + data_size as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in signal.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&out).map_err(|e| io_err(path, e))
}
