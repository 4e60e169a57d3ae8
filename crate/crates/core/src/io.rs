//! File formats: JSON headers with raw little-endian payloads, CSV tables
//! and PGM frame dumps. Everything here is `f64`.
//!
//! A header `foo.json` names its payload file (by default `foo.raw`) in the
//! same directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::admm::IterationRecord;
use crate::domain::{FrameGeometry, ObservationMatrix, StateSequence, Video};
use crate::error::{Error, Result};
use crate::sampling::{KTMeasurements, SamplingPattern};

const F64LE: &str = "f64le";
const C64LE: &str = "c64le-interleaved";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

fn payload_name(header: &Path) -> String {
    payload_path(header)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "payload.raw".into())
}

fn resolve_payload(header: &Path, name: &str) -> PathBuf {
    header.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    ensure_parent(path)?;
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(format_err(
            path,
            format!("expected {} bytes, found {}", expected * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn check_dtype(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(format_err(path, format!("dtype {found:?}, expected {expected:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VideoHeader {
    nx: usize,
    ny: usize,
    l: usize,
    dtype: String,
    layout: String,
    payload: String,
}

/// Writes `video` as `path` (header) plus a raw payload of `n·l` doubles,
/// frames consecutive.
pub fn write_video(path: &Path, video: &Video<f64>) -> Result<()> {
    let g = video.geometry();
    let header = VideoHeader {
        nx: g.nx(),
        ny: g.ny(),
        l: video.l(),
        dtype: F64LE.into(),
        layout: "column-major-frames".into(),
        payload: payload_name(path),
    };
    write_f64s(&payload_path(path), video.data().iter().copied())?;
    write_json(path, &header)
}

pub fn read_video(path: &Path) -> Result<Video<f64>> {
    let h: VideoHeader = read_json(path)?;
    check_dtype(path, &h.dtype, F64LE)?;
    if h.layout != "column-major-frames" {
        return Err(format_err(path, format!("unsupported layout {:?}", h.layout)));
    }
    let g = FrameGeometry::new(h.nx, h.ny).map_err(|e| format_err(path, e.to_string()))?;
    let values = read_f64s(&resolve_payload(path, &h.payload), g.n() * h.l)?;
    Video::new(g, DMatrix::from_vec(g.n(), h.l, values))
}

fn largest_pow2(v: usize) -> usize {
    if v == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - v.leading_zeros())
    }
}

/// Reads a core-format video of any frame size and keeps the centered
/// power-of-two window of each frame.
pub fn read_video_cropped(path: &Path) -> Result<Video<f64>> {
    let h: VideoHeader = read_json(path)?;
    check_dtype(path, &h.dtype, F64LE)?;
    let (cx, cy) = (largest_pow2(h.nx), largest_pow2(h.ny));
    let g = FrameGeometry::new(cx, cy).map_err(|e| format_err(path, e.to_string()))?;
    let values = read_f64s(&resolve_payload(path, &h.payload), h.nx * h.ny * h.l)?;
    let (ox, oy) = ((h.nx - cx) / 2, (h.ny - cy) / 2);
    let frame = h.nx * h.ny;
    let data = DMatrix::from_fn(g.n(), h.l, |k, t| {
        let (i, j) = g.coords(k);
        values[t * frame + (i + ox) + h.nx * (j + oy)]
    });
    Video::new(g, data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixHeader {
    rows: usize,
    cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ny: Option<usize>,
    dtype: String,
    layout: String,
    payload: String,
}

/// Real matrix, column-major. `geometry` is recorded when the columns are
/// vectorized frames.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, geometry: Option<FrameGeometry>) -> Result<()> {
    let header = MatrixHeader {
        rows: m.nrows(),
        cols: m.ncols(),
        nx: geometry.map(|g| g.nx()),
        ny: geometry.map(|g| g.ny()),
        dtype: F64LE.into(),
        layout: "column-major".into(),
        payload: payload_name(path),
    };
    write_f64s(&payload_path(path), m.iter().copied())?;
    write_json(path, &header)
}

pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, Option<FrameGeometry>)> {
    let h: MatrixHeader = read_json(path)?;
    check_dtype(path, &h.dtype, F64LE)?;
    let values = read_f64s(&resolve_payload(path, &h.payload), h.rows * h.cols)?;
    let geometry = match (h.nx, h.ny) {
        (Some(nx), Some(ny)) => {
            Some(FrameGeometry::new(nx, ny).map_err(|e| format_err(path, e.to_string()))?)
        }
        _ => None,
    };
    Ok((DMatrix::from_vec(h.rows, h.cols, values), geometry))
}

pub fn write_observation(path: &Path, c: &ObservationMatrix<f64>) -> Result<()> {
    write_matrix(path, c.data(), Some(c.geometry()))
}

pub fn read_observation(path: &Path) -> Result<ObservationMatrix<f64>> {
    let (m, g) = read_matrix(path)?;
    let g = g.ok_or_else(|| format_err(path, "observation matrix header lacks nx/ny"))?;
    ObservationMatrix::new(g, m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateHeader {
    d: usize,
    l: usize,
    dtype: String,
    layout: String,
    payload: String,
}

/// State sequence `d × l`, column-major (one state per frame).
pub fn write_states(path: &Path, states: &StateSequence<f64>) -> Result<()> {
    let header = StateHeader {
        d: states.d(),
        l: states.l(),
        dtype: F64LE.into(),
        layout: "column-major".into(),
        payload: payload_name(path),
    };
    write_f64s(&payload_path(path), states.data().iter().copied())?;
    write_json(path, &header)
}

pub fn read_states(path: &Path) -> Result<StateSequence<f64>> {
    let h: StateHeader = read_json(path)?;
    check_dtype(path, &h.dtype, F64LE)?;
    let values = read_f64s(&resolve_payload(path, &h.payload), h.d * h.l)?;
    StateSequence::new(DMatrix::from_vec(h.d, h.l, values))
}

pub fn write_pattern(path: &Path, pattern: &SamplingPattern) -> Result<()> {
    write_json(path, pattern)
}

pub fn read_pattern(path: &Path) -> Result<SamplingPattern> {
    let p: SamplingPattern = read_json(path)?;
    p.validate().map_err(|e| format_err(path, e.to_string()))?;
    Ok(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeasurementHeader {
    pattern: SamplingPattern,
    dtype: String,
    /// Invariant block (m̄ × l) then variant block (m̃ × l), each column-major.
    layout: String,
    payload: String,
}

/// Measurements with their pattern inline in the header; payload is
/// interleaved `(re, im)` doubles.
pub fn write_measurements(path: &Path, z: &KTMeasurements<f64>) -> Result<()> {
    let header = MeasurementHeader {
        pattern: z.pattern().clone(),
        dtype: C64LE.into(),
        layout: "invariant-then-variant-column-major".into(),
        payload: payload_name(path),
    };
    let values = z
        .invariant_data()
        .iter()
        .chain(z.variant_data().iter())
        .flat_map(|c| [c.re, c.im]);
    write_f64s(&payload_path(path), values)?;
    write_json(path, &header)
}

pub fn read_measurements(path: &Path) -> Result<KTMeasurements<f64>> {
    let h: MeasurementHeader = read_json(path)?;
    check_dtype(path, &h.dtype, C64LE)?;
    h.pattern.validate().map_err(|e| format_err(path, e.to_string()))?;
    let (mb, mt, l) = (h.pattern.m_bar(), h.pattern.m_tilde(), h.pattern.l());
    let values = read_f64s(&resolve_payload(path, &h.payload), 2 * (mb + mt) * l)?;
    let complex: Vec<Complex64> = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    let (inv, var) = complex.split_at(mb * l);
    KTMeasurements::new(
        h.pattern,
        DMatrix::from_column_slice(mb, l, inv),
        DMatrix::from_column_slice(mt, l, var),
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text)?;
    Ok(())
}

/// `index,singular_value,cumulative_energy` rows.
pub fn write_spectrum_csv(path: &Path, spectrum: &[f64]) -> Result<()> {
    let total: f64 = spectrum.iter().map(|s| s * s).sum();
    let mut out = String::from("index,singular_value,cumulative_energy\n");
    let mut acc = 0.0;
    for (i, s) in spectrum.iter().enumerate() {
        acc += s * s;
        let frac = if total > 0.0 { acc / total } else { 0.0 };
        let _ = writeln!(out, "{},{:e},{:.12}", i + 1, s, frac);
    }
    write_text(path, &out)
}

/// Per-iteration solver history.
pub fn write_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut out = String::from("iteration,objective,fidelity,u_residual,v_residual,rel_change\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.iteration, r.objective, r.fidelity, r.u_residual, r.v_residual, r.rel_change
        );
    }
    write_text(path, &out)
}

/// Encodes one frame as binary PGM (P5, 8-bit) using the given intensity window.
pub fn encode_pgm(geometry: FrameGeometry, frame: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let (nx, ny) = (geometry.nx(), geometry.ny());
    let mut bytes = format!("P5\n{ny} {nx}\n255\n").into_bytes();
    let span = hi - lo;
    for i in 0..nx {
        for j in 0..ny {
            let v = frame[geometry.index(i, j)];
            let g = if span > 0.0 { ((v - lo) / span * 255.0).round() } else { 0.0 };
            bytes.push(g.clamp(0.0, 255.0) as u8);
        }
    }
    bytes
}

/// Writes `dir/{prefix}_{t:04}.pgm` for every frame, min-max normalized
/// over the whole video. Image rows are the first frame index.
pub fn write_pgm_frames(dir: &Path, prefix: &str, video: &Video<f64>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let data = video.data();
    let lo = data.min();
    let hi = data.max();
    (0..video.l())
        .map(|t| {
            let path = dir.join(format!("{prefix}_{t:04}.pgm"));
            fs::write(&path, encode_pgm(video.geometry(), video.frame(t), lo, hi))?;
            Ok(path)
        })
        .collect()
}
