//! Domain types: frame geometry, videos, state sequences, observation
//! matrices, and the reconstruction SNR.
//!
//! Frames are vectorized column-major: pixel `(i, j)` of an `nx × ny` frame
//! lands at index `i + nx * j`. This convention is used everywhere, including
//! the on-disk formats.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

/// Spatial size of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GeometryRepr", into = "GeometryRepr")]
pub struct FrameGeometry {
    nx: usize,
    ny: usize,
}

#[derive(Serialize, Deserialize)]
struct GeometryRepr {
    nx: usize,
    ny: usize,
}

impl TryFrom<GeometryRepr> for FrameGeometry {
    type Error = Error;
    fn try_from(r: GeometryRepr) -> Result<Self> {
        FrameGeometry::new(r.nx, r.ny)
    }
}

impl From<FrameGeometry> for GeometryRepr {
    fn from(g: FrameGeometry) -> Self {
        GeometryRepr { nx: g.nx, ny: g.ny }
    }
}

impl FrameGeometry {
    /// Both sides must be powers of two and at least 2.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        for (name, v) in [("nx", nx), ("ny", ny)] {
            if v < 2 || !v.is_power_of_two() {
                return Err(Error::Geometry(format!(
                    "{name} = {v} must be a power of two and at least 2"
                )));
            }
        }
        Ok(Self { nx, ny })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Pixel count `nx * ny`.
    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    /// Column-major linear index of pixel (or k-space bin) `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    /// Inverse of [`FrameGeometry::index`].
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }
}

impl fmt::Display for FrameGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nx, self.ny)
    }
}

/// Stacks the columns of an `nx × ny` frame into an `n`-vector.
pub fn vec_frame<T: Real>(geometry: &FrameGeometry, frame: &DMatrix<T>) -> Result<DVector<T>> {
    if frame.nrows() != geometry.nx() || frame.ncols() != geometry.ny() {
        return Err(dim_err(format!(
            "frame is {}x{}, geometry is {geometry}",
            frame.nrows(),
            frame.ncols()
        )));
    }
    // nalgebra storage is already column-major
    Ok(DVector::from_column_slice(frame.as_slice()))
}

/// Reshapes an `n`-vector back into an `nx × ny` frame.
pub fn mat_frame<T: Real>(geometry: &FrameGeometry, v: &[T]) -> Result<DMatrix<T>> {
    if v.len() != geometry.n() {
        return Err(dim_err(format!(
            "vector has length {}, geometry {geometry} needs {}",
            v.len(),
            geometry.n()
        )));
    }
    Ok(DMatrix::from_column_slice(geometry.nx(), geometry.ny(), v))
}

fn check_finite<T: Real>(what: &str, m: &DMatrix<T>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Degenerate(format!("{what} contains non-finite entries")))
    }
}

/// Image sequence stored as an `n × l` matrix, one vectorized frame per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Video<T: Real> {
    geometry: FrameGeometry,
    data: DMatrix<T>,
}

impl<T: Real> Video<T> {
    pub fn new(geometry: FrameGeometry, data: DMatrix<T>) -> Result<Self> {
        if data.nrows() != geometry.n() {
            return Err(dim_err(format!(
                "video has {} rows, geometry {geometry} needs {}",
                data.nrows(),
                geometry.n()
            )));
        }
        if data.ncols() == 0 {
            return Err(dim_err("video needs at least one frame"));
        }
        check_finite("video", &data)?;
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: FrameGeometry, l: usize) -> Self {
        Self {
            geometry,
            data: DMatrix::zeros(geometry.n(), l),
        }
    }

    /// Builds a video from individual `nx × ny` frames.
    pub fn from_frames(geometry: FrameGeometry, frames: &[DMatrix<T>]) -> Result<Self> {
        let mut data = DMatrix::zeros(geometry.n(), frames.len());
        for (t, f) in frames.iter().enumerate() {
            data.set_column(t, &vec_frame(&geometry, f)?);
        }
        Self::new(geometry, data)
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    /// Frame count.
    pub fn l(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<T> {
        self.data
    }

    /// Frame `t` as a column-major slice of length `n`.
    pub fn frame(&self, t: usize) -> &[T] {
        let n = self.geometry.n();
        &self.data.as_slice()[t * n..(t + 1) * n]
    }

    pub fn frame_matrix(&self, t: usize) -> DMatrix<T> {
        DMatrix::from_column_slice(self.geometry.nx(), self.geometry.ny(), self.frame(t))
    }
}

/// Hidden LDS states, one `d`-vector per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence<T: Real> {
    data: DMatrix<T>,
}

impl<T: Real> StateSequence<T> {
    pub fn new(data: DMatrix<T>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(dim_err("state dimension must be at least 1"));
        }
        if data.nrows() > data.ncols() {
            return Err(dim_err(format!(
                "state dimension {} exceeds frame count {}",
                data.nrows(),
                data.ncols()
            )));
        }
        check_finite("state sequence", &data)?;
        Ok(Self { data })
    }

    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    pub fn l(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<T> {
        self.data
    }
}

/// `n × d` matrix whose columns are image-like spatial factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix<T: Real> {
    geometry: FrameGeometry,
    data: DMatrix<T>,
}

impl<T: Real> ObservationMatrix<T> {
    pub fn new(geometry: FrameGeometry, data: DMatrix<T>) -> Result<Self> {
        if data.nrows() != geometry.n() {
            return Err(dim_err(format!(
                "observation matrix has {} rows, geometry {geometry} needs {}",
                data.nrows(),
                geometry.n()
            )));
        }
        if data.ncols() == 0 {
            return Err(dim_err("observation matrix needs at least one column"));
        }
        check_finite("observation matrix", &data)?;
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<T> {
        self.data
    }

    /// `Ŷ = C X`.
    pub fn synthesize(&self, states: &StateSequence<T>) -> Result<Video<T>> {
        if states.d() != self.d() {
            return Err(dim_err(format!(
                "states have dimension {}, observation matrix has {} columns",
                states.d(),
                self.d()
            )));
        }
        Video::new(self.geometry, &self.data * states.data())
    }
}

/// Generative linear dynamical system `y_t = C x_t + w_t`, `x_{t+1} = A x_t + v_t`.
#[derive(Debug, Clone)]
pub struct LdsModel<T: Real> {
    pub observation: ObservationMatrix<T>,
    pub transition: DMatrix<T>,
    pub process_cov: DMatrix<T>,
    /// Observation noise variance; the covariance is this times the identity.
    pub observation_var: T,
    pub initial_state: DVector<T>,
    pub spectral_radius: T,
}

/// Reconstruction SNR in decibels.
///
/// `Exact` marks a zero reconstruction error. It orders above every finite
/// value so sweeps can sort and compare without floating-point traps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Finite(f64),
    Exact,
}

impl Snr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Snr::Finite(v) => Some(v),
            Snr::Exact => None,
        }
    }

    /// Numeric value with `Exact` mapped to `f64::INFINITY`.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    fn from_ratio(signal: f64, error: f64) -> Snr {
        if error == 0.0 {
            Snr::Exact
        } else {
            Snr::Finite(10.0 * (signal / error).log10())
        }
    }

    /// SNR from squared norms of the reference and the error.
    pub fn from_energies(signal: f64, error: f64) -> Result<Snr> {
        if signal == 0.0 {
            return Err(Error::ZeroReference);
        }
        Ok(Snr::from_ratio(signal, error))
    }
}

impl Eq for Snr {}

impl PartialOrd for Snr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Snr {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Snr::Exact, Snr::Exact) => Ordering::Equal,
            (Snr::Exact, _) => Ordering::Greater,
            (_, Snr::Exact) => Ordering::Less,
            (Snr::Finite(a), Snr::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Finite(v) => write!(f, "{v:.4}"),
            Snr::Exact => f.write_str("inf"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Snr::Finite(v) => s.serialize_f64(*v),
            Snr::Exact => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Snr::Finite(v)),
            Repr::Str(s) if s == "inf" => Ok(Snr::Exact),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad SNR value {s:?}"))),
        }
    }
}

/// `10 log10(‖Y‖²_F / ‖Ŷ − Y‖²_F)`.
pub fn reconstruction_snr<T: Real>(reference: &Video<T>, estimate: &Video<T>) -> Result<Snr> {
    if reference.geometry() != estimate.geometry() || reference.l() != estimate.l() {
        return Err(dim_err(format!(
            "reference is {} x {} frames, estimate is {} x {} frames",
            reference.geometry(),
            reference.l(),
            estimate.geometry(),
            estimate.l()
        )));
    }
    matrix_snr(reference.data(), estimate.data())
}

/// SNR between two equally shaped matrices, accumulated in `f64`.
pub fn matrix_snr<T: Real>(reference: &DMatrix<T>, estimate: &DMatrix<T>) -> Result<Snr> {
    if reference.shape() != estimate.shape() {
        return Err(dim_err("SNR operands differ in shape"));
    }
    let mut signal = 0.0f64;
    let mut error = 0.0f64;
    for (r, e) in reference.iter().zip(estimate.iter()) {
        let r = r.to_f64_lossy();
        let e = e.to_f64_lossy();
        signal += r * r;
        error += (e - r) * (e - r);
    }
    Snr::from_energies(signal, error)
}
