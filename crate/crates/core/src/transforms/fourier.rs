use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::domain::FrameGeometry;
use crate::error::{dim_err, Result};
use crate::scalar::Real;

/// Unitary 2-D DFT on column-major vectorized frames.
///
/// Both directions carry a `1/sqrt(n)` factor, so the operator is an
/// isometry and its adjoint is its inverse.
#[derive(Clone)]
pub struct FourierOp<T: Real> {
    geometry: FrameGeometry,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> std::fmt::Debug for FourierOp<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierOp")
            .field("geometry", &self.geometry)
            .finish()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

impl<T: Real> FourierOp<T> {
    pub fn new(geometry: FrameGeometry) -> Self {
        let mut planner = FftPlanner::new();
        let scale = T::one() / T::from_usize_lossy(geometry.n()).sqrt();
        Self {
            geometry,
            col_fwd: planner.plan_fft_forward(geometry.nx()),
            col_inv: planner.plan_fft_inverse(geometry.nx()),
            row_fwd: planner.plan_fft_forward(geometry.ny()),
            row_inv: planner.plan_fft_inverse(geometry.ny()),
            scale,
        }
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.geometry.n() {
            return Err(dim_err(format!(
                "vector of length {len} does not match frame {} ({} pixels)",
                self.geometry,
                self.geometry.n()
            )));
        }
        Ok(())
    }

    fn transform(&self, buf: &mut [Complex<T>], dir: Direction) {
        let (nx, ny) = (self.geometry.nx(), self.geometry.ny());
        let (col, row) = match dir {
            Direction::Forward => (&self.col_fwd, &self.row_fwd),
            Direction::Inverse => (&self.col_inv, &self.row_inv),
        };
        // columns are contiguous runs of nx
        col.process(buf);
        let mut tmp = vec![Complex::new(T::zero(), T::zero()); buf.len()];
        for j in 0..ny {
            for i in 0..nx {
                tmp[j + ny * i] = buf[i + nx * j];
            }
        }
        row.process(&mut tmp);
        for i in 0..nx {
            for j in 0..ny {
                buf[i + nx * j] = tmp[j + ny * i] * self.scale;
            }
        }
    }

    /// In-place forward transform of a complex frame.
    pub fn forward_inplace(&self, buf: &mut [Complex<T>]) -> Result<()> {
        self.check(buf.len())?;
        self.transform(buf, Direction::Forward);
        Ok(())
    }

    /// In-place inverse (adjoint) transform.
    pub fn inverse_inplace(&self, buf: &mut [Complex<T>]) -> Result<()> {
        self.check(buf.len())?;
        self.transform(buf, Direction::Inverse);
        Ok(())
    }

    /// Spectrum of a real frame.
    pub fn dft2(&self, v: &[T]) -> Result<Vec<Complex<T>>> {
        self.check(v.len())?;
        let mut buf: Vec<Complex<T>> = v.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.transform(&mut buf, Direction::Forward);
        Ok(buf)
    }

    pub fn dft2_complex(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let mut buf = v.to_vec();
        self.forward_inplace(&mut buf)?;
        Ok(buf)
    }

    pub fn idft2(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let mut buf = v.to_vec();
        self.inverse_inplace(&mut buf)?;
        Ok(buf)
    }
}
