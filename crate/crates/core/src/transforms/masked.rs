use num_complex::Complex;

use super::fourier::FourierOp;
use crate::error::{dim_err, param_err, Result};
use crate::scalar::Real;

/// Partial Fourier operator `Φ F`: unitary DFT followed by a row selector.
#[derive(Debug, Clone)]
pub struct MaskedFourierOp<T: Real> {
    fourier: FourierOp<T>,
    mask: Vec<usize>,
}

impl<T: Real> MaskedFourierOp<T> {
    /// `mask` lists k-space bins (column-major indices) in output order.
    pub fn new(fourier: FourierOp<T>, mask: Vec<usize>) -> Result<Self> {
        if mask.is_empty() {
            return Err(param_err("sampling mask is empty"));
        }
        let n = fourier.geometry().n();
        let mut seen = vec![false; n];
        for &k in &mask {
            if k >= n {
                return Err(dim_err(format!("mask index {k} outside grid of {n} bins")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(param_err(format!("mask index {k} repeated")));
            }
        }
        Ok(Self { fourier, mask })
    }

    pub fn fourier(&self) -> &FourierOp<T> {
        &self.fourier
    }

    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    /// Number of measurements `m`.
    pub fn m(&self) -> usize {
        self.mask.len()
    }

    /// `(Φ F) v` for a real frame.
    pub fn measure(&self, v: &[T]) -> Result<Vec<Complex<T>>> {
        let spec = self.fourier.dft2(v)?;
        Ok(self.mask.iter().map(|&k| spec[k]).collect())
    }

    pub fn measure_complex(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        let spec = self.fourier.dft2_complex(v)?;
        Ok(self.mask.iter().map(|&k| spec[k]).collect())
    }

    /// `(Φ F)† w`: scatter into an empty spectrum, then inverse transform.
    pub fn measure_adjoint(&self, w: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if w.len() != self.mask.len() {
            return Err(dim_err(format!(
                "{} samples supplied for a mask of {}",
                w.len(),
                self.mask.len()
            )));
        }
        let mut spec = vec![Complex::new(T::zero(), T::zero()); self.fourier.geometry().n()];
        for (&k, &s) in self.mask.iter().zip(w) {
            spec[k] = s;
        }
        self.fourier.inverse_inplace(&mut spec)?;
        Ok(spec)
    }
}
