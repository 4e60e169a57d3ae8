//! Linear operators on frames: unitary 2-D DFT, partial Fourier sampling,
//! and the orthonormal wavelet transform.

mod fourier;
mod masked;
mod wavelet;

pub use fourier::FourierOp;
pub use masked::MaskedFourierOp;
pub use wavelet::{max_levels, WaveletFamily, WaveletOp};

use num_complex::Complex;

use crate::scalar::Real;

/// `Σ a_i conj(b_i)`.
pub fn cdot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x * y.conj())
}
