//! Reference reconstructions: zero-filled inverse FFT and rank-d truncation.

use nalgebra::SVD;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::domain::{Snr, Video};
use crate::error::{param_err, Result};
use crate::sampling::KTMeasurements;
use crate::sysid::spectrum_rank;
use crate::transforms::FourierOp;

/// Per frame: scatter the samples into an empty k-space, inverse transform,
/// keep the real part.
pub fn zero_fill_baseline(measurements: &KTMeasurements<f64>) -> Result<Video<f64>> {
    let pattern = measurements.pattern();
    let g = pattern.geometry();
    let fourier = FourierOp::<f64>::new(g);
    let frames: Vec<Vec<f64>> = (0..measurements.l())
        .into_par_iter()
        .map(|t| {
            let mut spec = vec![Complex64::new(0.0, 0.0); g.n()];
            for (k, z) in pattern.frame_mask(t).into_iter().zip(measurements.frame_samples(t)) {
                spec[k] = z;
            }
            fourier.inverse_inplace(&mut spec)?;
            Ok(spec.iter().map(|c| c.re).collect())
        })
        .collect::<Result<_>>()?;
    Video::new(
        g,
        nalgebra::DMatrix::from_vec(g.n(), frames.len(), frames.into_iter().flatten().collect()),
    )
}

/// SNR of the best rank-`d` approximation of the video, `d = 1..=d_max`.
pub fn lds_approximation_curve(video: &Video<f64>, d_max: usize) -> Result<Vec<(usize, Snr)>> {
    let y = video.data();
    let bound = y.nrows().min(y.ncols());
    if d_max == 0 || d_max > bound {
        return Err(param_err(format!("d_max = {d_max} outside 1..={bound}")));
    }
    let sv: Vec<f64> = SVD::new(y.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    let rank = spectrum_rank(&sv);
    let signal: f64 = y.iter().map(|v| v * v).sum();
    (1..=d_max)
        .map(|d| {
            let tail: f64 = if d >= rank {
                0.0
            } else {
                sv[d..].iter().map(|s| s * s).sum()
            };
            Ok((d, Snr::from_energies(signal, tail)?))
        })
        .collect()
}
