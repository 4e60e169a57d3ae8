use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::FrameGeometry;
use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

/// Orthonormal wavelet family, periodized at the frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    #[default]
    Haar,
    Daubechies4,
}

impl WaveletFamily {
    fn lowpass<T: Real>(self) -> Vec<T> {
        match self {
            WaveletFamily::Haar => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                vec![T::lit(h), T::lit(h)]
            }
            WaveletFamily::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                [1.0 + s3, 3.0 + s3, 3.0 - s3, 1.0 - s3]
                    .iter()
                    .map(|v| T::lit(v / norm))
                    .collect()
            }
        }
    }
}

/// Frame-by-frame multilevel 2-D wavelet transform `Ψ`.
///
/// Coefficients are stored in the usual Mallat layout inside the
/// `nx × ny` frame (coarse approximation in the top-left corner) and then
/// vectorized column-major like any other frame.
#[derive(Debug, Clone)]
pub struct WaveletOp<T: Real> {
    geometry: FrameGeometry,
    family: WaveletFamily,
    levels: usize,
    lo: Vec<T>,
    hi: Vec<T>,
}

/// Deepest decomposition allowed for a geometry.
pub fn max_levels(geometry: &FrameGeometry) -> usize {
    geometry.nx().min(geometry.ny()).trailing_zeros() as usize
}

impl<T: Real> WaveletOp<T> {
    pub fn new(geometry: FrameGeometry, family: WaveletFamily, levels: usize) -> Result<Self> {
        let max = max_levels(&geometry);
        if levels == 0 || levels > max {
            return Err(Error::Geometry(format!(
                "wavelet depth {levels} outside 1..={max} for frame {geometry}"
            )));
        }
        let lo = family.lowpass::<T>();
        let len = lo.len();
        // quadrature mirror: g[i] = (-1)^i h[L-1-i]
        let hi = (0..len)
            .map(|i| {
                let v = lo[len - 1 - i];
                if i % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect();
        Ok(Self {
            geometry,
            family,
            levels,
            lo,
            hi,
        })
    }

    /// Full-depth transform of the given family.
    pub fn full_depth(geometry: FrameGeometry, family: WaveletFamily) -> Self {
        Self::new(geometry, family, max_levels(&geometry)).expect("full depth is always valid")
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    pub fn family(&self) -> WaveletFamily {
        self.family
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    fn analysis_1d(&self, x: &[T], out: &mut [T]) {
        let n = x.len();
        let half = n / 2;
        for k in 0..half {
            let mut a = T::zero();
            let mut d = T::zero();
            for (i, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                let v = x[(2 * k + i) % n];
                a += h * v;
                d += g * v;
            }
            out[k] = a;
            out[half + k] = d;
        }
    }

    fn synthesis_1d(&self, c: &[T], out: &mut [T]) {
        let n = c.len();
        let half = n / 2;
        out.iter_mut().for_each(|v| *v = T::zero());
        for k in 0..half {
            let (a, d) = (c[k], c[half + k]);
            for (i, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                out[(2 * k + i) % n] += h * a + g * d;
            }
        }
    }

    /// Applies a 1-D pass along columns (`along_cols`) or rows of the
    /// leading `sx × sy` sub-block.
    fn pass(&self, buf: &mut [T], sx: usize, sy: usize, along_cols: bool, inverse: bool) {
        let nx = self.geometry.nx();
        let len = if along_cols { sx } else { sy };
        let count = if along_cols { sy } else { sx };
        let mut line = vec![T::zero(); len];
        let mut out = vec![T::zero(); len];
        for c in 0..count {
            for (p, slot) in line.iter_mut().enumerate() {
                *slot = if along_cols {
                    buf[p + nx * c]
                } else {
                    buf[c + nx * p]
                };
            }
            if inverse {
                self.synthesis_1d(&line, &mut out);
            } else {
                self.analysis_1d(&line, &mut out);
            }
            for (p, v) in out.iter().enumerate() {
                if along_cols {
                    buf[p + nx * c] = *v;
                } else {
                    buf[c + nx * p] = *v;
                }
            }
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.geometry.n() {
            return Err(dim_err(format!(
                "vector of length {len} does not match frame {}",
                self.geometry
            )));
        }
        Ok(())
    }

    /// `Ψ v` for one vectorized frame.
    pub fn forward(&self, v: &[T]) -> Result<Vec<T>> {
        self.check(v.len())?;
        let mut buf = v.to_vec();
        for level in 0..self.levels {
            let (sx, sy) = (self.geometry.nx() >> level, self.geometry.ny() >> level);
            self.pass(&mut buf, sx, sy, true, false);
            self.pass(&mut buf, sx, sy, false, false);
        }
        Ok(buf)
    }

    /// `Ψ† w`; equal to the inverse since `Ψ` is orthonormal.
    pub fn adjoint(&self, w: &[T]) -> Result<Vec<T>> {
        self.check(w.len())?;
        let mut buf = w.to_vec();
        for level in (0..self.levels).rev() {
            let (sx, sy) = (self.geometry.nx() >> level, self.geometry.ny() >> level);
            self.pass(&mut buf, sx, sy, false, true);
            self.pass(&mut buf, sx, sy, true, true);
        }
        Ok(buf)
    }

    fn columnwise(&self, m: &DMatrix<T>, inverse: bool) -> Result<DMatrix<T>> {
        self.check(m.nrows())?;
        let n = m.nrows();
        let cols: Vec<Vec<T>> = (0..m.ncols())
            .into_par_iter()
            .map(|j| {
                let col = &m.as_slice()[j * n..(j + 1) * n];
                if inverse {
                    self.adjoint(col)
                } else {
                    self.forward(col)
                }
            })
            .collect::<Result<_>>()?;
        let flat: Vec<T> = cols.into_iter().flatten().collect();
        Ok(DMatrix::from_vec(n, m.ncols(), flat))
    }

    /// `Ψ(C)`: the transform applied to every column of an `n × d` matrix.
    pub fn forward_matrix(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.columnwise(m, false)
    }

    /// `Ψ†` applied column-wise.
    pub fn adjoint_matrix(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.columnwise(m, true)
    }
}
