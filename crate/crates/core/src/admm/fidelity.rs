//! Data-fidelity term `Σ_t ½‖z_t − Φ_t F (C x̂_t)‖²` and its derivatives.
//!
//! `(Φ_t F)† Φ_t F = F† D_t F` with `D_t` the 0/1 diagonal of frame `t`'s
//! mask, so every sum over frames collapses into per-bin weight maps
//! `W_{jj'} = Σ_t x̂_{t,j} x̂_{t,j'} D_t` computed once. One fidelity
//! gradient then costs two FFTs per column of `C`.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FrameGeometry, StateSequence};
use crate::error::{dim_err, Result};
use crate::sampling::KTMeasurements;
use crate::scalar::Real;
use crate::transforms::FourierOp;

/// Which blocks of the fidelity Hessian enter the C-gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientCoupling {
    /// Diagonal blocks only: column `j` sees `Σ_t x̂²_{t,j} (Φ_t F)†Φ_t F c_j`.
    Decoupled,
    /// Full Jacobi gradient including the `j ≠ j'` cross terms.
    #[default]
    Full,
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Precomputed fidelity operator for one measurement set and state sequence.
#[derive(Debug, Clone)]
pub struct FidelityModel<T: Real> {
    fourier: FourierOp<T>,
    masks: Vec<Vec<usize>>,
    samples: Vec<Vec<Complex<T>>>,
    states: DMatrix<T>,
    /// Upper-triangular weight maps, `pair_index(j, j')` for `j <= j'`.
    weights: Vec<Vec<T>>,
    backprojection: DMatrix<T>,
    data_energy: T,
}

impl<T: Real> FidelityModel<T> {
    /// Builds the model from measurements and a state sequence with one
    /// column per frame.
    pub fn new(measurements: &KTMeasurements<T>, states: &StateSequence<T>) -> Result<Self> {
        let l = measurements.l();
        if states.l() != l {
            return Err(dim_err(format!(
                "state sequence has {} frames, measurements have {l}",
                states.l()
            )));
        }
        let pattern = measurements.pattern();
        let masks = (0..l).map(|t| pattern.frame_mask(t)).collect();
        let samples = (0..l).map(|t| measurements.frame_samples(t)).collect();
        Self::from_frames(pattern.geometry(), masks, samples, states.data().clone())
    }

    /// Builds the model from explicit per-frame masks and samples.
    pub fn from_frames(
        geometry: FrameGeometry,
        masks: Vec<Vec<usize>>,
        samples: Vec<Vec<Complex<T>>>,
        states: DMatrix<T>,
    ) -> Result<Self> {
        let l = masks.len();
        if samples.len() != l || states.ncols() != l {
            return Err(dim_err("masks, samples and states disagree on frame count"));
        }
        let n = geometry.n();
        for (t, (m, z)) in masks.iter().zip(&samples).enumerate() {
            if m.len() != z.len() {
                return Err(dim_err(format!("frame {t}: mask and samples differ in length")));
            }
            if m.iter().any(|&k| k >= n) {
                return Err(dim_err(format!("frame {t}: mask index outside the grid")));
            }
        }
        let d = states.nrows();
        let fourier = FourierOp::new(geometry);

        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
        let weights: Vec<Vec<T>> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let mut w = vec![T::zero(); n];
                for (t, mask) in masks.iter().enumerate() {
                    let xx = states[(a, t)] * states[(b, t)];
                    for &k in mask {
                        w[k] += xx;
                    }
                }
                w
            })
            .collect();

        let columns: Vec<Vec<T>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut spec = vec![czero::<T>(); n];
                for (t, (mask, z)) in masks.iter().zip(&samples).enumerate() {
                    let x = states[(j, t)];
                    for (&k, &s) in mask.iter().zip(z) {
                        spec[k] += s * x;
                    }
                }
                fourier.inverse_inplace(&mut spec)?;
                Ok(spec.iter().map(|c| c.re).collect())
            })
            .collect::<Result<_>>()?;
        let backprojection = DMatrix::from_vec(n, d, columns.into_iter().flatten().collect());

        let half = T::lit(0.5);
        let data_energy = samples
            .iter()
            .flatten()
            .fold(T::zero(), |acc, s| acc + s.norm_sqr())
            * half;

        Ok(Self {
            fourier,
            masks,
            samples,
            states,
            weights,
            backprojection,
            data_energy,
        })
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.fourier.geometry()
    }

    pub fn fourier(&self) -> &FourierOp<T> {
        &self.fourier
    }

    pub fn n(&self) -> usize {
        self.geometry().n()
    }

    pub fn d(&self) -> usize {
        self.states.nrows()
    }

    pub fn l(&self) -> usize {
        self.states.ncols()
    }

    pub fn states(&self) -> &DMatrix<T> {
        &self.states
    }

    /// `Σ_t ½‖z_t‖²`, the fidelity at `C = 0`.
    pub fn data_energy(&self) -> T {
        self.data_energy
    }

    /// `Re Σ_t x̂_{t,j} (Φ_t F)† z_t` for every column `j`.
    pub fn backprojection(&self) -> &DMatrix<T> {
        &self.backprojection
    }

    fn pair_index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let d = self.d();
        a * d - a * (a + 1) / 2 + b
    }

    /// Weight map `W_{jj'} = Σ_t x̂_{t,j} x̂_{t,j'} D_t`.
    pub fn weight(&self, j: usize, jp: usize) -> &[T] {
        &self.weights[self.pair_index(j, jp)]
    }

    /// `max_j Σ_t x̂²_{t,j}`.
    pub fn max_state_energy(&self) -> T {
        (0..self.d())
            .map(|j| self.states.row(j).norm_squared())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Largest eigenvalue of `X̂ X̂ᵀ`, an upper bound on the fidelity Hessian norm.
    pub fn state_gram_norm(&self) -> T {
        let g = &self.states * self.states.transpose();
        g.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(T::zero(), |a, b| a.max(b))
    }

    fn check(&self, c: &DMatrix<T>) -> Result<()> {
        if c.shape() != (self.n(), self.d()) {
            return Err(dim_err(format!(
                "C is {:?}, expected {}x{}",
                c.shape(),
                self.n(),
                self.d()
            )));
        }
        Ok(())
    }

    /// `F c_j` for every column.
    pub fn spectra(&self, c: &DMatrix<T>) -> Result<Vec<Vec<Complex<T>>>> {
        self.check(c)?;
        let n = self.n();
        (0..c.ncols())
            .into_par_iter()
            .map(|j| self.fourier.dft2(&c.as_slice()[j * n..(j + 1) * n]))
            .collect()
    }

    /// Fidelity value from column spectra.
    pub fn fidelity_from_spectra(&self, spectra: &[Vec<Complex<T>>]) -> T {
        let half = T::lit(0.5);
        let per_frame: Vec<T> = (0..self.l())
            .into_par_iter()
            .map(|t| {
                let mut acc = T::zero();
                for (&k, &z) in self.masks[t].iter().zip(&self.samples[t]) {
                    let mut pred = czero::<T>();
                    for (j, s) in spectra.iter().enumerate() {
                        pred += s[k] * self.states[(j, t)];
                    }
                    acc += (z - pred).norm_sqr();
                }
                acc
            })
            .collect();
        per_frame.into_iter().fold(T::zero(), |a, b| a + b) * half
    }

    /// `Σ_t ½‖z_t − Φ_t F (C x̂_t)‖²`.
    pub fn fidelity(&self, c: &DMatrix<T>) -> Result<T> {
        Ok(self.fidelity_from_spectra(&self.spectra(c)?))
    }

    /// `Re F† (Σ_{j'} W_{jj'} ⊙ F c_{j'})` per column, summing over `j'`
    /// according to `coupling`.
    pub fn normal_operator_from_spectra(
        &self,
        spectra: &[Vec<Complex<T>>],
        coupling: GradientCoupling,
    ) -> Result<DMatrix<T>> {
        let n = self.n();
        let d = self.d();
        let cols: Vec<Vec<T>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut acc = vec![czero::<T>(); n];
                let partners: Vec<usize> = match coupling {
                    GradientCoupling::Decoupled => vec![j],
                    GradientCoupling::Full => (0..d).collect(),
                };
                for jp in partners {
                    let w = self.weight(j, jp);
                    for ((a, &wk), &s) in acc.iter_mut().zip(w).zip(&spectra[jp]) {
                        *a += s * wk;
                    }
                }
                self.fourier.inverse_inplace(&mut acc)?;
                Ok(acc.iter().map(|c| c.re).collect())
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_vec(n, d, cols.into_iter().flatten().collect()))
    }

    /// Fidelity gradient with respect to the real matrix `C`, restricted to
    /// the chosen Hessian blocks.
    pub fn fidelity_gradient(&self, c: &DMatrix<T>, coupling: GradientCoupling) -> Result<DMatrix<T>> {
        let spectra = self.spectra(c)?;
        Ok(self.normal_operator_from_spectra(&spectra, coupling)? - &self.backprojection)
    }

    /// Full fidelity Hessian `C ↦ Σ_t Re[(Φ_t F)†Φ_t F] C x̂_t x̂_tᵀ` applied to `C`.
    pub fn hessian_apply(&self, c: &DMatrix<T>) -> Result<DMatrix<T>> {
        let spectra = self.spectra(c)?;
        self.normal_operator_from_spectra(&spectra, GradientCoupling::Full)
    }

    /// Spectral norm of the fidelity Hessian by power iteration.
    pub fn hessian_norm(&self, max_iters: usize, tol: f64, seed: u64) -> Result<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = DMatrix::from_fn(self.n(), self.d(), |_, _| {
            let s: f64 = StandardNormal.sample(&mut rng);
            T::lit(s)
        });
        let norm = v.norm();
        if norm == T::zero() {
            return Ok(T::zero());
        }
        v /= norm;
        let mut estimate = T::zero();
        for _ in 0..max_iters {
            let hv = self.hessian_apply(&v)?;
            let rayleigh = v.dot(&hv);
            let hn = hv.norm();
            if hn == T::zero() {
                return Ok(T::zero());
            }
            v = hv / hn;
            let done = (rayleigh - estimate).abs() <= T::lit(tol) * rayleigh.abs();
            estimate = rayleigh;
            if done {
                break;
            }
        }
        Ok(estimate)
    }
}
