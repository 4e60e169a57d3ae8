//! k-t sampling patterns and simulated partial Fourier acquisition.
//!
//! Each frame is sampled on the union of a time-invariant mask (shared by all
//! frames, always containing the DC bin) and a per-frame time-variant mask
//! drawn outside it. Masks are drawn without replacement from a
//! variable-density law over the centered Cartesian grid.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FrameGeometry, Video};
use crate::error::{dim_err, param_err, Error, Result};
use crate::scalar::Real;
use crate::transforms::FourierOp;

/// Sampling density over k-space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    /// `(ω1² + ω2² + 1)^-1`
    #[default]
    Distance,
    /// `(ω1² + ω2² + 1)^-3/2`
    Hyperbolic,
    Uniform,
}

impl DensityKind {
    pub const ALL: [DensityKind; 3] = [
        DensityKind::Distance,
        DensityKind::Hyperbolic,
        DensityKind::Uniform,
    ];

    /// Unnormalized weight at centered frequency `(w1, w2)`.
    pub fn weight(self, w1: i64, w2: i64) -> f64 {
        let r2 = (w1 * w1 + w2 * w2) as f64 + 1.0;
        match self {
            DensityKind::Distance => 1.0 / r2,
            DensityKind::Hyperbolic => r2.powf(-1.5),
            DensityKind::Uniform => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DensityKind::Distance => "distance",
            DensityKind::Hyperbolic => "hyperbolic",
            DensityKind::Uniform => "uniform",
        }
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DensityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "distance" => Ok(DensityKind::Distance),
            "hyperbolic" => Ok(DensityKind::Hyperbolic),
            "uniform" => Ok(DensityKind::Uniform),
            other => Err(param_err(format!(
                "unknown density {other:?} (expected distance, hyperbolic or uniform)"
            ))),
        }
    }
}

fn centered(k: usize, size: usize) -> i64 {
    if k <= size / 2 {
        k as i64
    } else {
        k as i64 - size as i64
    }
}

/// Centered frequency `(ω1, ω2)` of bin `k`; the grid spans
/// `-N/2+1 ..= N/2` along each axis.
pub fn centered_frequency(geometry: &FrameGeometry, k: usize) -> (i64, i64) {
    let (k1, k2) = geometry.coords(k);
    (centered(k1, geometry.nx()), centered(k2, geometry.ny()))
}

/// Distance of bin `k` from the k-space center.
pub fn frequency_radius(geometry: &FrameGeometry, k: usize) -> f64 {
    let (w1, w2) = centered_frequency(geometry, k);
    ((w1 * w1 + w2 * w2) as f64).sqrt()
}

/// Probability of every grid bin under `kind`, indexed like the spectrum.
pub fn density_pmf(kind: DensityKind, geometry: &FrameGeometry) -> Vec<f64> {
    let mut pmf: Vec<f64> = (0..geometry.n())
        .map(|k| {
            let (w1, w2) = centered_frequency(geometry, k);
            kind.weight(w1, w2)
        })
        .collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// Draws `amount` distinct entries of `candidates`, each step choosing
/// proportionally to `weight[candidate]` among the ones still available.
pub fn draw_without_replacement<R: Rng + ?Sized>(
    rng: &mut R,
    candidates: &[usize],
    weight: &[f64],
    amount: usize,
) -> Result<Vec<usize>> {
    if amount == 0 {
        return Ok(Vec::new());
    }
    let picked = sample_weighted(rng, candidates.len(), |i| weight[candidates[i]], amount)
        .map_err(|e| param_err(format!("weighted sampling failed: {e}")))?;
    let mut out: Vec<usize> = picked.into_iter().map(|i| candidates[i]).collect();
    out.sort_unstable();
    Ok(out)
}

/// Per-frame k-space index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPattern {
    geometry: FrameGeometry,
    l: usize,
    seed: u64,
    density: DensityKind,
    m_bar: usize,
    m_tilde: usize,
    invariant: Vec<usize>,
    variant: Vec<Vec<usize>>,
}

impl SamplingPattern {
    /// Assembles a pattern from explicit masks, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        geometry: FrameGeometry,
        seed: u64,
        density: DensityKind,
        invariant: Vec<usize>,
        variant: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let l = variant.len();
        let m_tilde = variant.first().map_or(0, Vec::len);
        let p = Self {
            geometry,
            l,
            seed,
            density,
            m_bar: invariant.len(),
            m_tilde,
            invariant,
            variant,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks uniqueness, disjointness, grid bounds and DC presence.
    pub fn validate(&self) -> Result<()> {
        let n = self.geometry.n();
        if self.l == 0 || self.variant.len() != self.l {
            return Err(dim_err(format!(
                "pattern declares {} frames but has {} variant masks",
                self.l,
                self.variant.len()
            )));
        }
        if self.invariant.len() != self.m_bar || self.m_bar == 0 {
            return Err(param_err("invariant mask size must equal m_bar >= 1"));
        }
        if self.m_bar + self.m_tilde > n {
            return Err(param_err(format!(
                "m_bar + m_tilde = {} exceeds grid size {n}",
                self.m_bar + self.m_tilde
            )));
        }
        if !self.invariant.contains(&0) {
            return Err(param_err("invariant mask must contain the DC bin"));
        }
        let mut mark = vec![0u32; n];
        for &k in &self.invariant {
            if k >= n || mark[k] != 0 {
                return Err(param_err(format!("invalid or repeated invariant index {k}")));
            }
            mark[k] = u32::MAX;
        }
        for (t, mask) in self.variant.iter().enumerate() {
            if mask.len() != self.m_tilde {
                return Err(dim_err(format!(
                    "variant mask {t} has {} entries, expected {}",
                    mask.len(),
                    self.m_tilde
                )));
            }
            let stamp = t as u32 + 1;
            for &k in mask {
                if k >= n || mark[k] == u32::MAX || mark[k] == stamp {
                    return Err(param_err(format!(
                        "variant index {k} of frame {t} is out of range, repeated or shared with the invariant mask"
                    )));
                }
                mark[k] = stamp;
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geometry
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn density(&self) -> DensityKind {
        self.density
    }

    pub fn m_bar(&self) -> usize {
        self.m_bar
    }

    pub fn m_tilde(&self) -> usize {
        self.m_tilde
    }

    /// Samples per frame, `m = m̄ + m̃`.
    pub fn m(&self) -> usize {
        self.m_bar + self.m_tilde
    }

    pub fn invariant(&self) -> &[usize] {
        &self.invariant
    }

    pub fn variant(&self, t: usize) -> &[usize] {
        &self.variant[t]
    }

    pub fn variants(&self) -> &[Vec<usize>] {
        &self.variant
    }

    /// Full mask of frame `t`: invariant bins first, then variant ones.
    pub fn frame_mask(&self, t: usize) -> Vec<usize> {
        let mut m = Vec::with_capacity(self.m());
        m.extend_from_slice(&self.invariant);
        m.extend_from_slice(&self.variant[t]);
        m
    }

    /// Reorders frames; `order[t]` names the source frame of new frame `t`.
    pub fn permute_frames(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.l {
            return Err(dim_err("permutation length differs from frame count"));
        }
        let variant = order.iter().map(|&s| self.variant[s].clone()).collect();
        Self::from_parts(
            self.geometry,
            self.seed,
            self.density,
            self.invariant.clone(),
            variant,
        )
    }
}

/// Draws a pattern with `m_bar` invariant and `m_tilde` variant samples per frame.
pub fn generate_pattern(
    geometry: FrameGeometry,
    l: usize,
    m_bar: usize,
    m_tilde: usize,
    kind: DensityKind,
    seed: u64,
) -> Result<SamplingPattern> {
    let n = geometry.n();
    if l == 0 {
        return Err(param_err("pattern needs at least one frame"));
    }
    if m_bar == 0 {
        return Err(param_err("m_bar must be at least 1 (the DC bin)"));
    }
    if m_bar + m_tilde > n {
        return Err(param_err(format!(
            "m_bar + m_tilde = {} exceeds grid size {n}",
            m_bar + m_tilde
        )));
    }
    let pmf = density_pmf(kind, &geometry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let non_dc: Vec<usize> = (1..n).collect();
    let mut invariant = vec![0usize];
    invariant.extend(draw_without_replacement(&mut rng, &non_dc, &pmf, m_bar - 1)?);
    invariant.sort_unstable();

    let mut in_invariant = vec![false; n];
    invariant.iter().for_each(|&k| in_invariant[k] = true);
    let outside: Vec<usize> = (0..n).filter(|&k| !in_invariant[k]).collect();
    let variant = (0..l)
        .map(|_| draw_without_replacement(&mut rng, &outside, &pmf, m_tilde))
        .collect::<Result<Vec<_>>>()?;

    SamplingPattern::from_parts(geometry, seed, kind, invariant, variant)
}

/// Simulated k-t samples aligned with a [`SamplingPattern`].
#[derive(Debug, Clone, PartialEq)]
pub struct KTMeasurements<T: Real> {
    pattern: SamplingPattern,
    invariant: DMatrix<Complex<T>>,
    variant: DMatrix<Complex<T>>,
}

impl<T: Real> KTMeasurements<T> {
    pub fn new(
        pattern: SamplingPattern,
        invariant: DMatrix<Complex<T>>,
        variant: DMatrix<Complex<T>>,
    ) -> Result<Self> {
        let l = pattern.l();
        if invariant.shape() != (pattern.m_bar(), l) || variant.shape() != (pattern.m_tilde(), l) {
            return Err(dim_err(format!(
                "measurement blocks {:?} / {:?} do not match pattern ({}, {}) x {l}",
                invariant.shape(),
                variant.shape(),
                pattern.m_bar(),
                pattern.m_tilde()
            )));
        }
        let finite = |c: &Complex<T>| {
            c.re.is_finite() && c.im.is_finite()
        };
        if !invariant.iter().all(finite) || !variant.iter().all(finite) {
            return Err(Error::Degenerate("measurements contain non-finite values".into()));
        }
        Ok(Self {
            pattern,
            invariant,
            variant,
        })
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn l(&self) -> usize {
        self.pattern.l()
    }

    /// `Z̄`, one column per frame.
    pub fn invariant_data(&self) -> &DMatrix<Complex<T>> {
        &self.invariant
    }

    /// `Z̃`, one column per frame.
    pub fn variant_data(&self) -> &DMatrix<Complex<T>> {
        &self.variant
    }

    /// `z_t = (z̄_t; z̃_t)` in the order of [`SamplingPattern::frame_mask`].
    pub fn frame_samples(&self, t: usize) -> Vec<Complex<T>> {
        self.invariant
            .column(t)
            .iter()
            .chain(self.variant.column(t).iter())
            .copied()
            .collect()
    }

    /// `‖Z‖_F` over both blocks.
    pub fn frobenius_norm(&self) -> T {
        let s = self
            .invariant
            .iter()
            .chain(self.variant.iter())
            .fold(T::zero(), |acc, c| acc + c.norm_sqr());
        s.sqrt()
    }

    /// Reorders frames together with the pattern.
    pub fn permute_frames(&self, order: &[usize]) -> Result<Self> {
        let pattern = self.pattern.permute_frames(order)?;
        let inv = DMatrix::from_fn(self.invariant.nrows(), order.len(), |i, t| {
            self.invariant[(i, order[t])]
        });
        let var = DMatrix::from_fn(self.variant.nrows(), order.len(), |i, t| {
            self.variant[(i, order[t])]
        });
        Self::new(pattern, inv, var)
    }
}

/// Per-frame noise stream derived from the acquisition seed.
fn frame_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Takes the unitary DFT of every frame, keeps the pattern's bins and adds
/// complex Gaussian noise with standard deviation `noise_sigma` on both the
/// real and imaginary parts.
pub fn acquire<T: Real>(
    video: &Video<T>,
    pattern: &SamplingPattern,
    noise_sigma: f64,
    seed: u64,
) -> Result<KTMeasurements<T>> {
    if video.geometry() != pattern.geometry() || video.l() != pattern.l() {
        return Err(dim_err(format!(
            "video is {} x {} frames, pattern is {} x {} frames",
            video.geometry(),
            video.l(),
            pattern.geometry(),
            pattern.l()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(param_err(format!("noise_sigma = {noise_sigma} must be >= 0")));
    }
    let fourier = FourierOp::<T>::new(video.geometry());
    let (mb, mt) = (pattern.m_bar(), pattern.m_tilde());
    let columns: Vec<(Vec<Complex<T>>, Vec<Complex<T>>)> = (0..video.l())
        .into_par_iter()
        .map(|t| {
            let spec = fourier.dft2(video.frame(t))?;
            let mut rng = frame_rng(seed, t);
            let mut noisy = |k: usize| {
                let mut c = spec[k];
                if noise_sigma > 0.0 {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    c += Complex::new(T::lit(noise_sigma * re), T::lit(noise_sigma * im));
                }
                c
            };
            let inv: Vec<_> = pattern.invariant().iter().map(|&k| noisy(k)).collect();
            let var: Vec<_> = pattern.variant(t).iter().map(|&k| noisy(k)).collect();
            Ok((inv, var))
        })
        .collect::<Result<_>>()?;
    let l = video.l();
    let inv = DMatrix::from_fn(mb, l, |i, t| columns[t].0[i]);
    let var = DMatrix::from_fn(mt, l, |i, t| columns[t].1[i]);
    KTMeasurements::new(pattern.clone(), inv, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(side: usize) -> FrameGeometry {
        FrameGeometry::square(side).unwrap()
    }

    #[test]
    fn uniform_pmf_is_flat() {
        let pmf = density_pmf(DensityKind::Uniform, &g(4));
        assert!(pmf.iter().all(|p| (p - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn density_ratios_at_center() {
        let geo = g(8);
        let k10 = geo.index(1, 0);
        let d = density_pmf(DensityKind::Distance, &geo);
        assert!((d[0] / d[k10] - 2.0).abs() < 1e-12);
        let h = density_pmf(DensityKind::Hyperbolic, &geo);
        assert!((h[0] / h[k10] - 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn pmf_normalized_and_point_symmetric() {
        let geo = FrameGeometry::new(8, 16).unwrap();
        for kind in DensityKind::ALL {
            let pmf = density_pmf(kind, &geo);
            assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pmf.iter().all(|p| *p > 0.0));
            for k in 0..geo.n() {
                let (w1, w2) = centered_frequency(&geo, k);
                // the Nyquist row/column has no mirror on an even grid
                if w1 == 4 || w2 == 8 {
                    continue;
                }
                let mirror = geo.index(
                    (-w1).rem_euclid(8) as usize,
                    (-w2).rem_euclid(16) as usize,
                );
                assert!((pmf[k] - pmf[mirror]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn centered_grid_range() {
        let geo = g(4);
        let mut w: Vec<i64> = (0..4).map(|k| centered_frequency(&geo, k).0).collect();
        w.sort();
        assert_eq!(w, vec![-1, 0, 1, 2]);
    }

    #[test]
    fn full_invariant_mask() {
        let geo = g(4);
        for kind in DensityKind::ALL {
            let p = generate_pattern(geo, 3, 16, 0, kind, 5).unwrap();
            assert_eq!(p.invariant(), (0..16).collect::<Vec<_>>().as_slice());
            assert!(p.variants().iter().all(Vec::is_empty));
        }
    }

    #[test]
    fn pattern_is_deterministic_and_valid() {
        let geo = g(16);
        let a = generate_pattern(geo, 6, 20, 30, DensityKind::Distance, 11).unwrap();
        let b = generate_pattern(geo, 6, 20, 30, DensityKind::Distance, 11).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.invariant().contains(&0));
        let c = generate_pattern(geo, 6, 20, 30, DensityKind::Distance, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pattern_errors() {
        let geo = g(4);
        assert!(generate_pattern(geo, 2, 10, 7, DensityKind::Uniform, 0).is_err());
        assert!(generate_pattern(geo, 2, 0, 3, DensityKind::Uniform, 0).is_err());
        assert!(generate_pattern(geo, 0, 1, 3, DensityKind::Uniform, 0).is_err());
    }

    #[test]
    fn from_parts_rejects_overlap_and_missing_dc() {
        let geo = g(4);
        let d = DensityKind::Uniform;
        assert!(SamplingPattern::from_parts(geo, 0, d, vec![0, 1], vec![vec![1]]).is_err());
        assert!(SamplingPattern::from_parts(geo, 0, d, vec![2, 1], vec![vec![3]]).is_err());
        assert!(SamplingPattern::from_parts(geo, 0, d, vec![0, 1], vec![vec![3], vec![3]]).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let p = generate_pattern(g(8), 3, 5, 4, DensityKind::Hyperbolic, 2).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: SamplingPattern = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn density_name_parse() {
        for kind in DensityKind::ALL {
            assert_eq!(kind.name().parse::<DensityKind>().unwrap(), kind);
        }
        assert!("radial".parse::<DensityKind>().is_err());
    }
}
