//! Synthetic test videos: an LDS with jointly sparse observation matrix and
//! a beating-ring phantom.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{FrameGeometry, LdsModel, ObservationMatrix, Video};
use crate::error::{param_err, Result};
use crate::transforms::{WaveletFamily, WaveletOp};

/// Generator settings for [`synthesize_lds_video`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdsSpec {
    pub d: usize,
    /// Spectral radius of the transition matrix, in `(0, 1)`.
    pub rho: f64,
    /// Number of wavelet coefficients in the shared support of `C`.
    pub sparsity: usize,
    pub process_std: f64,
    pub observation_std: f64,
    pub initial_std: f64,
}

impl Default for LdsSpec {
    fn default() -> Self {
        Self {
            d: 4,
            rho: 0.95,
            sparsity: 64,
            process_std: 1.0,
            observation_std: 0.0,
            initial_std: 1.0,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Draws `C` with orthonormal columns whose Haar coefficients share one
/// support of `spec.sparsity` entries, a random `A` scaled to spectral
/// radius `rho`, and simulates `x_{t+1} = A x_t + ν_t`, `y_t = C x_t + ω_t`.
pub fn synthesize_lds_video(
    geometry: FrameGeometry,
    l: usize,
    spec: &LdsSpec,
    seed: u64,
) -> Result<(Video<f64>, LdsModel<f64>)> {
    let n = geometry.n();
    let d = spec.d;
    if d == 0 || l == 0 {
        return Err(param_err("LDS needs d >= 1 and l >= 1"));
    }
    if spec.sparsity > n || spec.sparsity < d {
        return Err(param_err(format!(
            "sparsity {} must lie in {d}..={n}",
            spec.sparsity
        )));
    }
    if !(spec.rho > 0.0 && spec.rho < 1.0) {
        return Err(param_err(format!("rho = {} must lie in (0, 1)", spec.rho)));
    }
    for (name, v) in [
        ("process_std", spec.process_std),
        ("observation_std", spec.observation_std),
        ("initial_std", spec.initial_std),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(param_err(format!("{name} = {v} must be >= 0")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut support = sample(&mut rng, n, spec.sparsity).into_vec();
    support.sort_unstable();
    let block = gaussian(&mut rng, spec.sparsity, d).qr().q();
    let mut coeffs = DMatrix::zeros(n, d);
    for (r, &i) in support.iter().enumerate() {
        coeffs.set_row(i, &block.row(r));
    }
    let wavelet = WaveletOp::full_depth(geometry, WaveletFamily::Haar);
    let c = wavelet.adjoint_matrix(&coeffs)?;

    let raw = gaussian(&mut rng, d, d);
    let radius = raw
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let a = if radius > 0.0 {
        raw * (spec.rho / radius)
    } else {
        DMatrix::zeros(d, d)
    };

    let x0 = DVector::from_fn(d, |_, _| spec.initial_std * rng.sample::<f64, _>(StandardNormal));
    let mut x = DMatrix::zeros(d, l);
    x.set_column(0, &x0);
    for t in 1..l {
        let noise = DVector::from_fn(d, |_, _| spec.process_std * rng.sample::<f64, _>(StandardNormal));
        let next = &a * x.column(t - 1) + noise;
        x.set_column(t, &next);
    }
    let mut y = &c * &x;
    if spec.observation_std > 0.0 {
        y.iter_mut()
            .for_each(|v| *v += spec.observation_std * rng.sample::<f64, _>(StandardNormal));
    }

    let model = LdsModel {
        observation: ObservationMatrix::new(geometry, c)?,
        transition: a,
        process_cov: DMatrix::identity(d, d) * spec.process_std.powi(2),
        observation_var: spec.observation_std.powi(2),
        initial_state: x0,
        spectral_radius: spec.rho,
    };
    Ok((Video::new(geometry, y)?, model))
}

/// Settings of the beating-ring phantom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    /// Frames per beat.
    pub period: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self { period: 32 }
    }
}

/// Logistic edge about one pixel wide: ~1 inside (`s < 0`), ~0 outside.
fn edge(s: f64, width: f64) -> f64 {
    1.0 / (1.0 + (s / width).exp())
}

/// Cine-like frame sequence: a static torso with sharp-edged organs and a
/// left-ventricle stand-in whose bright blood pool and darker wall pulse
/// with period `spec.period`. Pixel values lie in `[0, 1]`. The seed jitters
/// the heart position, aspect, phase and the organ layout.
pub fn phantom_video(geometry: FrameGeometry, l: usize, spec: &PhantomSpec, seed: u64) -> Result<Video<f64>> {
    if spec.period == 0 {
        return Err(param_err("phantom period must be positive"));
    }
    if l == 0 {
        return Err(param_err("phantom needs at least one frame"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = rng.random_range(-0.06..0.06);
    let cy = rng.random_range(-0.06..0.06);
    let aspect = rng.random_range(0.9..1.1);
    let phase = rng.random_range(0.0..2.0 * PI);
    // static ellipses: center, semi-axes, rotation, level
    let organs: Vec<(f64, f64, f64, f64, f64, f64)> = (0..6)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / 6.0 + rng.random_range(-0.3..0.3);
            let dist = rng.random_range(0.5..0.62);
            (
                dist * angle.cos(),
                0.8 * dist * angle.sin(),
                rng.random_range(0.06..0.14),
                rng.random_range(0.03..0.08),
                rng.random_range(0.0..PI),
                rng.random_range(0.15..0.45),
            )
        })
        .collect();
    let (nx, ny) = (geometry.nx(), geometry.ny());
    let px = 2.0 / nx.min(ny) as f64;

    let background: Vec<f64> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let u = 2.0 * (i as f64 + 0.5) / nx as f64 - 1.0;
            let v = 2.0 * (j as f64 + 0.5) / ny as f64 - 1.0;
            let torso = (u / 0.9).powi(2) + (v / 0.72).powi(2);
            let mut value = 0.25 * edge(torso.sqrt() - 1.0, px / 0.9);
            for &(ox, oy, a, b, rot, level) in &organs {
                let (du, dv) = (u - ox, v - oy);
                let (ru, rv) = (du * rot.cos() + dv * rot.sin(), -du * rot.sin() + dv * rot.cos());
                let r = ((ru / a).powi(2) + (rv / b).powi(2)).sqrt();
                value += level * edge(r - 1.0, px / a);
            }
            value
        })
        .collect();

    let frames: Vec<f64> = (0..l)
        .flat_map(|t| {
            let theta = 2.0 * PI * ((t % spec.period) as f64) / spec.period as f64 + phase;
            let inner = 0.17 + 0.05 * theta.sin();
            let outer = 0.26 + 0.025 * theta.sin();
            let pool_level = 0.55 + 0.1 * (theta + 0.5).cos();
            let background = &background;
            (0..ny).flat_map(move |j| {
                (0..nx).map(move |i| {
                    let u = 2.0 * (i as f64 + 0.5) / nx as f64 - 1.0;
                    let v = 2.0 * (j as f64 + 0.5) / ny as f64 - 1.0;
                    let du = (u - cx) * aspect;
                    let dv = (v - cy) / aspect;
                    let r = (du * du + dv * dv).sqrt();
                    let heart = edge(r - outer, px);
                    let pool = edge(r - inner, px);
                    let base = background[i + nx * j] * (1.0 - heart);
                    (base + 0.12 * heart + pool_level * pool).clamp(0.0, 1.0)
                })
            })
        })
        .collect();
    Video::new(geometry, DMatrix::from_vec(geometry.n(), l, frames))
}
