//! Observation-matrix recovery by ADMM.
//!
//! Minimizes
//!
//! ```text
//! α Σ_i ‖row_i(ΨC)‖₂ + β Σ_j ‖col_j(ΨC)‖₁ + Σ_t ½‖z_t − Φ_t F C x̂_t‖²
//! ```
//!
//! over real `C` (n×d) with `Ψ` the orthonormal 2-D wavelet applied to each
//! column. The splitting `U = V = ΨC` gives closed-form ℓ2/ℓ1 shrinkage
//! sub-steps; `C` takes one prox-linear gradient step per sweep.

mod fidelity;
mod shrink;
mod validator;

use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fidelity::{FidelityModel, GradientCoupling};
pub use shrink::{shrink_l1, shrink_l2, soft};
pub use validator::{
    check_condition, validate_convergence_condition, ConvergenceCheck, Margin, POWER_ITERS,
    POWER_TOL,
};

use crate::domain::{FrameGeometry, ObservationMatrix, StateSequence};
use crate::error::{dim_err, param_err, Result};
use crate::sampling::KTMeasurements;
use crate::scalar::Real;
use crate::transforms::{WaveletFamily, WaveletOp};

/// Solver settings. `alpha`, `beta` and `delta` default to scale-aware
/// values computed from the data when left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmParams {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu: f64,
    pub gamma: f64,
    pub delta: Option<f64>,
    pub max_iters: usize,
    pub tol_rel: f64,
    pub tol_feas: f64,
    /// Multiplier of `‖Z‖_F/√(nd)` used for unset `alpha`/`beta`.
    pub weight_scale: f64,
    pub coupling: GradientCoupling,
    pub wavelet: WaveletFamily,
    /// Decomposition depth; `None` is full depth.
    pub levels: Option<usize>,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: None,
            mu: 1.0,
            gamma: 1.0,
            delta: None,
            max_iters: 200,
            tol_rel: 1e-4,
            tol_feas: 1e-4,
            weight_scale: 1e-3,
            coupling: GradientCoupling::Full,
            wavelet: WaveletFamily::Haar,
            levels: None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(param_err(format!("{name} must be positive and finite, got {v}")))
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("delta", self.delta)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        positive("mu", self.mu)?;
        positive("gamma", self.gamma)?;
        positive("tol_rel", self.tol_rel)?;
        positive("tol_feas", self.tol_feas)?;
        positive("weight_scale", self.weight_scale)?;
        if self.max_iters == 0 {
            return Err(param_err("max_iters must be at least 1"));
        }
        if self.levels == Some(0) {
            return Err(param_err("levels must be at least 1"));
        }
        Ok(())
    }

    /// Fills in the data-dependent defaults.
    pub fn resolve<T: Real>(&self, model: &FidelityModel<T>) -> Result<ResolvedParams> {
        self.validate()?;
        let n = model.n() as f64;
        let d = model.d() as f64;
        let z_norm = (2.0 * model.data_energy().to_f64_lossy()).sqrt();
        let auto = self.weight_scale * z_norm / (n * d).sqrt();
        let alpha = self.alpha.unwrap_or(auto);
        let beta = self.beta.unwrap_or(auto);
        positive("alpha", alpha)?;
        positive("beta", beta)?;
        let delta = match self.delta {
            Some(v) => v,
            None => {
                let l = step_bound(model, alpha, beta, self.mu, self.coupling);
                if l > 0.0 {
                    0.9 / l
                } else {
                    1.0
                }
            }
        };
        Ok(ResolvedParams {
            alpha,
            beta,
            mu: self.mu,
            gamma: self.gamma,
            delta,
        })
    }
}

/// Lipschitz constant of the C-gradient: `2αμ + 2βμ + ‖H‖` with `‖H‖`
/// bounded by the largest state energy (decoupled) or the state Gram norm.
pub fn step_bound<T: Real>(
    model: &FidelityModel<T>,
    alpha: f64,
    beta: f64,
    mu: f64,
    coupling: GradientCoupling,
) -> f64 {
    let h = match coupling {
        GradientCoupling::Decoupled => model.max_state_energy(),
        GradientCoupling::Full => model.state_gram_norm(),
    };
    2.0 * alpha * mu + 2.0 * beta * mu + h.to_f64_lossy()
}

/// Numerical weights actually used by a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub delta: f64,
}

/// Iterate of the splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T: Real> {
    pub c: DMatrix<T>,
    pub u: DMatrix<T>,
    pub v: DMatrix<T>,
    pub k: DMatrix<T>,
    pub lambda: DMatrix<T>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub fidelity: f64,
    pub u_residual: f64,
    pub v_residual: f64,
    pub rel_change: f64,
    pub lagrangian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmmStatus {
    Converged,
    MaxIterations,
    /// Objective exceeded ten times its initial value.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome<T: Real> {
    /// Best-objective iterate.
    pub observation: ObservationMatrix<T>,
    pub best_iteration: usize,
    pub state: AdmmState<T>,
    pub history: Vec<IterationRecord>,
    pub status: AdmmStatus,
    pub params: ResolvedParams,
    pub initial_objective: f64,
}

fn sum<T: Real>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::zero(), |a, b| a + b)
}

/// `Σ_i ‖row_i(W)‖₂`.
pub fn row_l21<T: Real>(w: &DMatrix<T>) -> T {
    sum((0..w.nrows()).map(|i| w.row(i).norm()))
}

/// `Σ_j ‖col_j(W)‖₁`.
pub fn entry_l1<T: Real>(w: &DMatrix<T>) -> T {
    sum(w.iter().map(|v| v.abs()))
}

/// Wavelet operator matching `params`.
pub fn wavelet_for<T: Real>(geometry: FrameGeometry, params: &AdmmParams) -> Result<WaveletOp<T>> {
    match params.levels {
        Some(levels) => WaveletOp::new(geometry, params.wavelet, levels),
        None => Ok(WaveletOp::full_depth(geometry, params.wavelet)),
    }
}

/// Full objective at `C`.
pub fn objective<T: Real>(
    model: &FidelityModel<T>,
    wavelet: &WaveletOp<T>,
    c: &DMatrix<T>,
    alpha: T,
    beta: T,
) -> Result<T> {
    let psi_c = wavelet.forward_matrix(c)?;
    Ok(alpha * row_l21(&psi_c) + beta * entry_l1(&psi_c) + model.fidelity(c)?)
}

/// Row-wise `S2(ΨC + K, 1/μ)`.
pub fn update_u<T: Real>(psi_c: &DMatrix<T>, k: &DMatrix<T>, mu: T) -> Result<DMatrix<T>> {
    if psi_c.shape() != k.shape() {
        return Err(dim_err("ΨC and K differ in shape"));
    }
    let (n, d) = psi_c.shape();
    let tau = T::one() / mu;
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x: Vec<T> = (0..d).map(|j| psi_c[(i, j)] + k[(i, j)]).collect();
            shrink_l2(&x, tau)
        })
        .collect();
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// Column-wise `S1(ΨC + Λ, 1/μ)`.
pub fn update_v<T: Real>(psi_c: &DMatrix<T>, lambda: &DMatrix<T>, mu: T) -> Result<DMatrix<T>> {
    if psi_c.shape() != lambda.shape() {
        return Err(dim_err("ΨC and Λ differ in shape"));
    }
    let (n, d) = psi_c.shape();
    let tau = T::one() / mu;
    let cols: Vec<Vec<T>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let x: Vec<T> = psi_c
                .column(j)
                .iter()
                .zip(lambda.column(j).iter())
                .map(|(a, b)| *a + *b)
                .collect();
            shrink_l1(&x, tau)
        })
        .collect();
    Ok(DMatrix::from_vec(n, d, cols.into_iter().flatten().collect()))
}

/// Split-variable residuals entering the C-gradient.
#[derive(Debug, Clone, Copy)]
pub struct Splitting<'a, T: Real> {
    pub u: &'a DMatrix<T>,
    pub v: &'a DMatrix<T>,
    pub k: &'a DMatrix<T>,
    pub lambda: &'a DMatrix<T>,
}

fn penalty_residual<T: Real>(
    psi_c: &DMatrix<T>,
    split: &Splitting<'_, T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    for m in [split.u, split.v, split.k, split.lambda] {
        if m.shape() != psi_c.shape() {
            return Err(dim_err("split variables differ in shape from C"));
        }
    }
    let ru = psi_c - split.u + split.k;
    let rv = psi_c - split.v + split.lambda;
    Ok((ru, rv))
}

/// C-gradient `q`: penalty terms `2αμΨ†(ΨC − U + K) + 2βμΨ†(ΨC − V + Λ)`
/// plus the fidelity gradient restricted by `coupling`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_q<T: Real>(
    model: &FidelityModel<T>,
    wavelet: &WaveletOp<T>,
    c: &DMatrix<T>,
    split: &Splitting<'_, T>,
    alpha: T,
    beta: T,
    mu: T,
    coupling: GradientCoupling,
) -> Result<DMatrix<T>> {
    let psi_c = wavelet.forward_matrix(c)?;
    let spectra = model.spectra(c)?;
    gradient_from_parts(model, wavelet, &psi_c, &spectra, split, alpha, beta, mu, coupling)
}

#[allow(clippy::too_many_arguments)]
fn gradient_from_parts<T: Real>(
    model: &FidelityModel<T>,
    wavelet: &WaveletOp<T>,
    psi_c: &DMatrix<T>,
    spectra: &[Vec<num_complex::Complex<T>>],
    split: &Splitting<'_, T>,
    alpha: T,
    beta: T,
    mu: T,
    coupling: GradientCoupling,
) -> Result<DMatrix<T>> {
    let (ru, rv) = penalty_residual(psi_c, split)?;
    let two = T::lit(2.0);
    let combined = ru * (two * alpha * mu) + rv * (two * beta * mu);
    let reg = wavelet.adjoint_matrix(&combined)?;
    let fid = model.normal_operator_from_spectra(spectra, coupling)? - model.backprojection();
    Ok(reg + fid)
}

/// Energy whose gradient is [`gradient_q`]:
/// `αμ‖ΨC − U + K‖² + βμ‖ΨC − V + Λ‖² + ½⟨C, H C⟩ − ⟨C, B⟩`
/// with `H` the fidelity Hessian restricted by `coupling`.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_energy<T: Real>(
    model: &FidelityModel<T>,
    wavelet: &WaveletOp<T>,
    c: &DMatrix<T>,
    split: &Splitting<'_, T>,
    alpha: T,
    beta: T,
    mu: T,
    coupling: GradientCoupling,
) -> Result<T> {
    let psi_c = wavelet.forward_matrix(c)?;
    let (ru, rv) = penalty_residual(&psi_c, split)?;
    let spectra = model.spectra(c)?;
    let hc = model.normal_operator_from_spectra(&spectra, coupling)?;
    let half = T::lit(0.5);
    Ok(alpha * mu * ru.norm_squared() + beta * mu * rv.norm_squared() + half * c.dot(&hc)
        - c.dot(model.backprojection()))
}

/// `C − δ q`.
pub fn update_c<T: Real>(c: &DMatrix<T>, q: &DMatrix<T>, delta: T) -> Result<DMatrix<T>> {
    if c.shape() != q.shape() {
        return Err(dim_err("C and q differ in shape"));
    }
    Ok(c - q * delta)
}

/// `K ← K − γ(U − ΨC)`, `Λ ← Λ − γ(V − ΨC)`.
pub fn update_multipliers<T: Real>(
    k: &DMatrix<T>,
    lambda: &DMatrix<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    psi_c: &DMatrix<T>,
    gamma: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    for m in [lambda, u, v, psi_c] {
        if m.shape() != k.shape() {
            return Err(dim_err("multiplier update operands differ in shape"));
        }
    }
    Ok((k - (u - psi_c) * gamma, lambda - (v - psi_c) * gamma))
}

/// Scaled-form augmented Lagrangian, used as a monotonicity diagnostic.
#[allow(clippy::too_many_arguments)]
fn lagrangian<T: Real>(
    fidelity: T,
    psi_c: &DMatrix<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    k: &DMatrix<T>,
    lambda: &DMatrix<T>,
    alpha: T,
    beta: T,
    mu: T,
) -> T {
    let half = T::lit(0.5);
    let pu = (u - psi_c - k).norm_squared() - k.norm_squared();
    let pv = (v - psi_c - lambda).norm_squared() - lambda.norm_squared();
    alpha * row_l21(u) + beta * entry_l1(v) + fidelity + half * mu * (alpha * pu + beta * pv)
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Back-projection seed: column `j` of `B` divided by `Σ_t x̂²_{t,j}`.
pub fn backprojection_seed<T: Real>(model: &FidelityModel<T>) -> DMatrix<T> {
    let mut c = model.backprojection().clone();
    for j in 0..model.d() {
        let e = model.states().row(j).norm_squared();
        if e > T::zero() {
            c.column_mut(j).scale_mut(T::one() / e);
        } else {
            c.column_mut(j).fill(T::zero());
        }
    }
    c
}

/// Recovers `C` from measurements and an estimated state sequence.
pub fn solve<T: Real>(
    measurements: &KTMeasurements<T>,
    states: &StateSequence<T>,
    params: &AdmmParams,
) -> Result<AdmmOutcome<T>> {
    let model = FidelityModel::new(measurements, states)?;
    solve_model(&model, params)
}

/// Runs the iteration on a prepared fidelity model.
pub fn solve_model<T: Real>(model: &FidelityModel<T>, params: &AdmmParams) -> Result<AdmmOutcome<T>> {
    let resolved = params.resolve(model)?;
    let wavelet = wavelet_for::<T>(model.geometry(), params)?;
    let alpha = T::lit(resolved.alpha);
    let beta = T::lit(resolved.beta);
    let mu = T::lit(resolved.mu);
    let gamma = T::lit(resolved.gamma);
    let delta = T::lit(resolved.delta);
    let bound = step_bound(model, resolved.alpha, resolved.beta, resolved.mu, params.coupling);
    if resolved.delta * bound >= 2.0 {
        warn!(
            "prox-linear step {:.3e} exceeds the descent bound 2/{:.3e}",
            resolved.delta, bound
        );
    }

    let mut c = backprojection_seed(model);
    let mut psi_c = wavelet.forward_matrix(&c)?;
    let mut spectra = model.spectra(&c)?;
    let mut u = psi_c.clone();
    let mut v = psi_c.clone();
    let mut k = DMatrix::zeros(c.nrows(), c.ncols());
    let mut lambda = DMatrix::zeros(c.nrows(), c.ncols());

    let fid0 = model.fidelity_from_spectra(&spectra);
    let initial_objective =
        (alpha * row_l21(&psi_c) + beta * entry_l1(&psi_c) + fid0).to_f64_lossy();
    let mut best = (initial_objective, 0usize, c.clone());
    let mut prev_lagrangian = f64::INFINITY;
    let lagrangian_slack = 1e-8 * initial_objective.abs();
    let mut history = Vec::with_capacity(params.max_iters);
    let mut status = AdmmStatus::MaxIterations;

    for iteration in 1..=params.max_iters {
        u = update_u(&psi_c, &k, mu)?;
        v = update_v(&psi_c, &lambda, mu)?;
        let split = Splitting {
            u: &u,
            v: &v,
            k: &k,
            lambda: &lambda,
        };
        let q = gradient_from_parts(
            model,
            &wavelet,
            &psi_c,
            &spectra,
            &split,
            alpha,
            beta,
            mu,
            params.coupling,
        )?;
        let c_next = update_c(&c, &q, delta)?;
        let change = (&c_next - &c).norm().to_f64_lossy();
        let rel_change = relative(change, c.norm().to_f64_lossy());
        c = c_next;
        psi_c = wavelet.forward_matrix(&c)?;
        spectra = model.spectra(&c)?;
        let (k_next, lambda_next) = update_multipliers(&k, &lambda, &u, &v, &psi_c, gamma)?;
        k = k_next;
        lambda = lambda_next;

        let fidelity = model.fidelity_from_spectra(&spectra);
        let obj = alpha * row_l21(&psi_c) + beta * entry_l1(&psi_c) + fidelity;
        let psi_norm = psi_c.norm().to_f64_lossy();
        let u_residual = relative((&u - &psi_c).norm().to_f64_lossy(), psi_norm);
        let v_residual = relative((&v - &psi_c).norm().to_f64_lossy(), psi_norm);
        let lag = lagrangian(fidelity, &psi_c, &u, &v, &k, &lambda, alpha, beta, mu).to_f64_lossy();
        let record = IterationRecord {
            iteration,
            objective: obj.to_f64_lossy(),
            fidelity: fidelity.to_f64_lossy(),
            u_residual,
            v_residual,
            rel_change,
            lagrangian: lag,
        };
        history.push(record);
        if lag > prev_lagrangian + lagrangian_slack {
            debug!("iteration {iteration}: augmented Lagrangian rose {prev_lagrangian:.6e} -> {lag:.6e}");
        }
        prev_lagrangian = lag;

        if !record.objective.is_finite() || record.objective > 10.0 * initial_objective.max(f64::MIN_POSITIVE) {
            warn!("iteration {iteration}: objective {:.3e} diverged", record.objective);
            status = AdmmStatus::Diverged;
            break;
        }
        if record.objective < best.0 {
            best = (record.objective, iteration, c.clone());
        }
        if rel_change < params.tol_rel && u_residual < params.tol_feas && v_residual < params.tol_feas {
            status = AdmmStatus::Converged;
            break;
        }
    }

    let iteration = history.len();
    let observation = ObservationMatrix::new(model.geometry(), best.2)?;
    Ok(AdmmOutcome {
        observation,
        best_iteration: best.1,
        state: AdmmState {
            c,
            u,
            v,
            k,
            lambda,
            iteration,
        },
        history,
        status,
        params: resolved,
        initial_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_u_thresholds_small_rows() {
        let psi: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[0.3, 0.4, 3.0, 4.0]);
        let k = DMatrix::zeros(2, 2);
        let u = update_u(&psi, &k, 1.0).unwrap();
        assert_eq!(u.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert!((u[(1, 0)] - 2.4).abs() < 1e-15 && (u[(1, 1)] - 3.2).abs() < 1e-15);
    }

    #[test]
    fn update_v_matches_shrink_l1() {
        let psi = DMatrix::from_column_slice(3, 1, &[3.0, -1.0, 0.5]);
        let v = update_v(&psi, &DMatrix::zeros(3, 1), 1.0).unwrap();
        assert_eq!(v.as_slice(), &[2.0, 0.0, 0.0]);
    }

    #[test]
    fn multipliers_hand_computed() {
        let k = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let lambda = DMatrix::from_column_slice(2, 1, &[0.5, 0.0]);
        let u = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        let v = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let psi = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let (k1, l1) = update_multipliers(&k, &lambda, &u, &v, &psi, 0.5).unwrap();
        assert_eq!(k1.as_slice(), &[0.5, -0.5]);
        assert_eq!(l1.as_slice(), &[1.0, 0.0]);
        let (k2, l2) = update_multipliers(&k, &lambda, &psi, &psi, &psi, 1.0).unwrap();
        assert_eq!((k2, l2), (k, lambda));
    }

    #[test]
    fn params_validation() {
        assert!(AdmmParams::default().validate().is_ok());
        let bad = AdmmParams {
            mu: 0.0,
            ..AdmmParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = AdmmParams {
            alpha: Some(-1.0),
            ..AdmmParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
