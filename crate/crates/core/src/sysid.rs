//! State-sequence estimation from the time-invariant k-space samples.
//!
//! Complex samples are real-stacked (`[Re z̄_t; Im z̄_t]`) before any Hankel
//! matrix is formed, so the estimated states are real. Two estimators are
//! provided: a truncated SVD of the block Hankel matrix, and an SVD-free
//! low-rank factorization by alternating least squares with successive
//! over-relaxation.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::StateSequence;
use crate::error::{dim_err, param_err, Error, Result};
use crate::scalar::Real;

/// Relative singular-value threshold below which a direction counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `[Re Z; Im Z]`.
pub fn stack_real_imag<T: Real>(z: &DMatrix<Complex<T>>) -> DMatrix<T> {
    let m = z.nrows();
    DMatrix::from_fn(2 * m, z.ncols(), |i, t| {
        if i < m {
            z[(i, t)].re
        } else {
            z[(i - m, t)].im
        }
    })
}

/// Block Hankel matrix of a real column sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix<T: Real> {
    depth: usize,
    block_rows: usize,
    data: DMatrix<T>,
}

impl<T: Real> HankelMatrix<T> {
    /// Number of block rows.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of columns, `l - depth + 1`.
    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    /// Height of one block (`2 m̄` for real-stacked samples).
    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<T> {
        self.data
    }

    /// Block `(i, j)`, zero-based.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<T> {
        let p = self.block_rows;
        self.data.view((i * p, j), (p, 1)).into_owned()
    }
}

/// Block Hankel matrix whose block `(i, j)` is column `i + j` of `columns`.
pub fn hankel_from_columns<T: Real>(columns: &DMatrix<T>, depth: usize) -> Result<HankelMatrix<T>> {
    let (p, l) = columns.shape();
    if depth == 0 || depth > l {
        return Err(param_err(format!("Hankel depth {depth} outside 1..={l}")));
    }
    let width = l - depth + 1;
    let data = DMatrix::from_fn(depth * p, width, |r, j| columns[(r % p, r / p + j)]);
    Ok(HankelMatrix {
        depth,
        block_rows: p,
        data,
    })
}

/// Block Hankel matrix of real-stacked time-invariant samples.
pub fn build_hankel<T: Real>(z: &DMatrix<Complex<T>>, depth: usize) -> Result<HankelMatrix<T>> {
    hankel_from_columns(&stack_real_imag(z), depth)
}

/// Result of the truncated-SVD estimator.
#[derive(Debug, Clone)]
pub struct SvdStateEstimate<T: Real> {
    /// `Σ_d V_dᵀ`, rows ordered by decreasing singular value.
    pub states: StateSequence<T>,
    /// Full singular spectrum of the Hankel matrix, nonincreasing.
    pub spectrum: Vec<T>,
    /// Singular values above [`RANK_TOLERANCE`] times the largest one.
    pub numerical_rank: usize,
}

/// Numerical rank under the relative tolerance [`RANK_TOLERANCE`].
pub fn spectrum_rank<T: Real>(spectrum: &[T]) -> usize {
    let Some(&top) = spectrum.first() else {
        return 0;
    };
    if top <= T::zero() {
        return 0;
    }
    let tol = top * T::lit(RANK_TOLERANCE);
    spectrum.iter().take_while(|&&s| s > tol).count()
}

/// Truncated SVD of `H_depth(z̄)`; returns `X̂ = Σ_d V_dᵀ` with `order` rows
/// and `l - depth + 1` columns.
///
/// Directions whose singular value falls under the rank tolerance are
/// returned as zero rows.
pub fn estimate_states_svd<T: Real>(
    z: &DMatrix<Complex<T>>,
    depth: usize,
    order: usize,
) -> Result<SvdStateEstimate<T>> {
    let h = build_hankel(z, depth)?;
    let (rows, cols) = h.data().shape();
    let bound = rows.min(cols);
    if order == 0 || order > bound {
        return Err(param_err(format!(
            "state order {order} outside 1..={bound} for a {rows}x{cols} Hankel matrix"
        )));
    }
    let svd = SVD::new(h.into_data(), false, true);
    let spectrum: Vec<T> = svd.singular_values.iter().copied().collect();
    let vt = svd.v_t.expect("right singular vectors requested");
    let rank = spectrum_rank(&spectrum);
    let states = DMatrix::from_fn(order, cols, |r, t| {
        if r < rank {
            spectrum[r] * vt[(r, t)]
        } else {
            T::zero()
        }
    });
    Ok(SvdStateEstimate {
        states: StateSequence::new(states)?,
        spectrum,
        numerical_rank: rank,
    })
}

/// Singular values of the Hankel matrix alone.
pub fn hankel_spectrum<T: Real>(z: &DMatrix<Complex<T>>, depth: usize) -> Result<Vec<T>> {
    let h = build_hankel(z, depth)?;
    Ok(h.into_data().singular_values().iter().copied().collect())
}

/// Parameters of the over-relaxed alternating least-squares factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SorParams {
    /// Cap on the relaxation weight, `> 1`.
    pub omega_max: f64,
    /// Initial weight increment, `> 0`.
    pub delta: f64,
    /// Residual-ratio threshold in `(0, 1)` above which the weight grows.
    pub gamma1: f64,
    pub max_iters: usize,
    /// Stop when the relative residual change drops below this.
    pub tol: f64,
    /// Seed of the random initial state factor.
    pub seed: u64,
}

impl Default for SorParams {
    fn default() -> Self {
        Self {
            omega_max: 2.0,
            delta: 0.1,
            gamma1: 0.7,
            max_iters: 500,
            tol: 1e-10,
            seed: 0,
        }
    }
}

impl SorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_max > 1.0) {
            return Err(param_err("SOR omega_max must exceed 1"));
        }
        if !(self.delta > 0.0) {
            return Err(param_err("SOR delta must be positive"));
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return Err(param_err("SOR gamma1 must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(param_err("SOR max_iters must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(param_err("SOR tol must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SorStatus {
    Converged,
    MaxIterations,
}

/// Output of [`estimate_states_sor`].
#[derive(Debug, Clone)]
pub struct SorOutcome<T: Real> {
    /// Spatial factor of the real-stacked samples, `2m̄ × d`.
    pub factor: DMatrix<T>,
    pub states: StateSequence<T>,
    /// `‖M − C X‖_F` after initialization and after each accepted step.
    pub residuals: Vec<T>,
    /// Trial steps rejected and retried with the weight reset to 1.
    pub rejected: usize,
    pub status: SorStatus,
}

/// Moore-Penrose pseudo-inverse with a relative cut-off.
pub fn pinv<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = SVD::new(m.clone(), true, true);
    let top = svd.singular_values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let eps = top * T::from_usize_lossy(r.max(c)) * T::default_epsilon();
    svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(c, r))
}

/// Low-rank factorization `M ≈ C X` of the real-stacked samples
/// `M = [Re Z̄; Im Z̄]` by over-relaxed alternating least squares.
///
/// Each trial blends the data with the current fit,
/// `M_ω = ω M + (1 − ω) C X`, solves for `C₊` then `X₊`, and measures
/// `γ = ‖M − C₊X₊‖ / ‖M − CX‖`. A trial with `γ ≥ 1` is discarded and
/// retried at `ω = 1`; an accepted trial with `γ ≥ γ1` grows `ω` towards
/// `omega_max`.
pub fn estimate_states_sor<T: Real>(
    z: &DMatrix<Complex<T>>,
    order: usize,
    params: &SorParams,
) -> Result<SorOutcome<T>> {
    params.validate()?;
    let m = stack_real_imag(z);
    factorize_sor(&m, order, params)
}

/// [`estimate_states_sor`] on an arbitrary real data matrix.
pub fn factorize_sor<T: Real>(
    m: &DMatrix<T>,
    order: usize,
    params: &SorParams,
) -> Result<SorOutcome<T>> {
    params.validate()?;
    let (p, l) = m.shape();
    if order == 0 || order > p.min(l) {
        return Err(param_err(format!(
            "factorization rank {order} outside 1..={} for a {p}x{l} matrix",
            p.min(l)
        )));
    }
    let norm_m = m.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut x = DMatrix::from_fn(order, l, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        T::lit(v)
    });
    let mut c = m * x.transpose() * pinv(&(&x * x.transpose()));
    let mut residual = (m - &c * &x).norm();
    let mut residuals = vec![residual];
    let mut omega = T::one();
    let mut delta = T::lit(params.delta);
    let omega_max = T::lit(params.omega_max);
    let gamma1 = T::lit(params.gamma1);
    let tol = T::lit(params.tol);
    let quarter = T::lit(0.25);
    let mut rejected = 0;
    let mut status = SorStatus::MaxIterations;

    let mut iter = 0;
    while iter < params.max_iters {
        if residual <= T::lit(1e-14) * norm_m || norm_m == T::zero() {
            status = SorStatus::Converged;
            break;
        }
        let fit = &c * &x;
        let m_omega = m * omega + fit * (T::one() - omega);
        let c_new = &m_omega * x.transpose() * pinv(&(&x * x.transpose()));
        let x_new = pinv(&(c_new.transpose() * &c_new)) * (c_new.transpose() * &m_omega);
        let res_new = (m - &c_new * &x_new).norm();
        let gamma = res_new / residual;
        iter += 1;
        if gamma >= T::one() {
            if omega > T::one() {
                omega = T::one();
                rejected += 1;
                continue;
            }
            // plain least squares cannot improve further
            status = SorStatus::Converged;
            break;
        }
        c = c_new;
        x = x_new;
        let change = (residual - res_new) / residual;
        residual = res_new;
        residuals.push(residual);
        if gamma >= gamma1 {
            delta = delta.max(quarter * (omega - T::one()));
            omega = (omega + delta).min(omega_max);
        }
        if change < tol {
            status = SorStatus::Converged;
            break;
        }
    }
    Ok(SorOutcome {
        factor: c,
        states: StateSequence::new(x)?,
        residuals,
        rejected,
        status,
    })
}

/// `[C; CA; …; CA^{d−1}]` for `C: p × d`, `A: d × d`.
pub fn observability_matrix<T: Real>(c: &DMatrix<T>, a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let d = a.nrows();
    if a.ncols() != d || c.ncols() != d || d == 0 {
        return Err(dim_err(format!(
            "C is {:?} and A is {:?}; need p x d and d x d",
            c.shape(),
            a.shape()
        )));
    }
    let p = c.nrows();
    let mut out = DMatrix::zeros(p * d, d);
    let mut block = c.clone();
    for k in 0..d {
        out.view_mut((k * p, 0), (p, d)).copy_from(&block);
        block = &block * a;
    }
    Ok(out)
}

/// Rank with tolerance `max(rows, cols) · ε · σ₁`.
pub fn matrix_rank<T: Real>(m: &DMatrix<T>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if top == T::zero() {
        return 0;
    }
    let tol = T::from_usize_lossy(m.nrows().max(m.ncols())) * T::default_epsilon() * top;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Full column rank of the observability matrix.
pub fn is_observable<T: Real>(c: &DMatrix<T>, a: &DMatrix<T>) -> Result<bool> {
    let o = observability_matrix(c, a)?;
    Ok(matrix_rank(&o) == a.nrows())
}

/// Smallest order whose leading singular values hold `energy_fraction` of
/// the squared spectrum.
pub fn select_order<T: Real>(spectrum: &[T], energy_fraction: f64) -> Result<usize> {
    if spectrum.is_empty() {
        return Err(param_err("empty singular spectrum"));
    }
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(param_err(format!(
            "energy fraction {energy_fraction} outside (0, 1]"
        )));
    }
    let s: Vec<f64> = spectrum.iter().map(|v| v.to_f64_lossy()).collect();
    if s.iter().any(|v| !(*v >= 0.0)) {
        return Err(param_err("singular spectrum has negative or NaN entries"));
    }
    if s.windows(2).any(|w| w[1] > w[0]) {
        return Err(param_err("singular spectrum is not nonincreasing"));
    }
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(1);
    }
    let mut acc = 0.0;
    for (k, v) in s.iter().enumerate() {
        acc += v * v;
        if acc >= energy_fraction * total {
            return Ok(k + 1);
        }
    }
    Ok(s.len())
}

/// Least-squares transition `Â = X_{2:l} X_{1:l−1}⁺`.
pub fn estimate_transition<T: Real>(states: &StateSequence<T>) -> Result<DMatrix<T>> {
    let (d, l) = (states.d(), states.l());
    if l < d + 1 || l < 2 {
        return Err(param_err(format!(
            "need at least {} frames to fit a {d}x{d} transition, got {l}",
            d + 1
        )));
    }
    let x = states.data();
    let past = x.columns(0, l - 1).into_owned();
    let future = x.columns(1, l - 1).into_owned();
    if past.iter().all(|v| *v == T::zero()) {
        return Err(Error::Degenerate("state sequence is identically zero".into()));
    }
    Ok(future * pinv(&past))
}

/// Appends states `x_{t+1} = A x_t` until the sequence has `l_total` columns.
pub fn extend_states<T: Real>(
    states: &StateSequence<T>,
    transition: &DMatrix<T>,
    l_total: usize,
) -> Result<StateSequence<T>> {
    let (d, l) = (states.d(), states.l());
    if transition.shape() != (d, d) {
        return Err(dim_err("transition shape does not match state dimension"));
    }
    if l_total < l {
        return Err(param_err("cannot extend a sequence to fewer frames"));
    }
    let mut out = DMatrix::zeros(d, l_total);
    out.columns_mut(0, l).copy_from(states.data());
    for t in l..l_total {
        let next = transition * out.column(t - 1);
        out.set_column(t, &next);
    }
    StateSequence::new(out)
}

fn row_space_basis<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let svd = SVD::new(m.transpose(), true, false);
    let rank = spectrum_rank(svd.singular_values.as_slice());
    svd.u.expect("left vectors requested").columns(0, rank).into_owned()
}

/// Largest principal angle (radians) between the row spaces of `a` and `b`.
pub fn largest_principal_angle<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<T> {
    if a.ncols() != b.ncols() {
        return Err(dim_err("row spaces live in different dimensions"));
    }
    let qa = row_space_basis(a);
    let qb = row_space_basis(b);
    if qa.ncols() != qb.ncols() {
        return Ok(T::frac_pi_2());
    }
    if qa.ncols() == 0 {
        return Ok(T::zero());
    }
    // sin θ_max = ‖(I − Qa Qaᵀ) Qb‖₂, accurate for small angles
    let resid = &qb - &qa * (qa.transpose() * &qb);
    let s = resid
        .singular_values()
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b));
    Ok(s.min(T::one()).asin())
}
