//! Closed-form proximal maps used by the U- and V-subproblems.

use crate::scalar::Real;

/// ℓ2 (block) shrinkage: `max(‖x‖₂ − τ, 0) · x / ‖x‖₂`, zero at `x = 0`.
///
/// This is the minimizer of `τ‖y‖₂ + ½‖y − x‖₂²`.
pub fn shrink_l2<T: Real>(x: &[T], tau: T) -> Vec<T> {
    let norm = x.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt();
    if norm <= tau || norm == T::zero() {
        return vec![T::zero(); x.len()];
    }
    let scale = (norm - tau) / norm;
    x.iter().map(|v| *v * scale).collect()
}

/// ℓ1 (soft) shrinkage: `max(|x_i| − τ, 0) · sgn(x_i)` componentwise.
///
/// This is the minimizer of `τ‖y‖₁ + ½‖y − x‖₂²`.
pub fn shrink_l1<T: Real>(x: &[T], tau: T) -> Vec<T> {
    x.iter().map(|&v| soft(v, tau)).collect()
}

#[inline]
pub fn soft<T: Real>(v: T, tau: T) -> T {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_examples() {
        assert_eq!(shrink_l2(&[0.3, -0.4], 0.5), vec![0.0, 0.0]);
        assert_eq!(shrink_l2(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        let y = shrink_l2(&[3.0f64, 4.0], 1.0);
        assert!((y[0] - 2.4).abs() < 1e-15 && (y[1] - 3.2).abs() < 1e-15);
    }

    #[test]
    fn l1_examples() {
        assert_eq!(shrink_l1(&[3.0, -1.0, 0.5], 1.0), vec![2.0, 0.0, 0.0]);
        assert_eq!(shrink_l1(&[0.2, -0.9], 1.0), vec![0.0, 0.0]);
        assert_eq!(shrink_l1(&[-3.5], 1.0), vec![-2.5]);
    }
}
