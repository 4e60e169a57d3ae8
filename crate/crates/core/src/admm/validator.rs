//! Sufficient convergence condition `max(αμ, βμ)/(1/μ − ‖H_g‖) + γ < 2`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::fidelity::FidelityModel;
use super::ResolvedParams;
use crate::error::Result;
use crate::scalar::Real;

/// Slack of the convergence condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Margin {
    /// `2 − (max(αμ, βμ)/(1/μ − ‖H_g‖) + γ)`; positive when the condition holds.
    Slack(f64),
    /// `1/μ ≤ ‖H_g‖`: the left-hand side is undefined.
    Unbounded,
}

impl Margin {
    pub fn as_f64(self) -> f64 {
        match self {
            Margin::Slack(v) => v,
            Margin::Unbounded => f64::NEG_INFINITY,
        }
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Margin::Slack(v) => write!(f, "{v:.6}"),
            Margin::Unbounded => f.write_str("-inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub holds: bool,
    pub margin: Margin,
    pub hessian_norm: f64,
}

/// Evaluates the condition for a known `‖H_g‖`.
pub fn check_condition(alpha: f64, beta: f64, mu: f64, gamma: f64, hessian_norm: f64) -> ConvergenceCheck {
    let gap = 1.0 / mu - hessian_norm;
    if !(gap > 0.0) {
        return ConvergenceCheck {
            holds: false,
            margin: Margin::Unbounded,
            hessian_norm,
        };
    }
    let lhs = (alpha * mu).max(beta * mu) / gap + gamma;
    let slack = 2.0 - lhs;
    ConvergenceCheck {
        holds: slack > 0.0,
        margin: Margin::Slack(slack),
        hessian_norm,
    }
}

/// Power-iteration budget for the Hessian norm.
pub const POWER_ITERS: usize = 200;
pub const POWER_TOL: f64 = 1e-6;

/// Estimates `‖H_g‖` from the fidelity model and checks the condition.
pub fn validate_convergence_condition<T: Real>(
    params: &ResolvedParams,
    model: &FidelityModel<T>,
) -> Result<ConvergenceCheck> {
    let h = model.hessian_norm(POWER_ITERS, POWER_TOL, 0)?.to_f64_lossy();
    Ok(check_condition(params.alpha, params.beta, params.mu, params.gamma, h))
}
