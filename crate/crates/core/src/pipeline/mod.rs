//! End-to-end experiments: video source → k-t sampling → state estimation
//! from the invariant samples → ADMM recovery of `C` from all samples →
//! `Ŷ = Ĉ X̂`, scored against the ground truth and a zero-filled baseline.

mod baseline;
mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::{lds_approximation_curve, zero_fill_baseline};
pub use synthetic::{phantom_video, synthesize_lds_video, LdsSpec, PhantomSpec};

use crate::admm::{
    self, validate_convergence_condition, AdmmOutcome, AdmmParams, AdmmStatus, ConvergenceCheck,
    FidelityModel, ResolvedParams,
};
use crate::domain::{matrix_snr, reconstruction_snr, FrameGeometry, Snr, StateSequence, Video};
use crate::error::{param_err, Result};
use crate::io;
use crate::sampling::{acquire, generate_pattern, DensityKind, KTMeasurements, SamplingPattern};
use crate::sysid::{
    build_hankel, estimate_states_svd, estimate_transition, extend_states, factorize_sor,
    hankel_spectrum, select_order, SorParams, SorStatus,
};

/// Where the ground-truth video comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VideoSource {
    Phantom(PhantomSpec),
    Lds(LdsSpec),
    /// A video in the core format; frames are center-cropped to powers of two
    /// and truncated to `l`.
    File { path: PathBuf },
}

impl Default for VideoSource {
    fn default() -> Self {
        VideoSource::Phantom(PhantomSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Svd,
    Sor,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Svd => "svd",
            Estimator::Sor => "sor",
        })
    }
}

/// Scaling of the estimated states before the ADMM solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateScaling {
    /// Use the estimator output as is.
    Raw,
    /// Rescale so that `X̂ X̂ᵀ = state_energy · I`.
    #[default]
    Whitened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nx: usize,
    pub ny: usize,
    pub l: usize,
    pub video: VideoSource,
    pub density: DensityKind,
    /// Compression rate `n / m`.
    pub rate: f64,
    /// Fraction of the per-frame budget assigned to the invariant mask.
    pub split: f64,
    /// Explicit invariant sample count, overriding `rate`/`split`.
    pub m_bar: Option<usize>,
    /// Explicit variant sample count, overriding `rate`/`split`.
    pub m_tilde: Option<usize>,
    /// State dimension; `"auto"` picks it from the Hankel spectrum.
    #[serde(with = "order_serde")]
    pub order: Option<usize>,
    pub energy_fraction: f64,
    pub max_order: usize,
    /// Block rows of the Hankel matrix.
    pub depth: usize,
    pub estimator: Estimator,
    pub state_scaling: StateScaling,
    pub state_energy: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub admm: AdmmParams,
    pub sor: SorParams,
}

mod order_serde {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(order: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match order {
            Some(d) => s.serialize_u64(*d as u64),
            None => s.serialize_str("auto"),
        }
    }

    struct OrderVisitor;

    impl Visitor<'_> for OrderVisitor {
        type Value = Option<usize>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a positive integer or \"auto\"")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            Ok(Some(v as usize))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
            usize::try_from(v)
                .map(Some)
                .map_err(|_| E::custom(format!("order {v} is negative")))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            if v == "auto" {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| E::custom(format!("bad order {v:?}")))
            }
        }

        fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        d.deserialize_any(OrderVisitor)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 128,
            l: 128,
            video: VideoSource::default(),
            density: DensityKind::Distance,
            rate: 10.0,
            split: 0.5,
            m_bar: None,
            m_tilde: None,
            order: Some(8),
            energy_fraction: 0.99,
            max_order: 16,
            depth: 1,
            estimator: Estimator::Svd,
            state_scaling: StateScaling::Whitened,
            state_energy: 0.5,
            noise_sigma: 0.0,
            seed: 0,
            admm: AdmmParams::default(),
            sor: SorParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn geometry(&self) -> Result<FrameGeometry> {
        FrameGeometry::new(self.nx, self.ny)
    }

    /// `(m̄, m̃)` per frame.
    pub fn sample_counts(&self) -> Result<(usize, usize)> {
        let n = self.geometry()?.n();
        if !(self.rate >= 1.0 && self.rate.is_finite()) {
            return Err(param_err(format!("compression rate {} must be >= 1", self.rate)));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(param_err(format!("split {} must lie in (0, 1)", self.split)));
        }
        let m = ((n as f64 / self.rate).round() as usize).clamp(1, n);
        let m_bar = self
            .m_bar
            .unwrap_or_else(|| ((self.split * m as f64).round() as usize).clamp(1, m));
        let m_tilde = self.m_tilde.unwrap_or(m - m_bar.min(m));
        if m_bar == 0 {
            return Err(param_err("m_bar must be at least 1"));
        }
        if m_bar + m_tilde > n {
            return Err(param_err(format!(
                "m_bar + m_tilde = {} exceeds the {n} pixels per frame",
                m_bar + m_tilde
            )));
        }
        Ok((m_bar, m_tilde))
    }

    /// Structural checks that do not need any data.
    pub fn check(&self) -> Result<()> {
        self.geometry()?;
        if self.l < 2 {
            return Err(param_err("need at least 2 frames"));
        }
        self.sample_counts()?;
        if self.depth == 0 || self.depth > self.l {
            return Err(param_err(format!("depth {} outside 1..={}", self.depth, self.l)));
        }
        if let Some(d) = self.order {
            if d == 0 || d > self.l {
                return Err(param_err(format!("order {d} outside 1..={}", self.l)));
            }
        }
        if self.max_order == 0 {
            return Err(param_err("max_order must be at least 1"));
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return Err(param_err("energy_fraction must lie in (0, 1]"));
        }
        if !(self.state_energy > 0.0 && self.state_energy.is_finite()) {
            return Err(param_err("state_energy must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(param_err("noise_sigma must be >= 0"));
        }
        self.admm.validate()?;
        self.sor.validate()?;
        Ok(())
    }
}

/// Independent seed per pipeline stage.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed.wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const STAGE_VIDEO: u64 = 1;
pub const STAGE_PATTERN: u64 = 2;
pub const STAGE_NOISE: u64 = 3;

/// Loads or generates the ground truth.
pub fn source_video(config: &ExperimentConfig) -> Result<Video<f64>> {
    let g = config.geometry()?;
    let seed = stage_seed(config.seed, STAGE_VIDEO);
    match &config.video {
        VideoSource::Phantom(spec) => phantom_video(g, config.l, spec, seed),
        VideoSource::Lds(spec) => Ok(synthesize_lds_video(g, config.l, spec, seed)?.0),
        VideoSource::File { path } => {
            let v = io::read_video_cropped(path)?;
            if v.geometry() != g {
                return Err(param_err(format!(
                    "{} crops to {}, config expects {g}",
                    path.display(),
                    v.geometry()
                )));
            }
            if v.l() < config.l {
                return Err(param_err(format!(
                    "{} has {} frames, config needs {}",
                    path.display(),
                    v.l(),
                    config.l
                )));
            }
            Video::new(g, v.data().columns(0, config.l).into_owned())
        }
    }
}

/// Rescales states so that `X̂ X̂ᵀ = energy · I` on their row space.
pub fn whiten_states(states: &StateSequence<f64>, energy: f64) -> Result<StateSequence<f64>> {
    let x = states.data();
    let gram = x * x.transpose();
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(states.clone());
    }
    let tol = top * 1e-12;
    let inv_sqrt = eig.eigenvalues.map(|v| if v > tol { (energy / v).sqrt() } else { 0.0 });
    let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    StateSequence::new(w * x)
}

/// How the states were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub estimator: Estimator,
    pub d: usize,
    pub depth: usize,
    /// Trailing states extrapolated with the fitted transition.
    pub extrapolated: usize,
    pub numerical_rank: Option<usize>,
    pub sor_status: Option<SorStatus>,
    pub sor_rejected: Option<usize>,
}

/// Everything up to (not including) the ADMM solve.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub truth: Video<f64>,
    pub pattern: SamplingPattern,
    pub measurements: KTMeasurements<f64>,
    /// Full-length states, scaled per the config.
    pub states: StateSequence<f64>,
    /// Singular spectrum of the invariant-sample Hankel matrix.
    pub spectrum: Vec<f64>,
    pub summary: StateSummary,
}

/// Generates data and estimates states.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.check()?;
    let truth = source_video(config)?;
    let (m_bar, m_tilde) = config.sample_counts()?;
    let pattern = generate_pattern(
        truth.geometry(),
        config.l,
        m_bar,
        m_tilde,
        config.density,
        stage_seed(config.seed, STAGE_PATTERN),
    )?;
    let measurements = acquire(&truth, &pattern, config.noise_sigma, stage_seed(config.seed, STAGE_NOISE))?;
    let (states, spectrum, summary) = estimate_states(config, &measurements)?;
    Ok(Prepared {
        truth,
        pattern,
        measurements,
        states,
        spectrum,
        summary,
    })
}

/// State sequence from the invariant samples: Hankel spectrum, order
/// selection, SVD or SOR factorization, extrapolation to all frames and the
/// configured scaling.
pub fn estimate_states(
    config: &ExperimentConfig,
    measurements: &KTMeasurements<f64>,
) -> Result<(StateSequence<f64>, Vec<f64>, StateSummary)> {
    if measurements.l() != config.l {
        return Err(param_err(format!(
            "measurements have {} frames, config expects {}",
            measurements.l(),
            config.l
        )));
    }
    let z_bar = measurements.invariant_data();
    let spectrum = hankel_spectrum(z_bar, config.depth)?;
    let cols = config.l - config.depth + 1;
    let d = match config.order {
        Some(d) => d,
        None => select_order(&spectrum, config.energy_fraction)?.min(config.max_order),
    }
    .min(spectrum.len())
    .min(cols);
    if d == 0 {
        return Err(param_err("selected state order is zero"));
    }

    let (raw, numerical_rank, sor_status, sor_rejected) = match config.estimator {
        Estimator::Svd => {
            let est = estimate_states_svd(z_bar, config.depth, d)?;
            (est.states, Some(est.numerical_rank), None, None)
        }
        Estimator::Sor => {
            let h = build_hankel(z_bar, config.depth)?;
            let out = factorize_sor(h.data(), d, &config.sor)?;
            (out.states, None, Some(out.status), Some(out.rejected))
        }
    };
    let extrapolated = config.l - raw.l();
    let full = if extrapolated > 0 {
        let a = estimate_transition(&raw)?;
        extend_states(&raw, &a, config.l)?
    } else {
        raw
    };
    let states = match config.state_scaling {
        StateScaling::Raw => full,
        StateScaling::Whitened => whiten_states(&full, config.state_energy)?,
    };
    let summary = StateSummary {
        estimator: config.estimator,
        d,
        depth: config.depth,
        extrapolated,
        numerical_rank,
        sor_status,
        sor_rejected,
    };
    Ok((states, spectrum, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: AdmmStatus,
    pub iterations: usize,
    pub best_iteration: usize,
    pub initial_objective: f64,
    pub best_objective: f64,
    pub final_u_residual: f64,
    pub final_v_residual: f64,
    pub params: ResolvedParams,
}

impl SolverSummary {
    pub fn from_outcome(out: &AdmmOutcome<f64>) -> Self {
        let best_objective = out
            .history
            .iter()
            .find(|r| r.iteration == out.best_iteration)
            .map_or(out.initial_objective, |r| r.objective);
        let last = out.history.last();
        Self {
            status: out.status,
            iterations: out.history.len(),
            best_iteration: out.best_iteration,
            initial_objective: out.initial_objective,
            best_objective,
            final_u_residual: last.map_or(f64::NAN, |r| r.u_residual),
            final_v_residual: last.map_or(f64::NAN, |r| r.v_residual),
            params: out.params,
        }
    }
}

/// Deterministic summary of one run. Wall-clock times live in [`Timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub snr: Snr,
    pub baseline_snr: Snr,
    pub per_frame_snr: Vec<Snr>,
    pub m_bar: usize,
    pub m_tilde: usize,
    pub states: StateSummary,
    pub solver: SolverSummary,
    pub convergence: ConvergenceCheck,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub prepare_s: f64,
    pub solve_s: f64,
    pub total_s: f64,
}

/// Result of [`run_ktcslds`] with the intermediate artifacts.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reconstruction: Video<f64>,
    pub baseline: Video<f64>,
    pub prepared: Prepared,
    pub outcome: AdmmOutcome<f64>,
    pub report: ExperimentReport,
    pub timings: Timings,
}

fn per_frame_snr(truth: &Video<f64>, estimate: &Video<f64>) -> Result<Vec<Snr>> {
    (0..truth.l())
        .map(|t| {
            let r = DMatrix::from_column_slice(truth.geometry().n(), 1, truth.frame(t));
            let e = DMatrix::from_column_slice(truth.geometry().n(), 1, estimate.frame(t));
            matrix_snr(&r, &e)
        })
        .collect()
}

/// ADMM recovery of `C` from all samples given the states, with the
/// convergence condition checked (and logged) beforehand.
pub fn recover_observation(
    params: &AdmmParams,
    measurements: &KTMeasurements<f64>,
    states: &StateSequence<f64>,
) -> Result<(AdmmOutcome<f64>, ConvergenceCheck)> {
    let model = FidelityModel::new(measurements, states)?;
    let resolved = params.resolve(&model)?;
    let convergence = validate_convergence_condition(&resolved, &model)?;
    if let Some(diag) = convergence_warning(&convergence, &resolved) {
        warn!("{}", diag.message);
    }
    let outcome = admm::solve_model(&model, params)?;
    Ok((outcome, convergence))
}

/// Runs the full reconstruction for one configuration.
pub fn run_ktcslds(config: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let prepared = prepare(config)?;
    let prepare_s = start.elapsed().as_secs_f64();

    let solve_start = Instant::now();
    let (outcome, convergence) = recover_observation(&config.admm, &prepared.measurements, &prepared.states)?;
    let solve_s = solve_start.elapsed().as_secs_f64();

    let reconstruction = outcome.observation.synthesize(&prepared.states)?;
    let baseline = zero_fill_baseline(&prepared.measurements)?;
    let snr = reconstruction_snr(&prepared.truth, &reconstruction)?;
    let baseline_snr = reconstruction_snr(&prepared.truth, &baseline)?;
    info!(
        "d = {}, SNR {} dB (zero-fill {} dB), {} iterations, {:?}",
        prepared.summary.d,
        snr,
        baseline_snr,
        outcome.history.len(),
        outcome.status
    );
    let report = ExperimentReport {
        snr,
        baseline_snr,
        per_frame_snr: per_frame_snr(&prepared.truth, &reconstruction)?,
        m_bar: prepared.pattern.m_bar(),
        m_tilde: prepared.pattern.m_tilde(),
        states: prepared.summary.clone(),
        solver: SolverSummary::from_outcome(&outcome),
        convergence,
        config: config.clone(),
    };
    let timings = Timings {
        prepare_s,
        solve_s,
        total_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        reconstruction,
        baseline,
        prepared,
        outcome,
        report,
        timings,
    })
}

/// One line of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub density: DensityKind,
    pub rate: f64,
    pub seed: u64,
    pub outcome: std::result::Result<SweepScores, String>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepScores {
    pub snr: Snr,
    pub baseline_snr: Snr,
    pub d: usize,
    pub iterations: usize,
    pub status: AdmmStatus,
}

/// Runs every config (in parallel); failures are recorded, not propagated.
pub fn sweep(configs: &[ExperimentConfig]) -> Vec<SweepRow> {
    configs
        .par_iter()
        .map(|c| {
            let start = Instant::now();
            let outcome = run_ktcslds(c)
                .map(|out| SweepScores {
                    snr: out.report.snr,
                    baseline_snr: out.report.baseline_snr,
                    d: out.report.states.d,
                    iterations: out.report.solver.iterations,
                    status: out.report.solver.status,
                })
                .map_err(|e| e.to_string());
            SweepRow {
                density: c.density,
                rate: c.rate,
                seed: c.seed,
                outcome,
                runtime_s: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn status_name(s: AdmmStatus) -> &'static str {
    match s {
        AdmmStatus::Converged => "converged",
        AdmmStatus::MaxIterations => "max_iterations",
        AdmmStatus::Diverged => "diverged",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Deterministic sweep table (no wall-clock column).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("density,rate,seed,snr_db,baseline_snr_db,d,iterations,status\n");
    for r in rows {
        let line = match &r.outcome {
            Ok(s) => format!(
                "{},{},{},{},{},{},{},{}",
                r.density,
                r.rate,
                r.seed,
                s.snr,
                s.baseline_snr,
                s.d,
                s.iterations,
                status_name(s.status)
            ),
            Err(e) => format!(
                "{},{},{},,,,,{}",
                r.density,
                r.rate,
                r.seed,
                csv_field(&format!("error: {e}"))
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Wall-clock companion of [`sweep_csv`].
pub fn sweep_timings_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("density,rate,seed,runtime_s\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:.3}\n", r.density, r.rate, r.seed, r.runtime_s));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Warning for a failed convergence check, if any.
pub fn convergence_warning(check: &ConvergenceCheck, params: &ResolvedParams) -> Option<Diagnostic> {
    if check.holds {
        return None;
    }
    Some(Diagnostic {
        severity: Severity::Warning,
        message: format!(
            "ADMM sufficient convergence condition max(alpha*mu, beta*mu)/(1/mu - ||H_g||) + gamma < 2 \
             does not hold (alpha = {:.3e}, beta = {:.3e}, mu = {}, gamma = {}, ||H_g|| = {:.4e}, margin {}); \
             the solver still runs",
            params.alpha, params.beta, params.mu, params.gamma, check.hessian_norm, check.margin
        ),
    })
}

/// Structural checks, then the ADMM convergence condition evaluated on the
/// data the config would produce. Never mutates the config.
pub fn validate_config(config: &ExperimentConfig) -> Vec<Diagnostic> {
    if let Err(e) = config.check() {
        return vec![Diagnostic {
            severity: Severity::Error,
            message: e.to_string(),
        }];
    }
    let evaluated = prepare(config).and_then(|p| {
        let model = FidelityModel::new(&p.measurements, &p.states)?;
        let resolved = config.admm.resolve(&model)?;
        Ok((validate_convergence_condition(&resolved, &model)?, resolved))
    });
    match evaluated {
        Ok((check, resolved)) => convergence_warning(&check, &resolved).into_iter().collect(),
        Err(e) => vec![Diagnostic {
            severity: Severity::Error,
            message: e.to_string(),
        }],
    }
}
