use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ktcslds::io;
use ktcslds::pipeline::{
    self, estimate_states, lds_approximation_curve, recover_observation, run_ktcslds, source_video,
    stage_seed, sweep_csv, sweep_timings_csv, synthesize_lds_video, validate_config, zero_fill_baseline,
    ExperimentConfig, Severity, SolverSummary, VideoSource, STAGE_NOISE, STAGE_PATTERN, STAGE_VIDEO,
};
use ktcslds::sampling::{acquire as acquire_samples, generate_pattern};
use ktcslds::{reconstruction_snr, DensityKind, Snr};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ConfigArgs;
use crate::{CliError, OutArgs};

/// Self-describing record of a command invocation. Passing it back through
/// `--config` (plus the same input files) reproduces the outputs.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    inputs: BTreeMap<&'static str, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Value>,
    config: &'a ExperimentConfig,
}

struct OutDir<'a> {
    root: &'a Path,
}

impl<'a> OutDir<'a> {
    fn create(out: &'a OutArgs) -> Result<Self, CliError> {
        fs::create_dir_all(&out.out)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.out.display())))?;
        Ok(Self { root: &out.out })
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.root.join(name)
    }

    fn manifest(
        &self,
        command: &str,
        config: &ExperimentConfig,
        inputs: BTreeMap<&'static str, String>,
        sweep: Option<Value>,
    ) -> Result<(), CliError> {
        let m = Manifest {
            tool: "ktcslds",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.seed,
            inputs,
            sweep,
            config,
        };
        Ok(io::write_json(&self.path("manifest.json"), &m)?)
    }

    fn text(&self, name: &str, body: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))
    }
}

fn load<T>(what: &str, path: &Path, read: impl FnOnce(&Path) -> ktcslds::Result<T>) -> Result<T, CliError> {
    read(path).map_err(|e| CliError::Runtime(format!("cannot read {what} {}: {e}", path.display())))
}

fn inputs(pairs: &[(&'static str, Option<&Path>)]) -> BTreeMap<&'static str, String> {
    pairs
        .iter()
        .filter_map(|(k, p)| p.map(|p| (*k, p.display().to_string())))
        .collect()
}

fn pgm(dir: &OutDir, name: &str, video: &ktcslds::Video64) -> Result<(), CliError> {
    let written = io::write_pgm_frames(&dir.path(name), "frame", video)?;
    info!("wrote {} PGM frames under {}", written.len(), dir.path(name).display());
    Ok(())
}

pub fn synth(cfg: &ConfigArgs, out: &OutArgs, with_pgm: bool) -> Result<(), CliError> {
    let (mut config, _) = cfg.resolve()?;
    let spec = match &config.video {
        VideoSource::Lds(spec) => *spec,
        _ => Default::default(),
    };
    config.video = VideoSource::Lds(spec);
    let dir = OutDir::create(out)?;
    let (video, model) = synthesize_lds_video(config.geometry()?, config.l, &spec, stage_seed(config.seed, STAGE_VIDEO))?;
    io::write_video(&dir.path("video.json"), &video)?;
    io::write_observation(&dir.path("observation.json"), &model.observation)?;
    let a = &model.transition;
    let rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect();
    io::write_json(
        &dir.path("model.json"),
        &json!({
            "transition": rows,
            "spectral_radius": model.spectral_radius,
            "observation_var": model.observation_var,
            "initial_state": model.initial_state.iter().collect::<Vec<_>>(),
        }),
    )?;
    if with_pgm {
        pgm(&dir, "pgm", &video)?;
    }
    dir.manifest("synth", &config, BTreeMap::new(), None)
}

pub fn phantom(cfg: &ConfigArgs, out: &OutArgs, with_pgm: bool) -> Result<(), CliError> {
    let (mut config, _) = cfg.resolve()?;
    if !matches!(config.video, VideoSource::Phantom(_)) {
        config.video = VideoSource::Phantom(Default::default());
    }
    let dir = OutDir::create(out)?;
    let video = source_video(&config)?;
    io::write_video(&dir.path("video.json"), &video)?;
    if with_pgm {
        pgm(&dir, "pgm", &video)?;
    }
    dir.manifest("phantom", &config, BTreeMap::new(), None)
}

fn draw_pattern(config: &ExperimentConfig) -> Result<ktcslds::SamplingPattern, CliError> {
    let (m_bar, m_tilde) = config.sample_counts()?;
    Ok(generate_pattern(
        config.geometry()?,
        config.l,
        m_bar,
        m_tilde,
        config.density,
        stage_seed(config.seed, STAGE_PATTERN),
    )?)
}

pub fn sample(cfg: &ConfigArgs, out: &OutArgs) -> Result<(), CliError> {
    let (config, _) = cfg.resolve()?;
    let dir = OutDir::create(out)?;
    let pattern = draw_pattern(&config)?;
    io::write_pattern(&dir.path("pattern.json"), &pattern)?;
    dir.manifest("sample", &config, BTreeMap::new(), None)
}

pub fn acquire(
    cfg: &ConfigArgs,
    out: &OutArgs,
    input: Option<&Path>,
    pattern_path: Option<&Path>,
) -> Result<(), CliError> {
    let (config, _) = cfg.resolve()?;
    let video = match input {
        Some(p) => load("video", p, io::read_video)?,
        None => source_video(&config)?,
    };
    let pattern = match pattern_path {
        Some(p) => load("pattern", p, io::read_pattern)?,
        None => draw_pattern(&config)?,
    };
    let dir = OutDir::create(out)?;
    let z = acquire_samples(&video, &pattern, config.noise_sigma, stage_seed(config.seed, STAGE_NOISE))?;
    io::write_measurements(&dir.path("measurements.json"), &z)?;
    dir.manifest(
        "acquire",
        &config,
        inputs(&[("video", input), ("pattern", pattern_path)]),
        None,
    )
}

pub fn states(cfg: &ConfigArgs, out: &OutArgs, measurements: &Path) -> Result<(), CliError> {
    let (config, _) = cfg.resolve()?;
    let z = load("measurements", measurements, io::read_measurements)?;
    let dir = OutDir::create(out)?;
    let (states, spectrum, summary) = estimate_states(&config, &z)?;
    info!("state order {}", summary.d);
    io::write_states(&dir.path("states.json"), &states)?;
    io::write_spectrum_csv(&dir.path("spectrum.csv"), &spectrum)?;
    io::write_json(&dir.path("states_summary.json"), &summary)?;
    dir.manifest("states", &config, inputs(&[("measurements", Some(measurements))]), None)
}

#[derive(Serialize)]
struct ReconstructReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    snr: Option<Snr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_snr: Option<Snr>,
    solver: SolverSummary,
    convergence: ktcslds::admm::ConvergenceCheck,
}

pub fn reconstruct(
    cfg: &ConfigArgs,
    out: &OutArgs,
    measurements: &Path,
    states_path: &Path,
    truth: Option<&Path>,
    with_pgm: bool,
) -> Result<(), CliError> {
    let (config, _) = cfg.resolve()?;
    let z = load("measurements", measurements, io::read_measurements)?;
    let states = load("states", states_path, io::read_states)?;
    let truth_video = truth.map(|p| load("video", p, io::read_video)).transpose()?;
    let dir = OutDir::create(out)?;
    let (outcome, convergence) = recover_observation(&config.admm, &z, &states)?;
    let reconstruction = outcome.observation.synthesize(&states)?;
    let (snr, baseline_snr) = match &truth_video {
        Some(t) => {
            let baseline = zero_fill_baseline(&z)?;
            (
                Some(reconstruction_snr(t, &reconstruction)?),
                Some(reconstruction_snr(t, &baseline)?),
            )
        }
        None => (None, None),
    };
    io::write_observation(&dir.path("observation.json"), &outcome.observation)?;
    io::write_video(&dir.path("reconstruction.json"), &reconstruction)?;
    io::write_history_csv(&dir.path("history.csv"), &outcome.history)?;
    io::write_json(
        &dir.path("report.json"),
        &ReconstructReport {
            snr,
            baseline_snr,
            solver: SolverSummary::from_outcome(&outcome),
            convergence,
        },
    )?;
    if with_pgm {
        pgm(&dir, "pgm", &reconstruction)?;
    }
    if let Some(s) = snr {
        println!("SNR {s} dB");
    }
    dir.manifest(
        "reconstruct",
        &config,
        inputs(&[
            ("measurements", Some(measurements)),
            ("states", Some(states_path)),
            ("truth", truth),
        ]),
        None,
    )
}

pub fn run(cfg: &ConfigArgs, out: &OutArgs, with_pgm: bool, arrays: bool) -> Result<(), CliError> {
    let (config, _) = cfg.resolve()?;
    let dir = OutDir::create(out)?;
    let result = run_ktcslds(&config)?;
    let r = &result.report;

    io::write_json(&dir.path("report.json"), r)?;
    let mut summary = String::from(
        "density,rate,seed,d,m_bar,m_tilde,snr_db,baseline_snr_db,iterations,best_iteration,status,condition_holds\n",
    );
    writeln!(
        summary,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        config.density,
        config.rate,
        config.seed,
        r.states.d,
        r.m_bar,
        r.m_tilde,
        r.snr,
        r.baseline_snr,
        r.solver.iterations,
        r.solver.best_iteration,
        serde_json::to_value(r.solver.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        r.convergence.holds
    )
    .expect("write to string");
    dir.text("summary.csv", &summary)?;
    let mut frames = String::from("frame,snr_db\n");
    for (t, s) in r.per_frame_snr.iter().enumerate() {
        writeln!(frames, "{t},{s}").expect("write to string");
    }
    dir.text("per_frame.csv", &frames)?;
    io::write_history_csv(&dir.path("history.csv"), &result.outcome.history)?;
    io::write_spectrum_csv(&dir.path("spectrum.csv"), &result.prepared.spectrum)?;
    io::write_json(&dir.path("timings.json"), &result.timings)?;
    if arrays {
        io::write_states(&dir.path("states.json"), &result.prepared.states)?;
        io::write_observation(&dir.path("observation.json"), &result.outcome.observation)?;
        io::write_video(&dir.path("reconstruction.json"), &result.reconstruction)?;
    }
    if with_pgm {
        pgm(&dir, "pgm/truth", &result.prepared.truth)?;
        pgm(&dir, "pgm/reconstruction", &result.reconstruction)?;
        pgm(&dir, "pgm/zero_fill", &result.baseline)?;
    }
    println!(
        "SNR {} dB (zero-fill {} dB), d = {}, {} iterations",
        r.snr, r.baseline_snr, r.states.d, r.solver.iterations
    );
    dir.manifest("run", &config, BTreeMap::new(), None)
}

fn sweep_list<T: serde::de::DeserializeOwned>(table: Option<&Value>, key: &str) -> Result<Option<Vec<T>>, CliError> {
    match table.and_then(|t| t.get(key)) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::Usage(format!("sweep.{key}: {e}"))),
    }
}

pub fn sweep(
    cfg: &ConfigArgs,
    out: &OutArgs,
    rates: Option<Vec<f64>>,
    densities: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
) -> Result<(), CliError> {
    let (config, table) = cfg.resolve()?;
    let rates = match rates {
        Some(r) => r,
        None => sweep_list(table.as_ref(), "rates")?.unwrap_or_else(|| vec![10.0, 20.0, 30.0, 40.0, 50.0]),
    };
    let densities: Vec<DensityKind> = match densities {
        Some(d) => d
            .iter()
            .map(|s| s.parse().map_err(|e: ktcslds::Error| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?,
        None => sweep_list(table.as_ref(), "densities")?.unwrap_or_else(|| vec![config.density]),
    };
    let seeds = match seeds {
        Some(s) => s,
        None => sweep_list(table.as_ref(), "seeds")?.unwrap_or_else(|| vec![config.seed]),
    };
    if rates.is_empty() || densities.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("sweep needs at least one rate, density and seed".into()));
    }
    let mut configs = Vec::new();
    for &density in &densities {
        for &rate in &rates {
            for &seed in &seeds {
                let c = ExperimentConfig {
                    density,
                    rate,
                    seed,
                    ..config.clone()
                };
                c.check().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
                configs.push(c);
            }
        }
    }
    let dir = OutDir::create(out)?;
    info!("sweeping {} configurations", configs.len());
    let rows = pipeline::sweep(&configs);
    dir.text("sweep.csv", &sweep_csv(&rows))?;
    dir.text("sweep_timings.csv", &sweep_timings_csv(&rows))?;
    let failures = rows.iter().filter(|r| r.outcome.is_err()).count();
    print!("{}", sweep_csv(&rows));
    dir.manifest(
        "sweep",
        &config,
        BTreeMap::new(),
        Some(json!({ "rates": rates, "densities": densities, "seeds": seeds })),
    )?;
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} of {} sweep runs failed", rows.len())));
    }
    Ok(())
}

pub fn curve(cfg: &ConfigArgs, out: &OutArgs, input: Option<&Path>, max_d: usize) -> Result<(), CliError> {
    let (config, _) = cfg.resolve()?;
    let video = match input {
        Some(p) => load("video", p, io::read_video)?,
        None => source_video(&config)?,
    };
    let bound = video.geometry().n().min(video.l());
    if max_d == 0 || max_d > bound {
        return Err(CliError::Usage(format!("--max-d must lie in 1..={bound}")));
    }
    let dir = OutDir::create(out)?;
    let points = lds_approximation_curve(&video, max_d)?;
    let mut csv = String::from("d,snr_db\n");
    for (d, s) in &points {
        writeln!(csv, "{d},{s}").expect("write to string");
    }
    dir.text("curve.csv", &csv)?;
    print!("{csv}");
    dir.manifest("curve", &config, inputs(&[("video", input)]), None)
}

pub fn validate(cfg: &ConfigArgs) -> Result<(), CliError> {
    let (config, _) = cfg.resolve()?;
    let diagnostics = validate_config(&config);
    for d in &diagnostics {
        eprintln!("{d}");
    }
    let errors = diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
    if errors > 0 {
        return Err(CliError::Runtime(format!("{errors} error(s) in config")));
    }
    println!("ok ({} warning(s))", diagnostics.len());
    Ok(())
}
