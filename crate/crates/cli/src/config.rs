//! Config layering: built-in defaults, then a TOML/JSON file, then flags.
//!
//! Layers are merged as JSON trees and deserialized once, so the strict
//! field checks of `ExperimentConfig` apply to files and flags alike.

use std::path::{Path, PathBuf};

use clap::builder::PossibleValuesParser;
use clap::Args;
use ktcslds::pipeline::ExperimentConfig;
use serde_json::{json, Map, Value};

use crate::CliError;

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Config file (.toml or .json). A manifest written by a previous run is
    /// accepted; its `config` table is used.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Number of frames.
    #[arg(long)]
    pub l: Option<usize>,

    /// Ground-truth source.
    #[arg(long, value_parser = PossibleValuesParser::new(["phantom", "lds", "file"]))]
    pub video: Option<String>,
    /// Video file for `--video file` (implies it).
    #[arg(long, value_name = "FILE")]
    pub video_path: Option<PathBuf>,
    /// Phantom frames per beat.
    #[arg(long)]
    pub period: Option<usize>,
    /// Synthetic LDS order.
    #[arg(long)]
    pub lds_d: Option<usize>,
    #[arg(long)]
    pub lds_rho: Option<f64>,
    #[arg(long)]
    pub lds_sparsity: Option<usize>,
    #[arg(long)]
    pub lds_process_std: Option<f64>,
    #[arg(long)]
    pub lds_observation_std: Option<f64>,

    #[arg(long, value_parser = PossibleValuesParser::new(["distance", "hyperbolic", "uniform"]))]
    pub density: Option<String>,
    /// Compression rate n/m.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Invariant share of the per-frame budget.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub m_bar: Option<usize>,
    #[arg(long)]
    pub m_tilde: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,

    /// State order, or `auto` for energy-based selection.
    #[arg(long, value_name = "D|auto")]
    pub order: Option<String>,
    #[arg(long)]
    pub energy_fraction: Option<f64>,
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Hankel block rows.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_parser = PossibleValuesParser::new(["svd", "sor"]))]
    pub estimator: Option<String>,
    #[arg(long, value_parser = PossibleValuesParser::new(["raw", "whitened"]))]
    pub state_scaling: Option<String>,
    #[arg(long)]
    pub state_energy: Option<f64>,

    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Prox-linear step; derived from the Lipschitz bound when unset.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    #[arg(long)]
    pub tol_feas: Option<f64>,
    #[arg(long)]
    pub weight_scale: Option<f64>,
    #[arg(long, value_parser = PossibleValuesParser::new(["full", "decoupled"]))]
    pub coupling: Option<String>,
    #[arg(long, value_parser = PossibleValuesParser::new(["haar", "daubechies4"]))]
    pub wavelet: Option<String>,
    #[arg(long)]
    pub levels: Option<usize>,

    #[arg(long)]
    pub sor_omega_max: Option<f64>,
    #[arg(long)]
    pub sor_max_iters: Option<usize>,
    #[arg(long)]
    pub sor_tol: Option<f64>,
}

/// Contents of a config file: the config tree plus any sweep table.
#[derive(Debug, Default)]
pub struct FileLayer {
    pub config: Option<Value>,
    pub sweep: Option<Value>,
}

pub fn read_layer(path: &Path) -> Result<FileLayer, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: String| CliError::Usage(format!("config {}: {e}", path.display()));
    let value: Value = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => {
            let t: toml::Value = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| bad(e.to_string()))?
        }
        _ => serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?,
    };
    let Value::Object(mut map) = value else {
        return Err(bad("top level must be a table".into()));
    };
    let sweep = map.remove("sweep");
    let config = match map.remove("config") {
        Some(c) => Some(c),
        None if map.is_empty() => None,
        None => Some(Value::Object(map)),
    };
    Ok(FileLayer { config, sweep })
}

/// Recursive merge; the `video` table is replaced whole because its fields
/// depend on its `kind`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if k != "video" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set(root: &mut Value, path: &[&str], v: Value) {
    let mut node = root;
    for key in &path[..path.len() - 1] {
        let map = node.as_object_mut().expect("config tree is a table");
        node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .expect("config tree is a table")
        .insert(path[path.len() - 1].to_string(), v);
}

impl ConfigArgs {
    fn video_overrides(&self, root: &mut Value) -> Result<(), CliError> {
        let current = root["video"]["kind"].as_str().unwrap_or("phantom").to_string();
        let lds_flag = self.lds_d.is_some()
            || self.lds_rho.is_some()
            || self.lds_sparsity.is_some()
            || self.lds_process_std.is_some()
            || self.lds_observation_std.is_some();
        // source-specific flags imply their source unless --video says otherwise
        let kind = match &self.video {
            Some(k) => k.clone(),
            None if self.video_path.is_some() => "file".to_string(),
            None if lds_flag && self.period.is_none() => "lds".to_string(),
            None if self.period.is_some() && !lds_flag => "phantom".to_string(),
            None => current.clone(),
        };
        if kind != current {
            root["video"] = json!({ "kind": kind });
        }
        let phantom = [("period", self.period.map(Value::from))];
        let lds = [
            ("d", self.lds_d.map(Value::from)),
            ("rho", self.lds_rho.map(Value::from)),
            ("sparsity", self.lds_sparsity.map(Value::from)),
            ("process_std", self.lds_process_std.map(Value::from)),
            ("observation_std", self.lds_observation_std.map(Value::from)),
        ];
        let file = [(
            "path",
            self.video_path
                .as_ref()
                .map(|p| Value::from(p.to_string_lossy().into_owned())),
        )];
        for (owner, fields) in [("phantom", &phantom[..]), ("lds", &lds[..]), ("file", &file[..])] {
            for (name, v) in fields {
                let Some(v) = v else { continue };
                if owner != kind {
                    let flag = if owner == "lds" {
                        format!("--lds-{}", name.replace('_', "-"))
                    } else {
                        format!("--{}", if *name == "path" { "video-path" } else { name })
                    };
                    return Err(CliError::Usage(format!(
                        "{flag} applies to --video {owner}, but the video source is {kind}"
                    )));
                }
                set(root, &["video", name], v.clone());
            }
        }
        Ok(())
    }

    fn scalar_overrides(&self) -> Result<Vec<(&'static [&'static str], Value)>, CliError> {
        let order = match self.order.as_deref() {
            None => None,
            Some("auto") => Some(Value::from("auto")),
            Some(s) => match s.parse::<usize>() {
                Ok(d) => Some(Value::from(d)),
                Err(_) => {
                    return Err(CliError::Usage(format!(
                        "--order expects a positive integer or `auto`, got {s:?}"
                    )))
                }
            },
        };
        let s = |v: &Option<String>| v.as_ref().map(|x| Value::from(x.as_str()));
        let entries: Vec<(&'static [&'static str], Option<Value>)> = vec![
            (&["seed"], self.seed.map(Value::from)),
            (&["nx"], self.nx.map(Value::from)),
            (&["ny"], self.ny.map(Value::from)),
            (&["l"], self.l.map(Value::from)),
            (&["density"], s(&self.density)),
            (&["rate"], self.rate.map(Value::from)),
            (&["split"], self.split.map(Value::from)),
            (&["m_bar"], self.m_bar.map(Value::from)),
            (&["m_tilde"], self.m_tilde.map(Value::from)),
            (&["noise_sigma"], self.noise_sigma.map(Value::from)),
            (&["order"], order),
            (&["energy_fraction"], self.energy_fraction.map(Value::from)),
            (&["max_order"], self.max_order.map(Value::from)),
            (&["depth"], self.depth.map(Value::from)),
            (&["estimator"], s(&self.estimator)),
            (&["state_scaling"], s(&self.state_scaling)),
            (&["state_energy"], self.state_energy.map(Value::from)),
            (&["admm", "alpha"], self.alpha.map(Value::from)),
            (&["admm", "beta"], self.beta.map(Value::from)),
            (&["admm", "mu"], self.mu.map(Value::from)),
            (&["admm", "gamma"], self.gamma.map(Value::from)),
            (&["admm", "delta"], self.delta.map(Value::from)),
            (&["admm", "max_iters"], self.max_iters.map(Value::from)),
            (&["admm", "tol_rel"], self.tol_rel.map(Value::from)),
            (&["admm", "tol_feas"], self.tol_feas.map(Value::from)),
            (&["admm", "weight_scale"], self.weight_scale.map(Value::from)),
            (&["admm", "coupling"], s(&self.coupling)),
            (&["admm", "wavelet"], s(&self.wavelet)),
            (&["admm", "levels"], self.levels.map(Value::from)),
            (&["sor", "omega_max"], self.sor_omega_max.map(Value::from)),
            (&["sor", "max_iters"], self.sor_max_iters.map(Value::from)),
            (&["sor", "tol"], self.sor_tol.map(Value::from)),
        ];
        Ok(entries
            .into_iter()
            .filter_map(|(p, v)| v.map(|v| (p, v)))
            .collect())
    }

    /// Resolves defaults < file < flags into a checked config. Also returns
    /// the file's sweep table, if any.
    pub fn resolve(&self) -> Result<(ExperimentConfig, Option<Value>), CliError> {
        let mut root = serde_json::to_value(ExperimentConfig::default())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut sweep = None;
        if let Some(path) = &self.config {
            let layer = read_layer(path)?;
            if let Some(c) = layer.config {
                merge(&mut root, c);
            }
            sweep = layer.sweep;
        }
        self.video_overrides(&mut root)?;
        for (path, v) in self.scalar_overrides()? {
            set(&mut root, path, v);
        }
        let config: ExperimentConfig = serde_json::from_value(root)
            .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        config
            .check()
            .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        Ok((config, sweep))
    }
}
