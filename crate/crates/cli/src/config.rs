use std::path::{Path, PathBuf};

use metagame_core::detection::Thresholds;
use metagame_core::env::EnvConfig;
use metagame_core::sweep::{EvaluationKind, GridSpec, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a command needs; embedded verbatim in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub grid: GridSpec,
    pub horizon: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub evaluation: Vec<EvaluationKind>,
    pub thresholds: Thresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            grid: GridSpec::default(),
            horizon: 40_000,
            reps: 40,
            master_seed: 0,
            workers: 0,
            output_dir: PathBuf::from("out"),
            evaluation: vec![EvaluationKind::Online, EvaluationKind::Limit],
            thresholds: Thresholds::default(),
        }
    }
}

/// Values that may come from the environment or the command line; `None`
/// leaves the lower layer in place.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub reps: Option<usize>,
    pub grid_points: Option<usize>,
}

impl RunConfig {
    /// Read a TOML or JSON config. A JSON artifact written by this tool is
    /// accepted as well, in which case its embedded `run_config` is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |e: String| CliError::Config(format!("{}: {e}", path.display()));
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
                let inner = value.get("run_config").cloned().unwrap_or(value);
                serde_json::from_value(inner).map_err(|e| bad(e.to_string()))
            }
            Some("toml") | None => toml::from_str(&text).map_err(|e| bad(e.to_string())),
            Some(other) => Err(bad(format!("unsupported config extension .{other}"))),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.master_seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.horizon {
            self.horizon = v;
        }
        if let Some(v) = o.reps {
            self.reps = v;
        }
        if let Some(n) = o.grid_points {
            self.grid = GridSpec::with_points(n);
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            env: self.env.clone(),
            grid: self.grid,
            horizon: self.horizon,
            reps: self.reps,
            master_seed: self.master_seed,
        }
    }

    /// Wrap an artifact body with this config and the tool version.
    pub fn envelope(&self, body: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "tool_version": metagame_core::VERSION,
            "run_config": self,
            "result": body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_layers_under_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "horizon = 500\nreps = 3\nmaster_seed = 9\n[grid.alpha]\nlo = 0.1\nhi = 0.2\npoints = 2\n")
            .unwrap();
        let mut cfg = RunConfig::load(&path).unwrap();
        assert_eq!((cfg.horizon, cfg.reps, cfg.master_seed), (500, 3, 9));
        assert_eq!(cfg.grid.alpha.points, 2);
        assert_eq!(cfg.grid.gamma.points, 10);
        cfg.apply(&Overrides { seed: Some(1), ..Default::default() });
        assert_eq!((cfg.horizon, cfg.master_seed), (500, 1));
    }

    #[test]
    fn embedded_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.json");
        let mut cfg = RunConfig::default();
        cfg.reps = 7;
        std::fs::write(&path, cfg.envelope(serde_json::json!({})).to_string()).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "horizn = 5\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Config(_))));
    }
}
