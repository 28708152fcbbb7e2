//! Monte Carlo estimation of the meta-game payoff tensor.
//!
//! Every `(theta_1, theta_2)` cell is simulated `reps` times with seeds from
//! [`derive_seed`]. Seeds depend only on the cell and replication, and each
//! cell is reduced in replication order, so the result is bit-identical for
//! any worker count, batch size or resume point.

mod grid;
mod tensor;

use std::io::{Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{build_grid, Axis, AxisSpec, GridSpec, ParameterGrid};
pub use tensor::{EvaluationKind, PayoffTensor};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, MAX_PROFILES, MAX_REPS};
use crate::simulation::{limit_payoff, online_payoff, EpisodeRunner, Fidelity};

const CHECKPOINT_MAGIC: &[u8; 4] = b"MGCK";
const CHECKPOINT_VERSION: u16 = 1;

/// Everything that determines a sweep's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub grid: GridSpec,
    pub horizon: usize,
    pub reps: usize,
    pub master_seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<ParameterGrid> {
        self.env.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least one round".into()));
        }
        if self.reps == 0 || self.reps >= MAX_REPS {
            return Err(Error::InvalidParams(format!("reps must lie in 1..{MAX_REPS}")));
        }
        let grid = build_grid(&self.grid)?;
        if grid.len() >= MAX_PROFILES {
            return Err(Error::InvalidGrid(format!("at most {MAX_PROFILES} profiles per player")));
        }
        Ok(grid)
    }

    /// First field that differs from `other`, if any.
    pub fn mismatch(&self, other: &SweepConfig) -> Option<&'static str> {
        if self.env != other.env {
            Some("environment")
        } else if self.grid != other.grid {
            Some("grid")
        } else if self.horizon != other.horizon {
            Some("horizon")
        } else if self.reps != other.reps {
            Some("reps")
        } else if self.master_seed != other.master_seed {
            Some("master_seed")
        } else {
            None
        }
    }
}

/// Per-cell mean and standard error for both players, online then limit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellStats {
    pub online: [f64; 4],
    pub limit: [f64; 4],
}

impl CellStats {
    fn to_array(self) -> [f64; 8] {
        let mut out = [0.0; 8];
        out[..4].copy_from_slice(&self.online);
        out[4..].copy_from_slice(&self.limit);
        out
    }

    fn from_array(a: [f64; 8]) -> Self {
        let mut s = Self::default();
        s.online.copy_from_slice(&a[..4]);
        s.limit.copy_from_slice(&a[4..]);
        s
    }
}

/// Mean and standard error (sample sd over `sqrt(n)`), zero error for `n = 1`.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Simulates all replications of one cell.
pub fn compute_cell(
    runner: &EpisodeRunner,
    grid: &ParameterGrid,
    config: &SweepConfig,
    cell: usize,
) -> Result<CellStats> {
    let n = grid.len();
    let (i1, i2) = (cell / n, cell % n);
    let (p1, p2) = (grid.params(i1), grid.params(i2));
    let mut samples = [(); 4].map(|_| Vec::with_capacity(config.reps));
    for rep in 0..config.reps {
        let seed = derive_seed(config.master_seed, i1, i2, rep);
        let rec = runner.run(&p1, &p2, config.horizon, seed, Fidelity::Aggregate)?;
        let [o1, o2] = online_payoff(&rec);
        let [l1, l2] = limit_payoff(&rec)?;
        samples[0].push(o1);
        samples[1].push(o2);
        samples[2].push(l1);
        samples[3].push(l2);
    }
    let stats = samples.map(|s| mean_stderr(&s));
    Ok(CellStats {
        online: [stats[0].0, stats[1].0, stats[0].1, stats[1].1],
        limit: [stats[2].0, stats[3].0, stats[2].1, stats[3].1],
    })
}

/// Progress of a sweep, restorable from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepState {
    pub config: SweepConfig,
    grid: ParameterGrid,
    done: Vec<bool>,
    stats: Vec<CellStats>,
}

impl SweepState {
    pub fn new(config: SweepConfig) -> Result<Self> {
        let grid = config.validate()?;
        let cells = grid.len() * grid.len();
        Ok(Self { config, grid, done: vec![false; cells], stats: vec![CellStats::default(); cells] })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn total_cells(&self) -> usize {
        self.done.len()
    }

    pub fn completed(&self) -> usize {
        self.done.iter().filter(|&&d| d).count()
    }

    pub fn is_complete(&self) -> bool {
        self.done.iter().all(|&d| d)
    }

    pub fn cell(&self, cell: usize) -> Option<CellStats> {
        self.done[cell].then(|| self.stats[cell])
    }

    /// Forget one cell so that it is recomputed.
    pub fn clear_cell(&mut self, cell: usize) {
        self.done[cell] = false;
        self.stats[cell] = CellStats::default();
    }

    /// Fold in the completed cells of another shard of the same sweep.
    pub fn merge(&mut self, other: &SweepState) -> Result<()> {
        if let Some(field) = self.config.mismatch(&other.config) {
            return Err(Error::ResumeMismatch(field.into()));
        }
        for (c, &d) in other.done.iter().enumerate() {
            if d && !self.done[c] {
                self.done[c] = true;
                self.stats[c] = other.stats[c];
            }
        }
        Ok(())
    }

    /// The online and limit tensors; fails unless every cell is done.
    pub fn tensors(&self) -> Result<(PayoffTensor, PayoffTensor)> {
        if !self.is_complete() {
            return Err(Error::InvalidParams(format!(
                "sweep incomplete: {} of {} cells done",
                self.completed(),
                self.total_cells()
            )));
        }
        let metadata = serde_json::json!({
            "sweep": self.config,
            "tool_version": crate::VERSION,
        });
        let build = |kind: EvaluationKind| {
            let pick = |k: usize| -> Vec<f64> {
                self.stats
                    .iter()
                    .map(|s| match kind {
                        EvaluationKind::Online => s.online[k],
                        EvaluationKind::Limit => s.limit[k],
                    })
                    .collect()
            };
            PayoffTensor {
                grid: self.grid.clone(),
                replications: self.config.reps,
                horizon: self.config.horizon,
                master_seed: self.config.master_seed,
                kind,
                mean_1: pick(0),
                mean_2: pick(1),
                stderr_1: pick(2),
                stderr_2: pick(3),
                metadata: metadata.clone(),
            }
        };
        Ok((build(EvaluationKind::Online), build(EvaluationKind::Limit)))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
    pub elapsed_secs: f64,
    /// Cells finished during this run, per second.
    pub cells_per_sec: f64,
}

impl Progress {
    pub fn eta_secs(&self) -> f64 {
        if self.cells_per_sec > 0.0 {
            (self.total - self.completed) as f64 / self.cells_per_sec
        } else {
            f64::INFINITY
        }
    }
}

pub struct SweepOptions<'a> {
    /// Worker threads; `0` uses rayon's default.
    pub workers: usize,
    /// Checkpoint file; a JSON sidecar is written next to it.
    pub checkpoint: Option<PathBuf>,
    /// Cells per batch between checkpoints and progress reports.
    pub batch_cells: usize,
    /// Stop after this many newly computed cells.
    pub stop_after: Option<usize>,
    /// Restrict work to a range of flat cell indices (manual sharding).
    pub cells: Option<Range<usize>>,
    pub progress: Option<&'a (dyn Fn(&Progress) + Sync)>,
}

impl Default for SweepOptions<'_> {
    fn default() -> Self {
        Self { workers: 0, checkpoint: None, batch_cells: 256, stop_after: None, cells: None, progress: None }
    }
}

/// Compute pending cells of `state`, checkpointing after every batch.
pub fn advance(state: &mut SweepState, opts: &SweepOptions<'_>) -> Result<()> {
    let range = opts.cells.clone().unwrap_or(0..state.total_cells());
    if range.end > state.total_cells() {
        return Err(Error::InvalidParams("cell range exceeds the tensor".into()));
    }
    let mut pending: Vec<usize> = range.filter(|&c| !state.done[c]).collect();
    if let Some(limit) = opts.stop_after {
        pending.truncate(limit);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
    let runner = EpisodeRunner::new(&state.config.env)?;
    let started = Instant::now();
    let mut finished = 0usize;

    for batch in pending.chunks(opts.batch_cells.max(1)) {
        let results: Vec<Result<CellStats>> = pool.install(|| {
            batch
                .par_iter()
                .map(|&c| compute_cell(&runner, &state.grid, &state.config, c))
                .collect()
        });
        for (&c, r) in batch.iter().zip(results) {
            state.stats[c] = r?;
            state.done[c] = true;
        }
        finished += batch.len();
        if let Some(path) = &opts.checkpoint {
            checkpoint(state, path)?;
        }
        if let Some(report) = opts.progress {
            let elapsed = started.elapsed().as_secs_f64();
            report(&Progress {
                completed: state.completed(),
                total: state.total_cells(),
                elapsed_secs: elapsed,
                cells_per_sec: if elapsed > 0.0 { finished as f64 / elapsed } else { 0.0 },
            });
        }
    }
    Ok(())
}

/// Run a sweep to completion, resuming from `opts.checkpoint` when it exists.
pub fn run_sweep(config: &SweepConfig, opts: &SweepOptions<'_>) -> Result<(PayoffTensor, PayoffTensor)> {
    let mut state = match &opts.checkpoint {
        Some(path) if path.exists() => {
            let state = resume(path)?;
            if let Some(field) = state.config.mismatch(config) {
                return Err(Error::ResumeMismatch(field.into()));
            }
            state
        }
        _ => SweepState::new(config.clone())?,
    };
    advance(&mut state, opts)?;
    state.tensors()
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    path.with_file_name(name)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: SweepConfig,
    completed: usize,
    total: usize,
    tool_version: String,
}

/// Write `state` atomically: binary cell table plus a JSON config sidecar.
pub fn checkpoint(state: &SweepState, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u64::<LittleEndian>(state.total_cells() as u64)?;
        for (d, s) in state.done.iter().zip(&state.stats) {
            w.write_u8(u8::from(*d))?;
            for v in s.to_array() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
    }
    let sidecar = Sidecar {
        config: state.config.clone(),
        completed: state.completed(),
        total: state.total_cells(),
        tool_version: crate::VERSION.to_string(),
    };
    let side_tmp = sidecar_path(&tmp);
    std::fs::write(&side_tmp, serde_json::to_vec_pretty(&sidecar)?)?;
    std::fs::rename(&side_tmp, sidecar_path(path))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn resume(path: &Path) -> Result<SweepState> {
    let corrupt = |reason: String| Error::CheckpointCorrupt { path: path.to_path_buf(), reason };
    let side = std::fs::read(sidecar_path(path))
        .map_err(|e| corrupt(format!("cannot read config sidecar: {e}")))?;
    let sidecar: Sidecar =
        serde_json::from_slice(&side).map_err(|e| corrupt(format!("config sidecar: {e}")))?;
    let mut state = SweepState::new(sidecar.config).map_err(|e| corrupt(e.to_string()))?;

    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| corrupt(e.to_string()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic bytes".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(|e| corrupt(e.to_string()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::ResumeMismatch(format!("checkpoint version {version}")));
    }
    let cells = r.read_u64::<LittleEndian>().map_err(|e| corrupt(e.to_string()))? as usize;
    if cells != state.total_cells() {
        return Err(corrupt(format!("{cells} cells, config implies {}", state.total_cells())));
    }
    for c in 0..cells {
        let flag = r.read_u8().map_err(|e| corrupt(format!("cell {c}: {e}")))?;
        let mut a = [0.0; 8];
        r.read_f64_into::<LittleEndian>(&mut a).map_err(|e| corrupt(format!("cell {c}: {e}")))?;
        match flag {
            0 => {}
            1 => {
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(corrupt(format!("cell {c} has non-finite statistics")));
                }
                state.done[c] = true;
                state.stats[c] = CellStats::from_array(a);
            }
            f => return Err(corrupt(format!("cell {c} has flag {f}"))),
        }
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(corrupt("trailing bytes".into()));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::run_episode;

    fn tiny(points: usize, reps: usize) -> SweepConfig {
        SweepConfig {
            env: EnvConfig::default(),
            grid: GridSpec::with_points(points),
            horizon: 300,
            reps,
            master_seed: 2024,
        }
    }

    #[test]
    fn single_cell_is_mean_of_episodes() {
        let mut config = tiny(1, 3);
        config.grid.alpha = AxisSpec::new(0.12, 0.12, 1);
        config.grid.epsilon = AxisSpec::new(0.25, 0.25, 1);
        config.grid.gamma = AxisSpec::new(0.5, 0.5, 1);
        let (online, limit) = run_sweep(&config, &SweepOptions::default()).unwrap();
        let p = crate::qlearning::AgentParams::new(0.12, 0.25, 0.5).unwrap();
        let mut o = Vec::new();
        let mut l = Vec::new();
        for rep in 0..3 {
            let seed = derive_seed(2024, 0, 0, rep);
            let rec = run_episode(&p, &p, &config.env, 300, seed, Fidelity::Aggregate).unwrap();
            o.push(online_payoff(&rec)[0]);
            l.push(limit_payoff(&rec).unwrap()[0]);
        }
        assert_eq!(online.mean_1, vec![o.iter().sum::<f64>() / 3.0]);
        assert_eq!(limit.mean_1, vec![l.iter().sum::<f64>() / 3.0]);
        assert_eq!(online.stderr_1[0], mean_stderr(&o).1);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let config = tiny(2, 2);
        let one = run_sweep(&config, &SweepOptions { workers: 1, ..Default::default() }).unwrap();
        let many = run_sweep(&config, &SweepOptions { workers: 8, batch_cells: 5, ..Default::default() })
            .unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn recomputing_a_cell_reproduces_it() {
        let config = tiny(2, 2);
        let mut state = SweepState::new(config).unwrap();
        advance(&mut state, &SweepOptions::default()).unwrap();
        let before = state.cell(37).unwrap();
        state.clear_cell(37);
        assert!(!state.is_complete());
        advance(&mut state, &SweepOptions::default()).unwrap();
        assert_eq!(state.cell(37).unwrap(), before);
    }

    #[test]
    fn interrupted_sweep_resumes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.ckpt");
        let config = tiny(2, 2);
        let full = run_sweep(&config, &SweepOptions::default()).unwrap();

        let half = SweepOptions {
            checkpoint: Some(path.clone()),
            batch_cells: 8,
            stop_after: Some(32),
            ..Default::default()
        };
        let mut state = SweepState::new(config.clone()).unwrap();
        advance(&mut state, &half).unwrap();
        assert_eq!(resume(&path).unwrap().completed(), 32);

        let rest = SweepOptions { checkpoint: Some(path.clone()), ..Default::default() };
        assert_eq!(run_sweep(&config, &rest).unwrap(), full);
    }

    #[test]
    fn resume_rejects_changed_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.ckpt");
        let config = tiny(2, 1);
        let mut state = SweepState::new(config.clone()).unwrap();
        advance(&mut state, &SweepOptions { stop_after: Some(4), ..Default::default() }).unwrap();
        checkpoint(&state, &path).unwrap();
        let opts = SweepOptions { checkpoint: Some(path.clone()), ..Default::default() };

        let mut reps = config.clone();
        reps.reps = 2;
        assert!(matches!(run_sweep(&reps, &opts), Err(Error::ResumeMismatch(f)) if f == "reps"));
        let mut seed = config.clone();
        seed.master_seed += 1;
        assert!(matches!(run_sweep(&seed, &opts), Err(Error::ResumeMismatch(f)) if f == "master_seed"));
    }

    #[test]
    fn corrupt_checkpoint_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.ckpt");
        let state = SweepState::new(tiny(2, 1)).unwrap();
        checkpoint(&state, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 10);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(resume(&path), Err(Error::CheckpointCorrupt { .. })));
        std::fs::write(sidecar_path(&path), b"{not json").unwrap();
        assert!(matches!(resume(&path), Err(Error::CheckpointCorrupt { .. })));
    }

    #[test]
    fn shards_merge_into_full_sweep() {
        let config = tiny(2, 1);
        let full = run_sweep(&config, &SweepOptions::default()).unwrap();
        let mut a = SweepState::new(config.clone()).unwrap();
        let mut b = SweepState::new(config).unwrap();
        advance(&mut a, &SweepOptions { cells: Some(0..20), ..Default::default() }).unwrap();
        advance(&mut b, &SweepOptions { cells: Some(20..64), ..Default::default() }).unwrap();
        assert!(a.tensors().is_err());
        a.merge(&b).unwrap();
        assert_eq!(a.tensors().unwrap(), full);
    }

    #[test]
    fn stderr_matches_definition() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3, over n = 4
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }
}
