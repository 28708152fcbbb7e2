use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use metagame_core::detection::{
    generate_baseline, meta_nash_test, read_streams_csv, BaselineKind, PriceStream,
};
use metagame_core::metagame::{
    arrows_csv, best_response_field, classify_profile, front_csv, front_points, nash_equilibria,
    pareto_front, reduced_face, reduced_line, BestResponseMap, ParetoMode, Slack, REFERENCE_META_NASH,
};
use metagame_core::qlearning::AgentParams;
use metagame_core::simulation::{limit_payoff, online_payoff, run_episode, Fidelity};
use metagame_core::sweep::{
    advance, resume, Axis, EvaluationKind, PayoffTensor, Progress, SweepOptions, SweepState,
};
use metagame_core::Error as CoreError;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{AnalysisArgs, DetectArgs, SimulateArgs, SweepArgs};

fn parse_profile(text: &str) -> Result<AgentParams, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("profile {text:?} is not `alpha,epsilon,gamma`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    Ok(AgentParams::new(v[0], v[1], v[2])?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<(), CliError> {
    let p1 = parse_profile(&args.theta_1)?;
    let p2 = parse_profile(&args.theta_2)?;
    let rec = run_episode(&p1, &p2, &cfg.env, cfg.horizon, cfg.master_seed, Fidelity::Full)?;
    let online = online_payoff(&rec);
    let limit = limit_payoff(&rec)?;
    let csv_path = cfg.output_dir.join("episode.csv");
    write_text(&csv_path, &rec.to_csv()?)?;
    let summary = cfg.envelope(json!({
        "theta_1": p1,
        "theta_2": p2,
        "seed": cfg.master_seed,
        "horizon": cfg.horizon,
        "online_payoff": online,
        "limit_payoff": limit,
        "episode_csv": "episode.csv",
    }));
    write_json(&cfg.output_dir.join("episode.json"), &summary)?;
    println!("theta_1 {p1}");
    println!("theta_2 {p2}");
    println!("online payoff {:.6} {:.6}", online[0], online[1]);
    println!("limit payoff  {:.6} {:.6}", limit[0], limit[1]);
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn format_secs(s: f64) -> String {
    if !s.is_finite() {
        return "?".into();
    }
    let s = s.round() as u64;
    format!("{}h{:02}m{:02}s", s / 3600, (s / 60) % 60, s % 60)
}

pub fn tensor_path(dir: &Path, kind: EvaluationKind) -> PathBuf {
    dir.join(format!("tensor_{kind}.mgpt"))
}

pub fn sweep(cfg: &RunConfig, args: &SweepArgs) -> Result<(), CliError> {
    let config = cfg.sweep_config();
    let checkpoint = args.checkpoint.clone().unwrap_or_else(|| cfg.output_dir.join("sweep.ckpt"));
    let mut state = if checkpoint.exists() {
        let state = resume(&checkpoint)?;
        if let Some(field) = state.config.mismatch(&config) {
            return Err(CoreError::ResumeMismatch(format!(
                "{field} differs from checkpoint {}",
                checkpoint.display()
            ))
            .into());
        }
        eprintln!("resuming: {} of {} cells done", state.completed(), state.total_cells());
        state
    } else {
        SweepState::new(config)?
    };
    let report = |p: &Progress| {
        eprintln!(
            "cells {}/{} ({:.1}%), {:.2} cells/s, elapsed {}, ETA {}",
            p.completed,
            p.total,
            100.0 * p.completed as f64 / p.total as f64,
            p.cells_per_sec,
            format_secs(p.elapsed_secs),
            format_secs(p.eta_secs())
        )
    };
    let opts = SweepOptions {
        workers: cfg.workers,
        checkpoint: Some(checkpoint.clone()),
        batch_cells: args.batch,
        stop_after: args.stop_after,
        cells: None,
        progress: Some(&report),
    };
    advance(&mut state, &opts)?;
    if !state.is_complete() {
        println!(
            "stopped after {} of {} cells; rerun to resume from {}",
            state.completed(),
            state.total_cells(),
            checkpoint.display()
        );
        return Ok(());
    }
    let (online, limit) = state.tensors()?;
    for mut tensor in [online, limit] {
        if !cfg.evaluation.contains(&tensor.kind) {
            continue;
        }
        tensor.metadata = cfg.envelope(json!({ "kind": tensor.kind }));
        let path = tensor_path(&cfg.output_dir, tensor.kind);
        tensor.save(&path).map_err(|e| CliError::io(&path, e))?;
        let csv_path = path.with_extension("csv");
        write_text(&csv_path, &tensor.to_csv())?;
        println!("wrote {} and {}", path.display(), csv_path.display());
    }
    Ok(())
}

fn load_tensor(path: &Path) -> Result<PayoffTensor, CliError> {
    PayoffTensor::load(path).map_err(|e| match e {
        CoreError::Io(io) => CliError::io(path, io),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })
}

pub fn analyze(cfg: &RunConfig, args: &AnalysisArgs, figures_only: bool) -> Result<(), CliError> {
    let t = load_tensor(&args.tensor)?;
    let mode: ParetoMode = args.pareto.parse().map_err(|e: CoreError| CliError::Config(e.to_string()))?;
    let anchor = match &args.anchor {
        Some(a) => t.grid.nearest(&parse_profile(a)?),
        None => t.grid.nearest(&REFERENCE_META_NASH),
    };
    let dir = if figures_only { cfg.output_dir.join("figures") } else { cfg.output_dir.clone() };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let arrows = best_response_field(&t);
    let front = front_points(&t, &pareto_front(&t, mode));
    write_text(&dir.join("arrows.csv"), &arrows_csv(&arrows))?;
    write_text(&dir.join("pareto.csv"), &front_csv(&front))?;
    for axis in Axis::ALL {
        let line = reduced_line(&t, axis, anchor);
        write_text(&dir.join(format!("reduced_{}.csv", axis.name())), &line.to_csv())?;
    }
    for axes in [[Axis::Alpha, Axis::Epsilon], [Axis::Alpha, Axis::Gamma], [Axis::Epsilon, Axis::Gamma]] {
        let face = reduced_face(&t, axes, anchor)?;
        let name = format!("face_{}_{}.csv", axes[0].name(), axes[1].name());
        write_text(&dir.join(name), &face.to_csv())?;
    }
    let figure_meta = cfg.envelope(json!({
        "tensor": args.tensor,
        "tensor_metadata": t.metadata,
        "anchor": { "index": anchor, "params": t.grid.params(anchor) },
        "pareto_mode": mode,
    }));
    write_json(&dir.join("figures.json"), &figure_meta)?;
    if figures_only {
        println!("wrote figure data to {}", dir.display());
        return Ok(());
    }

    let slack = match args.tau {
        Some(tau) => Slack::Fixed(tau),
        None => Slack::StderrMultiple(args.stderr_multiple),
    };
    let report = nash_equilibria(&t, slack)?;
    let mut classes = Vec::new();
    for e in &report.epsilon_nash {
        classes.push(json!({
            "row": e.row,
            "column": e.column,
            "classification": classify_profile(&t, e.row, e.column, &cfg.env)?,
        }));
    }
    write_json(
        &dir.join("equilibria.json"),
        &cfg.envelope(json!({
            "tensor": args.tensor,
            "tensor_metadata": t.metadata,
            "report": report,
            "classification": classes,
        })),
    )?;
    write_json(&dir.join("best_responses.json"), &cfg.envelope(serde_json::to_value(BestResponseMap::new(&t))?))?;
    write_json(&dir.join("pareto.json"), &cfg.envelope(json!({ "mode": mode, "front": front })))?;
    write_json(&dir.join("arrows.json"), &cfg.envelope(serde_json::to_value(&arrows)?))?;

    println!("{} evaluation, {} profiles per player", t.kind, t.n());
    println!("exact equilibria: {}", report.exact_nash.len());
    println!("approximate equilibria: {} ({} symmetric)", report.epsilon_nash.len(), report.symmetric_epsilon_nash().count());
    for e in report.exact_nash.iter().take(10) {
        println!("  {} vs {} payoff {:.4} {:.4}", e.theta_1, e.theta_2, e.payoff[0], e.payoff[1]);
    }
    println!("Pareto front ({mode:?}): {} profiles", front.len());
    println!("wrote analysis to {}", dir.display());
    Ok(())
}

pub fn detect(cfg: &RunConfig, args: &DetectArgs) -> Result<(), CliError> {
    let file = std::fs::File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let grid = (!args.infer_grid).then_some(&cfg.env);
    let (x1, x2) = read_streams_csv(std::io::BufReader::new(file), grid)?;
    let env = x1.env().clone();
    let mut baselines: BTreeMap<String, (PriceStream, PriceStream)> = BTreeMap::new();
    for name in &args.baselines {
        let kind: BaselineKind = name.parse().map_err(|e: CoreError| CliError::Config(e.to_string()))?;
        let profiles = match kind {
            BaselineKind::MetaNash => Some([parse_profile(&args.mn_profile)?; 2]),
            BaselineKind::ParetoFront => match &args.front_profiles {
                Some(p) => Some([parse_profile(&p[0])?, parse_profile(&p[1])?]),
                None => None,
            },
            BaselineKind::DecayedExploration => None,
        };
        let pair = generate_baseline(kind, profiles, &env, x1.len(), cfg.master_seed)?;
        baselines.insert(kind.name().to_string(), pair);
    }
    let report = meta_nash_test(&x1, &x2, &cfg.thresholds, &baselines)?;
    let path = cfg.output_dir.join("detection_report.json");
    write_json(
        &path,
        &cfg.envelope(json!({
            "input": args.input,
            "baseline_seed": cfg.master_seed,
            "report": report,
        })),
    )?;
    println!("verdict: {}", report.verdict);
    for step in &report.path {
        println!("  {step}");
    }
    println!("wrote {}", path.display());
    Ok(())
}
