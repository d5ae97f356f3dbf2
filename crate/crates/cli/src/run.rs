//! Config loading, experiment dispatch and artifact emission.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use etopt_core::config::{ExperimentConfig, Mode, Violation};
use etopt_core::harness::{self, ClosedLoopTrace, Policy, SweepRow};
use etopt_core::scp::solve_expected_time;
use etopt_core::soncost::norm_profile;
use etopt_core::stochastic::sample_ensemble;
use etopt_core::{par, Error};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invalid(Vec<Violation>),
    Core { context: String, source: Error },
}

impl CliError {
    fn core<E: Into<Error>>(context: impl Into<String>) -> impl FnOnce(E) -> CliError {
        let context = context.into();
        move |source| CliError::Core {
            context,
            source: source.into(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Invalid(_) => "config",
            CliError::Core { source, .. } => match source {
                Error::Io(_) => "io",
                Error::Json(_)
                | Error::Config(_)
                | Error::InvalidParameter { .. }
                | Error::DimensionMismatch { .. }
                | Error::NotPsd(_)
                | Error::UnknownWeightKind(_) => "config",
                _ => "solver",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let violations: &[Violation] = match self {
            CliError::Invalid(v) => v,
            _ => &[],
        };
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "violations": violations,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Invalid(v) => write!(f, "config has {} violation(s)", v.len()),
            CliError::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

/// Reads an experiment config. A run manifest is unwrapped to the config it
/// echoes, so a finished run can be replayed directly.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(CliError::core(format!("parsing {}", path.display())))?;
    if value.get("model").is_none() {
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
    }
    serde_json::from_value(value).map_err(CliError::core(format!("parsing {}", path.display())))
}

#[derive(Debug, Serialize)]
struct ValidationReport<'a> {
    valid: bool,
    violations: &'a [Violation],
}

pub fn validate(path: &Path) -> Result<String, CliError> {
    let cfg = load_config(path)?;
    let violations = cfg.validate();
    if violations.is_empty() {
        Ok(serde_json::to_string_pretty(&ValidationReport {
            valid: true,
            violations: &[],
        })
        .expect("report serializes"))
    } else {
        Err(CliError::Invalid(violations))
    }
}

#[derive(Debug, Serialize)]
struct ArtifactEntry {
    path: String,
    bytes: u64,
}

struct Artifacts {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            entries: Vec::new(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> etopt_core::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let ctx = format!("writing {}", path.display());
        let file = File::create(&path).map_err(CliError::core(ctx.clone()))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(CliError::core(ctx.clone()))?;
        w.flush().map_err(CliError::core(ctx.clone()))?;
        drop(w);
        let bytes = fs::metadata(&path).map_err(CliError::core(ctx))?.len();
        self.entries.push(ArtifactEntry {
            path: name.to_string(),
            bytes,
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

fn fmt_row(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(",")
}

pub fn execute(path: &Path, mode: Option<Mode>, ov: &Overrides) -> Result<String, CliError> {
    let started = Instant::now();
    let mut cfg = load_config(path)?;
    if let Some(seed) = ov.seed {
        cfg.uncertainty.seed = seed;
    }
    if let Some(mode) = mode {
        cfg.experiment.mode = mode;
    }
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let mode = cfg.experiment.mode;
    let out = ov
        .out
        .clone()
        .or_else(|| cfg.experiment.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut artifacts = Artifacts::new(out.clone())?;

    let model = cfg.build_model().map_err(CliError::core("building model"))?;
    let solve_cfg = cfg.solve_config().map_err(CliError::core("building solver settings"))?;
    let dist = cfg.initial_distribution().map_err(CliError::core("building distribution"))?;
    let particles = cfg.uncertainty.particles;
    let seed = cfg.uncertainty.seed;
    info!("{mode}: seed {seed}, output {}", out.display());

    let headline = match mode {
        Mode::Solve => {
            let ensemble = sample_ensemble(&dist, particles, harness::ensemble_seed(seed, 0))
                .map_err(CliError::core("sampling ensemble"))?;
            let sol = solve_expected_time(&model, &ensemble, &solve_cfg).map_err(CliError::core("solve"))?;
            artifacts.write("ensemble.csv", |w| ensemble.write_csv(w))?;
            artifacts.write("states.csv", |w| {
                let n = model.state_dim();
                let names: Vec<String> = (0..n).map(|j| format!("x{j}")).collect();
                writeln!(w, "particle,step,norm,{}", names.join(","))?;
                for (i, traj) in sol.states.iter().enumerate() {
                    for (k, (x, norm)) in traj.iter().zip(norm_profile(traj)).enumerate() {
                        writeln!(w, "{i},{},{norm:.17e},{}", k + 1, fmt_row(x.iter().copied()))?;
                    }
                }
                Ok(())
            })?;
            artifacts.write("controls.csv", |w| {
                let names: Vec<String> = (0..model.control_dim()).map(|j| format!("u{j}")).collect();
                writeln!(w, "particle,step,{}", names.join(","))?;
                for (i, traj) in sol.controls.iter().enumerate() {
                    for (k, u) in traj.iter().enumerate() {
                        writeln!(w, "{i},{},{}", k + 1, fmt_row(u.iter().copied()))?;
                    }
                }
                Ok(())
            })?;
            artifacts.write_json("solution.json", &sol)?;
            json!({
                "objective": sol.objective,
                "iterations": sol.iterations,
                "converged": sol.converged,
            })
        }
        Mode::McOpenLoop => {
            let summary = harness::run_open_loop_mc(&model, &solve_cfg, particles, &dist, &cfg.mc_options(ov.jobs))
                .map_err(CliError::core("open-loop Monte Carlo"))?;
            artifacts.write("samples.csv", |w| summary.write_samples_csv(w))?;
            artifacts.write("histogram.csv", |w| summary.write_histogram_csv(w))?;
            let compact: Vec<Value> = summary
                .policies()
                .map(|p| {
                    json!({
                        "policy": p.policy,
                        "mean_terminal_steps": p.mean,
                        "converged": p.converged,
                        "non_converged": p.non_converged,
                        "diverged": p.diverged,
                        "fast": p.fast,
                        "slow": p.slow,
                        "slow_threshold": p.slow_threshold,
                    })
                })
                .collect();
            artifacts.write_json(
                "summary.json",
                &json!({
                    "seed": summary.seed,
                    "ensemble_seed": summary.ensemble_seed,
                    "evaluation_seed": summary.evaluation_seed,
                    "n_mc": summary.n_mc,
                    "policies": compact,
                }),
            )?;
            json!({ "policies": compact })
        }
        Mode::ClosedLoop => {
            let noise = cfg.measurement_noise().map_err(CliError::core("building measurement noise"))?;
            let opts = cfg.closed_loop_options();
            let policies = [Policy::Proposed, Policy::Baseline];
            let traces: Vec<etopt_core::Result<ClosedLoopTrace>> = par::map_indexed(policies.len(), ov.jobs, |i| {
                harness::run_closed_loop(&model, &solve_cfg, particles, &dist, &noise, policies[i], &opts)
            });
            let mut done = Vec::new();
            for (p, t) in policies.iter().zip(traces) {
                done.push(t.map_err(CliError::core(format!("closed loop ({p})")))?);
            }
            for t in &done {
                artifacts.write(&format!("closed_loop_{}.csv", t.policy), |w| t.write_csv(w))?;
            }
            artifacts.write_json("closed_loop.json", &done)?;
            let compact: Vec<Value> = done
                .iter()
                .map(|t| {
                    json!({
                        "policy": t.policy,
                        "convergence_step": t.convergence_step,
                        "replans": t.replans.len(),
                    })
                })
                .collect();
            json!({ "policies": compact })
        }
        Mode::SweepWeights | Mode::SweepConsensus => {
            let opts = cfg.mc_options(ov.jobs);
            let rows: Vec<SweepRow> = if mode == Mode::SweepWeights {
                harness::sweep_weights(&model, &solve_cfg, particles, &dist, &cfg.experiment.sweep_weights, &opts)
            } else {
                harness::sweep_consensus(&model, &solve_cfg, particles, &dist, &cfg.experiment.sweep_consensus, &opts)
            }
            .map_err(CliError::core(mode.label()))?;
            artifacts.write("sweep.csv", |w| harness::write_sweep_csv(&rows, w))?;
            artifacts.write_json("sweep.json", &rows)?;
            json!({ "rows": rows })
        }
    };

    let manifest = json!({
        "tool": "etopt",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": etopt_core::VERSION,
        "mode": mode,
        "config": cfg,
        "seeds": {
            "seed": seed,
            "ensemble": harness::ensemble_seed(seed, 0),
            "evaluation": harness::evaluation_seed(seed),
        },
        "jobs": ov.jobs,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "artifacts": artifacts.entries,
    });
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(CliError::core("writing manifest"))?;

    Ok(json!({
        "mode": mode,
        "output": out,
        "manifest": manifest_path,
        "result": headline,
    })
    .to_string())
}
