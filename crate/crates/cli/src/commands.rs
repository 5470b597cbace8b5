use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asysg_core::harness::{load_trace, save_trace, speedup_row, write_plot_data, HarnessError};
use asysg_core::parallel::run_threaded;
use asysg_core::sim::run_sim;
use asysg_core::theory::{resolve_gamma, theory_inputs, theory_report};
use asysg_core::{Problem, Trace};
use serde_json::json;

use crate::config::{self, ConfigFile};
use crate::error::CliError;

fn load_config(
    path: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
    seeds: Option<usize>,
) -> Result<ConfigFile, CliError> {
    let mut cfg = config::load(path, overrides)?;
    if let Some(out) = out {
        cfg.output.trace = out;
    }
    if let Some(count) = seeds {
        cfg.seeds.count = count;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace")
        .to_string()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("plain JSON value");
    fs::write(path, text + "\n")
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn run(
    config_path: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
    seeds: Option<usize>,
) -> Result<(), CliError> {
    let file = load_config(config_path, overrides, out, seeds)?;
    let problem = file.build_problem()?;
    let p: &dyn Problem = problem.as_ref();
    for seed in file.replicate_seeds() {
        let cfg = file.run_config(seed);
        resolve_gamma(p, &cfg).map_err(|e| CliError::invalid("algorithm.gamma", e))?;
        let path = file.trace_path(seed);
        ensure_parent(&path)?;
        let trace = if cfg.mode.is_sim() {
            run_sim(p, &cfg).map_err(CliError::runtime)?.trace
        } else {
            let run = run_threaded(p, &cfg).map_err(CliError::runtime)?;
            let sidecar = path.with_file_name(format!("{}.delays.json", stem(&path)));
            write_json(
                &sidecar,
                &json!({
                    "mode": cfg.mode,
                    "workers": cfg.workers,
                    "delays": run.delays,
                    "writes_per_worker": run.writes_per_worker,
                    "contributions_applied": run.contributions_applied,
                    "log": run.log,
                }),
            )?;
            run.trace
        };
        save_trace(&trace, &path).map_err(CliError::runtime)?;
        println!("{}", path.display());
        if file.output.plot_data {
            let dir = path.parent().unwrap_or(Path::new("."));
            write_plot_data(&trace, dir, &stem(&path)).map_err(CliError::runtime)?;
        }
    }
    Ok(())
}

pub fn theory(config_path: &Path, overrides: &[String]) -> Result<(), CliError> {
    let file = load_config(config_path, overrides, None, None)?;
    let problem = file.build_problem()?;
    let cfg = file.run_config(file.seeds.master_seed);
    let inputs = theory_inputs(problem.as_ref(), &cfg);
    let consistent = cfg.mode.is_consistent();
    let missing: Vec<&str> = if consistent {
        [("L", inputs.l), ("sigma_sq", inputs.sigma_sq)]
            .into_iter()
            .filter(|(_, v)| v.is_none())
            .map(|(k, _)| k)
            .collect()
    } else {
        [
            ("L_T", inputs.l_t),
            ("L_max", inputs.l_max),
            ("sigma_sq", inputs.sigma_sq),
        ]
        .into_iter()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k)
        .collect()
    };
    if !missing.is_empty() {
        return Err(CliError::invalid(
            "problem",
            format!(
                "constants {} unavailable for mode {}",
                missing.join(", "),
                cfg.mode.as_str()
            ),
        ));
    }
    let report = theory_report(&inputs, consistent, !consistent);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    Ok(())
}

fn read_trace_arg(path: &Path) -> Result<Trace, CliError> {
    load_trace(path).map_err(|e| match e {
        HarnessError::Io(source) => CliError::Read {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Syntax {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

fn parse_parallel(arg: &str) -> Result<(usize, PathBuf), CliError> {
    let bad = || {
        CliError::invalid(
            "--parallel",
            format!("`{arg}` is not WORKERS=PATH with WORKERS ≥ 1"),
        )
    };
    let (w, path) = arg.split_once('=').ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if w == 0 {
        return Err(bad());
    }
    Ok((w, PathBuf::from(path)))
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn speedup(baseline: &Path, parallel: &[String], epsilon: f64) -> Result<(), CliError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(CliError::invalid("--epsilon", "must be a positive number"));
    }
    let base = read_trace_arg(baseline)?;
    let runs = parallel
        .iter()
        .map(|a| {
            let (w, path) = parse_parallel(a)?;
            Ok((w, read_trace_arg(&path)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = String::from(
        "workers,iteration_speedup,time_speedup,iterations_to_target,seconds_to_target\n",
    );
    for (w, trace) in &runs {
        let row = speedup_row(&base, trace, *w, epsilon).map_err(CliError::runtime)?;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.workers,
            cell(row.iteration_speedup),
            cell(row.time_speedup),
            cell(row.iterations_to_target),
            cell(row.seconds_to_target),
        ));
    }
    std::io::stdout()
        .write_all(out.as_bytes())
        .map_err(CliError::runtime)
}

pub fn plotdata(trace_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let trace = read_trace_arg(trace_path)?;
    let dir = out.unwrap_or_else(|| {
        trace_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    let written = write_plot_data(&trace, &dir, &stem(trace_path)).map_err(CliError::runtime)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
