//! Subcommand implementations: run, sweep, compare, validate.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dobsim::sim::{compute_metrics, run_scenario, set_parameter, Metrics, PlantModel, Trace};
use dobsim::validate::{all_passed, run_checks, ValidateOptions};

use crate::config::{ConfigFile, Resolved};

/// Per-invocation overrides of the configuration file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub plant_model: Option<PlantModel>,
}

impl Overrides {
    fn apply(&self, resolved: &mut Resolved) {
        if let Some(seed) = self.seed {
            resolved.scenario.seed = seed;
        }
        if let Some(pm) = self.plant_model {
            resolved.scenario.plant_model = pm;
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading configuration {}", p.display()))?;
            ConfigFile::parse(&text)
                .with_context(|| format!("parsing configuration {}", p.display()))
        }
    }
}

fn resolve(cfg: &ConfigFile, overrides: Overrides) -> Result<Resolved> {
    let mut resolved = cfg.resolve().context("resolving configuration")?;
    overrides.apply(&mut resolved);
    Ok(resolved)
}

fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    trace
        .write_csv(&mut w)
        .with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn cmd_run(config: Option<&Path>, out: &Path, overrides: Overrides) -> Result<()> {
    let resolved = resolve(&load_config(config)?, overrides)?;
    let trace = run_scenario(&resolved.scenario).context("running scenario")?;
    let metrics = compute_metrics(&trace, resolved.settle_fraction).context("metrics")?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_trace(&out.join("trace.csv"), &trace)?;
    write_json(&out.join("metrics.json"), &metrics)?;

    println!(
        "wrote {} samples to {}; rms_tracking {:.6e}, rms_est_error {:.6e}{}",
        trace.len(),
        out.join("trace.csv").display(),
        metrics.rms_tracking,
        metrics.rms_est_error,
        if metrics.diverged { "; DIVERGED" } else { "" }
    );
    Ok(())
}

const SWEEP_CSV_HEADER: &str =
    "value,rms_tracking,rms_est_error,max_est_error,diverged,settle_fraction";

pub fn cmd_sweep(
    config: Option<&Path>,
    parameter: &str,
    values: &[f64],
    out: &Path,
    overrides: Overrides,
) -> Result<()> {
    if values.is_empty() {
        bail!("no sweep values given; pass --values v1,v2,...");
    }
    let base = resolve(&load_config(config)?, overrides)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.scenario.clone();
        set_parameter(&mut cfg, parameter, value)
            .with_context(|| format!("applying {parameter} = {value}"))?;
        let trace = run_scenario(&cfg).with_context(|| format!("{parameter} = {value}"))?;
        let metrics = compute_metrics(&trace, base.settle_fraction)?;
        write_trace(&out.join(format!("trace_{parameter}_{value}.csv")), &trace)?;
        rows.push((value, metrics));
    }

    let sweep_path = out.join("sweep.csv");
    let file =
        File::create(&sweep_path).with_context(|| format!("creating {}", sweep_path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for (value, m) in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            value, m.rms_tracking, m.rms_est_error, m.max_est_error, m.diverged, m.settle_fraction
        )?;
    }
    w.flush()?;

    println!(
        "swept {parameter} over {} values; results in {}",
        rows.len(),
        sweep_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct RankedEntry {
    label: String,
    rms_tracking: f64,
    rms_est_error: f64,
    max_est_error: f64,
    diverged: bool,
}

impl RankedEntry {
    fn new(label: &str, m: &Metrics) -> Self {
        Self {
            label: label.to_string(),
            rms_tracking: m.rms_tracking,
            rms_est_error: m.rms_est_error,
            max_est_error: m.max_est_error,
            diverged: m.diverged,
        }
    }
}

#[derive(Debug, Serialize)]
struct Ranking {
    by_rms_est_error: Vec<RankedEntry>,
    by_rms_tracking: Vec<RankedEntry>,
}

/// File-stem labels, deduplicated by suffixing a counter.
fn labels_for(paths: &[PathBuf]) -> Vec<String> {
    let mut seen = HashSet::new();
    paths
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "config".to_string());
            let mut label = stem.clone();
            let mut n = 2;
            while !seen.insert(label.clone()) {
                label = format!("{stem}-{n}");
                n += 1;
            }
            label
        })
        .collect()
}

pub fn cmd_compare(configs: &[PathBuf], out: &Path) -> Result<()> {
    if configs.len() < 2 {
        bail!("compare needs at least two configuration files");
    }
    let labels = labels_for(configs);
    let mut resolved = Vec::with_capacity(configs.len());
    for path in configs {
        resolved.push(resolve(&load_config(Some(path))?, Overrides::default())?);
    }

    let (ts0, dur0) = (resolved[0].scenario.ts, resolved[0].scenario.duration);
    for (r, path) in resolved.iter().zip(configs) {
        if r.scenario.ts != ts0 || r.scenario.duration != dur0 {
            bail!(
                "time grids do not match: {} has ts={} duration={}, expected ts={} duration={}",
                path.display(),
                r.scenario.ts,
                r.scenario.duration,
                ts0,
                dur0
            );
        }
    }

    let mut traces = Vec::with_capacity(resolved.len());
    let mut metrics = Vec::with_capacity(resolved.len());
    for (r, label) in resolved.iter().zip(&labels) {
        let trace = run_scenario(&r.scenario).with_context(|| label.clone())?;
        metrics.push(compute_metrics(&trace, r.settle_fraction)?);
        traces.push(trace);
    }

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    // Aligned CSV: shared time column, one estimate/error column group per
    // configuration. Diverged runs stop early and leave trailing blanks.
    let comparison_path = out.join("comparison.csv");
    let file = File::create(&comparison_path)
        .with_context(|| format!("creating {}", comparison_path.display()))?;
    let mut w = BufWriter::new(file);
    write!(w, "t")?;
    for label in &labels {
        write!(w, ",{label}.tau_dn,{label}.tau_hat,{label}.est_error")?;
    }
    writeln!(w)?;
    let rows = traces.iter().map(Trace::len).max().unwrap_or(0);
    let longest = traces
        .iter()
        .max_by_key(|t| t.len())
        .expect("at least two traces");
    for i in 0..rows {
        write!(w, "{}", longest.t[i])?;
        for trace in &traces {
            if i < trace.len() {
                write!(
                    w,
                    ",{},{},{}",
                    trace.tau_dn[i], trace.tau_hat[i], trace.est_error[i]
                )?;
            } else {
                write!(w, ",,,")?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;

    let mut by_est: Vec<RankedEntry> = labels
        .iter()
        .zip(&metrics)
        .map(|(l, m)| RankedEntry::new(l, m))
        .collect();
    by_est.sort_by(|a, b| a.rms_est_error.total_cmp(&b.rms_est_error));
    let mut by_tracking: Vec<RankedEntry> = labels
        .iter()
        .zip(&metrics)
        .map(|(l, m)| RankedEntry::new(l, m))
        .collect();
    by_tracking.sort_by(|a, b| a.rms_tracking.total_cmp(&b.rms_tracking));

    let ranking = Ranking {
        by_rms_est_error: by_est,
        by_rms_tracking: by_tracking,
    };
    write_json(&out.join("ranking.json"), &ranking)?;

    println!("ranking by rms_est_error:");
    for entry in &ranking.by_rms_est_error {
        println!(
            "  {:<24} rms_est_error {:.6e}  rms_tracking {:.6e}{}",
            entry.label,
            entry.rms_est_error,
            entry.rms_tracking,
            if entry.diverged { "  DIVERGED" } else { "" }
        );
    }
    Ok(())
}

pub fn cmd_validate() -> Result<bool> {
    let reports = run_checks(&ValidateOptions::default());
    for r in &reports {
        let status = if r.informational {
            "INFO"
        } else if r.passed {
            "PASS"
        } else {
            "FAIL"
        };
        println!(
            "{status} {}: residual {:.3e} (threshold {:.3e})",
            r.name, r.residual, r.threshold
        );
    }
    Ok(all_passed(&reports))
}
