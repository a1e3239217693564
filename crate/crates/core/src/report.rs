//! Output bundle of a run: `report.json`, `summary.txt`, `trajectory.csv`,
//! `sweep.csv` (sweeps only) and `fitted_curve.csv` / `fitted_surface.csv`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::LambdaMode;
use crate::curve::TrajectorySample;
use crate::error::{FitError, Result};
use crate::experiment::{ExperimentOutput, FitReport, Geometry, SweepKind, SweepRow};
use crate::io::format_f64;

fn csv_err(e: csv::Error) -> FitError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FitError::Io(io),
        kind => FitError::Io(std::io::Error::other(format!("{kind:?}"))),
    }
}

pub fn report_json(report: &FitReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn write_trajectory(samples: &[TrajectorySample], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "relative_change", "objective", "error"])
        .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for s in samples {
        w.write_record([
            s.iteration.to_string(),
            opt(s.relative_change),
            format_f64(s.objective),
            opt(s.error),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "mean_error", "std_error", "kind"]).map_err(csv_err)?;
    for r in rows {
        let kind = match r.kind {
            SweepKind::Grid => "grid",
            SweepKind::Estimate => "estimate",
        };
        w.write_record([format_f64(r.lambda), format_f64(r.mean_error), format_f64(r.std_error), kind.into()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary(report: &FitReport) -> String {
    let c = &report.config;
    let mut s = String::new();
    let mode = match c.lambda {
        LambdaMode::Fixed { value } => format!("fixed {value:e}"),
        LambdaMode::Estimate => "estimated".into(),
        LambdaMode::SelfConsistent => "self-consistent".into(),
        LambdaMode::Sweep { min, max, points } => format!("sweep {points} points over [{min:e}, {max:e}]"),
    };
    let _ = writeln!(s, "problem        {:?}", c.problem);
    let _ = writeln!(s, "data points    {}", report.data_points);
    let _ = writeln!(s, "control points {}", report.control_points);
    let _ = writeln!(s, "noise variance {:e}", report.noise_variance);
    let _ = writeln!(s, "solver         {:?}", c.solver);
    let _ = writeln!(s, "lambda         {mode}");
    if let Some(e) = &report.estimate {
        let _ = writeln!(s, "alpha          {:.4} (over {} eigenvalues)", e.alpha, e.head_count);
        let _ = writeln!(s, "estimated λ    {:e}", e.lambda);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>8} {:>12} {:>12} {:>8} {:>9}", "seed", "lambda", "error", "iters", "time_s");
    for r in &report.seeds {
        let _ = writeln!(
            s,
            "{:>8} {:>12.4e} {:>12.6} {:>8} {:>9.3}{}",
            r.seed,
            r.lambda,
            r.error,
            r.iterations,
            r.wall_time_s,
            if r.converged { "" } else { " (cap)" }
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "mean error     {:.6} ± {:.6}", report.mean_error, report.std_error);
    let _ = writeln!(s, "mean iters     {:.1}", report.mean_iterations);
    if let Some(rows) = &report.sweep {
        let best = rows
            .iter()
            .filter(|r| r.kind == SweepKind::Grid)
            .min_by(|a, b| a.mean_error.total_cmp(&b.mean_error));
        if let Some(b) = best {
            let _ = writeln!(s, "sweep minimum  λ = {:e}, error {:.6}", b.lambda, b.mean_error);
        }
    }
    let _ = writeln!(s, "wall time      {:.2} s", report.wall_time_s);
    s
}

/// Writes the bundle into `dir` (created if needed) and returns the written paths.
pub fn write_bundle(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let report = &output.report;
    let mut paths = Vec::new();
    let mut put = |name: &str, f: &mut dyn FnMut(&Path) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        f(&path)?;
        paths.push(path);
        Ok(())
    };
    put("report.json", &mut |p| Ok(fs::write(p, report_json(report) + "\n")?))?;
    put("summary.txt", &mut |p| Ok(fs::write(p, summary(report))?))?;
    put("trajectory.csv", &mut |p| write_trajectory(&report.trajectory, fs::File::create(p)?))?;
    if let Some(rows) = &report.sweep {
        put("sweep.csv", &mut |p| write_sweep(rows, fs::File::create(p)?))?;
    }
    let fitted = match output.fitted {
        Geometry::Curve(_) => "fitted_curve.csv",
        Geometry::Surface(_) => "fitted_surface.csv",
    };
    put(fitted, &mut |p| output.fitted.save(p))?;
    Ok(paths)
}
