//! Experiment pipeline: load or generate base data, parametrize, assemble,
//! choose λ, fit every seed and score against the clean-data fit.
//!
//! Parametrization, knots and the reference fit `p̄` come from the base
//! (noise-free) data, so every seed shares the same `A`. Each seed draws its
//! noise and its block selections from independent streams of the same seed.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_collocation, augment_curve, augment_surface, difference_matrix, make_partition, CollocationMatrix,
    DifferenceMatrix,
};
use crate::basis::{build_knots, chord_length_params, surface_params, KnotVector, ParamSequence};
use crate::config::{ExperimentConfig, Generator, LambdaMode, ProblemKind, Solver};
use crate::curve::{self, initial_control_points, StoppingRule, TraceOptions, TrajectorySample};
use crate::datasets::{
    add_noise, add_noise_grid, boy_surface, fit_error, fit_error_surface, sample_curve, CurveKind, NoiseSpec,
};
use crate::error::{FitError, Result};
use crate::exec::Execution;
use crate::grid::PointGrid;
use crate::io;
use crate::oracle::{solve_curve_direct, solve_surface_direct};
use crate::regparam::{
    curve_penalty_norm2, optimal_lambda, self_consistent_curve, self_consistent_surface, spectral_decay,
    surface_penalty_norm2, surface_spectral_decay, LambdaIterate, NoiseModel, SelfConsistentOptions,
    SpectralDecayFit,
};
use crate::surface::{self, initial_control_grid, SurfacePartitions};

/// Factor between data density and the density of the exported fitted geometry.
pub const FITTED_DENSITY: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Controls {
    Curve(DMatrix<f64>),
    Surface(PointGrid),
}

/// Sampled geometry of a fit, ready for export.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Curve(DMatrix<f64>),
    Surface(PointGrid),
}

impl Geometry {
    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Geometry::Curve(c) => io::save_curve(c, path),
            Geometry::Surface(g) => io::save_surface(g, path),
        }
    }
}

/// Per-fit solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub solver: Solver,
    pub stop: StoppingRule,
    /// Trajectory stride; 0 records nothing.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedFit {
    pub controls: Controls,
    /// λ stored in the assembled system.
    pub lambda_echo: f64,
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRecord {
    pub final_lambda: f64,
    /// λ at which the loop's last inner solve ran.
    pub fit_lambda: f64,
    pub outer_iterations: usize,
    pub iterates: Vec<LambdaIterate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFit {
    pub record: AdaptiveRecord,
    /// Fit at the final λ with the main solver.
    pub fit: SeedFit,
}

/// A configured fitting problem with its base data and reference fit.
pub trait Problem: Sync {
    fn kind(&self) -> ProblemKind;
    /// Total number of data points.
    fn data_points(&self) -> usize;
    /// Total number of control points (`n` in the λ rule).
    fn control_points(&self) -> usize;
    /// Per-entry variance of the added noise.
    fn noise_variance(&self) -> f64;
    /// `‖A p̄ − q‖_F²` of the clean-data fit.
    fn model_error(&self) -> f64;
    /// Normalized penalty of `p̄`.
    fn reference_penalty(&self) -> f64;
    fn spectral_decay(&self, head_count: usize) -> Result<SpectralDecayFit>;
    fn fit(&self, lambda: f64, seed: u64, settings: &FitSettings) -> Result<SeedFit>;
    /// Self-consistent λ loop with `inner` solves, then a fit at the final λ.
    fn self_consistent(
        &self,
        seed: u64,
        opts: &SelfConsistentOptions,
        inner: Solver,
        settings: &FitSettings,
    ) -> Result<AdaptiveFit>;
    /// Fitted geometry at [`FITTED_DENSITY`] times the data density.
    fn sample_fitted(&self, controls: &Controls) -> Result<Geometry>;
    /// Base data, and the noisy data for `seed`.
    fn data(&self, seed: Option<u64>) -> Result<Geometry>;
}

fn dense_params(count: usize) -> Result<ParamSequence> {
    ParamSequence::uniform(FITTED_DENSITY * count)
}

fn stopping(cfg: &ExperimentConfig) -> StoppingRule {
    StoppingRule::new(cfg.tolerance, cfg.iteration_cap())
}

fn check_size(name: &str, configured: Option<usize>, actual: usize) -> Result<()> {
    match configured {
        Some(v) if v != actual => Err(FitError::DimensionMismatch(format!(
            "config says {name} = {v} but the input has {name} = {actual}"
        ))),
        _ => Ok(()),
    }
}

pub struct CurveProblem {
    base: DMatrix<f64>,
    knots: KnotVector,
    a: CollocationMatrix,
    gamma: DifferenceMatrix,
    p_bar: DMatrix<f64>,
    reference: DMatrix<f64>,
    n1: usize,
    block_size: usize,
    amplitude: f64,
}

impl CurveProblem {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let base = match (cfg.generator, &cfg.input) {
            (Some(Generator::Rose), _) => sample_curve(CurveKind::Rose, cfg.m.unwrap_or_default())?.points,
            (Some(Generator::Blob), _) => sample_curve(CurveKind::Blob, cfg.m.unwrap_or_default())?.points,
            (None, Some(path)) => io::load_curve(path)?,
            _ => return Err(FitError::InvalidConfig("curve problems need rose, blob or an input file".into())),
        };
        check_size("m", cfg.m, base.nrows() - 1)?;
        let params = chord_length_params(&base)?;
        let knots = build_knots(&params, cfg.n1)?;
        let a = assemble_collocation(&knots, &params)?;
        let gamma = difference_matrix(cfg.n1 + 1, cfg.penalty())?;
        let p_bar = solve_curve_direct(&augment_curve(&a, &gamma, &base, 0.0)?)?.control_points;
        let reference = a.matrix() * &p_bar;
        Ok(Self {
            base,
            knots,
            a,
            gamma,
            p_bar,
            reference,
            n1: cfg.n1,
            block_size: cfg.block_size,
            amplitude: cfg.noise_amplitude,
        })
    }

    pub fn collocation(&self) -> &CollocationMatrix {
        &self.a
    }

    pub fn penalty_matrix(&self) -> &DifferenceMatrix {
        &self.gamma
    }

    pub fn reference_controls(&self) -> &DMatrix<f64> {
        &self.p_bar
    }

    pub fn noisy(&self, seed: u64) -> Result<DMatrix<f64>> {
        Ok(add_noise(&self.base, &NoiseSpec { amplitude: self.amplitude, seed })?.data)
    }

    fn fit_data(&self, q: &DMatrix<f64>, lambda: f64, seed: u64, settings: &FitSettings) -> Result<SeedFit> {
        let system = augment_curve(&self.a, &self.gamma, q, lambda)?;
        let (controls, iterations, converged, trajectory) = match settings.solver {
            Solver::Direct => (solve_curve_direct(&system)?.control_points, 0, true, Vec::new()),
            Solver::Rpia => {
                let partition = make_partition(system.a_hat(), self.block_size)?;
                let p0 = initial_control_points(q, self.n1)?;
                let trace = TraceOptions {
                    stride: settings.stride,
                    reference: Some(&self.reference),
                };
                let r = curve::run_with(&system, &partition, &p0, settings.stop, seed, &trace)?;
                (r.control_points, r.iterations, r.converged, r.trajectory)
            }
        };
        Ok(SeedFit {
            error: fit_error(self.a.matrix(), &controls, &self.p_bar)?,
            controls: Controls::Curve(controls),
            lambda_echo: system.lambda(),
            iterations,
            converged,
            trajectory,
        })
    }
}

impl Problem for CurveProblem {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Curve
    }

    fn data_points(&self) -> usize {
        self.base.nrows()
    }

    fn control_points(&self) -> usize {
        self.n1 + 1
    }

    fn noise_variance(&self) -> f64 {
        self.amplitude * self.amplitude / self.base.len() as f64
    }

    fn model_error(&self) -> f64 {
        (&self.reference - &self.base).norm_squared()
    }

    fn reference_penalty(&self) -> f64 {
        curve_penalty_norm2(&self.gamma, &self.p_bar)
    }

    fn spectral_decay(&self, head_count: usize) -> Result<SpectralDecayFit> {
        spectral_decay(&crate::regparam::build_q(&self.a, &self.gamma)?, head_count)
    }

    fn fit(&self, lambda: f64, seed: u64, settings: &FitSettings) -> Result<SeedFit> {
        self.fit_data(&self.noisy(seed)?, lambda, seed, settings)
    }

    fn self_consistent(
        &self,
        seed: u64,
        opts: &SelfConsistentOptions,
        inner: Solver,
        settings: &FitSettings,
    ) -> Result<AdaptiveFit> {
        let q = self.noisy(seed)?;
        let inner_settings = FitSettings {
            solver: inner,
            stride: 0,
            ..*settings
        };
        let sc = self_consistent_curve(self.a.matrix(), &self.gamma, &q, opts, |lambda| {
            match self.fit_data(&q, lambda, seed, &inner_settings)?.controls {
                Controls::Curve(p) => Ok(p),
                Controls::Surface(_) => unreachable!(),
            }
        })?;
        Ok(AdaptiveFit {
            fit: self.fit_data(&q, sc.lambda, seed, settings)?,
            record: AdaptiveRecord {
                final_lambda: sc.lambda,
                fit_lambda: sc.fit_lambda,
                outer_iterations: sc.iterates.len(),
                iterates: sc.iterates,
            },
        })
    }

    fn sample_fitted(&self, controls: &Controls) -> Result<Geometry> {
        let Controls::Curve(p) = controls else {
            return Err(FitError::DimensionMismatch("surface controls for a curve problem".into()));
        };
        let dense = assemble_collocation(&self.knots, &dense_params(self.base.nrows() - 1)?)?;
        Ok(Geometry::Curve(dense.matrix() * p))
    }

    fn data(&self, seed: Option<u64>) -> Result<Geometry> {
        Ok(Geometry::Curve(match seed {
            Some(s) => self.noisy(s)?,
            None => self.base.clone(),
        }))
    }
}

pub struct SurfaceProblem {
    base: PointGrid,
    knots: (KnotVector, KnotVector),
    a: CollocationMatrix,
    b: CollocationMatrix,
    l_u: DifferenceMatrix,
    l_v: DifferenceMatrix,
    p_bar: PointGrid,
    reference: PointGrid,
    n: (usize, usize),
    block_size: (usize, usize),
    amplitude: f64,
}

impl SurfaceProblem {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let base = match (cfg.generator, &cfg.input) {
            (Some(Generator::Boy), _) => {
                let m = cfg.m.unwrap_or_default();
                boy_surface(m, cfg.p.unwrap_or(m))?.grid
            }
            (None, Some(path)) => io::load_surface(path)?,
            _ => return Err(FitError::InvalidConfig("surface problems need boy or an input file".into())),
        };
        check_size("m", cfg.m, base.rows() - 1)?;
        check_size("p", cfg.p, base.cols() - 1)?;
        let n1 = cfg.n1;
        let n2 = cfg.n2.unwrap_or(n1);
        let (pu, pv) = surface_params(&base)?;
        let (ku, kv) = (build_knots(&pu, n1)?, build_knots(&pv, n2)?);
        let a = assemble_collocation(&ku, &pu)?;
        let b = assemble_collocation(&kv, &pv)?;
        let l_u = difference_matrix(n1 + 1, cfg.penalty())?;
        let l_v = difference_matrix(n2 + 1, cfg.penalty())?;
        let p_bar = solve_surface_direct(&augment_surface(&a, &b, &l_u, &l_v, &base, 0.0)?)?.control_points;
        let reference = p_bar.sandwich(a.matrix(), b.matrix());
        Ok(Self {
            base,
            knots: (ku, kv),
            a,
            b,
            l_u,
            l_v,
            p_bar,
            reference,
            n: (n1, n2),
            block_size: (cfg.block_size, cfg.block_size_v.unwrap_or(cfg.block_size)),
            amplitude: cfg.noise_amplitude,
        })
    }

    pub fn reference_controls(&self) -> &PointGrid {
        &self.p_bar
    }

    pub fn noisy(&self, seed: u64) -> Result<PointGrid> {
        Ok(add_noise_grid(&self.base, &NoiseSpec { amplitude: self.amplitude, seed })?.data)
    }

    fn fit_data(&self, q: &PointGrid, lambda: f64, seed: u64, settings: &FitSettings) -> Result<SeedFit> {
        let system = augment_surface(&self.a, &self.b, &self.l_u, &self.l_v, q, lambda)?;
        let (controls, iterations, converged, trajectory) = match settings.solver {
            Solver::Direct => (solve_surface_direct(&system)?.control_points, 0, true, Vec::new()),
            Solver::Rpia => {
                let rows = make_partition(system.a_hat(), self.block_size.0)?;
                let cols = make_partition(system.b_hat(), self.block_size.1)?;
                let p0 = initial_control_grid(q, self.n.0, self.n.1)?;
                let trace = TraceOptions {
                    stride: settings.stride,
                    reference: Some(&self.reference),
                };
                let parts = SurfacePartitions {
                    rows: &rows,
                    cols: &cols,
                };
                let r = surface::run_with(&system, parts, &p0, settings.stop, seed, &trace)?;
                (r.control_grid, r.iterations, r.converged, r.trajectory)
            }
        };
        Ok(SeedFit {
            error: fit_error_surface(self.a.matrix(), self.b.matrix(), &controls, &self.p_bar)?,
            controls: Controls::Surface(controls),
            lambda_echo: system.lambda(),
            iterations,
            converged,
            trajectory,
        })
    }
}

impl Problem for SurfaceProblem {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Surface
    }

    fn data_points(&self) -> usize {
        self.base.rows() * self.base.cols()
    }

    fn control_points(&self) -> usize {
        (self.n.0 + 1) * (self.n.1 + 1)
    }

    fn noise_variance(&self) -> f64 {
        self.amplitude * self.amplitude / self.base.entry_count() as f64
    }

    fn model_error(&self) -> f64 {
        self.reference.sub(&self.base).norm_squared()
    }

    fn reference_penalty(&self) -> f64 {
        surface_penalty_norm2(self.a.matrix(), self.b.matrix(), &self.l_u, &self.l_v, &self.p_bar)
    }

    fn spectral_decay(&self, head_count: usize) -> Result<SpectralDecayFit> {
        surface_spectral_decay(&self.a, &self.b, &self.l_u, &self.l_v, head_count)
    }

    fn fit(&self, lambda: f64, seed: u64, settings: &FitSettings) -> Result<SeedFit> {
        self.fit_data(&self.noisy(seed)?, lambda, seed, settings)
    }

    fn self_consistent(
        &self,
        seed: u64,
        opts: &SelfConsistentOptions,
        inner: Solver,
        settings: &FitSettings,
    ) -> Result<AdaptiveFit> {
        let q = self.noisy(seed)?;
        let inner_settings = FitSettings {
            solver: inner,
            stride: 0,
            ..*settings
        };
        let (a, b) = (self.a.matrix(), self.b.matrix());
        let sc = self_consistent_surface(a, b, &self.l_u, &self.l_v, &q, opts, |lambda| {
            match self.fit_data(&q, lambda, seed, &inner_settings)?.controls {
                Controls::Surface(p) => Ok(p),
                Controls::Curve(_) => unreachable!(),
            }
        })?;
        Ok(AdaptiveFit {
            fit: self.fit_data(&q, sc.lambda, seed, settings)?,
            record: AdaptiveRecord {
                final_lambda: sc.lambda,
                fit_lambda: sc.fit_lambda,
                outer_iterations: sc.iterates.len(),
                iterates: sc.iterates,
            },
        })
    }

    fn sample_fitted(&self, controls: &Controls) -> Result<Geometry> {
        let Controls::Surface(p) = controls else {
            return Err(FitError::DimensionMismatch("curve controls for a surface problem".into()));
        };
        let du = assemble_collocation(&self.knots.0, &dense_params(self.base.rows() - 1)?)?;
        let dv = assemble_collocation(&self.knots.1, &dense_params(self.base.cols() - 1)?)?;
        Ok(Geometry::Surface(p.sandwich(du.matrix(), dv.matrix())))
    }

    fn data(&self, seed: Option<u64>) -> Result<Geometry> {
        Ok(Geometry::Surface(match seed {
            Some(s) => self.noisy(s)?,
            None => self.base.clone(),
        }))
    }
}

/// Builds the problem described by a resolved config.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Box<dyn Problem>> {
    Ok(match cfg.problem {
        ProblemKind::Curve => Box::new(CurveProblem::new(cfg)?),
        ProblemKind::Surface => Box::new(SurfaceProblem::new(cfg)?),
    })
}

/// Inputs and output of the spectral-decay λ rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub alpha: f64,
    pub log_constant: f64,
    pub head_count: usize,
    pub fit_residual: f64,
    pub sigma2: f64,
    /// Clean-data model error `‖A p̄ − q‖_F²`, reported only.
    pub epsilon_norm2: f64,
    pub penalty_norm2: f64,
    pub n: usize,
    pub lambda: f64,
}

pub fn estimate_lambda(problem: &dyn Problem, head_count: usize) -> Result<LambdaEstimate> {
    let decay = problem.spectral_decay(head_count)?;
    let noise = NoiseModel {
        sigma2: problem.noise_variance(),
        epsilon_norm2: problem.model_error(),
    };
    let penalty = problem.reference_penalty();
    let n = problem.control_points();
    Ok(LambdaEstimate {
        lambda: optimal_lambda(decay.alpha, &noise, n, penalty)?,
        alpha: decay.alpha,
        log_constant: decay.log_constant,
        head_count: decay.head_count,
        fit_residual: decay.fit_residual,
        sigma2: noise.sigma2,
        epsilon_norm2: noise.epsilon_norm2,
        penalty_norm2: penalty,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// λ chosen for this seed.
    pub lambda: f64,
    /// λ read back from the assembled system.
    pub lambda_echo: f64,
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Grid,
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub kind: SweepKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub config: ExperimentConfig,
    pub data_points: usize,
    pub control_points: usize,
    pub noise_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<LambdaEstimate>,
    /// In config order.
    pub seeds: Vec<SeedReport>,
    pub mean_error: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std_error: f64,
    pub mean_iterations: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRow>>,
    /// Trajectory of the smallest seed.
    pub trajectory: Vec<TrajectorySample>,
    pub wall_time_s: f64,
}

pub struct ExperimentOutput {
    pub report: FitReport,
    /// Fit of the smallest seed, sampled densely.
    pub fitted: Geometry,
}

/// Mean and sample standard deviation, accumulated in ascending seed order so
/// the result does not depend on the order of the seed list.
pub fn seed_statistics(rows: &[(u64, f64)]) -> (f64, f64) {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.0);
    let n = sorted.len() as f64;
    let mean = sorted.iter().map(|r| r.1).sum::<f64>() / n;
    if sorted.len() < 2 {
        return (mean, 0.0);
    }
    let var = sorted.iter().map(|r| (r.1 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Job {
    lambda: Option<f64>,
    seed: u64,
    trace: bool,
}

struct JobResult {
    lambda: f64,
    fit: SeedFit,
    adaptive: Option<AdaptiveRecord>,
    wall_time_s: f64,
}

fn seed_report(seed: u64, r: &JobResult) -> SeedReport {
    SeedReport {
        seed,
        lambda: r.lambda,
        lambda_echo: r.fit.lambda_echo,
        error: r.fit.error,
        iterations: r.fit.iterations,
        converged: r.fit.converged,
        wall_time_s: r.wall_time_s,
        adaptive: r.adaptive.clone(),
    }
}

/// Runs the configured pipeline. Fits run through `exec`; the report does not
/// depend on the execution mode.
pub fn run_experiment(config: &ExperimentConfig, exec: &Execution) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let cfg = config.resolved()?;
    let problem = build_problem(&cfg)?;
    let problem = problem.as_ref();

    let estimate = match cfg.lambda {
        LambdaMode::Fixed { .. } => match estimate_lambda(problem, cfg.spectral_head()) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("skipping the λ estimate: {e}");
                None
            }
        },
        _ => Some(estimate_lambda(problem, cfg.spectral_head())?),
    };
    let seeds = cfg.seed_list();
    let first_seed = *seeds.iter().min().expect("resolved config has seeds");
    let main_lambda = match cfg.lambda {
        LambdaMode::Fixed { value } => Some(value),
        LambdaMode::SelfConsistent => None,
        _ => estimate.as_ref().map(|e| e.lambda),
    };
    let grid = cfg.lambda.grid().unwrap_or_default();

    let mut jobs: Vec<Job> = grid
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&seed| Job { lambda: Some(l), seed, trace: false }))
        .collect();
    let main_start = jobs.len();
    jobs.extend(seeds.iter().map(|&seed| Job {
        lambda: main_lambda,
        seed,
        trace: seed == first_seed,
    }));

    let settings = FitSettings {
        solver: cfg.solver,
        stop: stopping(&cfg),
        stride: 0,
    };
    let sc_opts = estimate.as_ref().map(|e| SelfConsistentOptions {
        alpha: e.alpha,
        eps_lambda: cfg.eps_lambda,
        max_outer: cfg.max_outer,
    });
    let results = exec.map(&jobs, |job| {
        let t = Instant::now();
        let settings = FitSettings {
            stride: if job.trace { cfg.trajectory_stride } else { 0 },
            ..settings
        };
        let outcome = match job.lambda {
            Some(lambda) => problem.fit(lambda, job.seed, &settings).map(|fit| (lambda, fit, None)),
            None => {
                let opts = sc_opts.as_ref().expect("self-consistent mode has an estimate");
                problem
                    .self_consistent(job.seed, opts, cfg.inner_solver, &settings)
                    .map(|a| (a.record.final_lambda, a.fit, Some(a.record)))
            }
        };
        let (lambda, fit, adaptive) = outcome.inspect_err(|e| log::error!("seed {} failed: {e}", job.seed))?;
        Ok(JobResult {
            lambda,
            fit,
            adaptive,
            wall_time_s: t.elapsed().as_secs_f64(),
        })
    })?;

    let sweep = (!grid.is_empty()).then(|| {
        let mut rows: Vec<SweepRow> = grid
            .iter()
            .zip(results[..main_start].chunks(seeds.len()))
            .map(|(&lambda, chunk)| {
                let errs: Vec<(u64, f64)> = seeds.iter().copied().zip(chunk.iter().map(|r| r.fit.error)).collect();
                let (mean_error, std_error) = seed_statistics(&errs);
                SweepRow {
                    lambda,
                    mean_error,
                    std_error,
                    kind: SweepKind::Grid,
                }
            })
            .collect();
        let errs: Vec<(u64, f64)> = seeds
            .iter()
            .copied()
            .zip(results[main_start..].iter().map(|r| r.fit.error))
            .collect();
        let (mean_error, std_error) = seed_statistics(&errs);
        rows.push(SweepRow {
            lambda: main_lambda.unwrap_or(f64::NAN),
            mean_error,
            std_error,
            kind: SweepKind::Estimate,
        });
        rows
    });

    let main = &results[main_start..];
    let seed_rows: Vec<SeedReport> = seeds.iter().zip(main).map(|(&s, r)| seed_report(s, r)).collect();
    let errs: Vec<(u64, f64)> = seed_rows.iter().map(|r| (r.seed, r.error)).collect();
    let (mean_error, std_error) = seed_statistics(&errs);
    let iters: Vec<(u64, f64)> = seed_rows.iter().map(|r| (r.seed, r.iterations as f64)).collect();
    let first = seeds
        .iter()
        .position(|&s| s == first_seed)
        .map(|i| &main[i])
        .expect("first seed present");
    let fitted = problem.sample_fitted(&first.fit.controls)?;

    Ok(ExperimentOutput {
        report: FitReport {
            data_points: problem.data_points(),
            control_points: problem.control_points(),
            noise_variance: problem.noise_variance(),
            estimate,
            seeds: seed_rows,
            mean_error,
            std_error,
            mean_iterations: seed_statistics(&iters).0,
            sweep,
            trajectory: first.fit.trajectory.clone(),
            wall_time_s: start.elapsed().as_secs_f64(),
            config: cfg,
        },
        fitted,
    })
}
