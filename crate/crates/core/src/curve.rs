//! Randomized block iteration for regularized curve fitting.
//!
//! Each step draws a column block `U` of `Â` with probability proportional to
//! `‖Â_{:,U}‖_F²`, then moves only those control points:
//!
//! ```text
//! δ = Â_{:,U}ᵀ r / ‖Â_{:,U}‖_F²,   p_U ← p_U + δ,   r ← r − Â_{:,U} δ
//! ```
//!
//! All coordinates share the same block draw. The residual is updated in
//! place and recomputed from scratch every [`RESIDUAL_REFRESH`] steps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{AugmentedCurveSystem, BlockPartition};
use crate::error::{FitError, Result};
use crate::rng::{stream_rng, SeededRng, Stream};

/// Steps between full residual recomputations.
pub const RESIDUAL_REFRESH: usize = 500;

/// Default sampling stride for recorded trajectories.
pub const DEFAULT_TRAJECTORY_STRIDE: usize = 10;

/// Relative-change stopping rule with an iteration cap.
///
/// A tolerance of zero disables the relative-change test, leaving a fixed
/// iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl StoppingRule {
    pub fn new(tolerance: f64, max_iterations: usize) -> Self {
        Self {
            tolerance,
            max_iterations,
        }
    }

    /// Exactly `iterations` steps.
    pub fn fixed(iterations: usize) -> Self {
        Self::new(0.0, iterations)
    }

    /// `1e-8` relative change, 8000 steps.
    pub fn curve_default() -> Self {
        Self::new(1e-8, 8000)
    }

    /// `1e-8` relative change, 10000 steps.
    pub fn surface_default() -> Self {
        Self::new(1e-8, 10_000)
    }

    /// Relative change of the fitted geometry, falling back to the absolute
    /// change when the previous geometry is identically zero.
    pub(crate) fn satisfied(&self, change_norm: f64, previous_norm: f64) -> bool {
        let measure = if previous_norm > 0.0 {
            change_norm / previous_norm
        } else {
            change_norm
        };
        measure < self.tolerance
    }
}

/// Trajectory recording options.
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions<'a, G = DMatrix<f64>> {
    /// Record every `stride` iterations (0 disables recording).
    pub stride: usize,
    /// Reference geometry (`A p̄` or `A P̄ Bᵀ`); when given, each sample carries
    /// the relative error of the current fit against it.
    pub reference: Option<&'a G>,
}

impl<G> Default for TraceOptions<'_, G> {
    fn default() -> Self {
        Self {
            stride: DEFAULT_TRAJECTORY_STRIDE,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub iteration: usize,
    /// `None` for the starting sample.
    pub relative_change: Option<f64>,
    /// Augmented objective `‖r‖_F²`.
    pub objective: f64,
    pub error: Option<f64>,
}

/// Output of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub control_points: DMatrix<f64>,
    pub iterations: usize,
    /// True when the relative-change test fired before the cap.
    pub converged: bool,
    pub trajectory: Vec<TrajectorySample>,
}

/// Starting control points `p_i = q_{⌊m i / n₁⌋}` for `i = 0..=n₁`, where
/// `q` has `m + 1` rows.
pub fn initial_control_points(q: &DMatrix<f64>, n1: usize) -> Result<DMatrix<f64>> {
    if q.nrows() < 2 || n1 == 0 {
        return Err(FitError::InvalidConfig(format!(
            "need at least two data points and n1 > 0 (got {} points, n1 = {n1})",
            q.nrows()
        )));
    }
    let m = q.nrows() - 1;
    Ok(DMatrix::from_fn(n1 + 1, q.ncols(), |i, f| q[(m * i / n1, f)]))
}

/// Block index and the correction applied to that block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustingVector {
    pub block_index: usize,
    pub delta: DMatrix<f64>,
}

/// Iterate `p^(k)` with its residual `r^(k) = q̂ − Âp^(k)` and the cached
/// unaugmented product `A p^(k)`.
#[derive(Debug, Clone)]
pub struct CurveFitState {
    control_points: DMatrix<f64>,
    residual: DMatrix<f64>,
    fitted: DMatrix<f64>,
    iteration: usize,
    rng: SeededRng,
    last_change_norm: f64,
}

pub fn init_state(system: &AugmentedCurveSystem, p0: &DMatrix<f64>, seed: u64) -> Result<CurveFitState> {
    if p0.shape() != (system.controls(), system.dim()) {
        return Err(FitError::DimensionMismatch(format!(
            "initial control points are {}x{}, expected {}x{}",
            p0.nrows(),
            p0.ncols(),
            system.controls(),
            system.dim()
        )));
    }
    let mut state = CurveFitState {
        control_points: p0.clone(),
        residual: DMatrix::zeros(system.a_hat().nrows(), system.dim()),
        fitted: DMatrix::zeros(system.data_rows(), system.dim()),
        iteration: 0,
        rng: stream_rng(seed, Stream::Selection),
        last_change_norm: 0.0,
    };
    state.refresh_residual(system);
    Ok(state)
}

impl CurveFitState {
    pub fn control_points(&self) -> &DMatrix<f64> {
        &self.control_points
    }

    pub fn residual(&self) -> &DMatrix<f64> {
        &self.residual
    }

    /// Cached `A p^(k)`.
    pub fn fitted(&self) -> &DMatrix<f64> {
        &self.fitted
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `‖A_{:,U} δ‖_F` of the most recent step.
    pub fn last_change_norm(&self) -> f64 {
        self.last_change_norm
    }

    pub fn into_control_points(self) -> DMatrix<f64> {
        self.control_points
    }

    /// Recomputes the residual and the fitted geometry from the control points.
    pub fn refresh_residual(&mut self, system: &AugmentedCurveSystem) {
        self.residual = system.q_hat() - system.a_hat() * &self.control_points;
        self.fitted = system.a_hat().rows(0, system.data_rows()) * &self.control_points;
    }

    pub fn select_block(&mut self, partition: &BlockPartition) -> usize {
        partition.sample(&mut self.rng)
    }

    /// Draws a block and applies its correction.
    pub fn step(&mut self, system: &AugmentedCurveSystem, partition: &BlockPartition) -> AdjustingVector {
        let t = self.select_block(partition);
        self.apply_block(system, partition, t)
    }

    /// Applies the correction for block `t` without touching the RNG.
    pub fn apply_block(
        &mut self,
        system: &AugmentedCurveSystem,
        partition: &BlockPartition,
        t: usize,
    ) -> AdjustingVector {
        let a_hat = system.a_hat();
        let rows = system.data_rows();
        let block = partition.block(t);
        let support = partition.row_support(t);
        let weight = partition.block_norms()[t];
        let dim = system.dim();

        let delta = DMatrix::from_fn(block.len(), dim, |c, f| {
            let col = a_hat.column(block[c]);
            let res = self.residual.column(f);
            support
                .iter()
                .map(|r| col.rows_range(r.clone()).dot(&res.rows_range(r.clone())))
                .sum::<f64>()
                / weight
        });

        let mut change_sq = 0.0;
        for r in support {
            // the fitted geometry only sees the data rows
            let data = r.start.min(rows)..r.end.min(rows);
            let mut change = DMatrix::<f64>::zeros(data.len(), dim);
            for (c, &i) in block.iter().enumerate() {
                let col = a_hat.column(i);
                for f in 0..dim {
                    let d = delta[(c, f)];
                    self.residual
                        .column_mut(f)
                        .rows_range_mut(r.clone())
                        .axpy(-d, &col.rows_range(r.clone()), 1.0);
                    change.column_mut(f).axpy(d, &col.rows_range(data.clone()), 1.0);
                }
            }
            change_sq += change.norm_squared();
            let mut fitted = self.fitted.rows_range_mut(data);
            fitted += &change;
        }
        for (c, &i) in block.iter().enumerate() {
            for f in 0..dim {
                self.control_points[(i, f)] += delta[(c, f)];
            }
        }
        self.last_change_norm = change_sq.sqrt();
        self.iteration += 1;
        if self.iteration % RESIDUAL_REFRESH == 0 {
            self.refresh_residual(system);
        }
        AdjustingVector {
            block_index: t,
            delta,
        }
    }
}

/// Runs the iteration from `p0` with the default trajectory stride.
pub fn run(
    system: &AugmentedCurveSystem,
    partition: &BlockPartition,
    p0: &DMatrix<f64>,
    stop: StoppingRule,
    seed: u64,
) -> Result<FitResult> {
    run_with(system, partition, p0, stop, seed, &TraceOptions::default())
}

pub fn run_with(
    system: &AugmentedCurveSystem,
    partition: &BlockPartition,
    p0: &DMatrix<f64>,
    stop: StoppingRule,
    seed: u64,
    trace: &TraceOptions<'_>,
) -> Result<FitResult> {
    if partition.blocks().iter().flatten().count() != system.controls() {
        return Err(FitError::DimensionMismatch(
            "partition does not match the control count".into(),
        ));
    }
    let mut state = init_state(system, p0, seed)?;
    let reference_norm = trace.reference.map(|r| r.norm());
    let sample = |state: &CurveFitState, rel: Option<f64>| TrajectorySample {
        iteration: state.iteration,
        relative_change: rel,
        objective: state.residual.norm_squared(),
        error: trace
            .reference
            .zip(reference_norm)
            .map(|(r, n)| (&state.fitted - r).norm() / n),
    };

    let mut trajectory = Vec::new();
    if trace.stride > 0 {
        trajectory.push(sample(&state, None));
    }
    let mut converged = false;
    while state.iteration < stop.max_iterations {
        let previous_norm = state.fitted.norm();
        state.step(system, partition);
        let change = state.last_change_norm;
        let rel = if previous_norm > 0.0 { change / previous_norm } else { change };
        let done = stop.satisfied(change, previous_norm);
        if trace.stride > 0 && (state.iteration % trace.stride == 0 || done) {
            trajectory.push(sample(&state, Some(rel)));
        }
        if done {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        iterations: state.iteration,
        control_points: state.into_control_points(),
        converged,
        trajectory,
    })
}
