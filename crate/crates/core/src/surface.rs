//! Doubly randomized block iteration for regularized tensor-product surfaces.
//!
//! A row block `U` of `Â` and a column block `V` of `B̂` are drawn
//! independently, each with probability proportional to its squared Frobenius
//! norm. Per coordinate slice:
//!
//! ```text
//! Δ = Â_{:,U}ᵀ R B̂_{:,V} / (‖Â_{:,U}‖_F² ‖B̂_{:,V}‖_F²)
//! P_{U,V} ← P_{U,V} + Δ,   R ← R − (Â_{:,U} Δ) B̂_{:,V}ᵀ
//! ```

use nalgebra::DMatrix;

use crate::assembly::{AugmentedSurfaceSystem, BlockPartition};
use crate::curve::{StoppingRule, TraceOptions, TrajectorySample, RESIDUAL_REFRESH};
use crate::error::{FitError, Result};
use crate::grid::PointGrid;
use crate::rng::{stream_rng, SeededRng, Stream};

/// Row partition over the columns of `Â` and column partition over `B̂`.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePartitions<'a> {
    pub rows: &'a BlockPartition,
    pub cols: &'a BlockPartition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFitResult {
    pub control_grid: PointGrid,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectorySample>,
}

/// Drawn block pair and the per-coordinate correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustingBlock {
    pub row_block: usize,
    pub col_block: usize,
    pub delta: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct SurfaceFitState {
    control_grid: PointGrid,
    residual: PointGrid,
    fitted: PointGrid,
    iteration: usize,
    rng: SeededRng,
    last_change_norm: f64,
}

/// `P_ij = Q_{⌊m i / n₁⌋, ⌊p j / n₂⌋}` for `i = 0..=n₁`, `j = 0..=n₂`.
pub fn initial_control_grid(q: &PointGrid, n1: usize, n2: usize) -> Result<PointGrid> {
    if q.rows() < 2 || q.cols() < 2 || n1 == 0 || n2 == 0 {
        return Err(FitError::InvalidConfig(format!(
            "need a data grid of at least 2x2 and positive control counts (got {}x{}, n1 = {n1}, n2 = {n2})",
            q.rows(),
            q.cols()
        )));
    }
    let (m, p) = (q.rows() - 1, q.cols() - 1);
    Ok(q.map_slices(|s| DMatrix::from_fn(n1 + 1, n2 + 1, |i, j| s[(m * i / n1, p * j / n2)])))
}

pub fn init_state(system: &AugmentedSurfaceSystem, p0: &PointGrid, seed: u64) -> Result<SurfaceFitState> {
    let (r, c) = system.control_shape();
    if (p0.rows(), p0.cols(), p0.dim()) != (r, c, system.dim()) {
        return Err(FitError::DimensionMismatch(format!(
            "initial control grid is {}x{}x{}, expected {r}x{c}x{}",
            p0.rows(),
            p0.cols(),
            p0.dim(),
            system.dim()
        )));
    }
    let (m, p) = system.data_shape();
    let mut state = SurfaceFitState {
        control_grid: p0.clone(),
        residual: system.q_hat().clone(),
        fitted: PointGrid::zeros(m, p, system.dim()),
        iteration: 0,
        rng: stream_rng(seed, Stream::Selection),
        last_change_norm: 0.0,
    };
    state.refresh_residual(system);
    Ok(state)
}

impl SurfaceFitState {
    pub fn control_grid(&self) -> &PointGrid {
        &self.control_grid
    }

    pub fn residual(&self) -> &PointGrid {
        &self.residual
    }

    /// Cached `A P^(k) Bᵀ`.
    pub fn fitted(&self) -> &PointGrid {
        &self.fitted
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn last_change_norm(&self) -> f64 {
        self.last_change_norm
    }

    pub fn into_control_grid(self) -> PointGrid {
        self.control_grid
    }

    pub fn refresh_residual(&mut self, system: &AugmentedSurfaceSystem) {
        self.residual = system
            .q_hat()
            .sub(&self.control_grid.sandwich(system.a_hat(), system.b_hat()));
        self.fitted = self
            .control_grid
            .sandwich(&system.design_u(), &system.design_v());
    }

    pub fn select_blocks(&mut self, partitions: SurfacePartitions<'_>) -> (usize, usize) {
        let t = partitions.rows.sample(&mut self.rng);
        let s = partitions.cols.sample(&mut self.rng);
        (t, s)
    }

    pub fn step(&mut self, system: &AugmentedSurfaceSystem, partitions: SurfacePartitions<'_>) -> AdjustingBlock {
        let (t, s) = self.select_blocks(partitions);
        self.apply_blocks(system, partitions, t, s)
    }

    /// Applies the correction for block pair `(t, s)` without touching the RNG.
    pub fn apply_blocks(
        &mut self,
        system: &AugmentedSurfaceSystem,
        partitions: SurfacePartitions<'_>,
        t: usize,
        s: usize,
    ) -> AdjustingBlock {
        let (m, p) = system.data_shape();
        let rows = partitions.rows.block(t);
        let cols = partitions.cols.block(s);
        // only the nonzero rows of Â_U and B̂_V take part
        let ia: Vec<usize> = partitions.rows.row_support(t).iter().cloned().flatten().collect();
        let ib: Vec<usize> = partitions.cols.row_support(s).iter().cloned().flatten().collect();
        let a_u = DMatrix::from_fn(ia.len(), rows.len(), |r, c| system.a_hat()[(ia[r], rows[c])]);
        let b_v = DMatrix::from_fn(ib.len(), cols.len(), |r, c| system.b_hat()[(ib[r], cols[c])]);
        let (da, db) = (ia.partition_point(|&r| r < m), ib.partition_point(|&r| r < p));
        let weight = partitions.rows.block_norms()[t] * partitions.cols.block_norms()[s];

        let mut delta = Vec::with_capacity(system.dim());
        let mut change_sq = 0.0;
        let slices = self
            .control_grid
            .slices_mut()
            .iter_mut()
            .zip(self.residual.slices_mut())
            .zip(self.fitted.slices_mut());
        for ((grid, residual), fitted) in slices {
            let r_sub = DMatrix::from_fn(ia.len(), ib.len(), |r, c| residual[(ia[r], ib[c])]);
            let d = a_u.tr_mul(&r_sub) * &b_v / weight;
            for (c, &j) in cols.iter().enumerate() {
                for (r, &i) in rows.iter().enumerate() {
                    grid[(i, j)] += d[(r, c)];
                }
            }
            let update = &a_u * &d * b_v.transpose();
            for (c, &j) in ib.iter().enumerate() {
                for (r, &i) in ia.iter().enumerate() {
                    residual[(i, j)] -= update[(r, c)];
                }
            }
            for c in 0..db {
                for r in 0..da {
                    let v = update[(r, c)];
                    fitted[(ia[r], ib[c])] += v;
                    change_sq += v * v;
                }
            }
            delta.push(d);
        }
        self.last_change_norm = change_sq.sqrt();
        self.iteration += 1;
        if self.iteration % RESIDUAL_REFRESH == 0 {
            self.refresh_residual(system);
        }
        AdjustingBlock {
            row_block: t,
            col_block: s,
            delta,
        }
    }
}

pub fn run(
    system: &AugmentedSurfaceSystem,
    partitions: SurfacePartitions<'_>,
    p0: &PointGrid,
    stop: StoppingRule,
    seed: u64,
) -> Result<SurfaceFitResult> {
    run_with(system, partitions, p0, stop, seed, &TraceOptions::default())
}

pub fn run_with(
    system: &AugmentedSurfaceSystem,
    partitions: SurfacePartitions<'_>,
    p0: &PointGrid,
    stop: StoppingRule,
    seed: u64,
    trace: &TraceOptions<'_, PointGrid>,
) -> Result<SurfaceFitResult> {
    let (r, c) = system.control_shape();
    let covered = |part: &BlockPartition| part.blocks().iter().flatten().count();
    if covered(partitions.rows) != r || covered(partitions.cols) != c {
        return Err(FitError::DimensionMismatch(
            "partitions do not match the control grid".into(),
        ));
    }
    let mut state = init_state(system, p0, seed)?;
    let reference_norm = trace.reference.map(|g| g.norm_squared().sqrt());
    let sample = |state: &SurfaceFitState, rel: Option<f64>| TrajectorySample {
        iteration: state.iteration,
        relative_change: rel,
        objective: state.residual.norm_squared(),
        error: trace
            .reference
            .zip(reference_norm)
            .map(|(g, n)| state.fitted.sub(g).norm_squared().sqrt() / n),
    };

    let mut trajectory = Vec::new();
    if trace.stride > 0 {
        trajectory.push(sample(&state, None));
    }
    let mut converged = false;
    while state.iteration < stop.max_iterations {
        let previous_norm = state.fitted.norm_squared().sqrt();
        state.step(system, partitions);
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
    Ok(SurfaceFitResult {
        iterations: state.iteration,
        control_grid: state.into_control_grid(),
        converged,
        trajectory,
    })
}
