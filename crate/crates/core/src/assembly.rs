//! Collocation matrices, difference penalties and the augmented least-squares
//! systems that the randomized solvers iterate on.
//!
//! The curve system stacks `Â = [A; √λ Γ]` over `q̂ = [q; 0]`. The surface
//! system keeps `Â = [A; √λ L_u]`, `B̂ = [B; √λ L_v]` separate and pads the data
//! grid with zeros, so `‖Â P B̂ᵀ − Q̂‖²` expands to the four-term penalized
//! objective without ever forming a Kronecker product.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::basis::{KnotVector, ParamSequence};
use crate::error::{FitError, Result};
use crate::grid::PointGrid;

/// Basis values at the data parameters: entry `(j, i)` is `μ_i(x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationMatrix(DMatrix<f64>);

impl CollocationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Wraps an arbitrary design matrix. Used by tests and by callers that
    /// bring their own basis.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        Self(matrix)
    }
}

pub fn assemble_collocation(knots: &KnotVector, params: &ParamSequence) -> Result<CollocationMatrix> {
    let mut a = DMatrix::zeros(params.len(), knots.basis_count());
    for (j, &x) in params.values().iter().enumerate() {
        for bv in knots.eval_basis(x)? {
            a[(j, bv.index)] = bv.value;
        }
    }
    Ok(CollocationMatrix(a))
}

/// `C · tridiag(1, −2, 1)`, the second-order difference operator with
/// Dirichlet boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix {
    matrix: DMatrix<f64>,
    scale: f64,
}

impl DifferenceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Arbitrary square penalty; the tests use scaled identities.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(FitError::DimensionMismatch("penalty matrix must be square".into()));
        }
        Ok(Self { matrix, scale: 1.0 })
    }
}

pub fn difference_matrix(size: usize, scale: f64) -> Result<DifferenceMatrix> {
    if size < 2 {
        return Err(FitError::InvalidConfig(format!(
            "difference matrix needs size >= 2, got {size}"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(FitError::InvalidConfig(format!(
            "penalty scale must be positive, got {scale}"
        )));
    }
    let matrix = DMatrix::from_fn(size, size, |i, j| {
        if i == j {
            -2.0 * scale
        } else if i.abs_diff(j) == 1 {
            scale
        } else {
            0.0
        }
    });
    Ok(DifferenceMatrix { matrix, scale })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FitError::InvalidConfig(format!(
            "regularization parameter must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>, bottom_scale: f64) -> DMatrix<f64> {
    let (m, n) = top.shape();
    let mut out = DMatrix::zeros(m + bottom.nrows(), n);
    out.rows_mut(0, m).copy_from(top);
    out.rows_mut(m, bottom.nrows()).copy_from(&(bottom * bottom_scale));
    out
}

/// `Â = [A; √λ Γ]` with targets `q̂ = [q; 0]`, one target column per coordinate.
#[derive(Debug, Clone)]
pub struct AugmentedCurveSystem {
    a_hat: DMatrix<f64>,
    q_hat: DMatrix<f64>,
    lambda: f64,
    data_rows: usize,
}

impl AugmentedCurveSystem {
    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn q_hat(&self) -> &DMatrix<f64> {
        &self.q_hat
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of data points, `m + 1`.
    pub fn data_rows(&self) -> usize {
        self.data_rows
    }

    /// Number of control points, `n₁ + 1`.
    pub fn controls(&self) -> usize {
        self.a_hat.ncols()
    }

    /// Point dimension `d`.
    pub fn dim(&self) -> usize {
        self.q_hat.ncols()
    }

    /// The unaugmented design matrix `A` (top block of `Â`).
    pub fn design(&self) -> DMatrix<f64> {
        self.a_hat.rows(0, self.data_rows).into_owned()
    }

    /// The unpadded data `q`.
    pub fn data(&self) -> DMatrix<f64> {
        self.q_hat.rows(0, self.data_rows).into_owned()
    }

    /// `‖Âp − q̂‖_F²`.
    pub fn objective(&self, p: &DMatrix<f64>) -> f64 {
        (&self.a_hat * p - &self.q_hat).norm_squared()
    }
}

pub fn augment_curve(
    a: &CollocationMatrix,
    gamma: &DifferenceMatrix,
    q: &DMatrix<f64>,
    lambda: f64,
) -> Result<AugmentedCurveSystem> {
    check_lambda(lambda)?;
    let a = a.matrix();
    if gamma.size() != a.ncols() {
        return Err(FitError::DimensionMismatch(format!(
            "penalty is {}x{} but A has {} columns",
            gamma.size(),
            gamma.size(),
            a.ncols()
        )));
    }
    if q.nrows() != a.nrows() {
        return Err(FitError::DimensionMismatch(format!(
            "data has {} rows but A has {}",
            q.nrows(),
            a.nrows()
        )));
    }
    let a_hat = stack(a, gamma.matrix(), lambda.sqrt());
    let mut q_hat = DMatrix::zeros(a_hat.nrows(), q.ncols());
    q_hat.rows_mut(0, q.nrows()).copy_from(q);
    Ok(AugmentedCurveSystem {
        a_hat,
        q_hat,
        lambda,
        data_rows: a.nrows(),
    })
}

/// The `(Â, B̂, Q̂)` triple of a regularized tensor-product fit.
#[derive(Debug, Clone)]
pub struct AugmentedSurfaceSystem {
    a_hat: DMatrix<f64>,
    b_hat: DMatrix<f64>,
    q_hat: PointGrid,
    lambda: f64,
    data_rows: usize,
    data_cols: usize,
}

impl AugmentedSurfaceSystem {
    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    pub fn q_hat(&self) -> &PointGrid {
        &self.q_hat
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(m + 1, p + 1)`.
    pub fn data_shape(&self) -> (usize, usize) {
        (self.data_rows, self.data_cols)
    }

    /// `(n₁ + 1, n₂ + 1)`.
    pub fn control_shape(&self) -> (usize, usize) {
        (self.a_hat.ncols(), self.b_hat.ncols())
    }

    pub fn dim(&self) -> usize {
        self.q_hat.dim()
    }

    pub fn design_u(&self) -> DMatrix<f64> {
        self.a_hat.rows(0, self.data_rows).into_owned()
    }

    pub fn design_v(&self) -> DMatrix<f64> {
        self.b_hat.rows(0, self.data_cols).into_owned()
    }

    pub fn data(&self) -> PointGrid {
        self.q_hat
            .map_slices(|s| s.view((0, 0), (self.data_rows, self.data_cols)).into_owned())
    }

    /// `‖Â P B̂ᵀ − Q̂‖_F²` summed over coordinates.
    pub fn objective(&self, p: &PointGrid) -> f64 {
        p.sandwich(&self.a_hat, &self.b_hat)
            .sub(&self.q_hat)
            .norm_squared()
    }
}

pub fn augment_surface(
    a: &CollocationMatrix,
    b: &CollocationMatrix,
    l_u: &DifferenceMatrix,
    l_v: &DifferenceMatrix,
    q: &PointGrid,
    lambda: f64,
) -> Result<AugmentedSurfaceSystem> {
    check_lambda(lambda)?;
    let (a, b) = (a.matrix(), b.matrix());
    if l_u.size() != a.ncols() || l_v.size() != b.ncols() {
        return Err(FitError::DimensionMismatch(
            "penalty sizes must match the control counts of A and B".into(),
        ));
    }
    if q.rows() != a.nrows() || q.cols() != b.nrows() {
        return Err(FitError::DimensionMismatch(format!(
            "data grid is {}x{} but A, B have {} and {} rows",
            q.rows(),
            q.cols(),
            a.nrows(),
            b.nrows()
        )));
    }
    let s = lambda.sqrt();
    let a_hat = stack(a, l_u.matrix(), s);
    let b_hat = stack(b, l_v.matrix(), s);
    let (rows, cols) = (a_hat.nrows(), b_hat.nrows());
    let q_hat = q.map_slices(|slice| {
        let mut padded = DMatrix::zeros(rows, cols);
        padded.view_mut((0, 0), slice.shape()).copy_from(slice);
        padded
    });
    Ok(AugmentedSurfaceSystem {
        a_hat,
        b_hat,
        q_hat,
        lambda,
        data_rows: a.nrows(),
        data_cols: b.nrows(),
    })
}

/// Disjoint column blocks with their selection probabilities
/// `‖M_{:,U_i}‖_F² / ‖M‖_F²`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    block_norms: Vec<f64>,
    probabilities: Vec<f64>,
    sampler: WeightedIndex<f64>,
    row_support: Vec<Vec<Range<usize>>>,
}

impl BlockPartition {
    /// Builds a partition from explicit index sets, which must cover
    /// `0..matrix.ncols()` exactly once.
    pub fn from_blocks(matrix: &DMatrix<f64>, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = matrix.ncols();
        let mut seen = vec![false; n];
        for block in &mut blocks {
            if block.is_empty() {
                return Err(FitError::InvalidConfig("empty block in partition".into()));
            }
            block.sort_unstable();
            for &i in block.iter() {
                if i >= n || seen[i] {
                    return Err(FitError::InvalidConfig(format!(
                        "index {i} is out of range or repeated in the partition"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(FitError::InvalidConfig(
                "partition does not cover every column".into(),
            ));
        }
        let col_norms: Vec<f64> = matrix.column_iter().map(|c| c.norm_squared()).collect();
        let block_norms: Vec<f64> = blocks
            .iter()
            .map(|b| b.iter().map(|&i| col_norms[i]).sum())
            .collect();
        if let Some(zero) = block_norms.iter().position(|&w| w == 0.0) {
            return Err(FitError::ZeroColumnBlock(zero));
        }
        let total: f64 = block_norms.iter().sum();
        let probabilities = block_norms.iter().map(|w| w / total).collect();
        let sampler = WeightedIndex::new(&block_norms)
            .map_err(|e| FitError::InvalidConfig(format!("block weights: {e}")))?;
        let row_support = blocks.iter().map(|b| nonzero_runs(matrix, b)).collect();
        Ok(Self {
            blocks,
            block_norms,
            probabilities,
            sampler,
            row_support,
        })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    /// Squared Frobenius norm of each column block.
    pub fn block_norms(&self) -> &[f64] {
        &self.block_norms
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Maximal runs of rows where some column of block `i` is nonzero.
    pub fn row_support(&self, i: usize) -> &[Range<usize>] {
        &self.row_support[i]
    }

    /// Draws a block index from the categorical distribution of block norms.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }
}

/// Contiguous blocks of `block_size` columns; the last block takes the
/// remainder.
pub fn make_partition(matrix: &DMatrix<f64>, block_size: usize) -> Result<BlockPartition> {
    if block_size == 0 {
        return Err(FitError::InvalidConfig("block size must be at least 1".into()));
    }
    let n = matrix.ncols();
    let blocks = (0..n)
        .step_by(block_size)
        .map(|start| (start..(start + block_size).min(n)).collect())
        .collect();
    BlockPartition::from_blocks(matrix, blocks)
}

fn nonzero_runs(matrix: &DMatrix<f64>, cols: &[usize]) -> Vec<Range<usize>> {
    let mut runs: Vec<Range<usize>> = Vec::new();
    for r in 0..matrix.nrows() {
        if cols.iter().any(|&c| matrix[(r, c)] != 0.0) {
            match runs.last_mut() {
                Some(last) if last.end == r => last.end = r + 1,
                _ => runs.push(r..r + 1),
            }
        }
    }
    runs
}

/// The columns of `matrix` listed in `cols`, in order.
pub(crate) fn gather_columns(matrix: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(matrix.nrows(), cols.len(), |r, c| matrix[(r, cols[c])])
}
