//! Deterministic references for the randomized solvers: direct penalized
//! least squares, exact one-step expectation maps and contraction radii.
//!
//! This is the only module that forms a Kronecker product, and only for toy
//! sizes.

use nalgebra::{Cholesky, ColPivQR, DMatrix, Dyn, SymmetricEigen};

use crate::assembly::{gather_columns, AugmentedCurveSystem, AugmentedSurfaceSystem, BlockPartition};
use crate::error::{FitError, Result};
use crate::grid::PointGrid;
use crate::surface::SurfacePartitions;

/// Normal matrices with condition estimates above this are solved through a
/// column-pivoted QR of the design itself.
pub const CHOLESKY_CONDITION_LIMIT: f64 = 1e12;

/// Upper bound on `blocks × rows` for expectation enumeration.
pub const EXPECTATION_SIZE_CAP: usize = 10_000;

/// Upper bound on `(n₁ + 1)(n₂ + 1)` for the Kronecker contraction check.
pub const KRONECKER_SIZE_CAP: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectSolution<T> {
    pub control_points: T,
    /// Augmented objective at the minimizer.
    pub objective: f64,
    /// `σ_max / σ_min` of the normal matrix.
    pub condition_estimate: f64,
}

/// Factorization of `MᵀM` for a tall `M`, or a pivoted QR of `M` when the
/// normal matrix is too ill-conditioned for Cholesky.
enum NormalSolver {
    Cholesky(Cholesky<f64, Dyn>),
    Qr(ColPivQR<f64, Dyn, Dyn>),
}

impl NormalSolver {
    fn new(m: &DMatrix<f64>, what: &str) -> Result<(Self, f64)> {
        let normal = m.tr_mul(m);
        let eig = SymmetricEigen::new(normal.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if max <= 0.0 || min <= max * f64::EPSILON * normal.nrows() as f64 {
            return Err(FitError::RankDeficient(format!(
                "{what} is numerically rank deficient (eigenvalues {min:e}..{max:e})"
            )));
        }
        let condition = max / min;
        if condition <= CHOLESKY_CONDITION_LIMIT {
            if let Some(ch) = normal.cholesky() {
                return Ok((NormalSolver::Cholesky(ch), condition));
            }
        }
        log::debug!("{what}: condition {condition:e}, using pivoted QR");
        Ok((NormalSolver::Qr(m.clone().col_piv_qr()), condition))
    }

    /// Least-squares solution of `M x ≈ b`.
    fn solve_ls(&self, m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            NormalSolver::Cholesky(ch) => Ok(ch.solve(&m.tr_mul(b))),
            NormalSolver::Qr(qr) => {
                // M P = Q R, so x = P R⁻¹ Qᵀ b
                let mut x = qr
                    .r()
                    .solve_upper_triangular(&qr.q().tr_mul(b))
                    .ok_or(FitError::SingularNormalMatrix)?;
                qr.p().inv_permute_rows(&mut x);
                Ok(x)
            }
        }
    }

    /// Solves `MᵀM x = y`.
    fn solve_normal(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            NormalSolver::Cholesky(ch) => Ok(ch.solve(y)),
            NormalSolver::Qr(qr) => {
                // MᵀM = P RᵀR Pᵀ
                let r = qr.r();
                let mut z = y.clone();
                qr.p().permute_rows(&mut z);
                let w = r
                    .tr_solve_upper_triangular(&z)
                    .and_then(|w| r.solve_upper_triangular(&w))
                    .ok_or(FitError::SingularNormalMatrix)?;
                let mut x = w;
                qr.p().inv_permute_rows(&mut x);
                Ok(x)
            }
        }
    }
}

/// `p* = (ÂᵀÂ)⁻¹ Âᵀ q̂`.
pub fn solve_curve_direct(system: &AugmentedCurveSystem) -> Result<DirectSolution<DMatrix<f64>>> {
    let a_hat = system.a_hat();
    let (solver, condition) = NormalSolver::new(a_hat, "augmented design matrix")?;
    let p = solver.solve_ls(a_hat, system.q_hat())?;
    Ok(DirectSolution {
        objective: system.objective(&p),
        control_points: p,
        condition_estimate: condition,
    })
}

/// `P*_(f) = (ÂᵀÂ)⁻¹ Âᵀ Q̂_(f) B̂ (B̂ᵀB̂)⁻¹` per coordinate.
pub fn solve_surface_direct(system: &AugmentedSurfaceSystem) -> Result<DirectSolution<PointGrid>> {
    let (a, b) = (system.a_hat(), system.b_hat());
    let (sa, ca) = NormalSolver::new(a, "augmented row design")?;
    let (sb, cb) = NormalSolver::new(b, "augmented column design")?;
    let slices = system
        .q_hat()
        .slices()
        .iter()
        .map(|q| {
            let left = sa.solve_normal(&(a.tr_mul(q) * b))?;
            // X (B̂ᵀB̂)⁻¹ = ((B̂ᵀB̂)⁻¹ Xᵀ)ᵀ by symmetry
            Ok(sb.solve_normal(&left.transpose())?.transpose())
        })
        .collect::<Result<Vec<_>>>()?;
    let p = PointGrid::new(slices)?;
    Ok(DirectSolution {
        objective: system.objective(&p),
        control_points: p,
        condition_estimate: ca * cb,
    })
}

/// Enumerated and closed-form one-step expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationMap {
    /// `Σ_i P(i) (I − Â_U Â_Uᵀ / ‖Â_U‖_F²) z` (surface: double sum over block pairs).
    pub enumerated: DMatrix<f64>,
    /// `(I − ÂÂᵀ / ‖Â‖_F²) z` (surface: `Z − ÂÂᵀ Z B̂B̂ᵀ / (‖Â‖_F² ‖B̂‖_F²)`).
    pub closed_form: DMatrix<f64>,
}

/// One-step expectation of the error `z = Â(p − p*)`.
pub fn expectation_map_curve(
    system: &AugmentedCurveSystem,
    partition: &BlockPartition,
    z: &DMatrix<f64>,
) -> Result<ExpectationMap> {
    let a = system.a_hat();
    let size = partition.len() * a.nrows();
    if size > EXPECTATION_SIZE_CAP {
        return Err(FitError::TooLarge {
            size,
            cap: EXPECTATION_SIZE_CAP,
        });
    }
    if z.nrows() != a.nrows() {
        return Err(FitError::DimensionMismatch("z must have one row per row of Â".into()));
    }
    let mut enumerated = DMatrix::zeros(z.nrows(), z.ncols());
    for (i, block) in partition.blocks().iter().enumerate() {
        let a_u = gather_columns(a, block);
        let step = z - &a_u * a_u.tr_mul(z) / partition.block_norms()[i];
        enumerated += step * partition.probabilities()[i];
    }
    let closed_form = z - a * a.tr_mul(z) / a.norm_squared();
    Ok(ExpectationMap {
        enumerated,
        closed_form,
    })
}

/// One-step expectation of one coordinate slice `Z = Â(P − P*)B̂ᵀ`.
pub fn expectation_map_surface(
    system: &AugmentedSurfaceSystem,
    partitions: SurfacePartitions<'_>,
    z: &DMatrix<f64>,
) -> Result<ExpectationMap> {
    let (a, b) = (system.a_hat(), system.b_hat());
    let size = partitions.rows.len() * partitions.cols.len() * a.nrows() * b.nrows();
    if size > EXPECTATION_SIZE_CAP {
        return Err(FitError::TooLarge {
            size,
            cap: EXPECTATION_SIZE_CAP,
        });
    }
    if z.shape() != (a.nrows(), b.nrows()) {
        return Err(FitError::DimensionMismatch("Z must be rows(Â) x rows(B̂)".into()));
    }
    let mut enumerated = DMatrix::zeros(z.nrows(), z.ncols());
    for (i, u) in partitions.rows.blocks().iter().enumerate() {
        let a_u = gather_columns(a, u);
        for (j, v) in partitions.cols.blocks().iter().enumerate() {
            let b_v = gather_columns(b, v);
            let w = partitions.rows.block_norms()[i] * partitions.cols.block_norms()[j];
            let step = z - &a_u * a_u.tr_mul(z) * &b_v * b_v.transpose() / w;
            enumerated += step * (partitions.rows.probabilities()[i] * partitions.cols.probabilities()[j]);
        }
    }
    let closed_form = z - a * a.tr_mul(z) * b * b.transpose() / (a.norm_squared() * b.norm_squared());
    Ok(ExpectationMap {
        enumerated,
        closed_form,
    })
}

fn spectral_radius(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.amax()
}

/// `ρ(I − ÂᵀÂ / ‖Â‖_F²)`.
pub fn contraction_radius_curve(system: &AugmentedCurveSystem) -> f64 {
    contraction_radius(system.a_hat())
}

/// `ρ(I − MᵀM / ‖M‖_F²)` for any matrix.
pub fn contraction_radius(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    spectral_radius(DMatrix::identity(n, n) - m.tr_mul(m) / m.norm_squared())
}

/// `ρ(I − (B̂ᵀB̂/‖B̂‖_F²) ⊗ (ÂᵀÂ/‖Â‖_F²))`, forming the Kronecker product.
pub fn contraction_radius_surface(system: &AugmentedSurfaceSystem) -> Result<f64> {
    let (a, b) = (system.a_hat(), system.b_hat());
    let size = a.ncols() * b.ncols();
    if size > KRONECKER_SIZE_CAP {
        return Err(FitError::TooLarge {
            size,
            cap: KRONECKER_SIZE_CAP,
        });
    }
    let ga = a.tr_mul(a) / a.norm_squared();
    let gb = b.tr_mul(b) / b.norm_squared();
    Ok(spectral_radius(DMatrix::identity(size, size) - gb.kronecker(&ga)))
}
