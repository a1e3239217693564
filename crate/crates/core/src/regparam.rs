//! Regularization-parameter selection.
//!
//! The spectral route estimates the decay exponent `α` of the eigenvalues of
//! `QᵀQ`, `Q = A Γ⁻¹`, and plugs it into
//!
//! ```text
//! λ^{1 + 1/α} = σ² n⁻¹ / ‖Γ p̄‖_n²
//! ```
//!
//! The self-consistent route needs no noise level: it alternates a penalized
//! solve with the update `λ^{1 + 1/α} = (‖A p − q‖_m² / ‖Γ p‖_n²) n⁻¹` until
//! successive values agree to a relative tolerance.
//!
//! Normalized norms divide by the actual element count: `‖v‖_d² = ‖v‖_F² / d`,
//! with squared norms summed over coordinates.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assembly::{CollocationMatrix, DifferenceMatrix};
use crate::error::{FitError, Result};
use crate::grid::PointGrid;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGENVALUE_FLOOR: f64 = 1e-14;

/// Largest `(n₁ + 1)(n₂ + 1)` for which the surface spectrum is computed.
pub const SURFACE_SPECTRUM_CAP: usize = 2500;

/// `Q = A Γ⁻¹`, obtained from the LU solve `Γᵀ Qᵀ = Aᵀ`.
pub fn build_q(a: &CollocationMatrix, gamma: &DifferenceMatrix) -> Result<DMatrix<f64>> {
    let (a, g) = (a.matrix(), gamma.matrix());
    if a.ncols() != g.nrows() {
        return Err(FitError::DimensionMismatch(format!(
            "A has {} columns but the penalty is {}x{}",
            a.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    let lu = g.transpose().lu();
    let qt = lu.solve(&a.transpose()).ok_or(FitError::SingularPenalty)?;
    Ok(qt.transpose())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecayFit {
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub alpha: f64,
    /// Intercept `log C` of the fit `log ρ_k ≈ log C − α log k`.
    pub log_constant: f64,
    pub head_count: usize,
    /// RMS residual of the log-log regression.
    pub fit_residual: f64,
}

/// Symmetric eigendecomposition of `QᵀQ` followed by the log-log fit.
pub fn spectral_decay(q: &DMatrix<f64>, head_count: usize) -> Result<SpectralDecayFit> {
    let eig = SymmetricEigen::new(q.tr_mul(q));
    spectral_decay_from_eigenvalues(eig.eigenvalues.iter().copied().collect(), head_count)
}

/// Least-squares fit of `log ρ_k` against `−log k` over the `head_count`
/// leading eigenvalues.
pub fn spectral_decay_from_eigenvalues(mut eigenvalues: Vec<f64>, head_count: usize) -> Result<SpectralDecayFit> {
    if head_count < 3 {
        return Err(FitError::InvalidConfig(format!("head_count must be at least 3, got {head_count}")));
    }
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    for v in eigenvalues.iter_mut() {
        // roundoff can leave tiny negatives on a PSD spectrum
        *v = v.max(0.0);
    }
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let usable = eigenvalues
        .iter()
        .take_while(|&&v| top > 0.0 && v > EIGENVALUE_FLOOR * top)
        .count();
    if usable < head_count {
        return Err(FitError::InsufficientSpectrum {
            needed: head_count,
            found: usable,
        });
    }
    let xs: Vec<f64> = (1..=head_count).map(|k| -(k as f64).ln()).collect();
    let ys: Vec<f64> = eigenvalues[..head_count].iter().map(|v| v.ln()).collect();
    let n = head_count as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let alpha = sxy / sxx;
    let log_constant = my - alpha * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - log_constant - alpha * x).powi(2))
        .sum();
    Ok(SpectralDecayFit {
        eigenvalues,
        alpha,
        log_constant,
        head_count,
        fit_residual: (sse / n).sqrt(),
    })
}

/// Eigenvalues of the surface operator: the generalized problem
/// `(BᵀB ⊗ AᵀA) v = ρ (I ⊗ L_uᵀL_u + L_vᵀL_v ⊗ I) v`, i.e. the spectrum of
/// `QᵀQ` for `Q = (B ⊗ A) M^{-1/2}` with `M` the first-order penalty Gram.
/// The `λ²` term of the penalty is left out.
pub fn surface_spectrum(
    a: &CollocationMatrix,
    b: &CollocationMatrix,
    l_u: &DifferenceMatrix,
    l_v: &DifferenceMatrix,
) -> Result<Vec<f64>> {
    let (a, b) = (a.matrix(), b.matrix());
    let (n1, n2) = (a.ncols(), b.ncols());
    if l_u.size() != n1 || l_v.size() != n2 {
        return Err(FitError::DimensionMismatch("penalty sizes must match A and B".into()));
    }
    let size = n1 * n2;
    if size > SURFACE_SPECTRUM_CAP {
        return Err(FitError::TooLarge {
            size,
            cap: SURFACE_SPECTRUM_CAP,
        });
    }
    let gram = b.tr_mul(b).kronecker(&a.tr_mul(a));
    let (lu, lv) = (l_u.matrix(), l_v.matrix());
    let penalty = DMatrix::<f64>::identity(n2, n2).kronecker(&lu.tr_mul(lu))
        + lv.tr_mul(lv).kronecker(&DMatrix::<f64>::identity(n1, n1));
    let chol = penalty.cholesky().ok_or(FitError::SingularPenalty)?;
    let l = chol.l();
    // L⁻¹ G L⁻ᵀ via two triangular solves; G is symmetric
    let x = l.solve_lower_triangular(&gram).ok_or(FitError::SingularPenalty)?;
    let mut c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(FitError::SingularPenalty)?;
    c = (&c + c.transpose()) * 0.5;
    Ok(SymmetricEigen::new(c).eigenvalues.iter().copied().collect())
}

pub fn surface_spectral_decay(
    a: &CollocationMatrix,
    b: &CollocationMatrix,
    l_u: &DifferenceMatrix,
    l_v: &DifferenceMatrix,
    head_count: usize,
) -> Result<SpectralDecayFit> {
    spectral_decay_from_eigenvalues(surface_spectrum(a, b, l_u, l_v)?, head_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-entry noise variance.
    pub sigma2: f64,
    /// Model-error energy `Σ ε_i²`, reported only.
    pub epsilon_norm2: f64,
}

/// `λ = (σ² n⁻¹ / ‖Γ p̄‖_n²)^{α/(α+1)}`.
///
/// A zero noise variance gives `λ = 0`.
pub fn optimal_lambda(alpha: f64, noise: &NoiseModel, n: usize, penalty_norm2: f64) -> Result<f64> {
    if !(alpha > 0.0) || n == 0 || !(penalty_norm2 > 0.0) || !(noise.sigma2 >= 0.0) {
        return Err(FitError::InvalidConfig(format!(
            "optimal lambda needs alpha > 0, n > 0, penalty > 0 and sigma2 >= 0 \
             (alpha = {alpha}, n = {n}, penalty = {penalty_norm2}, sigma2 = {})",
            noise.sigma2
        )));
    }
    let base = noise.sigma2 / n as f64 / penalty_norm2;
    Ok(base.powf(alpha / (alpha + 1.0)))
}

/// `‖Γ p‖_n²` with `n` the number of control points.
pub fn curve_penalty_norm2(gamma: &DifferenceMatrix, p: &DMatrix<f64>) -> f64 {
    (gamma.matrix() * p).norm_squared() / p.nrows() as f64
}

/// `(‖A P L_vᵀ‖_F² + ‖L_u P Bᵀ‖_F²) / ((n₁ + 1)(n₂ + 1))`.
pub fn surface_penalty_norm2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    l_u: &DifferenceMatrix,
    l_v: &DifferenceMatrix,
    p: &PointGrid,
) -> f64 {
    let sum = p.sandwich(a, l_v.matrix()).norm_squared() + p.sandwich(l_u.matrix(), b).norm_squared();
    sum / (p.rows() * p.cols()) as f64
}

/// One outer step of a self-consistent iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaIterate {
    pub k: usize,
    /// λ used for the solve in this step.
    pub lambda: f64,
    /// `‖A p − q‖_m²`.
    pub misfit: f64,
    /// `‖Γ p‖_n²` (surface: the summed first-order terms).
    pub penalty: f64,
    /// λ proposed by the update.
    pub next_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentOptions {
    pub alpha: f64,
    pub eps_lambda: f64,
    pub max_outer: usize,
}

impl SelfConsistentOptions {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            eps_lambda: 0.01,
            max_outer: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfConsistentResult<T> {
    /// Final λ of the sequence.
    pub lambda: f64,
    /// λ at which `control_points` was solved (the previous element).
    pub fit_lambda: f64,
    pub control_points: T,
    pub iterates: Vec<LambdaIterate>,
}

fn check_options(opts: &SelfConsistentOptions) -> Result<()> {
    if !(opts.alpha > 0.0) || !(opts.eps_lambda > 0.0) || opts.max_outer == 0 {
        return Err(FitError::InvalidConfig(format!(
            "self-consistent iteration needs alpha > 0, eps_lambda > 0 and max_outer > 0 ({opts:?})"
        )));
    }
    Ok(())
}

/// Shared fixed-point loop. `measure` returns `(misfit_m², penalty_n²)`.
fn fixed_point<T>(
    n: usize,
    opts: &SelfConsistentOptions,
    mut solver: impl FnMut(f64) -> Result<T>,
    measure: impl Fn(&T) -> (f64, f64),
) -> Result<SelfConsistentResult<T>> {
    check_options(opts)?;
    let exponent = opts.alpha / (opts.alpha + 1.0);
    let nf = n as f64;
    let mut lambda = nf.recip().powf(exponent);
    let mut iterates = Vec::new();
    for k in 1..=opts.max_outer {
        let p = solver(lambda)?;
        let (misfit, penalty) = measure(&p);
        if penalty == 0.0 {
            return Err(FitError::ZeroPenalty);
        }
        let next = (misfit / penalty / nf).powf(exponent);
        log::debug!("outer {k}: lambda {lambda:e} -> {next:e}");
        iterates.push(LambdaIterate {
            k,
            lambda,
            misfit,
            penalty,
            next_lambda: next,
        });
        if (next - lambda).abs() <= opts.eps_lambda * lambda {
            return Ok(SelfConsistentResult {
                lambda: next,
                fit_lambda: lambda,
                control_points: p,
                iterates,
            });
        }
        lambda = next;
    }
    Err(FitError::NonConvergence(opts.max_outer))
}

/// Curve fixed point; `solver(λ)` returns the penalized minimizer for `λ`.
pub fn self_consistent_curve(
    a: &DMatrix<f64>,
    gamma: &DifferenceMatrix,
    q_noise: &DMatrix<f64>,
    opts: &SelfConsistentOptions,
    solver: impl FnMut(f64) -> Result<DMatrix<f64>>,
) -> Result<SelfConsistentResult<DMatrix<f64>>> {
    let n = gamma.size();
    let rows = q_noise.nrows() as f64;
    fixed_point(n, opts, solver, |p| {
        ((a * p - q_noise).norm_squared() / rows, curve_penalty_norm2(gamma, p))
    })
}

/// Surface fixed point with `n = (n₁ + 1)(n₂ + 1)`.
pub fn self_consistent_surface(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    l_u: &DifferenceMatrix,
    l_v: &DifferenceMatrix,
    q_noise: &PointGrid,
    opts: &SelfConsistentOptions,
    solver: impl FnMut(f64) -> Result<PointGrid>,
) -> Result<SelfConsistentResult<PointGrid>> {
    let n = l_u.size() * l_v.size();
    let points = (q_noise.rows() * q_noise.cols()) as f64;
    fixed_point(n, opts, solver, |p| {
        let misfit = p.sandwich(a, b).sub(q_noise).norm_squared() / points;
        (misfit, surface_penalty_norm2(a, b, l_u, l_v, p))
    })
}

/// Smooth the data, `u* = (I + λLᵀL)⁻¹ q`, then fit it, `p* = (AᵀA)⁻¹Aᵀu*`.
pub fn two_step_denoise(q_noise: &DMatrix<f64>, lambda: f64, l: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rows = q_noise.nrows();
    if l.ncols() != rows || a.nrows() != rows {
        return Err(FitError::DimensionMismatch(
            "L must act on the data and A must have one row per data point".into(),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(FitError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let smoother = DMatrix::<f64>::identity(rows, rows) + l.tr_mul(l) * lambda;
    let u = smoother
        .cholesky()
        .ok_or(FitError::SingularNormalMatrix)?
        .solve(q_noise);
    let p = a
        .tr_mul(a)
        .cholesky()
        .ok_or(FitError::SingularNormalMatrix)?
        .solve(&a.tr_mul(&u));
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::difference_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// `U diag(√ρ) Vᵀ` with random orthogonal factors.
    fn with_spectrum(rng: &mut ChaCha8Rng, rows: usize, rho: &[f64]) -> DMatrix<f64> {
        let k = rho.len();
        let u = random(rng, rows, k).qr().q();
        let v = random(rng, k, k).qr().q();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, rho.iter().map(|r| r.sqrt())));
        u * s * v.transpose()
    }

    #[test]
    fn q_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 8, 5);
        let g = difference_matrix(5, 7.0).unwrap();
        let q = build_q(&CollocationMatrix::from_matrix(a.clone()), &g).unwrap();
        assert!((&q * g.matrix() - &a).norm() / a.norm() < 1e-10);

        let scaled = DifferenceMatrix::from_matrix(DMatrix::identity(5, 5) * 4.0).unwrap();
        let q = build_q(&CollocationMatrix::from_matrix(a.clone()), &scaled).unwrap();
        assert!((q - &a / 4.0).norm() < 1e-14);

        let singular = DifferenceMatrix::from_matrix(DMatrix::zeros(5, 5)).unwrap();
        assert!(matches!(
            build_q(&CollocationMatrix::from_matrix(a), &singular),
            Err(FitError::SingularPenalty)
        ));
    }

    #[test]
    fn exact_power_law() {
        let eig: Vec<f64> = (1..=40).map(|k| (k as f64).powf(-3.0)).collect();
        let fit = spectral_decay_from_eigenvalues(eig, 40).unwrap();
        assert!((fit.alpha - 3.0).abs() < 1e-8);
        assert!(fit.fit_residual < 1e-10);
        assert!(fit.log_constant.abs() < 1e-8);
    }

    #[test]
    fn spectrum_is_sorted_and_floored() {
        let fit = spectral_decay_from_eigenvalues(vec![0.25, 1.0, -1e-20, 0.5, 1.0 / 16.0], 3).unwrap();
        assert_eq!(fit.eigenvalues, vec![1.0, 0.5, 0.25, 1.0 / 16.0, 0.0]);
        assert!(matches!(
            spectral_decay_from_eigenvalues(vec![1.0, 1e-20, 1e-30], 3),
            Err(FitError::InsufficientSpectrum { needed: 3, found: 1 })
        ));
        assert!(spectral_decay_from_eigenvalues(vec![1.0, 0.5], 2).is_err());
    }

    #[test]
    fn recovers_prescribed_decay_from_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for alpha in [1.0, 2.0, 4.0] {
            let rho: Vec<f64> = (1..=30).map(|k| (k as f64).powf(-alpha)).collect();
            let q = with_spectrum(&mut rng, 60, &rho);
            let fit = spectral_decay(&q, 30).unwrap();
            assert!((fit.alpha - alpha).abs() < 1e-6, "{alpha}: {}", fit.alpha);
        }
    }

    #[test]
    fn optimal_lambda_limits() {
        let noise = NoiseModel { sigma2: 0.1, epsilon_norm2: 0.0 };
        let l = optimal_lambda(4.0, &noise, 100, 2.0).unwrap();
        assert_relative_eq!(l, (0.1 / 100.0 / 2.0f64).powf(0.8), max_relative = 1e-15);
        let big = optimal_lambda(1e12, &noise, 100, 2.0).unwrap();
        assert_relative_eq!(big, 0.1 / 100.0 / 2.0, max_relative = 1e-9);
        let quiet = NoiseModel { sigma2: 0.0, epsilon_norm2: 0.0 };
        assert_eq!(optimal_lambda(4.0, &quiet, 100, 2.0).unwrap(), 0.0);
        assert!(optimal_lambda(0.0, &noise, 100, 2.0).is_err());
        assert!(optimal_lambda(4.0, &noise, 0, 2.0).is_err());
        assert!(optimal_lambda(4.0, &noise, 100, 0.0).is_err());
    }

    #[test]
    fn penalty_norms() {
        let g = difference_matrix(3, 2.0).unwrap();
        let p = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        // Γp = 2·(−2, 1, 0)
        assert_relative_eq!(curve_penalty_norm2(&g, &p), 20.0 / 3.0);

        let a = DMatrix::<f64>::identity(2, 2);
        let l = difference_matrix(2, 1.0).unwrap();
        let grid = PointGrid::new(vec![DMatrix::from_element(2, 2, 1.0)]).unwrap();
        // L·1 = (−1, −1), so each term is ‖1 (−1,−1)ᵀ‖² = 4
        assert_relative_eq!(surface_penalty_norm2(&a, &a, &l, &l, &grid), 8.0 / 4.0);
    }

    fn direct(a: &DMatrix<f64>, g: &DMatrix<f64>, q: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        (a.tr_mul(a) + g.tr_mul(g) * lambda)
            .cholesky()
            .unwrap()
            .solve(&a.tr_mul(q))
    }

    #[test]
    fn fixed_point_input_stops_at_first_check() {
        // a solver that ignores λ and returns p whose ratio reproduces λ₁
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, 20, 5);
        let g = difference_matrix(5, 1.0).unwrap();
        let q = random(&mut rng, 20, 2);
        let opts = SelfConsistentOptions::new(2.0);
        let p0 = direct(&a, g.matrix(), &q, 0.1);
        let misfit = (&a * &p0 - &q).norm_squared() / 20.0;
        let pen = curve_penalty_norm2(&g, &p0);
        // rescale Γ so the update returns exactly λ₁ = n^{−α/(α+1)}
        let lambda1 = 5f64.recip().powf(2.0 / 3.0);
        let needed = lambda1.powf(1.5) * 5.0; // misfit/penalty ratio
        let factor = needed / (misfit / pen);
        let scaled_g = DifferenceMatrix::from_matrix(g.matrix() / factor.sqrt()).unwrap();
        let res = self_consistent_curve(&a, &scaled_g, &q, &opts, |_| Ok(p0.clone())).unwrap();
        assert_eq!(res.iterates.len(), 1);
        assert_relative_eq!(res.lambda, lambda1, max_relative = 1e-12);
    }

    #[test]
    fn curve_loop_converges_with_direct_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, 60, 10);
        let g = difference_matrix(10, 1.0).unwrap();
        let truth = DMatrix::from_fn(10, 2, |i, f| (i as f64 * 0.3 + f as f64).sin());
        let q = &a * &truth + random(&mut rng, 60, 2) * 0.1;
        let opts = SelfConsistentOptions::new(3.0);
        let res = self_consistent_curve(&a, &g, &q, &opts, |l| Ok(direct(&a, g.matrix(), &q, l))).unwrap();
        let last = res.iterates.last().unwrap();
        assert!((last.next_lambda - last.lambda).abs() <= 0.01 * last.lambda);
        assert_eq!(res.fit_lambda, last.lambda);
        assert_eq!(res.lambda, last.next_lambda);
        assert!(res.iterates.iter().all(|it| it.lambda > 0.0));
        // the returned fit is the solve at fit_lambda
        assert!((res.control_points - direct(&a, g.matrix(), &q, res.fit_lambda)).norm() < 1e-12);
    }

    #[test]
    fn loop_errors() {
        let a = DMatrix::<f64>::identity(3, 3);
        let g = difference_matrix(3, 1.0).unwrap();
        let q = DMatrix::zeros(3, 1);
        let opts = SelfConsistentOptions::new(2.0);
        assert!(matches!(
            self_consistent_curve(&a, &g, &q, &opts, |_| Ok(DMatrix::zeros(3, 1))),
            Err(FitError::ZeroPenalty)
        ));
        // a solver whose output drifts forever
        let mut calls = 0.0;
        let opts = SelfConsistentOptions { max_outer: 5, ..opts };
        let res = self_consistent_curve(&a, &g, &DMatrix::from_element(3, 1, 1.0), &opts, |_| {
            calls += 1.0;
            Ok(DMatrix::from_row_slice(3, 1, &[0.0, calls, 0.0]))
        });
        assert!(matches!(res, Err(FitError::NonConvergence(5))));
        let bad = SelfConsistentOptions { eps_lambda: 0.0, ..opts };
        assert!(self_consistent_curve(&a, &g, &q, &bad, |_| Ok(DMatrix::zeros(3, 1))).is_err());
    }

    #[test]
    fn surface_spectrum_matches_dense_square_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(&mut rng, 7, 4);
        let b = random(&mut rng, 6, 3);
        let lu = difference_matrix(4, 2.0).unwrap();
        let lv = difference_matrix(3, 3.0).unwrap();
        let got = surface_spectrum(
            &CollocationMatrix::from_matrix(a.clone()),
            &CollocationMatrix::from_matrix(b.clone()),
            &lu,
            &lv,
        )
        .unwrap();
        // reference: Q = (B ⊗ A) M^{-1/2} via eigen square root
        let m = DMatrix::<f64>::identity(3, 3).kronecker(&lu.matrix().tr_mul(lu.matrix()))
            + lv.matrix().tr_mul(lv.matrix()).kronecker(&DMatrix::<f64>::identity(4, 4));
        let e = SymmetricEigen::new(m);
        let inv_sqrt = &e.eigenvectors
            * DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.powf(-0.5)))
            * e.eigenvectors.transpose();
        let q = b.kronecker(&a) * inv_sqrt;
        let mut want: Vec<f64> = SymmetricEigen::new(q.tr_mul(&q)).eigenvalues.iter().copied().collect();
        let mut got = got;
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10 * want.last().unwrap());
        }
    }

    #[test]
    fn two_step_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 12, 5);
        let q = random(&mut rng, 12, 2);
        let l = difference_matrix(12, 1.0).unwrap().matrix().clone();
        let plain = two_step_denoise(&q, 0.0, &l, &a).unwrap();
        let ls = a.clone().svd(true, true).solve(&q, 1e-14).unwrap();
        assert!((&plain - &ls).norm() < 1e-10);

        let lambda = 0.3;
        let got = two_step_denoise(&q, lambda, &l, &a).unwrap();
        let smooth = (DMatrix::<f64>::identity(12, 12) + l.tr_mul(&l) * lambda)
            .lu()
            .solve(&q)
            .unwrap();
        let want = (a.tr_mul(&a)).lu().solve(&a.tr_mul(&smooth)).unwrap();
        assert!((got - want).norm() < 1e-10);
        assert!(two_step_denoise(&q, -1.0, &l, &a).is_err());
    }

    proptest! {
        #[test]
        fn lambda_is_scale_invariant(c in 0.01f64..100.0, alpha in 0.5f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let g = difference_matrix(6, 3.0).unwrap();
            let pbar = random(&mut rng, 6, 2);
            let noise = NoiseModel { sigma2: 0.2, epsilon_norm2: 0.0 };
            let scaled = NoiseModel { sigma2: 0.2 * c * c, epsilon_norm2: 0.0 };
            let l1 = optimal_lambda(alpha, &noise, 6, curve_penalty_norm2(&g, &pbar)).unwrap();
            let l2 = optimal_lambda(alpha, &scaled, 6, curve_penalty_norm2(&g, &(&pbar * c))).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-12 * l1);
        }

        #[test]
        fn eigenvalues_descend(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random(&mut rng, 12, 6);
            let fit = spectral_decay(&q, 3).unwrap();
            prop_assert!(fit.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(fit.eigenvalues.iter().all(|v| *v >= 0.0));
        }
    }
}
