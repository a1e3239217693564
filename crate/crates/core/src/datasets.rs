//! Example geometries, the normalized Gaussian noise model and the relative
//! fitting error.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::grid::PointGrid;
use crate::rng::{stream_rng, Stream};

/// Smallest admissible `|√2 − sin 2t sin 3s|` on a sampled boy surface.
pub const BOY_DENOMINATOR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    /// `r = sin(θ/4)`, `θ ∈ [0, 8π]`.
    Rose,
    /// `r = 1 + 2cos(2θ + ½) + 2cos(3θ + ½)`, `θ ∈ [0, 2π]`.
    Blob,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub points: DMatrix<f64>,
    pub kind: CurveKind,
    pub parameter_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSurface {
    pub grid: PointGrid,
    pub parameter_ranges: [(f64, f64); 2],
}

/// `m + 1` equally spaced values covering `[lo, hi]` inclusively.
fn uniform(lo: f64, hi: f64, m: usize) -> impl Iterator<Item = f64> {
    (0..=m).map(move |j| if j == m { hi } else { lo + (hi - lo) * j as f64 / m as f64 })
}

fn polar_curve(m: usize, kind: CurveKind, hi: f64, r: impl Fn(f64) -> f64) -> Result<SampledCurve> {
    if m < 1 {
        return Err(FitError::InvalidConfig("curve needs m >= 1".into()));
    }
    let mut points = DMatrix::zeros(m + 1, 2);
    for (j, theta) in uniform(0.0, hi, m).enumerate() {
        let rho = r(theta);
        points[(j, 0)] = rho * theta.cos();
        points[(j, 1)] = rho * theta.sin();
    }
    Ok(SampledCurve {
        points,
        kind,
        parameter_range: (0.0, hi),
    })
}

pub fn rose_curve(m: usize) -> Result<SampledCurve> {
    polar_curve(m, CurveKind::Rose, 8.0 * PI, |t| (t / 4.0).sin())
}

pub fn blob_curve(m: usize) -> Result<SampledCurve> {
    polar_curve(m, CurveKind::Blob, 2.0 * PI, |t| {
        1.0 + 2.0 * (2.0 * t + 0.5).cos() + 2.0 * (3.0 * t + 0.5).cos()
    })
}

pub fn sample_curve(kind: CurveKind, m: usize) -> Result<SampledCurve> {
    match kind {
        CurveKind::Rose => rose_curve(m),
        CurveKind::Blob => blob_curve(m),
    }
}

/// Boy surface point at `(t, s)`.
pub fn boy_point(t: f64, s: f64) -> Result<[f64; 3]> {
    let den = SQRT_2 - (2.0 * t).sin() * (3.0 * s).sin();
    if den.abs() < BOY_DENOMINATOR_FLOOR {
        return Err(FitError::SingularSample { t, s });
    }
    let (ct, st) = (t.cos(), t.sin());
    let x = 2.0 / 3.0 * (ct * (2.0 * t).cos() + SQRT_2 * st * s.cos()) * ct / den;
    let y = 2.0 / 3.0 * (ct * (2.0 * t).sin() - SQRT_2 * st * s.sin()) * ct / den;
    let z = SQRT_2 * ct * ct / den;
    Ok([x, y, z])
}

/// `(m + 1) × (p + 1)` samples over `[−π, π]²`; rows follow `t`, columns `s`.
pub fn boy_surface(m: usize, p: usize) -> Result<SampledSurface> {
    if m < 1 || p < 1 {
        return Err(FitError::InvalidConfig("surface needs m, p >= 1".into()));
    }
    let mut slices = vec![DMatrix::zeros(m + 1, p + 1); 3];
    for (h, t) in uniform(-PI, PI, m).enumerate() {
        for (l, s) in uniform(-PI, PI, p).enumerate() {
            let pt = boy_point(t, s)?;
            for (slice, v) in slices.iter_mut().zip(pt) {
                slice[(h, l)] = v;
            }
        }
    }
    Ok(SampledSurface {
        grid: PointGrid::new(slices)?,
        parameter_ranges: [(-PI, PI), (-PI, PI)],
    })
}

/// Perturbation `a · q̃ / ‖q̃‖_F` with `q̃` i.i.d. standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
}

/// Noisy data with the per-entry variance `a² / N` of the realized noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Noisy<T> {
    pub data: T,
    pub variance: f64,
}

fn check_amplitude(spec: &NoiseSpec) -> Result<()> {
    if !spec.amplitude.is_finite() || spec.amplitude < 0.0 {
        return Err(FitError::InvalidConfig(format!(
            "noise amplitude must be finite and non-negative, got {}",
            spec.amplitude
        )));
    }
    Ok(())
}

/// Draws `count` standard normals (ziggurat) from the noise stream and rescales
/// them to Frobenius norm `amplitude`.
fn noise_vector(spec: &NoiseSpec, count: usize) -> Vec<f64> {
    let mut rng = stream_rng(spec.seed, Stream::Noise);
    let mut draws: Vec<f64> = (0..count).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { spec.amplitude / norm } else { 0.0 };
    draws.iter_mut().for_each(|v| *v *= scale);
    draws
}

/// Adds normalized noise to a point matrix. Draws fill the matrix in
/// column-major order.
pub fn add_noise(data: &DMatrix<f64>, spec: &NoiseSpec) -> Result<Noisy<DMatrix<f64>>> {
    check_amplitude(spec)?;
    let noise = noise_vector(spec, data.len());
    let perturbation = DMatrix::from_column_slice(data.nrows(), data.ncols(), &noise);
    Ok(Noisy {
        data: data + perturbation,
        variance: spec.amplitude * spec.amplitude / data.len() as f64,
    })
}

/// Grid version of [`add_noise`]; slices are filled in order, each column-major.
pub fn add_noise_grid(data: &PointGrid, spec: &NoiseSpec) -> Result<Noisy<PointGrid>> {
    check_amplitude(spec)?;
    let count = data.entry_count();
    let noise = noise_vector(spec, count);
    let per_slice = data.rows() * data.cols();
    let slices = data
        .slices()
        .iter()
        .zip(noise.chunks(per_slice))
        .map(|(s, chunk)| s + DMatrix::from_column_slice(s.nrows(), s.ncols(), chunk))
        .collect();
    Ok(Noisy {
        data: PointGrid::new(slices)?,
        variance: spec.amplitude * spec.amplitude / count as f64,
    })
}

/// `‖fit − reference‖_F / ‖reference‖_F`.
pub fn relative_error(fit: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<f64> {
    let den = reference.norm();
    if den == 0.0 {
        return Err(FitError::ZeroReference);
    }
    Ok((fit - reference).norm() / den)
}

pub fn relative_error_grid(fit: &PointGrid, reference: &PointGrid) -> Result<f64> {
    let den = reference.norm_squared().sqrt();
    if den == 0.0 {
        return Err(FitError::ZeroReference);
    }
    Ok(fit.sub(reference).norm_squared().sqrt() / den)
}

/// `E = ‖A p − A p̄‖_F / ‖A p̄‖_F`.
pub fn fit_error(a: &DMatrix<f64>, p_fit: &DMatrix<f64>, p_bar: &DMatrix<f64>) -> Result<f64> {
    relative_error(&(a * p_fit), &(a * p_bar))
}

/// `‖A p − A p̄‖_F² / ‖A p̄‖_F²`.
pub fn fit_error_squared(a: &DMatrix<f64>, p_fit: &DMatrix<f64>, p_bar: &DMatrix<f64>) -> Result<f64> {
    fit_error(a, p_fit, p_bar).map(|e| e * e)
}

/// `E = ‖A P Bᵀ − A P̄ Bᵀ‖_F / ‖A P̄ Bᵀ‖_F` over all coordinates.
pub fn fit_error_surface(a: &DMatrix<f64>, b: &DMatrix<f64>, p_fit: &PointGrid, p_bar: &PointGrid) -> Result<f64> {
    relative_error_grid(&p_fit.sandwich(a, b), &p_bar.sandwich(a, b))
}

pub fn fit_error_surface_squared(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p_fit: &PointGrid,
    p_bar: &PointGrid,
) -> Result<f64> {
    fit_error_surface(a, b, p_fit, p_bar).map(|e| e * e)
}
