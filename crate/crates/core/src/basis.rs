//! Cubic B-spline machinery: chord-length parametrization, knot placement and
//! basis evaluation.
//!
//! The evaluator is degree-generic (Cox–de Boor triangle), but every knot
//! vector built here is clamped cubic.

use nalgebra::DMatrix;

use crate::error::{FitError, Result};
use crate::grid::PointGrid;

/// Degree used by every knot vector in this crate.
pub const CUBIC: usize = 3;

/// Strictly increasing data parameters spanning `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSequence(Vec<f64>);

impl ParamSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(FitError::DegenerateData(
                "a parameter sequence needs at least two values".into(),
            ));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 1.0 {
            return Err(FitError::DegenerateData(
                "parameter sequence must start at 0 and end at 1".into(),
            ));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(FitError::DegenerateData(
                "parameter sequence must be strictly increasing".into(),
            ));
        }
        Ok(Self(values))
    }

    /// Evenly spaced parameters `j / m`, `j = 0..=m`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(FitError::DegenerateData("need m >= 1".into()));
        }
        let mut values: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
        values[m] = 1.0;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Turns cumulative chord lengths into normalized parameters.
///
/// Zero-length chords would repeat a parameter; the repeated value is nudged
/// one ulp upward (and, at the very end, the tail is nudged downward so the
/// last value stays exactly 1).
fn normalize_chords(chords: &[f64], what: &str) -> Result<ParamSequence> {
    let total: f64 = chords.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FitError::DegenerateData(format!(
            "total {what} chord length is {total}"
        )));
    }
    let mut values = Vec::with_capacity(chords.len() + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for c in chords {
        acc += c / total;
        values.push(acc);
    }
    let last = values.len() - 1;
    values[last] = 1.0;

    let mut nudged = 0usize;
    for j in 1..last {
        if values[j] <= values[j - 1] {
            values[j] = values[j - 1].next_up();
            nudged += 1;
        }
    }
    for j in (1..last).rev() {
        if values[j] >= values[j + 1] {
            values[j] = values[j + 1].next_down();
            nudged += 1;
        }
    }
    if nudged > 0 {
        log::warn!("{nudged} duplicate consecutive {what} points; parameters perturbed by one ulp");
    }
    ParamSequence::new(values)
}

/// Normalized accumulated chord-length parameters for an ordered point list
/// (one point per row).
pub fn chord_length_params(points: &DMatrix<f64>) -> Result<ParamSequence> {
    if points.nrows() < 2 {
        return Err(FitError::DegenerateData(
            "chord-length parametrization needs at least two points".into(),
        ));
    }
    let chords: Vec<f64> = (1..points.nrows())
        .map(|j| (points.row(j) - points.row(j - 1)).norm())
        .collect();
    normalize_chords(&chords, "curve")
}

/// Parameters for both directions of a point grid.
///
/// The row-direction chord between grid rows `h-1` and `h` is the sum of the
/// point distances across every column; the column direction is analogous.
pub fn surface_params(grid: &PointGrid) -> Result<(ParamSequence, ParamSequence)> {
    let (rows, cols) = (grid.rows(), grid.cols());
    if rows < 2 || cols < 2 {
        return Err(FitError::DegenerateData(
            "surface parametrization needs at least a 2x2 grid".into(),
        ));
    }
    let dist = |a: (usize, usize), b: (usize, usize)| -> f64 {
        grid.slices()
            .iter()
            .map(|s| (s[a] - s[b]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let row_chords: Vec<f64> = (1..rows)
        .map(|h| (0..cols).map(|t| dist((h, t), (h - 1, t))).sum())
        .collect();
    let col_chords: Vec<f64> = (1..cols)
        .map(|l| (0..rows).map(|s| dist((s, l), (s, l - 1))).sum())
        .collect();
    Ok((
        normalize_chords(&row_chords, "row-direction")?,
        normalize_chords(&col_chords, "column-direction")?,
    ))
}

/// One nonzero basis function value at a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValue {
    pub index: usize,
    pub value: f64,
}

/// Clamped, nondecreasing knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    /// Clamped knot vector on `[0, 1]` with the given interior knots.
    pub fn clamped(interior: &[f64], degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(FitError::InvalidConfig("degree must be positive".into()));
        }
        if interior.iter().any(|&k| !(k > 0.0 && k < 1.0)) {
            return Err(FitError::InvalidConfig(
                "interior knots must lie strictly inside (0, 1)".into(),
            ));
        }
        if interior.windows(2).any(|w| w[1] < w[0]) {
            return Err(FitError::InvalidConfig("knots must be nondecreasing".into()));
        }
        let mut knots = vec![0.0; degree + 1];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self { knots, degree })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions, `n₁ + 1`.
    pub fn basis_count(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn interior(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.knots.len() - self.degree - 1]
    }

    /// Knot span containing `x`; interior knots belong to the span on their
    /// right, and `x = 1` falls in the last span.
    fn span(&self, x: f64) -> usize {
        let last = self.basis_count() - 1;
        if x >= 1.0 {
            return last;
        }
        let above = self.knots.partition_point(|&k| k <= x);
        (above - 1).clamp(self.degree, last)
    }

    /// Nonzero basis values at `x`, a contiguous run of at most `degree + 1`
    /// indices summing to one.
    pub fn eval_basis(&self, x: f64) -> Result<Vec<BasisValue>> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FitError::OutOfDomain(x));
        }
        let p = self.degree;
        let k = self.span(x);
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[k + 1 - j];
            right[j] = u[k + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok(n
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .map(|(r, value)| BasisValue {
                index: k - p + r,
                value,
            })
            .collect())
    }
}

/// Cubic knot vector for `n₁ + 1` control points over the given parameters.
///
/// Interior knots are `(1-a)·x[i-1] + a·x[i]` with `i = ⌊j·d⌋`, `a = j·d - i`,
/// `d = (m+1)/(n₁-2)`, for `j = 1..=n₁-3`.
pub fn build_knots(params: &ParamSequence, n_ctrl_minus1: usize) -> Result<KnotVector> {
    let n1 = n_ctrl_minus1;
    if n1 < CUBIC {
        return Err(FitError::InvalidConfig(format!(
            "need at least {} control points for a cubic basis, got {}",
            CUBIC + 1,
            n1 + 1
        )));
    }
    let x = params.values();
    let interior: Vec<f64> = if n1 == CUBIC {
        Vec::new()
    } else {
        let d = x.len() as f64 / (n1 - 2) as f64;
        if d < 1.0 {
            return Err(FitError::InvalidConfig(format!(
                "{} data points cannot support {} control points",
                x.len(),
                n1 + 1
            )));
        }
        (1..=n1 - 3)
            .map(|j| {
                let jd = j as f64 * d;
                let i = jd.floor() as usize;
                let a = jd - i as f64;
                (1.0 - a) * x[i - 1] + a * x[i]
            })
            .collect()
    };
    KnotVector::clamped(&interior, CUBIC)
}
