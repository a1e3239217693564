use nalgebra::DMatrix;

use crate::error::{FitError, Result};

/// A rectangular grid of d-dimensional points, stored as one matrix per coordinate.
///
/// Slice `f` holds coordinate `f` of every grid point: entry `(h, l)` is the
/// value at row `h`, column `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGrid {
    slices: Vec<DMatrix<f64>>,
}

impl PointGrid {
    pub fn new(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| FitError::DimensionMismatch("grid needs at least one coordinate".into()))?;
        let shape = first.shape();
        if slices.iter().any(|s| s.shape() != shape) {
            return Err(FitError::DimensionMismatch(
                "all coordinate slices must share one shape".into(),
            ));
        }
        Ok(Self { slices })
    }

    pub fn zeros(rows: usize, cols: usize, dim: usize) -> Self {
        Self {
            slices: vec![DMatrix::zeros(rows, cols); dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.slices[0].ncols()
    }

    pub fn dim(&self) -> usize {
        self.slices.len()
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.slices
    }

    pub fn into_slices(self) -> Vec<DMatrix<f64>> {
        self.slices
    }

    /// The point stored at `(row, col)`.
    pub fn point(&self, row: usize, col: usize) -> Vec<f64> {
        self.slices.iter().map(|s| s[(row, col)]).collect()
    }

    pub fn norm_squared(&self) -> f64 {
        self.slices.iter().map(|s| s.norm_squared()).sum()
    }

    pub fn entry_count(&self) -> usize {
        self.rows() * self.cols() * self.dim()
    }

    /// Applies `f` to every slice, producing a new grid.
    pub fn map_slices(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> PointGrid {
        PointGrid {
            slices: self.slices.iter().map(f).collect(),
        }
    }

    /// `M · slice · Nᵀ` for every slice.
    pub fn sandwich(&self, left: &DMatrix<f64>, right: &DMatrix<f64>) -> PointGrid {
        self.map_slices(|s| left * s * right.transpose())
    }

    pub fn sub(&self, other: &PointGrid) -> PointGrid {
        PointGrid {
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}
