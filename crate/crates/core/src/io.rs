//! CSV point files.
//!
//! Curves: header `x,y` or `x,y,z`, one point per row. Surfaces: long format
//! `row,col,x,y,z`, one grid cell per row, every cell exactly once. Values are
//! written with 17 significant digits so a save/load cycle is lossless.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{FitError, Result};
use crate::grid::PointGrid;

const COORDS: [&str; 3] = ["x", "y", "z"];

/// 17 significant digits, enough to round-trip any f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> FitError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FitError::Io(io),
        kind => FitError::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, what: &str) -> Result<T> {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    let raw = record.get(idx).ok_or_else(|| FitError::Parse {
        line,
        message: format!("missing column {what}"),
    })?;
    raw.trim().parse().map_err(|_| FitError::Parse {
        line,
        message: format!("cannot parse {what} value {raw:?}"),
    })
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&[&str]]) -> Result<usize> {
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    expected
        .iter()
        .position(|cols| cols.len() == header.len() && cols.iter().zip(&header).all(|(a, b)| a == b))
        .ok_or_else(|| FitError::Parse {
            line: 1,
            message: format!(
                "unexpected header {header:?}, expected one of {:?}",
                expected.iter().map(|c| c.join(",")).collect::<Vec<_>>()
            ),
        })
}

pub fn read_curve(input: impl Read) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let dim = check_header(&mut reader, &[&COORDS[..2], &COORDS[..3]])? + 2;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        for (c, name) in COORDS.iter().enumerate().take(dim) {
            values.push(parse_field::<f64>(&record, c, name)?);
        }
    }
    if values.is_empty() {
        return Err(FitError::DegenerateData("curve file has no points".into()));
    }
    Ok(DMatrix::from_row_slice(values.len() / dim, dim, &values))
}

pub fn write_curve(points: &DMatrix<f64>, output: impl Write) -> Result<()> {
    let dim = points.ncols();
    if !(2..=3).contains(&dim) {
        return Err(FitError::DimensionMismatch(format!("curve points must be 2D or 3D, got {dim}")));
    }
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(&COORDS[..dim]).map_err(csv_error)?;
    for row in points.row_iter() {
        writer
            .write_record(row.iter().map(|v| format_f64(*v)))
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_surface(input: impl Read) -> Result<PointGrid> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut reader, &[&["row", "col", "x", "y", "z"]])?;
    let mut cells: Vec<(usize, usize, [f64; 3])> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = parse_field::<usize>(&record, 0, "row")?;
        let col = parse_field::<usize>(&record, 1, "col")?;
        let mut xyz = [0.0; 3];
        for (c, name) in COORDS.iter().enumerate() {
            xyz[c] = parse_field::<f64>(&record, c + 2, name)?;
        }
        cells.push((row, col, xyz));
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(FitError::IncompleteGrid("surface file has no cells".into()));
    }
    let mut seen = vec![false; rows * cols];
    let mut slices = vec![DMatrix::zeros(rows, cols); 3];
    for (row, col, xyz) in cells {
        let idx = row * cols + col;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(FitError::IncompleteGrid(format!("cell ({row}, {col}) appears twice")));
        }
        for (slice, v) in slices.iter_mut().zip(xyz) {
            slice[(row, col)] = v;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(FitError::IncompleteGrid(format!(
            "cell ({}, {}) of the {rows}x{cols} grid is missing",
            missing / cols,
            missing % cols
        )));
    }
    PointGrid::new(slices)
}

pub fn write_surface(grid: &PointGrid, output: impl Write) -> Result<()> {
    if grid.dim() != 3 {
        return Err(FitError::DimensionMismatch(format!(
            "surface points must be 3D, got {}",
            grid.dim()
        )));
    }
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(["row", "col", "x", "y", "z"]).map_err(csv_error)?;
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            let mut record = vec![row.to_string(), col.to_string()];
            record.extend(grid.point(row, col).into_iter().map(format_f64));
            writer.write_record(&record).map_err(csv_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn load_curve(path: &Path) -> Result<DMatrix<f64>> {
    read_curve(File::open(path)?)
}

pub fn save_curve(points: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_curve(points, File::create(path)?)
}

pub fn load_surface(path: &Path) -> Result<PointGrid> {
    read_surface(File::open(path)?)
}

pub fn save_surface(grid: &PointGrid, path: &Path) -> Result<()> {
    write_surface(grid, File::create(path)?)
}
