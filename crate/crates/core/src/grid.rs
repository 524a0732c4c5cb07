//! Raster geometry and the ESRI ASCII grid format.
//!
//! Every distributed quantity in the model (elevation, depth, roughness,
//! soil class, rainfall) lives on the same regular grid with square cells.
//! Rows are stored north-first, matching the on-disk ASCII layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Default sentinel for cells outside the modeled domain.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// Shape and placement of a raster: square cells, lower-left georeference.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    pub ncols: usize,
    pub nrows: usize,
    /// Cell edge length in meters; x and y spacing are identical.
    pub cellsize: f64,
    /// X coordinate of the lower-left corner (m).
    pub xll: f64,
    /// Y coordinate of the lower-left corner (m).
    pub yll: f64,
    /// Sentinel value marking cells outside the domain.
    pub nodata: f64,
}

impl GridGeometry {
    pub fn new(
        ncols: usize,
        nrows: usize,
        cellsize: f64,
        xll: f64,
        yll: f64,
        nodata: f64,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidInput(format!(
                "grid must have at least one cell, got {ncols}x{nrows}"
            )));
        }
        if !(cellsize > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cellsize must be positive, got {cellsize}"
            )));
        }
        Ok(Self {
            ncols,
            nrows,
            cellsize,
            xll,
            yll,
            nodata,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Row-major cell index with row 0 at the north edge.
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.nrows && col < self.ncols);
        row * self.ncols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.ncols, index % self.ncols)
    }

    /// Center coordinates of a cell in map units.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.xll + (col as f64 + 0.5) * self.cellsize;
        let y = self.yll + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize;
        (x, y)
    }

    /// True when two rasters can be used together in one scenario.
    pub fn compatible_with(&self, other: &GridGeometry) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && (self.cellsize - other.cellsize).abs() <= 1e-6
            && (self.xll - other.xll).abs() <= 1e-6
            && (self.yll - other.yll).abs() <= 1e-6
    }
}

/// A georeferenced grid of per-cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterField {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl RasterField {
    pub fn new_filled(geometry: GridGeometry, value: f64) -> Self {
        let n = geometry.n_cells();
        Self {
            geometry,
            values: vec![value; n],
        }
    }

    pub fn from_values(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.n_cells() {
            return Err(Error::InvalidInput(format!(
                "value count {} does not match grid {}x{}",
                values.len(),
                geometry.ncols,
                geometry.nrows
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index] = value;
    }

    #[inline]
    pub fn is_nodata(&self, index: usize) -> bool {
        let v = self.values[index];
        v.is_nan() || v == self.geometry.nodata
    }

    pub fn n_valid(&self) -> usize {
        (0..self.values.len())
            .filter(|&i| !self.is_nodata(i))
            .count()
    }

    /// Iterate (index, value) over in-domain cells.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_nodata(*i))
            .map(|(i, &v)| (i, v))
    }

    /// Read an ESRI ASCII grid. Header keywords must appear in the canonical
    /// order (`ncols`, `nrows`, `xllcorner`, `yllcorner`, `cellsize`,
    /// `NODATA_value`); keyword case and whitespace are not significant.
    pub fn read_ascii(path: impl AsRef<Path>) -> Result<RasterField> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_ascii(&text).map_err(|detail| Error::parse(path, detail))
    }

    pub fn parse_ascii(text: &str) -> std::result::Result<RasterField, String> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| tokens.next().ok_or_else(|| format!("missing {what}"));

        const KEYWORDS: [&str; 6] = [
            "ncols",
            "nrows",
            "xllcorner",
            "yllcorner",
            "cellsize",
            "nodata_value",
        ];
        let mut header = [0.0f64; 6];
        for (slot, expected) in header.iter_mut().zip(KEYWORDS) {
            let key = next("header keyword")?;
            if !key.eq_ignore_ascii_case(expected) {
                return Err(format!(
                    "expected header keyword `{expected}`, found `{key}`"
                ));
            }
            let raw = next(expected)?;
            *slot = raw
                .parse::<f64>()
                .map_err(|_| format!("invalid numeric value `{raw}` for `{expected}`"))?;
        }

        let ncols = header[0] as usize;
        let nrows = header[1] as usize;
        if header[0].fract() != 0.0 || header[1].fract() != 0.0 || ncols == 0 || nrows == 0 {
            return Err(format!(
                "invalid grid dimensions {}x{}",
                header[0], header[1]
            ));
        }
        let geometry = GridGeometry::new(ncols, nrows, header[4], header[2], header[3], header[5])
            .map_err(|e| e.to_string())?;

        let mut values = Vec::with_capacity(geometry.n_cells());
        for raw in tokens {
            let v = raw
                .parse::<f64>()
                .map_err(|_| format!("invalid cell value `{raw}`"))?;
            values.push(v);
        }
        if values.len() != geometry.n_cells() {
            return Err(format!(
                "expected {} cell values, found {}",
                geometry.n_cells(),
                values.len()
            ));
        }
        Ok(RasterField { geometry, values })
    }

    /// Write the raster in ESRI ASCII format, north row first.
    pub fn write_ascii(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ascii()).map_err(|e| Error::io(path, e))
    }

    pub fn to_ascii(&self) -> String {
        let g = &self.geometry;
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", g.ncols);
        let _ = writeln!(out, "nrows {}", g.nrows);
        let _ = writeln!(out, "xllcorner {}", g.xll);
        let _ = writeln!(out, "yllcorner {}", g.yll);
        let _ = writeln!(out, "cellsize {}", g.cellsize);
        let _ = writeln!(out, "NODATA_value {}", g.nodata);
        for row in 0..g.nrows {
            for col in 0..g.ncols {
                if col > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", self.values[g.index(row, col)]);
            }
            out.push('\n');
        }
        out
    }
}
