//! Inverse-distance-weighted interpolation of station values onto the grid.

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, RasterField};

/// Precomputed interpolation weights for a fixed station layout.
///
/// Weights are stored unnormalized so stations with missing values can be
/// dropped per call; a cell lying within half a cell of a station snaps to
/// that station exactly.
#[derive(Debug, Clone)]
pub struct IdwWeights {
    grid: GridGeometry,
    n_stations: usize,
    /// Row-major `n_cells x n_stations` matrix of d^(-exponent).
    weights: Vec<f64>,
    /// Per cell: index of a coincident station, if any.
    exact: Vec<Option<u32>>,
}

impl IdwWeights {
    pub fn build(stations: &[(f64, f64)], grid: &GridGeometry, exponent: f64) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::InvalidInput("IDW needs at least one station".into()));
        }
        if !(exponent > 0.0) {
            return Err(Error::InvalidInput(format!(
                "IDW exponent must be > 0, got {exponent}"
            )));
        }
        let n_cells = grid.n_cells();
        let n_stations = stations.len();
        let snap = grid.cellsize * 0.5;
        let mut weights = vec![0.0; n_cells * n_stations];
        let mut exact = vec![None; n_cells];

        for row in 0..grid.nrows {
            for col in 0..grid.ncols {
                let cell = grid.index(row, col);
                let (cx, cy) = grid.cell_center(row, col);
                let mut nearest = (f64::INFINITY, 0usize);
                for (s, &(sx, sy)) in stations.iter().enumerate() {
                    let d = ((cx - sx).powi(2) + (cy - sy).powi(2)).sqrt();
                    if d < nearest.0 {
                        nearest = (d, s);
                    }
                    weights[cell * n_stations + s] = d.max(1e-9).powf(-exponent);
                }
                if nearest.0 <= snap {
                    exact[cell] = Some(nearest.1 as u32);
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            n_stations,
            weights,
            exact,
        })
    }

    /// Interpolate one value per station onto the grid. Stations with
    /// non-finite values are ignored; at least one must remain.
    pub fn interpolate(&self, values: &[f64]) -> Result<RasterField> {
        if values.len() != self.n_stations {
            return Err(Error::InvalidInput(format!(
                "expected {} station values, got {}",
                self.n_stations,
                values.len()
            )));
        }
        let finite: Vec<usize> = (0..values.len())
            .filter(|&s| values[s].is_finite())
            .collect();
        if finite.is_empty() {
            return Err(Error::InvalidInput("no station has a finite value".into()));
        }
        if finite.len() == 1 {
            return Ok(RasterField::new_filled(
                self.grid.clone(),
                values[finite[0]],
            ));
        }
        let mut out = RasterField::new_filled(self.grid.clone(), 0.0);
        for cell in 0..self.grid.n_cells() {
            let v = match self.exact[cell] {
                Some(s) if values[s as usize].is_finite() => values[s as usize],
                _ => {
                    let row = &self.weights[cell * self.n_stations..(cell + 1) * self.n_stations];
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for (s, &w) in row.iter().enumerate() {
                        if values[s].is_finite() {
                            num += w * values[s];
                            den += w;
                        }
                    }
                    num / den
                }
            };
            out.set(cell, v);
        }
        Ok(out)
    }
}

/// One-shot interpolation of `(x, y, value)` stations onto a grid.
pub fn idw_interpolate(
    stations: &[(f64, f64, f64)],
    grid: &GridGeometry,
    exponent: f64,
) -> Result<RasterField> {
    let positions: Vec<(f64, f64)> = stations.iter().map(|&(x, y, _)| (x, y)).collect();
    let values: Vec<f64> = stations.iter().map(|&(_, _, v)| v).collect();
    IdwWeights::build(&positions, grid, exponent)?.interpolate(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridGeometry {
        GridGeometry::new(4, 4, 10.0, 0.0, 0.0, -9999.0).unwrap()
    }

    #[test]
    fn single_station_gives_constant_field() {
        let field = idw_interpolate(&[(100.0, 100.0, 7.5)], &grid(), 2.0).unwrap();
        for (_, v) in field.iter_valid() {
            assert_eq!(v, 7.5);
        }
    }

    #[test]
    fn equidistant_stations_average() {
        // Cell (1, 1) center is (15, 25); put stations symmetric about it.
        let stations = [(15.0, 125.0, 0.0), (15.0, -75.0, 10.0)];
        let field = idw_interpolate(&stations, &grid(), 2.0).unwrap();
        let g = grid();
        let v = field.get(g.index(1, 1));
        assert!((v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_value_matches_hand_sum() {
        // Station A at distance 1 with value 10, station B at distance 2 with
        // value 4, exponent 2: (10*1 + 4*0.25) / 1.25 = 8.8.
        let g = GridGeometry::new(1, 1, 0.5, 0.0, 0.0, -9999.0).unwrap();
        // Cell center (0.25, 0.25); keep stations beyond the snap radius.
        let stations = [(1.25, 0.25, 10.0), (2.25, 0.25, 4.0)];
        let field = idw_interpolate(&stations, &g, 2.0).unwrap();
        assert!((field.get(0) - 8.8).abs() < 1e-12);
    }

    #[test]
    fn station_on_cell_takes_exact_value() {
        let g = grid();
        let (cx, cy) = g.cell_center(2, 3);
        let stations = [(cx + 1.0, cy, 42.0), (200.0, 200.0, 0.0)];
        let field = idw_interpolate(&stations, &g, 2.0).unwrap();
        assert_eq!(field.get(g.index(2, 3)), 42.0);
    }

    #[test]
    fn zero_stations_rejected() {
        assert!(idw_interpolate(&[], &grid(), 2.0).is_err());
    }

    #[test]
    fn output_bounded_by_station_range() {
        let stations = [(0.0, 0.0, 1.0), (40.0, 40.0, 9.0), (0.0, 40.0, 4.0)];
        let field = idw_interpolate(&stations, &grid(), 2.0).unwrap();
        for (_, v) in field.iter_valid() {
            assert!((1.0..=9.0).contains(&v), "value {v} escapes station range");
        }
    }
}
