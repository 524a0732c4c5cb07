//! DEM conditioning and D8 flow topology.
//!
//! Surface routing needs every in-domain cell to have a strictly descending
//! path to the declared outlet. [`condition_dem`] enforces that with a
//! priority-flood pass seeded at the outlet, raising pit and flat cells just
//! enough that each one drains with a gradient of at least `min_slope`.
//! [`build_flow_topology`] then assigns each cell its steepest-descent
//! neighbor and the friction slope used by the routing kernel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::grid::RasterField;

/// D8 neighbor offsets (row, col) in order N, NE, E, SE, S, SW, W, NW.
pub const D8_OFFSETS: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

const SQRT2: f64 = std::f64::consts::SQRT_2;
/// Center-to-center distance factor for each D8 direction.
pub const D8_DIST: [f64; 8] = [1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2];

/// Where a cell sends its outflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownstreamLink {
    /// Flow goes to this cell index.
    To(u32),
    /// This is the outlet cell; flow leaves the domain.
    Outlet,
    /// Outside the domain; carries no flow.
    Nodata,
}

/// Single-direction (D8) drainage structure over a conditioned DEM.
#[derive(Debug, Clone)]
pub struct FlowTopology {
    downstream: Vec<DownstreamLink>,
    friction_slope: Vec<f64>,
    outlet_cell: usize,
    n_routed: usize,
}

impl FlowTopology {
    #[inline]
    pub fn downstream(&self, index: usize) -> DownstreamLink {
        self.downstream[index]
    }

    /// Friction slope (dimensionless, > 0 on routed cells).
    #[inline]
    pub fn friction_slope(&self, index: usize) -> f64 {
        self.friction_slope[index]
    }

    pub fn outlet_cell(&self) -> usize {
        self.outlet_cell
    }

    pub fn n_cells(&self) -> usize {
        self.downstream.len()
    }

    /// Number of in-domain cells.
    pub fn n_routed(&self) -> usize {
        self.n_routed
    }

    pub fn is_routed(&self, index: usize) -> bool {
        self.downstream[index] != DownstreamLink::Nodata
    }

    /// Number of downstream hops from `index` to the outlet.
    pub fn path_length_to_outlet(&self, index: usize) -> Option<usize> {
        let mut hops = 0;
        let mut at = index;
        loop {
            match self.downstream[at] {
                DownstreamLink::Outlet => return Some(hops),
                DownstreamLink::Nodata => return None,
                DownstreamLink::To(next) => {
                    hops += 1;
                    if hops > self.downstream.len() {
                        return None;
                    }
                    at = next as usize;
                }
            }
        }
    }
}

/// Heap entry for the priority flood; pops lowest elevation first, ties
/// broken by insertion order so conditioning is deterministic.
struct FloodCell {
    z: f64,
    seq: u64,
    index: u32,
}

impl PartialEq for FloodCell {
    fn eq(&self, other: &Self) -> bool {
        self.z == other.z && self.seq == other.seq
    }
}
impl Eq for FloodCell {}
impl Ord for FloodCell {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the lowest z first.
        other
            .z
            .total_cmp(&self.z)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for FloodCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn neighbors(
    geometry: &crate::grid::GridGeometry,
    index: usize,
) -> impl Iterator<Item = (usize, usize)> + '_ {
    let (row, col) = geometry.row_col(index);
    D8_OFFSETS
        .iter()
        .enumerate()
        .filter_map(move |(k, &(dr, dc))| {
            let nr = row as isize + dr;
            let nc = col as isize + dc;
            if nr < 0 || nc < 0 || nr >= geometry.nrows as isize || nc >= geometry.ncols as isize {
                None
            } else {
                Some((geometry.index(nr as usize, nc as usize), k))
            }
        })
}

/// Fill sinks and enforce a minimum drainage gradient toward `outlet`.
///
/// Priority-flood seeded at the outlet cell: cells are visited lowest-first,
/// and any neighbor that would not drain with at least `min_slope` toward the
/// already-conditioned region is raised to the smallest elevation that does.
/// The outlet itself and cells already draining keep their elevations, so the
/// pass is idempotent. Nodata cells are impermeable and never visited.
pub fn condition_dem(dem: &RasterField, outlet: usize, min_slope: f64) -> Result<RasterField> {
    let geometry = dem.geometry();
    if dem.n_valid() == 0 {
        return Err(Error::InvalidInput("DEM has no in-domain cells".into()));
    }
    if outlet >= geometry.n_cells() || dem.is_nodata(outlet) {
        return Err(Error::InvalidInput(format!(
            "outlet cell {outlet} is outside the domain"
        )));
    }
    if !(min_slope >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "min_slope must be >= 0, got {min_slope}"
        )));
    }

    let n = geometry.n_cells();
    let mut out = dem.clone();
    let mut visited: Vec<bool> = (0..n).map(|i| dem.is_nodata(i)).collect();

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(FloodCell {
        z: out.get(outlet),
        seq,
        index: outlet as u32,
    });
    visited[outlet] = true;

    while let Some(cell) = heap.pop() {
        let index = cell.index as usize;
        let z_here = out.get(index);
        for (nbr, dir) in neighbors(geometry, index) {
            if visited[nbr] {
                continue;
            }
            visited[nbr] = true;
            let required = z_here + min_slope * D8_DIST[dir] * geometry.cellsize;
            if out.get(nbr) < required {
                out.set(nbr, required);
            }
            seq += 1;
            heap.push(FloodCell {
                z: out.get(nbr),
                seq,
                index: nbr as u32,
            });
        }
    }

    let unreached = (0..n).filter(|&i| !visited[i]).count();
    if unreached > 0 {
        return Err(Error::InvalidInput(format!(
            "{unreached} in-domain cells are not connected to the outlet"
        )));
    }
    Ok(out)
}

/// Assign each cell the neighbor that maximizes the descent gradient
/// (z_center - z_neighbor) / distance, with diagonal distance cellsize * sqrt(2).
///
/// The DEM must be conditioned: every non-outlet cell needs at least one
/// strictly lower neighbor. The outlet uses a free-outfall slope equal to its
/// steepest inbound gradient, floored at `outlet_slope_floor` so an isolated
/// or flat outlet still has a positive friction slope.
pub fn build_flow_topology(
    dem: &RasterField,
    outlet: usize,
    outlet_slope_floor: f64,
) -> Result<FlowTopology> {
    let geometry = dem.geometry();
    if outlet >= geometry.n_cells() || dem.is_nodata(outlet) {
        return Err(Error::InvalidInput(format!(
            "outlet cell {outlet} is outside the domain"
        )));
    }
    if !(outlet_slope_floor > 0.0) {
        return Err(Error::InvalidInput(format!(
            "outlet_slope_floor must be > 0, got {outlet_slope_floor}"
        )));
    }

    let n = geometry.n_cells();
    let mut downstream = vec![DownstreamLink::Nodata; n];
    let mut friction_slope = vec![0.0; n];
    let mut n_routed = 0usize;

    for index in 0..n {
        if dem.is_nodata(index) {
            continue;
        }
        n_routed += 1;
        let z_here = dem.get(index);

        if index == outlet {
            let steepest_in = neighbors(geometry, index)
                .filter(|&(nbr, _)| !dem.is_nodata(nbr))
                .map(|(nbr, dir)| (dem.get(nbr) - z_here) / (D8_DIST[dir] * geometry.cellsize))
                .fold(0.0f64, f64::max);
            downstream[index] = DownstreamLink::Outlet;
            friction_slope[index] = steepest_in.max(outlet_slope_floor);
            continue;
        }

        let mut best: Option<(usize, f64)> = None;
        for (nbr, dir) in neighbors(geometry, index) {
            if dem.is_nodata(nbr) {
                continue;
            }
            let gradient = (z_here - dem.get(nbr)) / (D8_DIST[dir] * geometry.cellsize);
            if gradient > 0.0 && best.is_none_or(|(_, g)| gradient > g) {
                best = Some((nbr, gradient));
            }
        }
        match best {
            Some((nbr, gradient)) => {
                downstream[index] = DownstreamLink::To(nbr as u32);
                friction_slope[index] = gradient;
            }
            None => {
                let (row, col) = geometry.row_col(index);
                return Err(Error::NeedsConditioning(format!(
                    "cell ({row}, {col}) has no descending neighbor"
                )));
            }
        }
    }

    let topology = FlowTopology {
        downstream,
        friction_slope,
        outlet_cell: outlet,
        n_routed,
    };

    // Every routed cell must reach the outlet in at most n hops; a failure
    // here means a cycle or a stranded cell slipped through conditioning.
    for index in 0..n {
        if topology.is_routed(index) && topology.path_length_to_outlet(index).is_none() {
            let (row, col) = geometry.row_col(index);
            return Err(Error::Internal(format!(
                "flow path from cell ({row}, {col}) does not terminate at the outlet"
            )));
        }
    }
    Ok(topology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    fn geometry(ncols: usize, nrows: usize, cellsize: f64) -> GridGeometry {
        GridGeometry::new(ncols, nrows, cellsize, 0.0, 0.0, -9999.0).unwrap()
    }

    /// Plane descending east: z = slope * (ncols - 1 - col) * cellsize.
    fn east_plane(ncols: usize, nrows: usize, cellsize: f64, slope: f64) -> RasterField {
        let g = geometry(ncols, nrows, cellsize);
        let mut values = Vec::with_capacity(g.n_cells());
        for _row in 0..nrows {
            for col in 0..ncols {
                values.push(slope * (ncols - 1 - col) as f64 * cellsize);
            }
        }
        RasterField::from_values(g, values).unwrap()
    }

    /// East-descending plane with a slight cross-fall toward the middle row,
    /// so every cell already drains monotonically to an outlet at (mid, east).
    fn drained_plane(ncols: usize, nrows: usize, cellsize: f64, slope: f64) -> RasterField {
        let g = geometry(ncols, nrows, cellsize);
        let mid = nrows / 2;
        let mut values = Vec::with_capacity(g.n_cells());
        for row in 0..nrows {
            for col in 0..ncols {
                let cross = (row as isize - mid as isize).unsigned_abs() as f64;
                values.push(slope * (ncols - 1 - col) as f64 * cellsize + 0.002 * cross * cellsize);
            }
        }
        RasterField::from_values(g, values).unwrap()
    }

    #[test]
    fn conditioning_leaves_monotone_plane_unchanged() {
        let dem = drained_plane(3, 3, 10.0, 0.01);
        let outlet = dem.geometry().index(1, 2);
        let out = condition_dem(&dem, outlet, 0.001).unwrap();
        assert_eq!(out.values(), dem.values());
    }

    #[test]
    fn conditioning_raises_center_pit_to_lowest_neighbor_plus_epsilon() {
        // Hand enumeration of the 9-cell fill rule: the pit's lowest neighbor
        // is the east (cardinal) outlet cell at z = 0.0, so the pit must come
        // to rest at 0.0 + min_slope * cellsize.
        let mut dem = drained_plane(3, 3, 10.0, 0.01);
        let g = dem.geometry().clone();
        let center = g.index(1, 1);
        dem.set(center, dem.get(center) - 1.0);
        let outlet = g.index(1, 2);
        let out = condition_dem(&dem, outlet, 0.001).unwrap();
        let expected = 0.0 + 0.001 * 10.0;
        assert!((out.get(center) - expected).abs() < 1e-12);
        // All other cells untouched.
        for i in 0..g.n_cells() {
            if i != center {
                assert_eq!(out.get(i), dem.get(i));
            }
        }
    }

    #[test]
    fn conditioning_carves_flat_raster_toward_outlet() {
        let g = geometry(3, 3, 10.0);
        let dem = RasterField::new_filled(g.clone(), 5.0);
        let outlet = g.index(1, 2);
        let out = condition_dem(&dem, outlet, 0.001).unwrap();
        // Outlet keeps its elevation; every cell drains with >= 0.01 m drops.
        assert_eq!(out.get(outlet), 5.0);
        let topo = build_flow_topology(&out, outlet, 0.001).unwrap();
        for i in 0..g.n_cells() {
            assert!(topo.path_length_to_outlet(i).is_some());
            assert!(topo.friction_slope(i) >= 0.001 - 1e-15);
        }
        // Cardinal neighbors of the outlet sit exactly one epsilon drop above.
        assert!((out.get(g.index(0, 2)) - 5.01).abs() < 1e-12);
        assert!((out.get(g.index(1, 1)) - 5.01).abs() < 1e-12);
    }

    #[test]
    fn conditioning_is_idempotent() {
        let g = geometry(8, 8, 10.0);
        let mut values = Vec::new();
        // Deterministic bumpy surface with several pits.
        for row in 0..8 {
            for col in 0..8 {
                let z = ((row * 31 + col * 17) % 11) as f64 * 0.3 + col as f64 * 0.05;
                values.push(z);
            }
        }
        let dem = RasterField::from_values(g.clone(), values).unwrap();
        let outlet = g.index(7, 0);
        let once = condition_dem(&dem, outlet, 0.001).unwrap();
        let twice = condition_dem(&once, outlet, 0.001).unwrap();
        assert_eq!(once.values(), twice.values());
    }

    #[test]
    fn conditioning_rejects_all_nodata() {
        let g = geometry(2, 2, 10.0);
        let dem = RasterField::new_filled(g, -9999.0);
        assert!(matches!(
            condition_dem(&dem, 0, 0.001),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn tilted_plane_routes_east_with_plane_slope() {
        let dem = east_plane(5, 3, 10.0, 0.02);
        let g = dem.geometry().clone();
        let outlet = g.index(1, 4);
        let conditioned = condition_dem(&dem, outlet, 0.0005).unwrap();
        let topo = build_flow_topology(&conditioned, outlet, 0.0005).unwrap();
        // Interior cells (not on the east edge) point due east at the plane slope.
        for row in 0..3 {
            for col in 0..3 {
                let i = g.index(row, col);
                assert_eq!(
                    topo.downstream(i),
                    DownstreamLink::To(g.index(row, col + 1) as u32)
                );
                assert!((topo.friction_slope(i) - 0.02).abs() < 1e-12);
            }
        }
        assert_eq!(topo.downstream(outlet), DownstreamLink::Outlet);
        // Free outfall: outlet slope continues the inbound grade.
        assert!((topo.friction_slope(outlet) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn v_valley_routes_hillslopes_to_valley_line() {
        // Valley along col 2 descending south; hillslopes rise to both sides.
        let g = geometry(5, 5, 10.0);
        let mut values = Vec::new();
        for row in 0..5i64 {
            for col in 0..5i64 {
                let cross = (col - 2).abs() as f64;
                values.push((4 - row) as f64 * 0.5 + cross * 2.0);
            }
        }
        let dem = RasterField::from_values(g.clone(), values).unwrap();
        let outlet = g.index(4, 2);
        let topo = build_flow_topology(&dem, outlet, 0.001).unwrap();

        // Brute-force gradient comparison over all 8 neighbors per cell.
        for index in 0..g.n_cells() {
            if index == outlet {
                continue;
            }
            let chosen = match topo.downstream(index) {
                DownstreamLink::To(i) => i as usize,
                other => panic!("cell {index} should route to a neighbor, got {other:?}"),
            };
            let z_here = dem.get(index);
            let mut best = f64::NEG_INFINITY;
            let mut best_idx = usize::MAX;
            for (nbr, dir) in neighbors(&g, index) {
                let gradient = (z_here - dem.get(nbr)) / (D8_DIST[dir] * 10.0);
                if gradient > best {
                    best = gradient;
                    best_idx = nbr;
                }
            }
            assert_eq!(chosen, best_idx);
            assert!((topo.friction_slope(index) - best).abs() < 1e-12);
        }
        // Valley cells point down-valley (south), hillslope cells toward the valley.
        assert_eq!(
            topo.downstream(g.index(1, 2)),
            DownstreamLink::To(g.index(2, 2) as u32)
        );
        match topo.downstream(g.index(2, 0)) {
            DownstreamLink::To(i) => {
                let (_, col) = g.row_col(i as usize);
                assert!(col > 0, "west hillslope must drain toward the valley");
            }
            other => panic!("unexpected link {other:?}"),
        }
    }

    #[test]
    fn single_cell_domain_is_the_outlet() {
        let g = geometry(1, 1, 10.0);
        let dem = RasterField::new_filled(g, 3.0);
        let topo = build_flow_topology(&dem, 0, 0.001).unwrap();
        assert_eq!(topo.downstream(0), DownstreamLink::Outlet);
        assert!(topo.friction_slope(0) > 0.0);
    }

    #[test]
    fn unconditioned_pit_is_reported() {
        let mut dem = east_plane(3, 3, 10.0, 0.01);
        let center = dem.geometry().index(1, 1);
        dem.set(center, dem.get(center) - 1.0);
        let outlet = dem.geometry().index(1, 2);
        assert!(matches!(
            build_flow_topology(&dem, outlet, 0.001),
            Err(Error::NeedsConditioning(_))
        ));
    }

    #[test]
    fn nodata_cells_are_walls() {
        let g = geometry(3, 3, 10.0);
        let mut dem = east_plane(3, 3, 10.0, 0.01);
        dem.set(g.index(0, 1), -9999.0);
        let outlet = g.index(1, 2);
        let conditioned = condition_dem(&dem, outlet, 0.001).unwrap();
        let topo = build_flow_topology(&conditioned, outlet, 0.001).unwrap();
        assert!(!topo.is_routed(g.index(0, 1)));
        // The cell west of the hole still drains (around it).
        assert!(topo.path_length_to_outlet(g.index(0, 0)).is_some());
    }
}
