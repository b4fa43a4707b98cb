use serde::Serialize;

use super::grid::{CellSet, GridSpec, TimeSlicedGrid};
use super::BridgeError;

/// Dilation of one slice by `radius` cells in the Chebyshev metric
/// (separable running max along each axis).
pub fn dilate_slice(spec: &GridSpec, set: &CellSet, radius: usize) -> CellSet {
    if radius == 0 || set.is_empty() {
        return set.clone();
    }
    let total = spec.cell_count();
    let strides = spec.strides();
    let mut cur: Vec<bool> = (0..total).map(|c| set.contains(c)).collect();
    let mut next = vec![false; total];
    for (axis, &n) in spec.cells().iter().enumerate() {
        let s = strides[axis];
        for c in 0..total {
            let i = (c / s) % n;
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n - 1);
            let base = c - i * s;
            next[c] = (lo..=hi).any(|j| cur[base + j * s]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    CellSet::from_fn(total, |c| cur[c])
}

pub fn dilate(grid: &TimeSlicedGrid, radius: usize) -> TimeSlicedGrid {
    let slices = grid.slices().iter().map(|s| dilate_slice(grid.spec(), s, radius)).collect();
    TimeSlicedGrid::from_slices(grid.spec(), slices).expect("layout preserved")
}

/// Erosion by `radius` cells; the region outside the grid box does not
/// erode.
pub fn erode(grid: &TimeSlicedGrid, radius: usize) -> TimeSlicedGrid {
    dilate(&grid.complement(), radius).complement()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridComparison {
    pub symmetric_difference: usize,
    pub a_cells: usize,
    pub b_cells: usize,
    pub a_in_dilated_b: bool,
    pub b_in_dilated_a: bool,
    pub dilation_radius: usize,
}

impl GridComparison {
    pub fn mutual_inclusion(&self) -> bool {
        self.a_in_dilated_b && self.b_in_dilated_a
    }
}

pub fn compare_grids(a: &TimeSlicedGrid, b: &TimeSlicedGrid, radius: usize) -> Result<GridComparison, BridgeError> {
    a.check_same_spec(b)?;
    let symmetric_difference = a.slices().iter().zip(b.slices()).map(|(x, y)| x.symmetric_difference_count(y)).sum();
    Ok(GridComparison {
        symmetric_difference,
        a_cells: a.count(),
        b_cells: b.count(),
        a_in_dilated_b: a.is_subset(&dilate(b, radius)),
        b_in_dilated_a: b.is_subset(&dilate(a, radius)),
        dilation_radius: radius,
    })
}
