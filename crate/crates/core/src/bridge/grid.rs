use serde::{Deserialize, Serialize};

use super::BridgeError;

/// Uniform cell grid over a box of state space together with the uniform
/// time partition `t_i = i·ϑ/N`, `i = 0..=N`.
///
/// Cells are addressed by a flat row-major index (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
    time_steps: usize,
    horizon: f64,
}

impl GridSpec {
    pub fn new(
        bounds: Vec<(f64, f64)>,
        cells: Vec<usize>,
        time_steps: usize,
        horizon: f64,
    ) -> Result<Self, BridgeError> {
        if bounds.is_empty() || bounds.len() != cells.len() {
            return Err(BridgeError::Spec(format!("{} bound pairs for {} cell counts", bounds.len(), cells.len())));
        }
        for (axis, (&(lo, hi), &n)) in bounds.iter().zip(&cells).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(BridgeError::Spec(format!("axis {axis}: degenerate bounds [{lo}, {hi}]")));
            }
            if n < 2 {
                return Err(BridgeError::Spec(format!("axis {axis}: need at least 2 cells, got {n}")));
            }
        }
        if cells.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none_or(|total| total > u32::MAX as usize) {
            return Err(BridgeError::Spec("grid has too many cells".into()));
        }
        if time_steps == 0 {
            return Err(BridgeError::Spec("time_steps must be at least 1".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(BridgeError::Spec(format!("horizon must be positive, got {horizon}")));
        }
        let (lo, hi) = bounds.into_iter().unzip();
        Ok(GridSpec { lo, hi, cells, time_steps, horizon })
    }

    pub fn ndim(&self) -> usize {
        self.cells.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn slice_count(&self) -> usize {
        self.time_steps + 1
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.time_steps as f64
    }

    pub fn time(&self, slice: usize) -> f64 {
        if slice == self.time_steps {
            self.horizon
        } else {
            slice as f64 * self.dt()
        }
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.cells[axis] as f64
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.ndim()).map(|a| self.width(a)).collect()
    }

    /// Length of a cell diagonal.
    pub fn diagonal(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.ndim()];
        for a in (0..self.ndim().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.cells[a + 1];
        }
        s
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.cells).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.ndim()];
        for a in (0..self.ndim()).rev() {
            out[a] = flat % self.cells[a];
            flat /= self.cells[a];
        }
        out
    }

    pub fn center_coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * self.width(axis)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi(flat).iter().enumerate().map(|(a, &i)| self.center_coord(a, i)).collect()
    }

    /// Position in index units: cell `i`'s center maps to `i`. Values within
    /// `1e-9` of an integer are snapped so exact landings stay exact.
    pub fn fractional(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(a, &v)| {
                let f = (v - self.lo[a]) / self.width(a) - 0.5;
                let r = f.round();
                if (f - r).abs() < 1e-9 {
                    r
                } else {
                    f
                }
            })
            .collect()
    }

    /// Whether `x` lies in the closed grid box (with a tiny relative slack).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(a, &v)| {
            let slack = 1e-9 * self.width(a);
            v >= self.lo[a] - slack && v <= self.hi[a] + slack
        })
    }

    /// Cell containing `x` (nearest cell center), or `None` outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.ndim() || !self.contains(x) {
            return None;
        }
        let frac = self.fractional(x);
        let multi: Vec<usize> =
            frac.iter().zip(&self.cells).map(|(&f, &n)| (f.round().max(0.0) as usize).min(n - 1)).collect();
        Some(self.flat(&multi))
    }

    /// Neighbors of `flat` differing by one along a single axis.
    pub fn face_neighbors(&self, flat: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let multi = self.multi(flat);
        let strides = self.strides();
        (0..self.ndim()).flat_map(move |a| {
            let i = multi[a];
            let n = self.cells[a];
            let s = strides[a];
            [(i > 0).then(|| flat - s), (i + 1 < n).then(|| flat + s)]
        })
    }
}

/// Fixed-size bit set over the cells of one slice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellSet {
    len: usize,
    words: Vec<u64>,
}

impl CellSet {
    pub fn empty(len: usize) -> Self {
        CellSet { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn full(len: usize) -> Self {
        let mut s = CellSet { len, words: vec![u64::MAX; len.div_ceil(64)] };
        s.trim();
        s
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(len);
        for i in 0..len {
            if f(i) {
                s.insert(i);
            }
        }
        s
    }

    fn trim(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.len
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "cell {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        if i < self.len {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn set(&mut self, i: usize, value: bool) {
        if value {
            self.insert(i)
        } else {
            self.remove(i)
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn check_len(&self, other: &CellSet) {
        assert_eq!(self.len, other.len, "cell sets of different sizes");
    }

    pub fn intersect_with(&mut self, other: &CellSet) {
        self.check_len(other);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= b);
    }

    pub fn union_with(&mut self, other: &CellSet) {
        self.check_len(other);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a |= b);
    }

    pub fn difference_with(&mut self, other: &CellSet) {
        self.check_len(other);
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= !b);
    }

    pub fn complement(&self) -> CellSet {
        let mut s = CellSet { len: self.len, words: self.words.iter().map(|w| !w).collect() };
        s.trim();
        s
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.check_len(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn symmetric_difference_count(&self, other: &CellSet) -> usize {
        self.check_len(other);
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }
}

/// One occupancy bit per cell per time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlicedGrid {
    spec: GridSpec,
    slices: Vec<CellSet>,
}

impl TimeSlicedGrid {
    pub fn empty(spec: &GridSpec) -> Self {
        let n = spec.cell_count();
        TimeSlicedGrid { spec: spec.clone(), slices: vec![CellSet::empty(n); spec.slice_count()] }
    }

    pub fn full(spec: &GridSpec) -> Self {
        let n = spec.cell_count();
        TimeSlicedGrid { spec: spec.clone(), slices: vec![CellSet::full(n); spec.slice_count()] }
    }

    pub fn from_slices(spec: &GridSpec, slices: Vec<CellSet>) -> Result<Self, BridgeError> {
        if slices.len() != spec.slice_count() || slices.iter().any(|s| s.len() != spec.cell_count()) {
            return Err(BridgeError::Spec("slice layout does not match the grid spec".into()));
        }
        Ok(TimeSlicedGrid { spec: spec.clone(), slices })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn slices(&self) -> &[CellSet] {
        &self.slices
    }

    pub fn slice(&self, i: usize) -> &CellSet {
        &self.slices[i]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut CellSet {
        &mut self.slices[i]
    }

    pub fn contains(&self, slice: usize, cell: usize) -> bool {
        self.slices[slice].contains(cell)
    }

    pub fn count(&self) -> usize {
        self.slices.iter().map(CellSet::count).sum()
    }

    pub fn slice_counts(&self) -> Vec<usize> {
        self.slices.iter().map(CellSet::count).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.iter().all(CellSet::is_empty)
    }

    pub fn check_same_spec(&self, other: &TimeSlicedGrid) -> Result<(), BridgeError> {
        if self.spec != other.spec {
            return Err(BridgeError::Spec("grids were built on different grid specs".into()));
        }
        Ok(())
    }

    pub fn is_subset(&self, other: &TimeSlicedGrid) -> bool {
        self.spec == other.spec && self.slices.iter().zip(&other.slices).all(|(a, b)| a.is_subset(b))
    }

    pub fn intersection(&self, other: &TimeSlicedGrid) -> Result<TimeSlicedGrid, BridgeError> {
        self.check_same_spec(other)?;
        let mut out = self.clone();
        out.slices.iter_mut().zip(&other.slices).for_each(|(a, b)| a.intersect_with(b));
        Ok(out)
    }

    pub fn union(&self, other: &TimeSlicedGrid) -> Result<TimeSlicedGrid, BridgeError> {
        self.check_same_spec(other)?;
        let mut out = self.clone();
        out.slices.iter_mut().zip(&other.slices).for_each(|(a, b)| a.union_with(b));
        Ok(out)
    }

    pub fn complement(&self) -> TimeSlicedGrid {
        TimeSlicedGrid { spec: self.spec.clone(), slices: self.slices.iter().map(CellSet::complement).collect() }
    }

    /// Occupied cells of a slice with their centers.
    pub fn occupied_centers(&self, slice: usize) -> Vec<(usize, Vec<f64>)> {
        self.slices[slice].iter().map(|c| (c, self.spec.center(c))).collect()
    }
}
