use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::edt::{signed_distance, FAR};
use super::grid::{CellSet, GridSpec, TimeSlicedGrid};
use super::BridgeError;
use crate::flows::flow_const;
use crate::gamespec::Game;

/// How a one-step landing point is tested against a set of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipMode {
    /// Round the landing point to the nearest cell center.
    #[serde(alias = "optimistic")]
    Nearest,
    /// Accept if any cell of the landing point's interpolation stencil
    /// (its 1-cell neighborhood) is in the set.
    #[serde(alias = "conservative")]
    Neighborhood,
    /// Semi-Lagrangian: carry a reach-avoid value per slice, interpolate it
    /// multilinearly at landing points and threshold at zero. Unlike
    /// rounding, sub-cell displacements accumulate correctly over many
    /// steps.
    #[default]
    Interpolated,
}

/// Landing points of the one-step flow from every cell center under every
/// sampled control pair, in fractional index coordinates. Fields are
/// autonomous and the step is uniform, so one cache serves every slice.
#[derive(Debug, Clone)]
pub struct FlowCache {
    spec: GridSpec,
    n_p: usize,
    n_q: usize,
    /// `ndim` coordinates per (cell, p, q); NaN marks a landing outside
    /// the grid box.
    landings: Vec<f64>,
    dropped: usize,
}

impl FlowCache {
    pub fn build<G: Game + ?Sized>(game: &G, spec: &GridSpec, substeps: usize) -> Result<Self, BridgeError> {
        if game.state_dim() != spec.ndim() {
            return Err(BridgeError::Spec(format!(
                "dynamics has state dimension {}, grid has {} axes",
                game.state_dim(),
                spec.ndim()
            )));
        }
        let (n_p, n_q, d) = (game.first_player().len(), game.second_player().len(), spec.ndim());
        let dt = spec.dt();
        let params: Vec<Vec<f64>> =
            (0..n_p).flat_map(|p| (0..n_q).map(move |q| (p, q))).map(|(p, q)| game.params(p, q)).collect();
        let per_cell: Vec<Vec<f64>> =
            (0..spec.cell_count())
                .into_par_iter()
                .map(|cell| {
                    let x0 = spec.center(cell);
                    let mut out = Vec::with_capacity(n_p * n_q * d);
                    for (k, prm) in params.iter().enumerate() {
                        let x = flow_const(game.field(), &x0, prm, dt, substeps)
                            .map_err(|source| BridgeError::Flow { cell, p: k / n_q, q: k % n_q, source })?;
                        if spec.contains(&x) {
                            out.extend(spec.fractional(&x));
                        } else {
                            out.extend(std::iter::repeat_n(f64::NAN, d));
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<_, BridgeError>>()?;
        let landings: Vec<f64> = per_cell.into_iter().flatten().collect();
        let dropped = landings.chunks(d).filter(|c| c[0].is_nan()).count();
        if dropped > 0 {
            log::info!("{dropped} one-step trajectories leave the grid box and are treated as not reaching");
        }
        Ok(FlowCache { spec: spec.clone(), n_p, n_q, landings, dropped })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn first_count(&self) -> usize {
        self.n_p
    }

    pub fn second_count(&self) -> usize {
        self.n_q
    }

    /// Number of (cell, p, q) one-step trajectories that left the grid box.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn landing(&self, cell: usize, p: usize, q: usize) -> Option<&[f64]> {
        let d = self.spec.ndim();
        let at = ((cell * self.n_p + p) * self.n_q + q) * d;
        let l = &self.landings[at..at + d];
        (!l[0].is_nan()).then_some(l)
    }
}

/// Multilinear interpolation of per-cell `values` at fractional index
/// coordinates, clamped to the grid of centers.
pub(crate) fn interpolate(spec: &GridSpec, strides: &[usize], values: &[f64], frac: &[f64]) -> f64 {
    let d = frac.len();
    let mut base = 0;
    let mut weights = [0.0f64; 8];
    debug_assert!(d <= 8);
    for a in 0..d {
        let n = spec.cells()[a];
        let f = frac[a].clamp(0.0, (n - 1) as f64);
        let mut i0 = f.floor() as usize;
        if i0 >= n - 1 {
            i0 = n - 2;
        }
        weights[a] = f - i0 as f64;
        base += i0 * strides[a];
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = base;
        for a in 0..d {
            if corner >> a & 1 == 1 {
                w *= weights[a];
                idx += strides[a];
            } else {
                w *= 1.0 - weights[a];
            }
        }
        if w != 0.0 {
            acc += w * values[idx];
        }
    }
    acc
}

/// Cells whose membership decides a landing under the rounding modes.
fn rounded_hits(spec: &GridSpec, strides: &[usize], frac: &[f64], mode: MembershipMode, set: &CellSet) -> bool {
    match mode {
        MembershipMode::Nearest | MembershipMode::Interpolated => {
            let idx = frac
                .iter()
                .zip(spec.cells())
                .zip(strides)
                .map(|((&f, &n), &s)| (f.round().max(0.0) as usize).min(n - 1) * s)
                .sum();
            set.contains(idx)
        }
        MembershipMode::Neighborhood => {
            let d = frac.len();
            let mut lo = [0usize; 8];
            let mut hi = [0usize; 8];
            for a in 0..d {
                let n = spec.cells()[a];
                let f = frac[a].clamp(0.0, (n - 1) as f64);
                lo[a] = f.floor() as usize;
                hi[a] = (f.ceil() as usize).min(n - 1);
            }
            (0..(1usize << d)).any(|corner| {
                let idx: usize = (0..d).map(|a| if corner >> a & 1 == 1 { hi[a] } else { lo[a] } * strides[a]).sum();
                set.contains(idx)
            })
        }
    }
}

/// Default for [`Absorber::with_constraint_slack`]: landings within one
/// center spacing of an occupied cell of `E` count as staying in `E`.
pub const DEFAULT_CONSTRAINT_SLACK: f64 = 0.5;

/// Reusable absorption operator for one game, one target `M` and one flow
/// cache; the target's distance field is computed once.
#[derive(Debug, Clone)]
pub struct Absorber {
    cache: FlowCache,
    target: TimeSlicedGrid,
    mode: MembershipMode,
    target_phi: Option<Vec<Vec<f64>>>,
    constraint_slack: f64,
}

impl Absorber {
    pub fn new(cache: FlowCache, target: TimeSlicedGrid, mode: MembershipMode) -> Result<Self, BridgeError> {
        if cache.spec() != target.spec() {
            return Err(BridgeError::Spec("target and flow cache were built on different grid specs".into()));
        }
        if cache.spec().ndim() > 8 {
            return Err(BridgeError::Spec("grid path supports at most 8 dimensions".into()));
        }
        let target_phi = (mode == MembershipMode::Interpolated).then(|| slice_distances(&target));
        Ok(Absorber { cache, target, mode, target_phi, constraint_slack: DEFAULT_CONSTRAINT_SLACK })
    }

    /// Tolerance, in cells, on the stay-in-`E` constraint of the
    /// interpolated mode. Without it, paths that slide along the boundary of
    /// `E` lose a fraction of a cell to quantization on every application,
    /// and the iteration creeps inward for many steps.
    pub fn with_constraint_slack(mut self, cells: f64) -> Self {
        self.constraint_slack = cells;
        self
    }

    pub fn target(&self) -> &TimeSlicedGrid {
        &self.target
    }

    pub fn cache(&self) -> &FlowCache {
        &self.cache
    }

    pub fn mode(&self) -> MembershipMode {
        self.mode
    }

    /// `A(E)`: cells of `E` from which, for every constant second-player
    /// control, some per-step choice of first-player controls reaches `M`
    /// at a grid time while staying in `E`.
    pub fn apply(&self, e: &TimeSlicedGrid) -> Result<TimeSlicedGrid, BridgeError> {
        e.check_same_spec(&self.target)?;
        if !self.target.is_subset(e) {
            log::warn!("absorption applied to a set that does not contain the target");
        }
        let e_phi = (self.mode == MembershipMode::Interpolated).then(|| {
            let mut phi = slice_distances(e);
            phi.iter_mut().flatten().for_each(|v| *v -= self.constraint_slack);
            phi
        });
        let per_v: Vec<Vec<CellSet>> = (0..self.cache.n_q)
            .into_par_iter()
            .map(|q| match &e_phi {
                Some(e_phi) => self.reach_avoid_interpolated(e, e_phi, q),
                None => self.reach_avoid_rounded(e, q),
            })
            .collect();
        let mut out = e.clone();
        for sets in per_v {
            for (i, s) in sets.iter().enumerate() {
                out.slice_mut(i).intersect_with(s);
            }
        }
        debug_assert!(out.is_subset(e));
        Ok(out)
    }

    fn reach_avoid_rounded(&self, e: &TimeSlicedGrid, q: usize) -> Vec<CellSet> {
        let spec = e.spec();
        let strides = spec.strides();
        let n = spec.time_steps();
        let cells = spec.cell_count();
        let mut t = vec![CellSet::empty(cells); n + 1];
        let mut last = self.target.slice(n).clone();
        last.intersect_with(e.slice(n));
        t[n] = last;
        for i in (0..n).rev() {
            let next = &t[i + 1];
            let e_i = e.slice(i);
            let m_i = self.target.slice(i);
            let bits: Vec<bool> = (0..cells)
                .into_par_iter()
                .map(|c| {
                    e_i.contains(c)
                        && (m_i.contains(c)
                            || (0..self.cache.n_p).any(|p| {
                                self.cache
                                    .landing(c, p, q)
                                    .is_some_and(|l| rounded_hits(spec, &strides, l, self.mode, next))
                            }))
                })
                .collect();
            t[i] = CellSet::from_fn(cells, |c| bits[c]);
        }
        t
    }

    fn reach_avoid_interpolated(&self, e: &TimeSlicedGrid, e_phi: &[Vec<f64>], q: usize) -> Vec<CellSet> {
        let spec = e.spec();
        let strides = spec.strides();
        let n = spec.time_steps();
        let cells = spec.cell_count();
        let m_phi = self.target_phi.as_ref().expect("interpolated mode keeps target distances");
        let mut t = vec![CellSet::empty(cells); n + 1];
        let mut value: Vec<f64> = e_phi[n].iter().zip(&m_phi[n]).map(|(a, b)| a.max(*b)).collect();
        let threshold = |i: usize, value: &[f64]| {
            let (e_i, m_i) = (e.slice(i), self.target.slice(i));
            CellSet::from_fn(cells, |c| e_i.contains(c) && (value[c] <= 0.0 || m_i.contains(c)))
        };
        t[n] = threshold(n, &value);
        for i in (0..n).rev() {
            let next = &value;
            let cur: Vec<f64> = (0..cells)
                .into_par_iter()
                .map(|c| {
                    let reach = (0..self.cache.n_p)
                        .filter_map(|p| self.cache.landing(c, p, q))
                        .map(|l| interpolate(spec, &strides, next, l))
                        .fold(FAR, f64::min);
                    e_phi[i][c].max(m_phi[i][c].min(reach))
                })
                .collect();
            value = cur;
            t[i] = threshold(i, &value);
        }
        t
    }
}

fn slice_distances(grid: &TimeSlicedGrid) -> Vec<Vec<f64>> {
    grid.slices().par_iter().map(|s| signed_distance(grid.spec(), s)).collect()
}

/// One application of the absorption operator; see [`Absorber::apply`].
pub fn absorption_step(
    e: &TimeSlicedGrid,
    m: &TimeSlicedGrid,
    cache: &FlowCache,
    mode: MembershipMode,
) -> Result<TimeSlicedGrid, BridgeError> {
    Absorber::new(cache.clone(), m.clone(), mode)?.apply(e)
}
