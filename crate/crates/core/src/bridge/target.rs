use rayon::prelude::*;

use super::absorption::{interpolate, MembershipMode};
use super::edt::{signed_distance, FAR};
use super::grid::{CellSet, GridSpec, TimeSlicedGrid};
use super::BridgeError;
use crate::flows::flow_const;
use crate::gamespec::{AuxiliarySystem, TerminalSet};

/// Cells whose center satisfies `F`. A point set that no center hits
/// exactly marks the cell containing it instead, so a point target is never
/// silently empty.
pub fn terminal_cells(terminal: &TerminalSet, spec: &GridSpec) -> CellSet {
    let mut set = CellSet::from_fn(spec.cell_count(), |c| terminal.contains(&spec.center(c)));
    if let TerminalSet::Point { point } = terminal {
        if set.is_empty() && point.len() == spec.ndim() {
            if let Some(c) = spec.locate(point) {
                set.insert(c);
            }
        }
    }
    set
}

/// `[0, ϑ] × F` rasterized by cell centers, or `{ϑ} × F` when `final_only`.
pub fn build_target_cylinder(terminal: &TerminalSet, spec: &GridSpec, final_only: bool) -> TimeSlicedGrid {
    let cells = terminal_cells(terminal, spec);
    let mut grid = TimeSlicedGrid::empty(spec);
    let n = spec.time_steps();
    for i in 0..=n {
        if i == n || !final_only {
            *grid.slice_mut(i) = cells.clone();
        }
    }
    grid
}

#[derive(Debug, Clone)]
pub struct ControllabilityTarget {
    pub grid: TimeSlicedGrid,
    /// One-step trajectories that left the grid box (never counted as
    /// reaching).
    pub dropped: usize,
}

/// Positions from which some piecewise-constant `ω` schedule (one value per
/// time step) steers the auxiliary system into `F` exactly at `ϑ`.
///
/// `Nearest`/`Neighborhood` push each occupied cell of slice `i+1` back by
/// one step of the backward flow and mark the landing cell(s).
/// `Interpolated` runs the semi-Lagrangian recursion
/// `V[i](c) = min_ω V[i+1](S_g^{Δt}(c))` starting from the signed distance to
/// `F` and keeps `V ≤ 0`.
pub fn build_controllability_target(
    aux: &AuxiliarySystem,
    spec: &GridSpec,
    mode: MembershipMode,
    substeps: usize,
) -> Result<ControllabilityTarget, BridgeError> {
    let g = aux.field();
    if g.state_dim() != spec.ndim() {
        return Err(BridgeError::Spec(format!(
            "auxiliary system has state dimension {}, grid has {} axes",
            g.state_dim(),
            spec.ndim()
        )));
    }
    let n = spec.time_steps();
    let cells = spec.cell_count();
    let strides = spec.strides();
    let dt = spec.dt();
    let omega = aux.omega().points();
    let final_cells = terminal_cells(aux.terminal(), spec);
    let mut grid = TimeSlicedGrid::empty(spec);
    *grid.slice_mut(n) = final_cells.clone();
    let flow_err = |cell: usize, q: usize| move |source| BridgeError::Flow { cell, p: q, q: 0, source };

    match mode {
        MembershipMode::Interpolated => {
            // forward landings are slice independent
            let landings: Vec<Vec<Option<Vec<f64>>>> = (0..cells)
                .into_par_iter()
                .map(|c| {
                    let x0 = spec.center(c);
                    omega
                        .iter()
                        .enumerate()
                        .map(|(k, w)| {
                            let x = flow_const(g, &x0, w, dt, substeps).map_err(flow_err(c, k))?;
                            Ok(spec.contains(&x).then(|| spec.fractional(&x)))
                        })
                        .collect::<Result<Vec<_>, BridgeError>>()
                })
                .collect::<Result<_, _>>()?;
            let dropped = landings.iter().flatten().filter(|l| l.is_none()).count();
            let mut value = signed_distance(spec, &final_cells);
            for i in (0..n).rev() {
                value = landings
                    .par_iter()
                    .map(|ls| ls.iter().flatten().map(|l| interpolate(spec, &strides, &value, l)).fold(FAR, f64::min))
                    .collect();
                *grid.slice_mut(i) = CellSet::from_fn(cells, |c| value[c] <= 0.0);
            }
            log_dropped(dropped);
            Ok(ControllabilityTarget { grid, dropped })
        }
        MembershipMode::Nearest | MembershipMode::Neighborhood => {
            let mut dropped = 0;
            for i in (0..n).rev() {
                let next: Vec<usize> = grid.slice(i + 1).iter().collect();
                let hits: Vec<Vec<Option<Vec<usize>>>> = next
                    .par_iter()
                    .map(|&c| {
                        let x0 = spec.center(c);
                        omega
                            .iter()
                            .enumerate()
                            .map(|(k, w)| {
                                let x = flow_const(g, &x0, w, -dt, substeps).map_err(flow_err(c, k))?;
                                Ok(spec.contains(&x).then(|| landing_cells(spec, &spec.fractional(&x), mode)))
                            })
                            .collect::<Result<Vec<_>, BridgeError>>()
                    })
                    .collect::<Result<_, _>>()?;
                let slice = grid.slice_mut(i);
                for h in hits.iter().flatten() {
                    match h {
                        Some(cs) => cs.iter().for_each(|&c| slice.insert(c)),
                        None => dropped += 1,
                    }
                }
            }
            log_dropped(dropped);
            Ok(ControllabilityTarget { grid, dropped })
        }
    }
}

fn log_dropped(dropped: usize) {
    if dropped > 0 {
        log::info!("controllability target: {dropped} trajectories left the grid box");
    }
}

fn landing_cells(spec: &GridSpec, frac: &[f64], mode: MembershipMode) -> Vec<usize> {
    let per_axis: Vec<Vec<usize>> = frac
        .iter()
        .zip(spec.cells())
        .map(|(&f, &n)| {
            let f = f.clamp(0.0, (n - 1) as f64);
            if mode == MembershipMode::Neighborhood {
                let (lo, hi) = (f.floor() as usize, (f.ceil() as usize).min(n - 1));
                if lo == hi {
                    vec![lo]
                } else {
                    vec![lo, hi]
                }
            } else {
                vec![(f.round() as usize).min(n - 1)]
            }
        })
        .collect();
    let mut out = vec![vec![]];
    for axis in &per_axis {
        out = out
            .into_iter()
            .flat_map(|m: Vec<usize>| {
                axis.iter().map(move |&i| {
                    let mut m = m.clone();
                    m.push(i);
                    m
                })
            })
            .collect();
    }
    out.iter().map(|m| spec.flat(m)).collect()
}
