use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::compare::dilate;
use super::grid::TimeSlicedGrid;
use super::BridgeError;
use crate::flows::flow_const;
use crate::gamespec::AuxiliarySystem;
use crate::sampling::rng;

#[derive(Debug, Clone)]
pub struct SectionsOptions {
    /// Occupied cells sampled per slice (all of them if fewer).
    pub samples_per_slice: usize,
    /// Random per-step `ω` schedules tried in addition to the constant ones.
    pub random_schedules: usize,
    /// Tolerance in cells (Chebyshev dilation of the earlier sections).
    pub tolerance_cells: usize,
    pub substeps: usize,
    pub seed: u64,
}

impl Default for SectionsOptions {
    fn default() -> Self {
        SectionsOptions { samples_per_slice: 64, random_schedules: 4, tolerance_cells: 1, substeps: 16, seed: 0 }
    }
}

/// A backward `g`-motion from an occupied cell that leaves an earlier
/// section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionViolation {
    pub from_slice: usize,
    pub from_cell: usize,
    pub to_slice: usize,
    pub to_cell: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SectionsReport {
    pub checked_paths: usize,
    /// Paths that left the grid box; they are not counted as violations.
    pub out_of_bounds: usize,
    pub violations: Vec<SectionViolation>,
}

impl SectionsReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples occupied cells `(t_i, c)`, runs the auxiliary system backward
/// from the cell center under constant and random per-step `ω` schedules,
/// and records the first earlier slice where the (unrounded) path lands in
/// a cell outside the tolerance-dilated section.
pub fn decreasing_by_sections_check(
    e: &TimeSlicedGrid,
    aux: &AuxiliarySystem,
    opts: &SectionsOptions,
) -> Result<SectionsReport, BridgeError> {
    let spec = e.spec();
    if aux.field().state_dim() != spec.ndim() {
        return Err(BridgeError::Spec("auxiliary system and grid disagree on dimension".into()));
    }
    let tolerant = dilate(e, opts.tolerance_cells);
    let omega = aux.omega().points();
    let mut r = rng(opts.seed);
    let mut jobs = Vec::new();
    for i in 1..spec.slice_count() {
        let occupied: Vec<usize> = e.slice(i).iter().collect();
        let picked: Vec<usize> = if occupied.len() <= opts.samples_per_slice {
            occupied
        } else {
            let mut idx = sample(&mut r, occupied.len(), opts.samples_per_slice).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|k| occupied[k]).collect()
        };
        for c in picked {
            for k in 0..omega.len() {
                jobs.push((i, c, vec![k; i]));
            }
            for _ in 0..opts.random_schedules {
                jobs.push((i, c, (0..i).map(|_| r.gen_range(0..omega.len())).collect()));
            }
        }
    }
    let dt = spec.dt();
    let outcomes: Vec<Result<(bool, Option<SectionViolation>), BridgeError>> = jobs
        .par_iter()
        .map(|(i, c, schedule)| {
            let mut x = spec.center(*c);
            for j in (0..*i).rev() {
                x = flow_const(aux.field(), &x, &omega[schedule[j]], -dt, opts.substeps)
                    .map_err(|source| BridgeError::Flow { cell: *c, p: schedule[j], q: 0, source })?;
                let Some(cell) = spec.locate(&x) else {
                    return Ok((true, None));
                };
                if !tolerant.contains(j, cell) {
                    return Ok((
                        false,
                        Some(SectionViolation { from_slice: *i, from_cell: *c, to_slice: j, to_cell: cell }),
                    ));
                }
            }
            Ok((false, None))
        })
        .collect();
    let mut report = SectionsReport { checked_paths: jobs.len(), ..Default::default() };
    for o in outcomes {
        let (oob, v) = o?;
        report.out_of_bounds += oob as usize;
        report.violations.extend(v);
    }
    Ok(report)
}
