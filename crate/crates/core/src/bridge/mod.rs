//! Time-sliced grid sets and the discrete programmed iteration.

mod absorption;
mod compare;
mod edt;
mod grid;
pub mod io;
mod iteration;
mod sections;
mod target;

use thiserror::Error;

pub use absorption::{absorption_step, Absorber, FlowCache, MembershipMode, DEFAULT_CONSTRAINT_SLACK};
pub use compare::{compare_grids, dilate, dilate_slice, erode, GridComparison};
pub use edt::signed_distance;
pub use grid::{CellSet, GridSpec, TimeSlicedGrid};
pub use iteration::{programmed_iteration, IterationResult};
pub use sections::{decreasing_by_sections_check, SectionViolation, SectionsOptions, SectionsReport};
pub use target::{build_controllability_target, build_target_cylinder, terminal_cells, ControllabilityTarget};

use crate::flows::FlowError;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("grid spec: {0}")]
    Spec(String),
    #[error("flow from cell {cell} under control pair ({p}, {q}): {source}")]
    Flow {
        cell: usize,
        p: usize,
        q: usize,
        #[source]
        source: FlowError,
    },
    #[error("no fixed point after {max_iter} iterations (last sizes {sizes:?})")]
    NonConvergence { max_iter: usize, previous: Box<TimeSlicedGrid>, last: Box<TimeSlicedGrid>, sizes: Vec<usize> },
    #[error("grid format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
