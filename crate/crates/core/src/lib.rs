//! Approach differential games on grids: programmed iteration toward the
//! solvability set, the reduction of target-set problems to "at the moment"
//! problems via a commuting auxiliary system, and the checks that go with it.

// Index loops read closer to the formulas in the numeric kernels.
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod bridge;
pub mod flows;
pub mod gamespec;
pub mod isaacs;
pub mod sampling;
pub mod simulate;
pub mod vectorfield;
