use super::absorption::Absorber;
use super::grid::TimeSlicedGrid;
use super::BridgeError;

/// Outcome of the decreasing iteration `W_0 = full`, `W_k = A(W_{k-1})`.
#[derive(Debug, Clone)]
pub struct IterationResult {
    /// `W_0, W_1, …, W_k`; the last entry is the fixed point.
    pub iterates: Vec<TimeSlicedGrid>,
    /// Occupied cell counts of the iterates.
    pub sizes: Vec<usize>,
}

impl IterationResult {
    /// Smallest `k ≥ 1` with `A(W_k) = W_k`.
    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn fixed_point(&self) -> &TimeSlicedGrid {
        self.iterates.last().expect("at least W_0 and W_1")
    }

    /// `W_k`, with iterates past convergence equal to the fixed point.
    pub fn iterate(&self, k: usize) -> &TimeSlicedGrid {
        &self.iterates[k.min(self.iterates.len() - 1)]
    }
}

/// Iterates the absorption operator from the full grid until two
/// consecutive iterates agree bitwise. At most `max_iter + 1` applications
/// are made (the last one only confirms the fixed point); otherwise the
/// result is [`BridgeError::NonConvergence`] carrying the last two iterates.
pub fn programmed_iteration(absorber: &Absorber, max_iter: usize) -> Result<IterationResult, BridgeError> {
    if max_iter == 0 {
        return Err(BridgeError::Spec("max_iter must be at least 1".into()));
    }
    let w0 = TimeSlicedGrid::full(absorber.target().spec());
    let mut sizes = vec![w0.count()];
    let mut iterates = vec![w0];
    loop {
        let prev = iterates.last().expect("nonempty");
        let next = absorber.apply(prev)?;
        debug_assert!(next.is_subset(prev));
        if &next == prev && iterates.len() > 1 {
            log::info!("programmed iteration converged after {} steps", iterates.len() - 1);
            return Ok(IterationResult { iterates, sizes });
        }
        if iterates.len() > max_iter {
            let previous = iterates.pop().expect("nonempty");
            sizes.push(next.count());
            return Err(BridgeError::NonConvergence {
                max_iter,
                previous: Box::new(previous),
                last: Box::new(next),
                sizes,
            });
        }
        log::debug!("iterate {}: {} cells", iterates.len(), next.count());
        sizes.push(next.count());
        iterates.push(next);
    }
}
