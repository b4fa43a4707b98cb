//! Min-max versus max-min of the Hamiltonian `⟨s, f(x, u, v)⟩` over sampled
//! control sets.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gamespec::{Branch, Game, SampledControlSet, TransformedProblem};
use crate::vectorfield::{EvalError, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IsaacsError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("direction sample {0} is zero or not finite")]
    BadDirection(usize),
    #[error("{states} state samples but {directions} direction samples")]
    Mismatch { states: usize, directions: usize },
    #[error("field must read a first- and a second-player group matching P ({p}) and Q ({q})")]
    Signature { p: usize, q: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsaacsSample {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub minmax: f64,
    pub maxmin: f64,
    pub gap: f64,
    /// First-player sample attaining the min-max.
    pub argmin_u: usize,
    /// Second-player sample attaining the max-min. When `gap == 0` the pair
    /// `(argmin_u, argmax_v)` is a saddle point of the sampled game.
    pub argmax_v: usize,
    /// For transformed dynamics: which half of `f*` attains the min-max.
    pub case: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsaacsReport {
    pub samples: Vec<IsaacsSample>,
    pub max_gap: f64,
}

impl IsaacsReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_gap <= tolerance
    }

    pub fn to_csv(&self) -> String {
        let dim = self.samples.first().map_or(0, |s| s.x.len());
        let mut out = String::new();
        let xs: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        let ss: Vec<String> = (1..=dim).map(|i| format!("s{i}")).collect();
        out.push_str(&format!("{},{},minmax,maxmin,gap,case\n", xs.join(","), ss.join(",")));
        for smp in &self.samples {
            let nums: Vec<String> = smp.x.iter().chain(&smp.s).map(|v| format!("{v:e}")).collect();
            let case = match smp.case {
                Some(Branch::Original) => "f",
                Some(Branch::Auxiliary) => "g",
                None => "",
            };
            out.push_str(&format!("{},{:e},{:e},{:e},{case}\n", nums.join(","), smp.minmax, smp.maxmin, smp.gap));
        }
        out
    }
}

/// Exact min-max / max-min over the finite samples for each pair
/// `(xs[k], ss[k])`. Ties go to the lowest sample index. Directions are
/// used as given: scaling `s` by `c > 0` scales every value and the gap by
/// `c` and leaves the arg-optima unchanged.
pub fn isaacs_gap(
    f: &VectorField,
    p: &SampledControlSet,
    q: &SampledControlSet,
    xs: &[Vec<f64>],
    ss: &[Vec<f64>],
) -> Result<IsaacsReport, IsaacsError> {
    gap_report(f, p, q, xs, ss, |_| None)
}

/// As [`isaacs_gap`] for `f*` over the canonical `P*` sample, recording
/// which branch attains the min-max.
pub fn isaacs_gap_transformed(
    tp: &TransformedProblem,
    xs: &[Vec<f64>],
    ss: &[Vec<f64>],
) -> Result<IsaacsReport, IsaacsError> {
    gap_report(tp.field(), tp.first_player(), tp.second_player(), xs, ss, |i| Some(tp.branch(i)))
}

fn gap_report(
    f: &VectorField,
    p: &SampledControlSet,
    q: &SampledControlSet,
    xs: &[Vec<f64>],
    ss: &[Vec<f64>],
    case: impl Fn(usize) -> Option<Branch> + Sync,
) -> Result<IsaacsReport, IsaacsError> {
    if xs.len() != ss.len() {
        return Err(IsaacsError::Mismatch { states: xs.len(), directions: ss.len() });
    }
    if f.param_len() != p.dim() + q.dim() {
        return Err(IsaacsError::Signature { p: p.dim(), q: q.dim() });
    }
    for (k, s) in ss.iter().enumerate() {
        if s.iter().any(|v| !v.is_finite()) || s.iter().all(|v| *v == 0.0) {
            return Err(IsaacsError::BadDirection(k));
        }
    }
    let samples = xs
        .par_iter()
        .zip(ss)
        .map(|(x, s)| {
            let h = hamiltonian_table(f, p, q, x, s)?;
            let (minmax, argmin_u, _) = min_max(&h);
            let (maxmin, argmax_v) = max_min(&h);
            Ok(IsaacsSample {
                x: x.clone(),
                s: s.clone(),
                minmax,
                maxmin,
                gap: minmax - maxmin,
                argmin_u,
                argmax_v,
                case: case(argmin_u),
            })
        })
        .collect::<Result<Vec<_>, IsaacsError>>()?;
    let max_gap = samples.iter().map(|s| s.gap).fold(0.0, f64::max);
    Ok(IsaacsReport { samples, max_gap })
}

/// `h[i][j] = ⟨s, f(x, p_i, q_j)⟩`.
pub fn hamiltonian_table(
    f: &VectorField,
    p: &SampledControlSet,
    q: &SampledControlSet,
    x: &[f64],
    s: &[f64],
) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut params = vec![0.0; p.dim() + q.dim()];
    let mut out = vec![0.0; f.state_dim()];
    p.points()
        .iter()
        .map(|u| {
            params[..p.dim()].copy_from_slice(u);
            q.points()
                .iter()
                .map(|v| {
                    params[p.dim()..].copy_from_slice(v);
                    f.eval_into(x, &params, &mut out)?;
                    Ok(out.iter().zip(s).map(|(a, b)| a * b).sum())
                })
                .collect()
        })
        .collect()
}

/// `(min_i max_j h, argmin i, inner argmax j)`.
fn min_max(h: &[Vec<f64>]) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for (i, row) in h.iter().enumerate() {
        let (mut m, mut jm) = (f64::NEG_INFINITY, 0);
        for (j, &v) in row.iter().enumerate() {
            if v > m {
                (m, jm) = (v, j);
            }
        }
        if m < best.0 {
            best = (m, i, jm);
        }
    }
    best
}

/// `(max_j min_i h, argmax j)`.
fn max_min(h: &[Vec<f64>]) -> (f64, usize) {
    let cols = h.first().map_or(0, Vec::len);
    let mut best = (f64::NEG_INFINITY, 0);
    for j in 0..cols {
        let m = h.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min);
        if m > best.0 {
            best = (m, j);
        }
    }
    best
}
