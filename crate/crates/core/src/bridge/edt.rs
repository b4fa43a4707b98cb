//! Exact Euclidean distance transform (Felzenszwalb–Huttenlocher lower
//! envelope of parabolas), applied separably along each axis, and the
//! signed distance to a cell set derived from it.

use super::grid::{CellSet, GridSpec};

/// Magnitude used for "infinitely far" so that downstream arithmetic stays
/// finite.
pub const FAR: f64 = 1e9;

const INF: f64 = 1e20;

fn transform_line(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[0] = -INF;
                z[1] = INF;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
            }
            break;
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *out = diff * diff + f[p];
    }
}

/// Squared distance (in cell-index units) from each cell center to the
/// nearest center of a cell in `set`; `INF`-scale where `set` is empty.
pub fn squared_distance(spec: &GridSpec, set: &CellSet) -> Vec<f64> {
    let total = spec.cell_count();
    let mut grid: Vec<f64> = (0..total).map(|i| if set.contains(i) { 0.0 } else { INF }).collect();
    let strides = spec.strides();
    let max_n = *spec.cells().iter().max().unwrap_or(&1);
    let mut line = vec![0.0; max_n];
    let mut out = vec![0.0; max_n];
    let mut v = vec![0usize; max_n];
    let mut z = vec![0.0; max_n + 1];
    for (axis, &n) in spec.cells().iter().enumerate() {
        let stride = strides[axis];
        for start in 0..total {
            // a line starts where this axis' index is zero
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for i in 0..n {
                line[i] = grid[start + i * stride];
            }
            transform_line(&line[..n], &mut out[..n], &mut v, &mut z);
            for i in 0..n {
                grid[start + i * stride] = out[i].min(INF);
            }
        }
    }
    grid
}

/// Signed distance in cell units whose zero level sits on the cell faces
/// separating `set` from its complement: negative inside, positive outside.
/// Empty sets give `+FAR` everywhere, full sets `-FAR`.
pub fn signed_distance(spec: &GridSpec, set: &CellSet) -> Vec<f64> {
    let n = spec.cell_count();
    if set.is_empty() {
        return vec![FAR; n];
    }
    if set.is_full() {
        return vec![-FAR; n];
    }
    let to_set = squared_distance(spec, set);
    let to_complement = squared_distance(spec, &set.complement());
    (0..n).map(|i| if set.contains(i) { 0.5 - to_complement[i].sqrt() } else { to_set[i].sqrt() - 0.5 }).collect()
}
