//! Sliced 1-Wasserstein distance between atom lists.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{euclidean_norm, pairwise_mean};
use crate::rng::{CounterRng, Domain};

const MODULE: &str = "diagnostics";

pub const DEFAULT_PROJECTIONS: usize = 64;

/// Exact `W1` between two empirical measures on the line, given sorted
/// samples. The quantile functions are merged on the common grid
/// `{i / n} u {j / m}`, kept in integer units of `1 / (n m)`, so the result
/// does not depend on argument order.
pub fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as u64, b.len() as u64);
    let (mut i, mut j, mut pos) = (0usize, 0usize, 0u64);
    let mut acc = 0.0;
    while (i as u64) < n && (j as u64) < m {
        let end_a = (i as u64 + 1) * m;
        let end_b = (j as u64 + 1) * n;
        let end = end_a.min(end_b);
        acc += (end - pos) as f64 * (a[i] - b[j]).abs();
        pos = end;
        if end_a == end {
            i += 1;
        }
        if end_b == end {
            j += 1;
        }
    }
    acc / (n * m) as f64
}

/// Exact one-dimensional `W1` between two unsorted samples.
pub fn w1_line(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    w1_sorted(&a, &b)
}

/// Unit direction `k` of the seeded projection family in `R^dim`.
pub fn projection(dim: usize, seed: u64, k: usize) -> Vec<f64> {
    let rng = CounterRng::new(seed);
    let mut u = vec![0.0; dim];
    for attempt in 0.. {
        rng.fill_normals(Domain::Projection, k as u64, attempt, &mut u);
        let norm = euclidean_norm(&u);
        if norm > 1e-12 {
            u.iter_mut().for_each(|v| *v /= norm);
            break;
        }
    }
    u
}

fn project(atoms: &[f64], dim: usize, dir: &[f64]) -> Vec<f64> {
    atoms
        .chunks_exact(dim)
        .map(|z| z.iter().zip(dir).map(|(a, b)| a * b).sum())
        .collect()
}

/// Mean over `num_projections` seeded unit directions of the projected
/// one-dimensional `W1`. Atoms are rows of length `dim`; for `dim = 1`
/// every direction is `+-1` and the exact line distance is returned.
pub fn sliced_w1(a: &[f64], b: &[f64], dim: usize, num_projections: usize, seed: u64) -> Result<f64> {
    if dim == 0 || !a.len().is_multiple_of(dim) || !b.len().is_multiple_of(dim) {
        return Err(Error::Shape {
            module: MODULE,
            expected: dim,
            got: if dim == 0 { 0 } else { a.len() % dim + b.len() % dim },
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain(MODULE, "sliced_w1 needs nonempty measures"));
    }
    if num_projections == 0 {
        return Err(Error::config(MODULE, "num_projections must be at least 1"));
    }
    if dim == 1 {
        return Ok(w1_line(a, b));
    }
    let per: Vec<f64> = (0..num_projections)
        .into_par_iter()
        .map(|k| {
            let dir = projection(dim, seed, k);
            w1_line(&project(a, dim, &dir), &project(b, dim, &dir))
        })
        .collect();
    Ok(pairwise_mean(&per))
}

/// [`sliced_w1`] with atom lists of different row widths rejected.
pub fn sliced_w1_checked(
    a: &[f64],
    dim_a: usize,
    b: &[f64],
    dim_b: usize,
    num_projections: usize,
    seed: u64,
) -> Result<f64> {
    if dim_a != dim_b {
        return Err(Error::Shape {
            module: MODULE,
            expected: dim_a,
            got: dim_b,
        });
    }
    sliced_w1(a, b, dim_a, num_projections, seed)
}
