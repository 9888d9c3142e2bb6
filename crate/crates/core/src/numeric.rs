//! Small numerical helpers shared across modules.

use nalgebra::DMatrix;

const LEAF: usize = 8;

/// Pairwise (tree) summation with a fixed split, so the result depends only
/// on the order of the inputs, never on how they were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_strided(xs, 0, 1, xs.len())
}

/// Pairwise sum of `xs[offset + i * stride]` for `i in 0..count`.
pub fn pairwise_strided(xs: &[f64], offset: usize, stride: usize, count: usize) -> f64 {
    if count <= LEAF {
        let mut acc = 0.0;
        for i in 0..count {
            acc += xs[offset + i * stride];
        }
        return acc;
    }
    let half = count / 2;
    pairwise_strided(xs, offset, stride, half)
        + pairwise_strided(xs, offset + half * stride, stride, count - half)
}

/// Arithmetic mean via [`pairwise_sum`].
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest eigenvalue of a symmetric row-major `d x d` matrix.
pub fn min_eigenvalue(m: &[f64], d: usize) -> f64 {
    debug_assert_eq!(m.len(), d * d);
    match d {
        1 => m[0],
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + c);
            let half_gap = (0.5 * (a - c)).hypot(b);
            mean - half_gap
        }
        _ => {
            let mat = DMatrix::from_row_slice(d, d, m);
            mat.symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// `true` when entry `(i, j)` equals entry `(j, i)` bitwise for all pairs.
pub fn is_exactly_symmetric(m: &[f64], d: usize) -> bool {
    (0..d).all(|i| (i + 1..d).all(|j| m[i * d + j].to_bits() == m[j * d + i].to_bits()))
}

/// Largest absolute difference between mirrored entries.
pub fn asymmetry(m: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i + 1..d {
            worst = worst.max((m[i * d + j] - m[j * d + i]).abs());
        }
    }
    worst
}

pub fn clip_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Ordinary least-squares fit `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pairwise_matches_exact_integer_sums() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn strided_picks_columns() {
        let xs = [1.0, 10.0, 2.0, 20.0, 3.0, 30.0];
        assert_eq!(pairwise_strided(&xs, 0, 2, 3), 6.0);
        assert_eq!(pairwise_strided(&xs, 1, 2, 3), 60.0);
    }

    #[test]
    fn eigen_closed_forms() {
        assert_eq!(min_eigenvalue(&[1.5], 1), 1.5);
        let m = [2.0, 1.0, 1.0, 2.0];
        assert!((min_eigenvalue(&m, 2) - 1.0).abs() < 1e-15);
        let m3 = [2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.5];
        assert!((min_eigenvalue(&m3, 3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, c) = linear_fit(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pairwise_close_to_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..300)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-9 * (1.0 + xs.iter().map(|x| x.abs()).sum::<f64>()));
        }

        #[test]
        fn two_by_two_eigen_matches_nalgebra(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let m = [a, b, b, c];
            let reference = DMatrix::from_row_slice(2, 2, &m).symmetric_eigen().eigenvalues.min();
            prop_assert!((min_eigenvalue(&m, 2) - reference).abs() < 1e-10);
        }
    }
}
