//! Estimators and tests built on stored trajectories.

pub mod degeneracy;
pub mod independence;
pub mod ladder;
pub mod moments;
pub mod wasserstein;

pub use degeneracy::{degeneracy_check, DegeneracyReport};
pub use independence::{catalog_pairs, independence_test, leak_fixture, FutureFn, IndependenceReport, PastFn};
pub use ladder::{ladder, ladder_from_terminals, LadderAxis, LadderReport};
pub use moments::{increment_moment4, moment_sup4, MomentReport, StateBlock};
pub use wasserstein::{sliced_w1, DEFAULT_PROJECTIONS};

use crate::coefficients::validate::{ellipticity_margin, SamplerSpec};
use crate::coefficients::Coefficients;
use crate::error::Result;

/// Smallest eigenvalue of `sigma` minus the guaranteed `nu`, minimized over
/// `num_points` samples from the default box.
pub fn ellipticity_scan(cs: &dyn Coefficients, num_points: usize, seed: u64) -> Result<f64> {
    let spec = SamplerSpec {
        num_points,
        seed,
        ..SamplerSpec::default()
    };
    ellipticity_margin(cs, &spec).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::catalog::{self, fixtures};
    use crate::mollifier::{mollify, QuadratureSpec};

    #[test]
    fn scan_values() {
        assert_eq!(ellipticity_scan(&catalog::by_name("free").unwrap(), 500, 1).unwrap(), 0.0);
        let s = fixtures::scaled_identity(1, 1.5, 1.0).unwrap();
        assert!((ellipticity_scan(&s, 500, 1).unwrap() - 0.5).abs() < 1e-15);
        let m = mollify(&catalog::by_name("rough").unwrap(), 4, &QuadratureSpec::tensor(9)).unwrap();
        assert!(ellipticity_scan(&m, 4000, 2).unwrap() >= -1e-9);
    }
}
