//! Structural checks on the degenerate `X` block.

use serde::{Deserialize, Serialize};

use crate::coefficients::Coefficients;
use crate::error::{Error, Result};
use crate::integrator::TrajectoryStore;
use crate::meanfield::mf_batch_against;

const MODULE: &str = "diagnostics";

/// Floating-point allowance on the drift envelope.
pub const ENVELOPE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    /// Consecutive single-step snapshot pairs that were replayed.
    pub replayed_steps: usize,
    pub replay_mismatches: usize,
    /// `(step, particle)` of the first mismatch.
    pub first_mismatch: Option<(usize, usize)>,
    pub bound: f64,
    /// `max |x(t) - x(0)| - C t` over particles and snapshots.
    pub envelope_excess: f64,
    pub envelope_pass: bool,
    pub pass: bool,
}

/// Replays `x <- x + B0 h` on every pair of snapshots one step apart and
/// compares bitwise, then checks `|x(t) - x(0)| <= C t` everywhere.
pub fn degeneracy_check(store: &TrajectoryStore, cs: &dyn Coefficients) -> Result<DegeneracyReport> {
    let cfg = &store.config;
    if cs.dim() != cfg.d {
        return Err(Error::Shape {
            module: MODULE,
            expected: cfg.d,
            got: cs.dim(),
        });
    }
    if store.snapshots.is_empty() {
        return Err(Error::domain(MODULE, "store has no snapshots"));
    }
    let (d, w, n) = (cfg.d, store.width(), store.particles());
    let h = cfg.step_size();
    let mut replayed = 0;
    let mut mismatches = 0;
    let mut first = None;
    for a in 0..store.snapshots.len() - 1 {
        let k = store.snapshot_steps[a];
        if store.snapshot_steps[a + 1] != k + 1 {
            continue;
        }
        let (before, after) = (&store.snapshots[a], &store.snapshots[a + 1]);
        let measure = match &store.copy_snapshots {
            Some(c) => c[a].as_slice(),
            None => before.as_slice(),
        };
        let table = mf_batch_against(cs, cfg.time(k), before, measure, cfg.subsample, cfg.seed, k as u64)?;
        for i in 0..n {
            let ok = (0..d).all(|c| {
                let x = before[i * w + c] + table.b0[i * d + c] * h;
                x.to_bits() == after[i * w + c].to_bits()
            });
            if !ok {
                mismatches += 1;
                first.get_or_insert((k, i));
            }
        }
        replayed += 1;
    }
    let start = &store.snapshots[0];
    let mut excess = f64::NEG_INFINITY;
    for (snap, &t) in store.snapshots.iter().zip(&store.times) {
        for i in 0..n {
            let dx: f64 = (0..d).map(|c| (snap[i * w + c] - start[i * w + c]).powi(2)).sum::<f64>().sqrt();
            excess = excess.max(dx - cs.bound() * t);
        }
    }
    let envelope_pass = excess <= ENVELOPE_TOLERANCE;
    Ok(DegeneracyReport {
        replayed_steps: replayed,
        replay_mismatches: mismatches,
        first_mismatch: first,
        bound: cs.bound(),
        envelope_excess: excess,
        envelope_pass,
        pass: mismatches == 0 && envelope_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{simulate, InitialLawSpec, SimulationConfig};
    use crate::meanfield::Subsample;

    fn run(system: &str, level: u32, tweak: impl Fn(&mut SimulationConfig)) -> (TrajectoryStore, Box<dyn Coefficients>) {
        let mut cfg = SimulationConfig::new(system, 1, 300, 1.0, 20, 8);
        cfg.level = level;
        cfg.init = InitialLawSpec::Gaussian {
            mean: vec![0.0, 0.0],
            scale: 1.0,
        };
        tweak(&mut cfg);
        let store = simulate(&cfg).unwrap();
        (store, cfg.coefficients().unwrap())
    }

    #[test]
    fn replay_is_bitwise() {
        for (sys, level) in [("rough", 0), ("rough", 4), ("saturating", 2), ("transport", 0)] {
            let (store, cs) = run(sys, level, |_| {});
            let r = degeneracy_check(&store, cs.as_ref()).unwrap();
            assert!(r.pass && r.replayed_steps == 20, "{sys}: {r:?}");
        }
    }

    #[test]
    fn replay_with_subsample_and_copy() {
        let (store, cs) = run("saturating", 0, |c| {
            c.subsample = Subsample::Count(40);
            c.independent_copy = true;
        });
        let r = degeneracy_check(&store, cs.as_ref()).unwrap();
        assert!(r.pass && r.replayed_steps == 20, "{r:?}");
    }

    #[test]
    fn tampering_is_detected() {
        let (mut store, cs) = run("transport", 0, |_| {});
        store.snapshots[7][2 * 5] += 1e-15;
        let r = degeneracy_check(&store, cs.as_ref()).unwrap();
        assert!(!r.pass);
        assert_eq!(r.first_mismatch, Some((6, 5)));

        let (mut store, cs) = run("transport", 0, |_| {});
        store.snapshots[3][0] = store.snapshots[0][0] + 1.0;
        let r = degeneracy_check(&store, cs.as_ref()).unwrap();
        assert!(!r.envelope_pass);
    }

    #[test]
    fn strided_runs_check_only_the_envelope() {
        let (store, cs) = run("rough", 2, |c| c.stride = 5);
        let r = degeneracy_check(&store, cs.as_ref()).unwrap();
        assert_eq!(r.replayed_steps, 0);
        assert!(r.envelope_pass);
    }
}
