//! Sampling-based checks of the boundedness, ellipticity, symmetry and
//! continuity hypotheses on a coefficient set.
//!
//! The hypotheses are universally quantified, so the check samples
//! `(t, z, zeta)` uniformly from `[0, time_max] x [-R, R]^{4d}` and records the
//! worst margin together with the point achieving it. Failures are report
//! entries, not errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{CoeffSample, EvalScratch};
use super::Coefficients;
use crate::error::{Error, Result};
use crate::numeric::{asymmetry, euclidean_norm, is_exactly_symmetric};
use crate::rng::{CounterRng, Domain};

/// Slack allowed on every inequality check.
pub const TOLERANCE: f64 = 1e-9;

/// Separations at which the finite-difference moduli are measured.
pub const SEPARATIONS: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SamplerSpec {
    pub num_points: usize,
    pub box_radius: f64,
    pub seed: u64,
    /// Times are drawn from `[0, time_max]`.
    pub time_max: f64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            num_points: 10_000,
            box_radius: 10.0,
            seed: 7,
            time_max: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub z: Vec<f64>,
    pub zeta: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConditionResult {
    pub pass: bool,
    /// Worst observed slack; negative means violated.
    pub margin: f64,
    pub worst: SamplePoint,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymmetryResult {
    pub pass: bool,
    pub max_asymmetry: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModulusRow {
    pub separation: f64,
    pub max_variation: f64,
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ContinuityResult {
    /// `None` when no modulus is declared (observational only).
    pub pass: Option<bool>,
    pub rows: Vec<ModulusRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HypothesisReport {
    pub system: String,
    pub level: u32,
    pub d: usize,
    pub sampler: SamplerSpec,
    pub tolerance: f64,
    pub declared_bound: f64,
    pub declared_ellipticity: f64,
    pub modulus: Option<String>,
    /// Uniform bound on `|b0| + |b1| + ||sigma||_F`.
    pub bound: ConditionResult,
    /// `min_lambda lambda^T sigma lambda - nu`.
    pub ellipticity: ConditionResult,
    pub symmetry: SymmetryResult,
    /// Variation of `b1` and `sigma` in `(x, xi)`.
    pub continuity_x_xi: ContinuityResult,
    /// Variation of `b0` in `(z, zeta)`.
    pub continuity_b0: ContinuityResult,
    pub all_pass: bool,
}

struct PointOutcome {
    point: SamplePoint,
    bound_norm: f64,
    min_eig: f64,
    symmetric: bool,
    asym: f64,
    var_x_xi: [f64; 3],
    var_b0: [f64; 3],
}

pub(crate) fn sample_point(rng: &CounterRng, spec: &SamplerSpec, d: usize, i: u64) -> SamplePoint {
    let mut u = vec![0.0; 1 + 4 * d];
    rng.fill_uniforms(Domain::Validator, i, 0, &mut u);
    let t = spec.time_max * u[0];
    let coord = |v: f64| spec.box_radius * (2.0 * v - 1.0);
    SamplePoint {
        t,
        z: u[1..1 + 2 * d].iter().map(|&v| coord(v)).collect(),
        zeta: u[1 + 2 * d..].iter().map(|&v| coord(v)).collect(),
    }
}

fn check_spec(spec: &SamplerSpec) -> Result<()> {
    if spec.num_points == 0 {
        return Err(Error::config("coefficients", "num_points must be at least 1"));
    }
    if !(spec.box_radius.is_finite() && spec.box_radius >= 0.0) {
        return Err(Error::config("coefficients", "box_radius must be finite and nonnegative"));
    }
    if !(spec.time_max.is_finite() && spec.time_max >= 0.0) {
        return Err(Error::config("coefficients", "time_max must be finite and nonnegative"));
    }
    Ok(())
}

/// Unit direction in the selected coordinates of the concatenated `(z, zeta)`.
fn direction(rng: &CounterRng, i: u64, lane_counter: u32, coords: &[usize], len: usize) -> Vec<f64> {
    let mut g = vec![0.0; coords.len()];
    rng.fill_normals(Domain::Validator, i, lane_counter, &mut g);
    let norm = euclidean_norm(&g).max(f64::MIN_POSITIVE);
    let mut dir = vec![0.0; len];
    for (&c, v) in coords.iter().zip(&g) {
        dir[c] = v / norm;
    }
    dir
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn validate_hypotheses(cs: &dyn Coefficients, spec: &SamplerSpec) -> Result<HypothesisReport> {
    check_spec(spec)?;
    let d = cs.dim();
    let w = 2 * d;
    let model = cs.model();
    let rng = CounterRng::new(spec.seed);
    // (x, xi) coordinates of the concatenated state, and all of (z, zeta).
    let x_xi: Vec<usize> = (0..d).chain(2 * d..3 * d).collect();
    let everything: Vec<usize> = (0..2 * w).collect();

    let outcomes: Vec<PointOutcome> = (0..spec.num_points as u64)
        .into_par_iter()
        .map_init(
            || (EvalScratch::new(d), CoeffSample::zeros(d), CoeffSample::zeros(d)),
            |(scratch, base, other), i| {
                let p = sample_point(&rng, spec, d, i);
                model.prepare(p.t, &p.zeta).eval(&p.z, scratch, base);
                let mut var_x_xi = [0.0; 3];
                let mut var_b0 = [0.0; 3];
                let dir_a = direction(&rng, i, 1, &x_xi, 2 * w);
                let dir_b = direction(&rng, i, 2, &everything, 2 * w);
                let joined: Vec<f64> = p.z.iter().chain(&p.zeta).copied().collect();
                for (k, &r) in SEPARATIONS.iter().enumerate() {
                    let moved: Vec<f64> = joined.iter().zip(&dir_a).map(|(v, e)| v + r * e).collect();
                    model.prepare(p.t, &moved[w..]).eval(&moved[..w], scratch, other);
                    var_x_xi[k] = diff_norm(&base.b1, &other.b1).max(diff_norm(&base.sigma, &other.sigma));
                    let moved: Vec<f64> = joined.iter().zip(&dir_b).map(|(v, e)| v + r * e).collect();
                    model.prepare(p.t, &moved[w..]).eval(&moved[..w], scratch, other);
                    var_b0[k] = diff_norm(&base.b0, &other.b0);
                }
                PointOutcome {
                    bound_norm: base.bound_norm(),
                    min_eig: base.min_eigenvalue(),
                    symmetric: is_exactly_symmetric(&base.sigma, d),
                    asym: asymmetry(&base.sigma, d),
                    var_x_xi,
                    var_b0,
                    point: p,
                }
            },
        )
        .collect();

    let c = cs.bound();
    let nu = cs.ellipticity();
    let mut worst_bound = 0usize;
    let mut worst_eig = 0usize;
    for (i, o) in outcomes.iter().enumerate() {
        if o.bound_norm > outcomes[worst_bound].bound_norm {
            worst_bound = i;
        }
        if o.min_eig < outcomes[worst_eig].min_eig {
            worst_eig = i;
        }
    }
    let bound_margin = c - outcomes[worst_bound].bound_norm;
    let eig_margin = outcomes[worst_eig].min_eig - nu;
    let bound = ConditionResult {
        pass: bound_margin >= -TOLERANCE,
        margin: bound_margin,
        worst: outcomes[worst_bound].point.clone(),
    };
    let ellipticity = ConditionResult {
        pass: eig_margin >= -TOLERANCE,
        margin: eig_margin,
        worst: outcomes[worst_eig].point.clone(),
    };
    let symmetry = SymmetryResult {
        pass: outcomes.iter().all(|o| o.symmetric),
        max_asymmetry: outcomes.iter().map(|o| o.asym).fold(0.0, f64::max),
    };
    let continuity = |pick: fn(&PointOutcome) -> &[f64; 3]| {
        let rows: Vec<ModulusRow> = SEPARATIONS
            .iter()
            .enumerate()
            .map(|(k, &r)| ModulusRow {
                separation: r,
                max_variation: outcomes.iter().map(|o| pick(o)[k]).fold(0.0, f64::max),
                rho: cs.modulus().map(|m| m.eval(r)),
            })
            .collect();
        let pass = cs.modulus().map(|_| {
            rows.iter()
                .all(|row| row.max_variation <= row.rho.unwrap_or(f64::INFINITY) + TOLERANCE)
        });
        ContinuityResult { pass, rows }
    };
    let continuity_x_xi = continuity(|o| &o.var_x_xi);
    let continuity_b0 = continuity(|o| &o.var_b0);
    let all_pass = bound.pass
        && ellipticity.pass
        && symmetry.pass
        && continuity_x_xi.pass.unwrap_or(true)
        && continuity_b0.pass.unwrap_or(true);
    Ok(HypothesisReport {
        system: cs.name().to_string(),
        level: cs.level(),
        d,
        sampler: spec.clone(),
        tolerance: TOLERANCE,
        declared_bound: c,
        declared_ellipticity: nu,
        modulus: cs.modulus().map(|m| m.label.clone()),
        bound,
        ellipticity,
        symmetry,
        continuity_x_xi,
        continuity_b0,
        all_pass,
    })
}

/// Worst ellipticity margin `min (lambda_min(sigma) - nu)` over the sampler
/// points, with the point achieving it.
pub fn ellipticity_margin(cs: &dyn Coefficients, spec: &SamplerSpec) -> Result<(f64, SamplePoint)> {
    check_spec(spec)?;
    let d = cs.dim();
    let model = cs.model();
    let rng = CounterRng::new(spec.seed);
    let eigs: Vec<f64> = (0..spec.num_points as u64)
        .into_par_iter()
        .map_init(
            || (EvalScratch::new(d), CoeffSample::zeros(d)),
            |(scratch, out), i| {
                let p = sample_point(&rng, spec, d, i);
                model.prepare(p.t, &p.zeta).eval(&p.z, scratch, out);
                out.min_eigenvalue()
            },
        )
        .collect();
    let (worst, _) = eigs
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    Ok((eigs[worst] - cs.ellipticity(), sample_point(&rng, spec, d, worst as u64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::catalog::{self, fixtures};

    fn spec(n: usize) -> SamplerSpec {
        SamplerSpec {
            num_points: n,
            ..SamplerSpec::default()
        }
    }

    #[test]
    fn free_system_passes_with_unit_margin() {
        let cs = catalog::by_name("free").unwrap();
        let r = validate_hypotheses(&cs, &spec(1000)).unwrap();
        assert!(r.all_pass);
        assert_eq!(r.ellipticity.margin, 1.0 - 1.0);
    }

    #[test]
    fn constant_system_margin_is_one_minus_nu() {
        let cs = fixtures::scaled_identity(1, 1.0, 0.25).unwrap();
        let r = validate_hypotheses(&cs, &spec(1000)).unwrap();
        assert!(r.all_pass);
        assert_eq!(r.ellipticity.margin, 0.75);
    }

    #[test]
    fn zero_diffusion_fails_by_nu() {
        let cs = fixtures::zero_diffusion(1, 0.4).unwrap();
        let r = validate_hypotheses(&cs, &spec(100)).unwrap();
        assert!(!r.ellipticity.pass);
        assert!(!r.all_pass);
        assert_eq!(r.ellipticity.margin, -0.4);
    }

    #[test]
    fn continuity_without_modulus_is_observational() {
        let cs = fixtures::sign_x_drift().unwrap();
        let r = validate_hypotheses(&cs, &spec(2000)).unwrap();
        assert_eq!(r.continuity_x_xi.pass, None);
        // The jump of sign(x) shows up at every separation.
        assert!(r.continuity_x_xi.rows[0].max_variation > 1.0);
    }

    #[test]
    fn result_independent_of_worker_count() {
        let cs = catalog::by_name("rough").unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| validate_hypotheses(&cs, &spec(500)).unwrap());
        let b = four.install(|| validate_hypotheses(&cs, &spec(500)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_sampler() {
        let cs = catalog::by_name("free").unwrap();
        assert!(validate_hypotheses(&cs, &spec(0)).is_err());
    }
}
