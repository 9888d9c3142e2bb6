//! Mean-field coefficients against an empirical measure.
//!
//! `B[t, z, mu] = (1/N) sum_j b(t, z, zeta_j)` with every atom weighted
//! equally and a particle's own atom included in its measure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoeffSample, Coefficients, EvalScratch};
use crate::error::{Error, Result};
use crate::rng::{CounterRng, Domain};

const MODULE: &str = "meanfield";
const ROW_CHUNK: usize = 256;

/// `N` atoms in `R^{2d}`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    d: usize,
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(d: usize, atoms: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain(MODULE, "dimension must be positive"));
        }
        if atoms.is_empty() {
            return Err(Error::domain(MODULE, "empirical measure has no atoms"));
        }
        if !atoms.len().is_multiple_of(2 * d) {
            return Err(Error::Shape {
                module: MODULE,
                expected: 2 * d * (atoms.len() / (2 * d) + 1),
                got: atoms.len(),
            });
        }
        if let Some(i) = atoms.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(MODULE, format!("atom {} is not finite", i / (2 * d))));
        }
        Ok(Self { d, atoms })
    }

    pub fn from_rows(d: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != 2 * d) {
            return Err(Error::Shape {
                module: MODULE,
                expected: 2 * d,
                got: r.len(),
            });
        }
        Self::new(d, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / (2 * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * 2 * self.d..(i + 1) * 2 * self.d]
    }
}

/// Which atoms enter each particle's measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Subsample {
    #[default]
    Full,
    /// A seeded subsample of `M` atoms drawn without replacement, fresh at
    /// every step and shared by all particles of that step.
    Count(usize),
}

impl Serialize for Subsample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Subsample::Full => s.serialize_str("full"),
            Subsample::Count(m) => s.serialize_u64(*m as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Subsample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "full" => Ok(Subsample::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected \"full\" or a positive integer, got \"{w}\""
            ))),
            Raw::Count(m) if m >= 0 => Ok(Subsample::Count(m as usize)),
            Raw::Count(m) => Err(serde::de::Error::custom(format!("subsample must be nonnegative, got {m}"))),
        }
    }
}

impl std::fmt::Display for Subsample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Subsample::Full => f.write_str("full"),
            Subsample::Count(m) => write!(f, "{m}"),
        }
    }
}

fn check_args(cs: &dyn Coefficients, t: f64, z: &[f64], mu: &EmpiricalMeasure) -> Result<()> {
    let d = cs.dim();
    if mu.dim() != d {
        return Err(Error::Shape {
            module: MODULE,
            expected: 2 * d,
            got: 2 * mu.dim(),
        });
    }
    if z.len() != 2 * d {
        return Err(Error::Shape {
            module: MODULE,
            expected: 2 * d,
            got: z.len(),
        });
    }
    check_time(cs, t)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(MODULE, "non-finite evaluation point"));
    }
    Ok(())
}

fn check_time(cs: &dyn Coefficients, t: f64) -> Result<()> {
    if !t.is_finite() || (t < 0.0 && cs.level() == 0) {
        return Err(Error::domain(MODULE, format!("invalid time {t}")));
    }
    Ok(())
}

/// All three mean-field coefficients at one point.
pub fn mf_all(cs: &dyn Coefficients, t: f64, z: &[f64], mu: &EmpiricalMeasure) -> Result<CoeffSample> {
    check_args(cs, t, z, mu)?;
    let mut out = CoeffSample::zeros(cs.dim());
    cs.model()
        .prepare(t, mu.atoms())
        .eval(z, &mut EvalScratch::new(cs.dim()), &mut out);
    Ok(out)
}

pub fn mf_drift0(cs: &dyn Coefficients, t: f64, z: &[f64], mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    mf_all(cs, t, z, mu).map(|s| s.b0)
}

pub fn mf_drift1(cs: &dyn Coefficients, t: f64, z: &[f64], mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    mf_all(cs, t, z, mu).map(|s| s.b1)
}

/// Row-major symmetric `d x d` matrix.
pub fn mf_sigma(cs: &dyn Coefficients, t: f64, z: &[f64], mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    mf_all(cs, t, z, mu).map(|s| s.sigma)
}

/// Per-particle mean-field values, row-major: `b0` and `b1` are `N x d`,
/// `sigma` is `N x d x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldTable {
    pub d: usize,
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl MeanFieldTable {
    pub fn len(&self) -> usize {
        self.b0.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.b0.is_empty()
    }

    pub fn row(&self, i: usize) -> CoeffSample {
        let d = self.d;
        CoeffSample {
            b0: self.b0[i * d..(i + 1) * d].to_vec(),
            b1: self.b1[i * d..(i + 1) * d].to_vec(),
            sigma: self.sigma[i * d * d..(i + 1) * d * d].to_vec(),
        }
    }
}

/// Atoms `0..n` in a seeded order, first `m` kept: a partial Fisher-Yates
/// shuffle keyed by `(seed, step)`.
pub fn subsample_indices(n: usize, m: usize, seed: u64, step: u64) -> Vec<usize> {
    let rng = CounterRng::new(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m.min(n.saturating_sub(1)) {
        let [u, _] = rng.uniform_pair(Domain::Subsample, step, i as u32, 0);
        let j = i + ((u * (n - i) as f64) as usize).min(n - i - 1);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx
}

/// Mean-field values at every point of `points` against `measure`.
///
/// With [`Subsample::Count`] the measure is replaced by a seeded subsample;
/// `M = N` keeps the full measure in its original order.
pub fn mf_batch_against(
    cs: &dyn Coefficients,
    t: f64,
    points: &[f64],
    measure: &[f64],
    subsample: Subsample,
    seed: u64,
    step: u64,
) -> Result<MeanFieldTable> {
    let d = cs.dim();
    let w = 2 * d;
    check_time(cs, t)?;
    if points.is_empty() || measure.is_empty() {
        return Err(Error::domain(MODULE, "ensemble is empty"));
    }
    if !points.len().is_multiple_of(w) || !measure.len().is_multiple_of(w) {
        return Err(Error::Shape {
            module: MODULE,
            expected: w,
            got: points.len() % w + measure.len() % w,
        });
    }
    let n_measure = measure.len() / w;
    let picked;
    let atoms: &[f64] = match subsample {
        Subsample::Full => measure,
        Subsample::Count(0) => return Err(Error::config(MODULE, "subsample must be at least 1")),
        Subsample::Count(m) if m > n_measure => {
            return Err(Error::config(
                MODULE,
                format!("subsample {m} exceeds ensemble size {n_measure}"),
            ))
        }
        Subsample::Count(m) if m == n_measure => measure,
        Subsample::Count(m) => {
            picked = subsample_indices(n_measure, m, seed, step)
                .into_iter()
                .flat_map(|i| measure[i * w..(i + 1) * w].iter().copied())
                .collect::<Vec<f64>>();
            &picked
        }
    };
    let n = points.len() / w;
    let field = cs.model().prepare(t, atoms);
    let mut b0 = vec![0.0; n * d];
    let mut b1 = vec![0.0; n * d];
    let mut sigma = vec![0.0; n * d * d];
    b0.par_chunks_mut(ROW_CHUNK * d)
        .zip(b1.par_chunks_mut(ROW_CHUNK * d))
        .zip(sigma.par_chunks_mut(ROW_CHUNK * d * d))
        .enumerate()
        .for_each_init(
            || (EvalScratch::new(d), CoeffSample::zeros(d)),
            |(scratch, sample), (c, ((o0, o1), os))| {
                let first = c * ROW_CHUNK;
                for r in 0..o0.len() / d {
                    let i = first + r;
                    field.eval(&points[i * w..(i + 1) * w], scratch, sample);
                    o0[r * d..(r + 1) * d].copy_from_slice(&sample.b0);
                    o1[r * d..(r + 1) * d].copy_from_slice(&sample.b1);
                    os[r * d * d..(r + 1) * d * d].copy_from_slice(&sample.sigma);
                }
            },
        );
    Ok(MeanFieldTable { d, b0, b1, sigma })
}

/// Mean-field values for every particle of an ensemble against the
/// ensemble's own empirical measure.
pub fn mf_batch(
    cs: &dyn Coefficients,
    t: f64,
    atoms: &[f64],
    subsample: Subsample,
    seed: u64,
    step: u64,
) -> Result<MeanFieldTable> {
    mf_batch_against(cs, t, atoms, atoms, subsample, seed, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::catalog::{self, fixtures};
    use crate::coefficients::eval_all;

    fn measure(d: usize, rows: &[&[f64]]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_rows(d, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn trivial_examples() {
        let c = fixtures::constant_drift(vec![0.3]).unwrap();
        let mu = measure(1, &[&[1.0, 2.0], &[5.0, -1.0]]);
        assert_eq!(mf_drift0(&c, 0.0, &[0.0, 0.0], &mu).unwrap(), vec![0.3]);
        assert_eq!(mf_sigma(&c, 0.0, &[0.0, 0.0], &mu).unwrap(), vec![1.0]);

        let lin = fixtures::linear_interaction().unwrap();
        let mu = measure(1, &[&[1.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(mf_drift0(&lin, 0.0, &[9.0, 9.0], &mu).unwrap(), vec![2.0]);

        let ind = fixtures::eta_indicator_diffusion().unwrap();
        let mu = measure(1, &[&[0.0, 1.0], &[0.0, -1.0]]);
        assert_eq!(mf_sigma(&ind, 0.0, &[0.0, 0.0], &mu).unwrap(), vec![1.25]);
    }

    #[test]
    fn saturating_matches_hand_sum() {
        let cs = catalog::by_name("saturating").unwrap();
        let atoms = [[0.5, -1.0], [-0.25, 2.0], [1.5, 0.0]];
        let mu = measure(1, &[&atoms[0], &atoms[1], &atoms[2]]);
        let z = [0.2, 0.1];
        // b0 = tanh(xi - x) with kappa = 1.
        let hand = ((0.5f64 - 0.2).tanh() + (-0.25f64 - 0.2).tanh() + (1.5f64 - 0.2).tanh()) / 3.0;
        let got = mf_drift0(&cs, 0.4, &z, &mu).unwrap()[0];
        assert!((got - hand).abs() < 1e-15, "{got} vs {hand}");
        let b1 = mf_drift1(&cs, 0.4, &z, &mu).unwrap()[0];
        assert!((b1 - hand).abs() < 1e-15);
    }

    #[test]
    fn anisotropic_matches_direct_summation() {
        let cs = catalog::by_name("anisotropic-d2").unwrap();
        let atoms: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..4).map(|k| (0.3 * j as f64 - 0.7 * k as f64).sin() * 2.0).collect())
            .collect();
        let mu = EmpiricalMeasure::from_rows(2, &atoms).unwrap();
        let z = [0.4, -0.3, 1.1, 0.2];
        let mut direct = vec![0.0; 4];
        for a in &atoms {
            let s = eval_all(&cs, 0.7, &z, a).unwrap();
            for (o, v) in direct.iter_mut().zip(&s.sigma) {
                *o += v / 4.0;
            }
        }
        let got = mf_sigma(&cs, 0.7, &z, &mu).unwrap();
        for (g, h) in got.iter().zip(&direct) {
            assert!((g - h).abs() < 1e-14, "{got:?} vs {direct:?}");
        }
        assert_eq!(got[1], got[2]);
    }

    #[test]
    fn errors() {
        assert!(EmpiricalMeasure::new(1, vec![]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![1.0]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![1.0, f64::NAN]).is_err());
        let cs = catalog::by_name("free").unwrap();
        assert!(matches!(
            mf_batch(&cs, 0.0, &[], Subsample::Full, 1, 0),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            mf_batch(&cs, 0.0, &[0.0, 0.0], Subsample::Count(0), 1, 0),
            Err(Error::Config { .. })
        ));
        assert!(mf_batch(&cs, 0.0, &[0.0, 0.0], Subsample::Count(2), 1, 0).is_err());
    }

    #[test]
    fn batch_rows_match_scalar_operations() {
        let cs = catalog::by_name("saturating").unwrap();
        let atoms = vec![0.5, -1.0, -0.25, 2.0, 1.5, 0.0];
        let mu = EmpiricalMeasure::new(1, atoms.clone()).unwrap();
        let table = mf_batch(&cs, 0.3, &atoms, Subsample::Full, 0, 0).unwrap();
        for i in 0..3 {
            assert_eq!(table.row(i), mf_all(&cs, 0.3, mu.atom(i), &mu).unwrap());
        }
        let single = mf_batch(&cs, 0.3, &atoms[..2], Subsample::Full, 0, 0).unwrap();
        assert_eq!(single.row(0), eval_all(&cs, 0.3, &atoms[..2], &atoms[..2]).unwrap());
        let same = mf_batch(&cs, 0.3, &atoms, Subsample::Count(3), 9, 4).unwrap();
        assert_eq!(same, table);
    }

    #[test]
    fn subsample_is_seeded_without_replacement() {
        let a = subsample_indices(100, 10, 3, 7);
        assert_eq!(a, subsample_indices(100, 10, 3, 7));
        assert_ne!(a, subsample_indices(100, 10, 3, 8));
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|i| *i < 100));
    }

    #[test]
    fn subsample_serde() {
        #[derive(Deserialize, Serialize)]
        struct W {
            s: Subsample,
        }
        let w: W = toml::from_str("s = \"full\"").unwrap();
        assert_eq!(w.s, Subsample::Full);
        let w: W = toml::from_str("s = 40").unwrap();
        assert_eq!(w.s, Subsample::Count(40));
        assert!(toml::from_str::<W>("s = \"half\"").is_err());
        assert!(toml::from_str::<W>("s = -1").is_err());
        assert_eq!(serde_json::to_string(&Subsample::Count(4)).unwrap(), "4");
    }

    #[test]
    fn rough_batch_is_worker_count_independent() {
        let cs = catalog::by_name("rough").unwrap();
        let atoms: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 1000) as f64 / 250.0 - 2.0).collect();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mf_batch(&cs, 0.8, &atoms, Subsample::Full, 0, 0).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| mf_batch(&cs, 0.8, &atoms, Subsample::Full, 0, 0).unwrap());
        assert_eq!(one, four);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn permutation_invariance(atoms in prop::collection::vec(-3.0f64..3.0, 2..40), rot in 0usize..20) {
                let atoms: Vec<f64> = atoms[..atoms.len() / 2 * 2].to_vec();
                let n = atoms.len() / 2;
                let mut perm = atoms.clone();
                perm.rotate_left(2 * (rot % n));
                for name in ["saturating", "rough"] {
                    let cs = catalog::by_name(name).unwrap();
                    let a = mf_all(&cs, 0.9, &[0.1, -0.4], &EmpiricalMeasure::new(1, atoms.clone()).unwrap()).unwrap();
                    let b = mf_all(&cs, 0.9, &[0.1, -0.4], &EmpiricalMeasure::new(1, perm.clone()).unwrap()).unwrap();
                    for (x, y) in a.b0.iter().chain(&a.b1).chain(&a.sigma).zip(b.b0.iter().chain(&b.b1).chain(&b.sigma)) {
                        prop_assert!((x - y).abs() <= 1e-12);
                    }
                }
            }

            #[test]
            fn convexity_bounds(atoms in prop::collection::vec(-5.0f64..5.0, 4..40), t in 0.0f64..2.0) {
                let atoms: Vec<f64> = atoms[..atoms.len() / 4 * 4].to_vec();
                for name in ["rough-d2", "anisotropic-d2"] {
                    let cs = catalog::by_name(name).unwrap();
                    let table = mf_batch(&cs, t, &atoms, Subsample::Full, 0, 0).unwrap();
                    for i in 0..table.len() {
                        let row = table.row(i);
                        prop_assert!(row.bound_norm() <= cs.bound() + 1e-9);
                        prop_assert!(row.min_eigenvalue() >= cs.ellipticity() - 1e-9);
                    }
                }
            }
        }
    }
}
