//! Euler-Maruyama stepping of the particle system.
//!
//! ```text
//! x_i <- x_i + B0_i h
//! y_i <- y_i + B1_i h + Sigma_i sqrt(h) g_i
//! ```
//!
//! with all mean-field values taken at the pre-step ensemble and time. The
//! Gaussian `g_i` for particle `i` at step `k` is the counter-RNG block
//! `(seed, Wiener, stream = i, counter = k)`; initial draws live in a
//! disjoint domain, so the initial law is independent of the noise by
//! construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{catalog, CoefficientSet, Coefficients};
use crate::error::{Error, Result};
use crate::meanfield::{mf_batch_against, Subsample};
use crate::mollifier::{mollify, QuadratureSpec};
use crate::rng::{CounterRng, Domain};

const MODULE: &str = "integrator";
const ROW_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialLawSpec {
    Point { z0: Vec<f64> },
    Gaussian { mean: Vec<f64>, scale: f64 },
    UniformBall { center: Vec<f64>, radius: f64 },
}

impl InitialLawSpec {
    fn validate(&self, d: usize) -> Result<()> {
        let (center, spread) = match self {
            InitialLawSpec::Point { z0 } => (z0, 0.0),
            InitialLawSpec::Gaussian { mean, scale } => (mean, *scale),
            InitialLawSpec::UniformBall { center, radius } => (center, *radius),
        };
        if center.len() != 2 * d {
            return Err(Error::config(
                MODULE,
                format!("initial center has {} entries, expected 2d = {}", center.len(), 2 * d),
            ));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(MODULE, "initial center must be finite"));
        }
        if !(spread.is_finite() && spread >= 0.0) {
            return Err(Error::config(MODULE, format!("initial scale/radius must be nonnegative, got {spread}")));
        }
        Ok(())
    }
}

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub system: String,
    /// Mollification level, 0 for raw coefficients.
    pub level: u32,
    pub d: usize,
    pub particles: usize,
    pub horizon: f64,
    pub steps: usize,
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub init: InitialLawSpec,
    pub subsample: Subsample,
    pub stride: usize,
    pub retain_increments: bool,
    /// Drive the mean field with a second, independently seeded ensemble.
    pub independent_copy: bool,
    pub quadrature: QuadratureSpec,
}

/// Seeds above `i64::MAX` are written as strings, since TOML integers are
/// signed 64-bit.
mod seed_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(v),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl SimulationConfig {
    /// Point start at the origin, full mean field, every step kept.
    pub fn new(system: impl Into<String>, d: usize, particles: usize, horizon: f64, steps: usize, seed: u64) -> Self {
        Self {
            system: system.into(),
            level: 0,
            d,
            particles,
            horizon,
            steps,
            seed,
            init: InitialLawSpec::Point { z0: vec![0.0; 2 * d] },
            subsample: Subsample::Full,
            stride: 1,
            retain_increments: false,
            independent_copy: false,
            quadrature: QuadratureSpec::default_for(d),
        }
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of step `k`, computed as `k * h` rather than accumulated.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step_size()
    }

    /// Step indices at which snapshots are taken: multiples of the stride,
    /// plus the final step.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = (0..=self.steps).step_by(self.stride.max(1)).collect();
        if *ks.last().unwrap() != self.steps {
            ks.push(self.steps);
        }
        ks
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config(MODULE, "d must be positive"));
        }
        if self.particles == 0 {
            return Err(Error::config(MODULE, "N must be at least 1"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config(MODULE, format!("T must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 || self.steps > u32::MAX as usize {
            return Err(Error::config(MODULE, format!("steps out of range: {}", self.steps)));
        }
        if self.stride == 0 {
            return Err(Error::config(MODULE, "stride must be at least 1"));
        }
        if let Subsample::Count(m) = self.subsample {
            if m == 0 || m > self.particles {
                return Err(Error::config(
                    MODULE,
                    format!("subsample must lie in 1..={}, got {m}", self.particles),
                ));
            }
        }
        self.init.validate(self.d)
    }

    /// The coefficient set this run integrates, mollified when `level >= 1`.
    pub fn coefficients(&self) -> Result<Box<dyn Coefficients>> {
        let cs = catalog::by_name(&self.system)?;
        self.coefficients_from(cs)
    }

    pub fn coefficients_from(&self, cs: CoefficientSet) -> Result<Box<dyn Coefficients>> {
        if cs.dim() != self.d {
            return Err(Error::config(
                MODULE,
                format!("system {} has d = {}, config says d = {}", cs.name(), cs.dim(), self.d),
            ));
        }
        Ok(if self.level == 0 {
            Box::new(cs)
        } else {
            Box::new(mollify(&cs, self.level, &self.quadrature)?)
        })
    }
}

/// Particle states at one time, row-major `N x 2d` with `x` before `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub t: f64,
    pub d: usize,
    pub atoms: Vec<f64>,
    /// Index of the next step; keys the Wiener stream.
    pub epoch: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.atoms.len() / (2 * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * 2 * self.d..(i + 1) * 2 * self.d]
    }
}

/// Which of the two independent ensembles a draw belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Main,
    Copy,
}

impl Stream {
    fn initial(self) -> Domain {
        match self {
            Stream::Main => Domain::Initial,
            Stream::Copy => Domain::CopyInitial,
        }
    }

    fn wiener(self) -> Domain {
        match self {
            Stream::Main => Domain::Wiener,
            Stream::Copy => Domain::CopyWiener,
        }
    }
}

pub fn init_ensemble(spec: &InitialLawSpec, n: usize, d: usize, seed: u64) -> Result<ParticleEnsemble> {
    init_ensemble_stream(spec, n, d, seed, Stream::Main)
}

pub fn init_ensemble_stream(
    spec: &InitialLawSpec,
    n: usize,
    d: usize,
    seed: u64,
    stream: Stream,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::config(MODULE, "N must be at least 1"));
    }
    if d == 0 {
        return Err(Error::config(MODULE, "d must be positive"));
    }
    spec.validate(d)?;
    let w = 2 * d;
    let rng = CounterRng::new(seed);
    let domain = stream.initial();
    let mut atoms = vec![0.0; n * w];
    atoms.par_chunks_mut(w).enumerate().for_each(|(i, row)| match spec {
        InitialLawSpec::Point { z0 } => row.copy_from_slice(z0),
        InitialLawSpec::Gaussian { mean, scale } => {
            rng.fill_normals(domain, i as u64, 0, row);
            for (v, m) in row.iter_mut().zip(mean) {
                *v = m + scale * *v;
            }
        }
        InitialLawSpec::UniformBall { center, radius } => {
            rng.fill_normals(domain, i as u64, 0, row);
            let norm = crate::numeric::euclidean_norm(row);
            let [u, _] = rng.uniform_pair(domain, i as u64, 1, 0);
            let r = radius * u.powf(1.0 / w as f64);
            for (v, c) in row.iter_mut().zip(center) {
                *v = if norm > 0.0 { c + r * *v / norm } else { *c };
            }
        }
    });
    Ok(ParticleEnsemble {
        t: 0.0,
        d,
        atoms,
        epoch: 0,
    })
}

/// How one step evaluates the mean field.
#[derive(Clone, Copy, Debug)]
pub struct StepParams<'a> {
    pub h: f64,
    pub seed: u64,
    pub subsample: Subsample,
    pub stream: Stream,
    /// Measure to interact with; `None` for the ensemble's own.
    pub measure: Option<&'a [f64]>,
    /// Time to assign to the result, so callers can use `k * h` exactly.
    pub next_time: Option<f64>,
}

impl<'a> StepParams<'a> {
    pub fn new(h: f64, seed: u64) -> Self {
        Self {
            h,
            seed,
            subsample: Subsample::Full,
            stream: Stream::Main,
            measure: None,
            next_time: None,
        }
    }
}

pub struct StepOutput {
    pub ensemble: ParticleEnsemble,
    /// `sqrt(h) g_i`, row-major `N x d`.
    pub increments: Vec<f64>,
}

pub fn em_step(ens: &ParticleEnsemble, cs: &dyn Coefficients, p: &StepParams<'_>) -> Result<StepOutput> {
    let d = ens.d;
    if cs.dim() != d {
        return Err(Error::Shape {
            module: MODULE,
            expected: cs.dim(),
            got: d,
        });
    }
    if !(p.h.is_finite() && p.h > 0.0) {
        return Err(Error::domain(MODULE, format!("step size must be positive, got {}", p.h)));
    }
    let w = 2 * d;
    let n = ens.len();
    let step = ens.epoch;
    let table = mf_batch_against(cs, ens.t, &ens.atoms, p.measure.unwrap_or(&ens.atoms), p.subsample, p.seed, step)?;
    let rng = CounterRng::new(p.seed);
    let domain = p.stream.wiener();
    let sqrt_h = p.h.sqrt();
    let mut atoms = ens.atoms.clone();
    let mut increments = vec![0.0; n * d];
    atoms
        .par_chunks_mut(ROW_CHUNK * w)
        .zip(increments.par_chunks_mut(ROW_CHUNK * d))
        .enumerate()
        .for_each(|(c, (rows, incs))| {
            for r in 0..rows.len() / w {
                let i = c * ROW_CHUNK + r;
                let z = &mut rows[r * w..(r + 1) * w];
                let dw = &mut incs[r * d..(r + 1) * d];
                rng.fill_normals(domain, i as u64, step as u32, dw);
                dw.iter_mut().for_each(|g| *g *= sqrt_h);
                let b0 = &table.b0[i * d..(i + 1) * d];
                let b1 = &table.b1[i * d..(i + 1) * d];
                let s = &table.sigma[i * d * d..(i + 1) * d * d];
                for k in 0..d {
                    z[k] += b0[k] * p.h;
                    let noise: f64 = (0..d).map(|j| s[k * d + j] * dw[j]).sum();
                    z[d + k] += b1[k] * p.h + noise;
                }
            }
        });
    if let Some(pos) = atoms.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            particle: pos / w,
            step: step as usize,
        });
    }
    Ok(StepOutput {
        ensemble: ParticleEnsemble {
            t: p.next_time.unwrap_or(ens.t + p.h),
            d,
            atoms,
            epoch: step + 1,
        },
        increments,
    })
}

/// Output of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStore {
    pub config: SimulationConfig,
    pub snapshot_steps: Vec<usize>,
    pub times: Vec<f64>,
    /// One `N x 2d` block per snapshot.
    pub snapshots: Vec<Vec<f64>>,
    /// Per-step Wiener increments `steps x N x d`, when retained.
    pub increments: Option<Vec<Vec<f64>>>,
    /// The independent ensemble at each snapshot, when enabled.
    pub copy_snapshots: Option<Vec<Vec<f64>>>,
}

impl TrajectoryStore {
    pub fn d(&self) -> usize {
        self.config.d
    }

    pub fn particles(&self) -> usize {
        self.config.particles
    }

    pub fn width(&self) -> usize {
        2 * self.config.d
    }

    pub fn last(&self) -> &[f64] {
        self.snapshots.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Snapshot index holding step `k`.
    pub fn snapshot_at_step(&self, k: usize) -> Option<usize> {
        self.snapshot_steps.binary_search(&k).ok()
    }
}

/// Resolves the configured system from the catalog and runs it.
pub fn simulate(config: &SimulationConfig) -> Result<TrajectoryStore> {
    config.validate()?;
    let cs = config.coefficients()?;
    simulate_with(config, cs.as_ref())
}

/// Runs `config` with an explicitly supplied coefficient set.
pub fn simulate_with(config: &SimulationConfig, cs: &dyn Coefficients) -> Result<TrajectoryStore> {
    config.validate()?;
    if cs.dim() != config.d {
        return Err(Error::config(
            MODULE,
            format!("coefficients have d = {}, config says d = {}", cs.dim(), config.d),
        ));
    }
    let h = config.step_size();
    let snapshot_steps = config.snapshot_steps();
    let mut ens = init_ensemble(&config.init, config.particles, config.d, config.seed)?;
    let mut copy = if config.independent_copy {
        Some(init_ensemble_stream(&config.init, config.particles, config.d, config.seed, Stream::Copy)?)
    } else {
        None
    };
    let mut snapshots = vec![ens.atoms.clone()];
    let mut copy_snapshots = copy.as_ref().map(|c| vec![c.atoms.clone()]);
    let mut increments = config.retain_increments.then(|| Vec::with_capacity(config.steps));
    let mut next_snap = 1;
    for k in 0..config.steps {
        let next_time = Some(config.time(k + 1));
        let next_copy = match &copy {
            Some(c) => {
                let params = StepParams {
                    stream: Stream::Copy,
                    subsample: config.subsample,
                    next_time,
                    ..StepParams::new(h, config.seed)
                };
                Some(em_step(c, cs, &params)?.ensemble)
            }
            None => None,
        };
        let params = StepParams {
            subsample: config.subsample,
            measure: copy.as_ref().map(|c| c.atoms.as_slice()),
            next_time,
            ..StepParams::new(h, config.seed)
        };
        let out = em_step(&ens, cs, &params)?;
        ens = out.ensemble;
        copy = next_copy;
        if let Some(incs) = increments.as_mut() {
            incs.push(out.increments);
        }
        if snapshot_steps.get(next_snap) == Some(&(k + 1)) {
            snapshots.push(ens.atoms.clone());
            if let (Some(cs), Some(c)) = (copy_snapshots.as_mut(), copy.as_ref()) {
                cs.push(c.atoms.clone());
            }
            next_snap += 1;
        }
    }
    let times = snapshot_steps.iter().map(|&k| config.time(k)).collect();
    Ok(TrajectoryStore {
        config: config.clone(),
        snapshot_steps,
        times,
        snapshots,
        increments,
        copy_snapshots,
    })
}
