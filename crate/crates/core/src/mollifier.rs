//! Coefficient mollification.
//!
//! Every coefficient is convolved in all `1 + 4d` variables with the bump
//! `kappa * exp(-1 / (1 - (u / eps)^2))`, `eps = 1 / n`, one profile per axis.
//! Before convolving in time, drifts are extended by zero and the diffusion
//! by the identity for `t < 0`.
//!
//! The convolution integral is discretized on a fixed lattice of cell
//! midpoints `(k + 1/2) * 2 eps / P` per axis with the kernel weights
//! renormalized at each evaluation point. Weights are positive and sum to
//! one, so bounds and ellipticity carry over; and because the lattice does
//! not move with the evaluation point, the result is smooth in every
//! argument. Product terms are convolved factor by factor (exact for a
//! tensor rule); dense terms use the tensor lattice or a quasi-random table.

use serde::{Deserialize, Serialize};

use crate::coefficients::{
    bump, Axis, CoeffSample, CoefficientSet, Coefficients, DenseRule, EvalScratch, Model, Modulus, Smoothing,
    MAX_AXIS_POINTS,
};
use crate::error::{Error, Result};
use crate::rng::{CounterRng, Domain};

const MODULE: &str = "mollifier";

/// One-dimensional bump kernel of half-width `bandwidth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierKernel {
    pub bandwidth: f64,
    /// `kappa`, chosen so the profile integrates to one.
    pub normalization: f64,
}

impl MollifierKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::construction(MODULE, format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self {
            bandwidth,
            normalization: 1.0 / (bandwidth * unit_bump_integral()),
        })
    }

    /// Kernel for level `n`: `eps = 1 / n`.
    pub fn for_level(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::construction(MODULE, "mollification level must be at least 1"));
        }
        Self::new(1.0 / f64::from(n))
    }

    pub fn profile(&self, u: f64) -> f64 {
        self.normalization * bump(u / self.bandwidth)
    }
}

/// `\int_{-1}^{1} exp(-1 / (1 - r^2)) dr`. The integrand is flat to all
/// orders at the endpoints, so the trapezoid rule converges faster than any
/// power of the step.
pub fn unit_bump_integral() -> f64 {
    const M: usize = 4000;
    let h = 2.0 / M as f64;
    (1..M).map(|i| bump(-1.0 + i as f64 * h)).sum::<f64>() * h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMode {
    TensorMidpoint,
    QuasiRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub mode: QuadratureMode,
    /// Lattice nodes per kernel support, on every axis.
    pub points_per_axis: usize,
    /// Node count of the quasi-random table used for dense terms.
    pub total_nodes: usize,
    pub seed: u64,
}

impl QuadratureSpec {
    pub fn tensor(points_per_axis: usize) -> Self {
        Self {
            mode: QuadratureMode::TensorMidpoint,
            points_per_axis,
            total_nodes: 4096,
            seed: 0x6d6f_6c6c,
        }
    }

    pub fn quasi_random(total_nodes: usize) -> Self {
        Self {
            mode: QuadratureMode::QuasiRandom,
            points_per_axis: 9,
            total_nodes,
            seed: 0x6d6f_6c6c,
        }
    }

    /// Tensor rule with 9 points per axis for `d = 1`, quasi-random dense
    /// rule with 4096 nodes otherwise.
    pub fn default_for(d: usize) -> Self {
        if d == 1 {
            Self::tensor(9)
        } else {
            Self::quasi_random(4096)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_AXIS_POINTS).contains(&self.points_per_axis) {
            return Err(Error::construction(
                MODULE,
                format!("points_per_axis must lie in 2..={MAX_AXIS_POINTS}, got {}", self.points_per_axis),
            ));
        }
        if self.mode == QuadratureMode::QuasiRandom && self.total_nodes == 0 {
            return Err(Error::construction(MODULE, "quasi-random rule needs at least one node"));
        }
        Ok(())
    }
}

/// A coefficient set smoothed at level `n`.
#[derive(Clone, Debug)]
pub struct MollifiedCoefficientSet {
    base: CoefficientSet,
    level: u32,
    quadrature: QuadratureSpec,
    kernel: MollifierKernel,
    model: Model,
}

impl MollifiedCoefficientSet {
    pub fn base(&self) -> &CoefficientSet {
        &self.base
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quadrature
    }

    pub fn kernel(&self) -> &MollifierKernel {
        &self.kernel
    }
}

impl Coefficients for MollifiedCoefficientSet {
    fn name(&self) -> &str {
        self.base.name()
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn bound(&self) -> f64 {
        self.base.bound()
    }

    /// The identity extension caps the preserved constant at one.
    fn ellipticity(&self) -> f64 {
        self.base.ellipticity().min(1.0)
    }

    /// The discretized convolution does not inherit the base modulus.
    fn modulus(&self) -> Option<&Modulus> {
        None
    }

    fn model(&self) -> &Model {
        &self.model
    }

    fn level(&self) -> u32 {
        self.level
    }
}

pub fn mollify(cs: &CoefficientSet, n: u32, q: &QuadratureSpec) -> Result<MollifiedCoefficientSet> {
    q.validate()?;
    let kernel = MollifierKernel::for_level(n)?;
    let d = cs.dim();
    if cs.bound() < (d as f64).sqrt() {
        return Err(Error::construction(
            MODULE,
            format!(
                "identity extension violates declared bound: C = {} < sqrt(d) = {}",
                cs.bound(),
                (d as f64).sqrt()
            ),
        ));
    }
    let eps = kernel.bandwidth;
    let smoothing = Smoothing {
        bandwidth: eps,
        spacing: 2.0 * eps / q.points_per_axis as f64,
        dense_rule: match q.mode {
            QuadratureMode::TensorMidpoint => DenseRule::Lattice,
            QuadratureMode::QuasiRandom => DenseRule::QuasiRandom {
                total_nodes: q.total_nodes,
                seed: q.seed,
            },
        },
    };
    Ok(MollifiedCoefficientSet {
        base: cs.clone(),
        level: n,
        quadrature: q.clone(),
        kernel,
        model: Model::compile(d, cs.terms(), Some(smoothing)),
    })
}

/// Largest finite-difference slope `|f(p + delta e) - f(p)| / delta` along
/// `axis` over `num_pairs` random base points, where `f` stacks all three
/// coefficients (Euclidean / Frobenius norms). Base points are drawn from
/// `t in [0, 2]`, `(z, zeta) in [-2, 2]^{4d}`.
pub fn lipschitz_probe(cs: &dyn Coefficients, axis: Axis, num_pairs: usize, seed: u64) -> Result<f64> {
    const DELTA: f64 = 1e-5;
    const RADIUS: f64 = 2.0;
    const TIME_MAX: f64 = 2.0;
    if num_pairs == 0 {
        return Err(Error::config(MODULE, "num_pairs must be at least 1"));
    }
    let d = cs.dim();
    if let Some(k) = match axis {
        Axis::Time => None,
        Axis::X(k) | Axis::Y(k) | Axis::Xi(k) | Axis::Eta(k) => Some(k),
    } {
        if k >= d {
            return Err(Error::config(MODULE, format!("axis {axis} out of range for d = {d}")));
        }
    }
    let model = cs.model();
    let rng = CounterRng::new(seed);
    let w = 2 * d;
    let mut scratch = EvalScratch::new(d);
    let mut a = CoeffSample::zeros(d);
    let mut b = CoeffSample::zeros(d);
    let mut u = vec![0.0; 1 + 2 * w];
    let mut worst = 0.0f64;
    for i in 0..num_pairs as u64 {
        rng.fill_uniforms(Domain::Probe, i, 0, &mut u);
        let t = TIME_MAX * u[0];
        let mut state: Vec<f64> = u[1..].iter().map(|v| RADIUS * (2.0 * v - 1.0)).collect();
        model.prepare(t, &state[w..]).eval(&state[..w], &mut scratch, &mut a);
        let t2 = match axis.coord(d) {
            None => t + DELTA,
            Some(c) => {
                state[c] += DELTA;
                t
            }
        };
        model.prepare(t2, &state[w..]).eval(&state[..w], &mut scratch, &mut b);
        let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let slope = diff(&a.b0, &b.b0).max(diff(&a.b1, &b.b1)).max(diff(&a.sigma, &b.sigma)) / DELTA;
        worst = worst.max(slope);
    }
    Ok(worst)
}
