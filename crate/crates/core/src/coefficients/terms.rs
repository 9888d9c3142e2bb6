use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// One scalar argument of a coefficient kernel `(t, z, zeta)` with
/// `z = (x, y)` and `zeta = (xi, eta)`, each block of length `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Time,
    X(usize),
    Y(usize),
    Xi(usize),
    Eta(usize),
}

impl Axis {
    /// Index into the concatenated state `[x, y, xi, eta]` of length `4d`,
    /// or `None` for time.
    pub fn coord(self, d: usize) -> Option<usize> {
        match self {
            Axis::Time => None,
            Axis::X(k) => Some(k),
            Axis::Y(k) => Some(d + k),
            Axis::Xi(k) => Some(2 * d + k),
            Axis::Eta(k) => Some(3 * d + k),
        }
    }

    pub(crate) fn component(self) -> Option<usize> {
        match self {
            Axis::Time => None,
            Axis::X(k) | Axis::Y(k) | Axis::Xi(k) | Axis::Eta(k) => Some(k),
        }
    }

    /// All `1 + 4d` axes in canonical order.
    pub fn all(d: usize) -> Vec<Axis> {
        let mut v = vec![Axis::Time];
        v.extend((0..d).map(Axis::X));
        v.extend((0..d).map(Axis::Y));
        v.extend((0..d).map(Axis::Xi));
        v.extend((0..d).map(Axis::Eta));
        v
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Time => write!(f, "t"),
            Axis::X(k) => write!(f, "x{k}"),
            Axis::Y(k) => write!(f, "y{k}"),
            Axis::Xi(k) => write!(f, "xi{k}"),
            Axis::Eta(k) => write!(f, "eta{k}"),
        }
    }
}

/// Which coefficient a term contributes to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    /// `b0`, the position drift (length `d`).
    Drift0,
    /// `b1`, the velocity drift (length `d`).
    Drift1,
    /// `sigma`, the velocity diffusion (`d x d`, symmetric).
    Diffusion,
}

impl Block {
    pub fn len(self, d: usize) -> usize {
        match self {
            Block::Drift0 | Block::Drift1 => d,
            Block::Diffusion => d * d,
        }
    }
}

/// A univariate real function, shared across workers.
#[derive(Clone)]
pub struct ScalarFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl ScalarFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    #[inline]
    pub fn call(&self, u: f64) -> f64 {
        (self.0)(u)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn")
    }
}

/// Signature of a dense kernel: `(t, z, zeta, out)`. `out` has length `d`
/// for drifts and `d * d` (row-major) for the diffusion.
pub type DenseKernel = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// A rank-one term `template * prod_a f_a(u_a)`, at most one factor per
/// axis. Axes without a factor are ones the term does not depend on.
///
/// Convolving such a term with a product kernel factorizes into univariate
/// convolutions of its factors, which is what keeps mollified mean-field
/// evaluation linear in the number of particles.
#[derive(Clone, Debug)]
pub struct ProductTerm {
    pub block: Block,
    pub template: Vec<f64>,
    pub factors: Vec<(Axis, ScalarFn)>,
}

/// A general kernel contribution with its declared axis dependence.
/// Axes outside `axes` must not influence the output.
#[derive(Clone)]
pub struct DenseTerm {
    pub block: Block,
    pub axes: Vec<Axis>,
    pub kernel: Arc<DenseKernel>,
}

impl fmt::Debug for DenseTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseTerm")
            .field("block", &self.block)
            .field("axes", &self.axes)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum Term {
    Product(ProductTerm),
    Dense(DenseTerm),
}

impl Term {
    pub fn block(&self) -> Block {
        match self {
            Term::Product(p) => p.block,
            Term::Dense(t) => t.block,
        }
    }

    pub fn axes(&self) -> Vec<Axis> {
        match self {
            Term::Product(p) => p.factors.iter().map(|(a, _)| *a).collect(),
            Term::Dense(t) => t.axes.clone(),
        }
    }
}

/// Declared modulus of continuity `rho(r)`.
#[derive(Clone, Debug)]
pub struct Modulus {
    pub label: String,
    pub rho: ScalarFn,
}

impl Modulus {
    pub fn new(label: impl Into<String>, rho: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            rho: ScalarFn::new(rho),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.rho.call(r)
    }
}
