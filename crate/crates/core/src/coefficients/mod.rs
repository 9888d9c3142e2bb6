//! The coefficient triple `(b0, b1, sigma)`, its declared hypothesis
//! constants, the built-in catalog and sampling-based validators.
//!
//! Kernels are host callables. A coefficient is a sum of [`ProductTerm`]s
//! (rank-one products of univariate factors) and [`DenseTerm`]s (arbitrary
//! callables with a declared axis dependence). The product form is what the
//! catalog uses for every interaction that has to run at large particle
//! counts.

pub mod catalog;
mod model;
mod terms;
pub mod validate;

use std::sync::Arc;

pub use model::{bump, CoeffSample, DenseRule, EvalScratch, Model, PreparedField, Smoothing, MAX_AXIS_POINTS};
pub use terms::{Axis, Block, DenseKernel, DenseTerm, Modulus, ProductTerm, ScalarFn, Term};

use crate::error::{Error, Result};

const MODULE: &str = "coefficients";

/// Anything that can be evaluated like a coefficient set: raw sets and
/// their mollified counterparts.
pub trait Coefficients: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Declared uniform bound `C` on `|b0| + |b1| + ||sigma||_F`.
    fn bound(&self) -> f64;
    /// Ellipticity constant guaranteed for `sigma`.
    fn ellipticity(&self) -> f64;
    fn modulus(&self) -> Option<&Modulus>;
    fn model(&self) -> &Model;
    /// Mollification level, 0 for raw coefficients.
    fn level(&self) -> u32 {
        0
    }
}

/// A coefficient triple with its declared constants.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    name: String,
    d: usize,
    terms: Vec<Term>,
    bound_c: f64,
    nu: f64,
    modulus: Option<Modulus>,
    model: Arc<Model>,
}

impl CoefficientSet {
    pub fn builder(name: impl Into<String>, d: usize) -> CoefficientSetBuilder {
        CoefficientSetBuilder {
            name: name.into(),
            d,
            terms: Vec::new(),
            bound_c: None,
            nu: None,
            modulus: None,
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
}

impl Coefficients for CoefficientSet {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn bound(&self) -> f64 {
        self.bound_c
    }

    fn ellipticity(&self) -> f64 {
        self.nu
    }

    fn modulus(&self) -> Option<&Modulus> {
        self.modulus.as_ref()
    }

    fn model(&self) -> &Model {
        &self.model
    }
}

pub struct CoefficientSetBuilder {
    name: String,
    d: usize,
    terms: Vec<Term>,
    bound_c: Option<f64>,
    nu: Option<f64>,
    modulus: Option<Modulus>,
}

impl CoefficientSetBuilder {
    pub fn bound(mut self, c: f64) -> Self {
        self.bound_c = Some(c);
        self
    }

    pub fn ellipticity(mut self, nu: f64) -> Self {
        self.nu = Some(nu);
        self
    }

    pub fn modulus(mut self, m: Modulus) -> Self {
        self.modulus = Some(m);
        self
    }

    /// Adds `template * prod f_a(u_a)`.
    pub fn product<I, F>(mut self, block: Block, template: Vec<f64>, factors: I) -> Self
    where
        I: IntoIterator<Item = (Axis, F)>,
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.terms.push(Term::Product(ProductTerm {
            block,
            template,
            factors: factors
                .into_iter()
                .map(|(a, f)| (a, ScalarFn::new(f)))
                .collect(),
        }));
        self
    }

    /// Adds a constant contribution.
    pub fn constant(mut self, block: Block, value: Vec<f64>) -> Self {
        self.terms.push(Term::Product(ProductTerm {
            block,
            template: value,
            factors: Vec::new(),
        }));
        self
    }

    pub fn term(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn dense(
        mut self,
        block: Block,
        axes: Vec<Axis>,
        kernel: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.terms.push(Term::Dense(DenseTerm {
            block,
            axes,
            kernel: Arc::new(kernel),
        }));
        self
    }

    pub fn build(self) -> Result<CoefficientSet> {
        let d = self.d;
        if d == 0 {
            return Err(Error::construction(MODULE, "dimension d must be positive"));
        }
        let bound_c = self
            .bound_c
            .ok_or_else(|| Error::construction(MODULE, "missing bound C"))?;
        let nu = self
            .nu
            .ok_or_else(|| Error::construction(MODULE, "missing ellipticity constant nu"))?;
        if !(bound_c.is_finite() && bound_c > 0.0) {
            return Err(Error::construction(MODULE, format!("bound C must be positive, got {bound_c}")));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::construction(MODULE, format!("ellipticity nu must be positive, got {nu}")));
        }
        for (i, term) in self.terms.iter().enumerate() {
            let mut seen = Vec::new();
            for axis in term.axes() {
                if let Some(k) = axis.component() {
                    if k >= d {
                        return Err(Error::construction(
                            MODULE,
                            format!("term {i}: axis {axis} out of range for d = {d}"),
                        ));
                    }
                }
                if seen.contains(&axis) {
                    return Err(Error::construction(
                        MODULE,
                        format!("term {i}: axis {axis} appears twice; merge the factors"),
                    ));
                }
                seen.push(axis);
            }
            if let Term::Product(p) = term {
                if p.template.len() != p.block.len(d) {
                    return Err(Error::construction(
                        MODULE,
                        format!(
                            "term {i}: template has {} entries, {:?} needs {}",
                            p.template.len(),
                            p.block,
                            p.block.len(d)
                        ),
                    ));
                }
                if p.block == Block::Diffusion && !crate::numeric::is_exactly_symmetric(&p.template, d) {
                    return Err(Error::construction(MODULE, format!("term {i}: diffusion template is not symmetric")));
                }
            }
        }
        let model = Arc::new(Model::compile(d, &self.terms, None));
        Ok(CoefficientSet {
            name: self.name,
            d,
            terms: self.terms,
            bound_c,
            nu,
            modulus: self.modulus,
            model,
        })
    }
}

fn check_point(cs: &dyn Coefficients, t: f64, z: &[f64], zeta: &[f64]) -> Result<()> {
    let w = 2 * cs.dim();
    if z.len() != w {
        return Err(Error::Shape {
            module: MODULE,
            expected: w,
            got: z.len(),
        });
    }
    if zeta.len() != w {
        return Err(Error::Shape {
            module: MODULE,
            expected: w,
            got: zeta.len(),
        });
    }
    if !t.is_finite() || z.iter().chain(zeta).any(|v| !v.is_finite()) {
        return Err(Error::domain(MODULE, "non-finite argument"));
    }
    if t < 0.0 && cs.level() == 0 {
        return Err(Error::domain(MODULE, format!("time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// All three kernel values at `(t, z, zeta)`.
pub fn eval_all(cs: &dyn Coefficients, t: f64, z: &[f64], zeta: &[f64]) -> Result<CoeffSample> {
    check_point(cs, t, z, zeta)?;
    let mut out = CoeffSample::zeros(cs.dim());
    cs.model().eval_point(t, z, zeta, &mut out);
    Ok(out)
}

pub fn eval_b0(cs: &dyn Coefficients, t: f64, z: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
    eval_all(cs, t, z, zeta).map(|s| s.b0)
}

pub fn eval_b1(cs: &dyn Coefficients, t: f64, z: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
    eval_all(cs, t, z, zeta).map(|s| s.b1)
}

/// Row-major symmetric `d x d` diffusion matrix.
pub fn eval_sigma(cs: &dyn Coefficients, t: f64, z: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
    eval_all(cs, t, z, zeta).map(|s| s.sigma)
}
