//! Compiled evaluation engine shared by raw and mollified coefficient sets.
//!
//! A [`Model`] evaluates the three coefficients against an empirical measure
//! (a single atom being the pointwise case). Product terms are reduced to
//! per-term moments of their interaction factors once per measure, so the
//! per-particle cost does not grow with the number of atoms. Dense terms are
//! averaged over the atoms directly.

use rayon::prelude::*;

use super::terms::{Axis, Block, DenseTerm, ProductTerm, ScalarFn, Term};
use crate::numeric::pairwise_strided;

/// Upper bound on lattice nodes per axis.
pub const MAX_AXIS_POINTS: usize = 64;
const RULE_CAP: usize = MAX_AXIS_POINTS + 2;

/// Standard bump `exp(-1 / (1 - r^2))` on `|r| < 1`, zero elsewhere.
#[inline]
pub fn bump(r: f64) -> f64 {
    let r2 = r * r;
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Kernel weights of the lattice nodes inside `(u - eps, u + eps)`.
///
/// Nodes sit at the cell midpoints `(k + 1/2) * spacing` of a fixed global
/// lattice, so the smoothed function is a finite sum of `C^inf` weights and
/// stays Lipschitz however rough the integrand is.
#[derive(Clone, Copy)]
pub(crate) struct LocalRule {
    start: i64,
    len: usize,
    spacing: f64,
    w: [f64; RULE_CAP],
}

impl LocalRule {
    pub(crate) fn at(u: f64, eps: f64, spacing: f64) -> Self {
        let lo = ((u - eps) / spacing - 0.5).floor() as i64;
        let hi = ((u + eps) / spacing - 0.5).ceil() as i64;
        let mut rule = LocalRule {
            start: lo,
            len: 0,
            spacing,
            w: [0.0; RULE_CAP],
        };
        let mut first: Option<i64> = None;
        let mut total = 0.0;
        for k in lo..=hi {
            let node = (k as f64 + 0.5) * spacing;
            let b = bump((u - node) / eps);
            if b > 0.0 {
                let s = *first.get_or_insert(k);
                let idx = (k - s) as usize;
                if idx >= RULE_CAP {
                    break;
                }
                rule.w[idx] = b;
                rule.len = idx + 1;
                total += b;
            }
        }
        rule.start = first.unwrap_or(lo);
        for w in &mut rule.w[..rule.len] {
            *w /= total;
        }
        rule
    }

    #[inline]
    pub(crate) fn node(&self, i: usize) -> f64 {
        ((self.start + i as i64) as f64 + 0.5) * self.spacing
    }

    #[inline]
    pub(crate) fn weights(&self) -> &[f64] {
        &self.w[..self.len]
    }

    #[inline]
    fn apply(&self, f: &ScalarFn) -> f64 {
        let mut acc = 0.0;
        for (i, w) in self.weights().iter().enumerate() {
            acc += w * f.call(self.node(i));
        }
        acc
    }

    /// Weighted sum over nodes restricted by `support`.
    fn apply_time(&self, f: Option<&ScalarFn>, support: Support) -> f64 {
        let mut acc = 0.0;
        for (i, w) in self.weights().iter().enumerate() {
            let s = self.node(i);
            if support.contains(s) {
                acc += w * f.map_or(1.0, |f| f.call(s));
            }
        }
        acc
    }
}

/// Discretization of the convolution integral.
#[derive(Clone, Debug)]
pub struct Smoothing {
    /// Support half-width `eps` of the kernel on every axis.
    pub bandwidth: f64,
    /// Lattice spacing, `2 * eps / points_per_axis`.
    pub spacing: f64,
    /// Rule used for the spatial axes of dense terms.
    pub dense_rule: DenseRule,
}

#[derive(Clone, Debug)]
pub enum DenseRule {
    /// Tensor product of the per-axis lattice rules.
    Lattice,
    /// A fixed quasi-random table of `total_nodes` unit-cube offsets.
    QuasiRandom { total_nodes: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Support {
    All,
    NonNegative,
    Negative,
}

impl Support {
    #[inline]
    fn contains(self, t: f64) -> bool {
        match self {
            Support::All => true,
            Support::NonNegative => t >= 0.0,
            Support::Negative => t < 0.0,
        }
    }
}

#[derive(Clone, Debug)]
struct CompiledProduct {
    block: Block,
    template: Vec<f64>,
    time: Option<ScalarFn>,
    support: Support,
    z: Vec<(usize, ScalarFn)>,
    zeta: Vec<(usize, ScalarFn)>,
}

#[derive(Clone, Debug)]
struct QuasiTable {
    dims: usize,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Clone, Debug)]
struct CompiledDense {
    term: DenseTerm,
    time_dependent: bool,
    /// Concatenated-state coordinates (0..4d) the kernel depends on.
    coords: Vec<usize>,
    zeta_coords: Vec<usize>,
    quasi: Option<QuasiTable>,
}

/// Compiled coefficient triple, raw or smoothed.
#[derive(Clone, Debug)]
pub struct Model {
    d: usize,
    products: Vec<CompiledProduct>,
    dense: Vec<CompiledDense>,
    smoothing: Option<Smoothing>,
    z_coords: Vec<usize>,
    zeta_coords: Vec<usize>,
}

/// Coefficient values at one point: `b0`, `b1` and row-major `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSample {
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl CoeffSample {
    pub fn zeros(d: usize) -> Self {
        Self {
            b0: vec![0.0; d],
            b1: vec![0.0; d],
            sigma: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.b0.len()
    }

    fn clear(&mut self) {
        self.b0.iter_mut().for_each(|v| *v = 0.0);
        self.b1.iter_mut().for_each(|v| *v = 0.0);
        self.sigma.iter_mut().for_each(|v| *v = 0.0);
    }

    fn block_mut(&mut self, block: Block) -> &mut [f64] {
        match block {
            Block::Drift0 => &mut self.b0,
            Block::Drift1 => &mut self.b1,
            Block::Diffusion => &mut self.sigma,
        }
    }

    /// `|b0| + |b1| + ||sigma||_F`.
    pub fn bound_norm(&self) -> f64 {
        use crate::numeric::euclidean_norm;
        euclidean_norm(&self.b0) + euclidean_norm(&self.b1) + euclidean_norm(&self.sigma)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        crate::numeric::min_eigenvalue(&self.sigma, self.dim())
    }
}

/// Per-worker buffers reused across evaluations.
pub struct EvalScratch {
    rules: Vec<Option<LocalRule>>,
    coords: Vec<f64>,
    dense_out: Vec<f64>,
    dense_vals: Vec<f64>,
}

impl EvalScratch {
    pub fn new(d: usize) -> Self {
        Self {
            rules: vec![None; 4 * d],
            coords: vec![0.0; 4 * d],
            dense_out: vec![0.0; d * d],
            dense_vals: Vec::new(),
        }
    }
}

impl Model {
    pub(crate) fn compile(d: usize, terms: &[Term], smoothing: Option<Smoothing>) -> Self {
        let smoothed = smoothing.is_some();
        let mut products = Vec::new();
        let mut dense = Vec::new();
        for term in terms {
            match term {
                Term::Product(p) => products.push(compile_product(d, p, smoothed)),
                Term::Dense(t) => dense.push(compile_dense(d, t, smoothing.as_ref())),
            }
        }
        if smoothed {
            // The diffusion is extended by the identity for negative times.
            let mut identity = vec![0.0; d * d];
            for i in 0..d {
                identity[i * d + i] = 1.0;
            }
            products.push(CompiledProduct {
                block: Block::Diffusion,
                template: identity,
                time: None,
                support: Support::Negative,
                z: Vec::new(),
                zeta: Vec::new(),
            });
        }
        let mut z_coords: Vec<usize> = products
            .iter()
            .flat_map(|p| p.z.iter().map(|(c, _)| *c))
            .chain(dense.iter().flat_map(|t| t.coords.iter().copied().filter(|&c| c < 2 * d)))
            .collect();
        z_coords.sort_unstable();
        z_coords.dedup();
        let mut zeta_coords: Vec<usize> = products
            .iter()
            .flat_map(|p| p.zeta.iter().map(|(c, _)| *c))
            .chain(dense.iter().flat_map(|t| t.coords.iter().copied().filter(|&c| c >= 2 * d)))
            .collect();
        zeta_coords.sort_unstable();
        zeta_coords.dedup();
        Model {
            d,
            products,
            dense,
            smoothing,
            z_coords,
            zeta_coords,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn smoothing(&self) -> Option<&Smoothing> {
        self.smoothing.as_ref()
    }

    /// `true` when no term reads the interaction argument `zeta`; the mean
    /// field then reduces to the pointwise kernel.
    pub fn is_interaction_free(&self) -> bool {
        self.zeta_coords.is_empty()
    }

    /// Reduces the measure given by `atoms` (row-major `N x 2d`) at time `t`.
    pub fn prepare<'a>(&'a self, t: f64, atoms: &'a [f64]) -> PreparedField<'a> {
        let w = 2 * self.d;
        let n = atoms.len() / w;
        let time_rule = self
            .smoothing
            .as_ref()
            .map(|s| LocalRule::at(t, s.bandwidth, s.spacing));
        let time_vals: Vec<f64> = self
            .products
            .iter()
            .map(|p| match &time_rule {
                Some(rule) => rule.apply_time(p.time.as_ref(), p.support),
                None => p.time.as_ref().map_or(1.0, |f| f.call(t)),
            })
            .collect();
        let time_mass = time_rule
            .as_ref()
            .map_or(1.0, |r| r.apply_time(None, Support::NonNegative));

        let interacting: Vec<usize> = (0..self.products.len())
            .filter(|&r| !self.products[r].zeta.is_empty() && time_vals[r] != 0.0)
            .collect();
        let mut coef = time_vals.clone();
        if !interacting.is_empty() && n > 0 {
            let q = interacting.len();
            let mut vals = vec![0.0; n * q];
            vals.par_chunks_mut(q).enumerate().for_each_init(
                || EvalScratch::new(self.d),
                |scratch, (j, row)| {
                    let atom = &atoms[j * w..(j + 1) * w];
                    self.fill_rules(scratch, atom, 2 * self.d, &self.zeta_coords);
                    for (slot, &r) in row.iter_mut().zip(&interacting) {
                        let p = &self.products[r];
                        let mut v = 1.0;
                        for (c, f) in &p.zeta {
                            v *= self.factor(scratch, *c, atom[*c - 2 * self.d], f);
                        }
                        *slot = v;
                    }
                },
            );
            for (k, &r) in interacting.iter().enumerate() {
                coef[r] *= pairwise_strided(&vals, k, q, n) / n as f64;
            }
        }
        PreparedField {
            model: self,
            t,
            atoms,
            n,
            coef,
            time_rule,
            time_mass,
        }
    }

    /// Pointwise kernel values at `(t, z, zeta)`.
    pub fn eval_point(&self, t: f64, z: &[f64], zeta: &[f64], out: &mut CoeffSample) {
        let mut scratch = EvalScratch::new(self.d);
        self.prepare(t, zeta).eval(z, &mut scratch, out);
    }

    fn fill_rules(&self, scratch: &mut EvalScratch, values: &[f64], offset: usize, coords: &[usize]) {
        if let Some(s) = &self.smoothing {
            for &c in coords {
                scratch.rules[c] = Some(LocalRule::at(values[c - offset], s.bandwidth, s.spacing));
            }
        }
    }

    #[inline]
    fn factor(&self, scratch: &EvalScratch, coord: usize, u: f64, f: &ScalarFn) -> f64 {
        match (&self.smoothing, &scratch.rules[coord]) {
            (Some(_), Some(rule)) => rule.apply(f),
            _ => f.call(u),
        }
    }
}

fn compile_product(d: usize, p: &ProductTerm, smoothed: bool) -> CompiledProduct {
    let mut time = None;
    let mut z = Vec::new();
    let mut zeta = Vec::new();
    for (axis, f) in &p.factors {
        match axis.coord(d) {
            None => time = Some(f.clone()),
            Some(c) if c < 2 * d => z.push((c, f.clone())),
            Some(c) => zeta.push((c, f.clone())),
        }
    }
    CompiledProduct {
        block: p.block,
        template: p.template.clone(),
        time,
        support: if smoothed {
            Support::NonNegative
        } else {
            Support::All
        },
        z,
        zeta,
    }
}

fn compile_dense(d: usize, t: &DenseTerm, smoothing: Option<&Smoothing>) -> CompiledDense {
    let mut coords: Vec<usize> = t.axes.iter().filter_map(|a| a.coord(d)).collect();
    coords.sort_unstable();
    coords.dedup();
    let time_dependent = t.axes.contains(&Axis::Time);
    let quasi = match smoothing.map(|s| &s.dense_rule) {
        Some(DenseRule::QuasiRandom { total_nodes, seed }) if !coords.is_empty() => {
            Some(quasi_table(coords.len(), *total_nodes, *seed))
        }
        _ => None,
    };
    let zeta_coords = coords.iter().copied().filter(|&c| c >= 2 * d).collect();
    CompiledDense {
        term: t.clone(),
        time_dependent,
        coords,
        zeta_coords,
        quasi,
    }
}

/// Additive-recurrence (Kronecker) point set with a seeded random shift,
/// mapped to `(-1, 1)^dims`; weights are the normalized product bump.
fn quasi_table(dims: usize, total_nodes: usize, seed: u64) -> QuasiTable {
    use crate::rng::{CounterRng, Domain};
    // Generalized golden ratio: the unique positive root of x^(dims+1) = x + 1.
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dims as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dims).map(|k| phi.powi(-(k as i32)).fract()).collect();
    let mut shift = vec![0.0; dims];
    CounterRng::new(seed).fill_uniforms(Domain::Quadrature, dims as u64, 0, &mut shift);
    // Inverse CDF of the bump profile, tabulated: nodes are drawn with the
    // kernel as density, so every node carries the same weight.
    const CELLS: usize = 4096;
    let h = 2.0 / CELLS as f64;
    let mut cdf = vec![0.0; CELLS + 1];
    for j in 0..CELLS {
        cdf[j + 1] = cdf[j] + bump(-1.0 + (j as f64 + 0.5) * h);
    }
    let mass = cdf[CELLS];
    cdf.iter_mut().for_each(|c| *c /= mass);
    let inverse = |u: f64| {
        let u = u.clamp(1e-12, 1.0 - 1e-12);
        let j = cdf.partition_point(|c| *c <= u).clamp(1, CELLS) - 1;
        let frac = (u - cdf[j]) / (cdf[j + 1] - cdf[j]);
        -1.0 + (j as f64 + frac) * h
    };
    let mut offsets = Vec::with_capacity(total_nodes * dims);
    for i in 0..total_nodes {
        for k in 0..dims {
            offsets.push(inverse((shift[k] + (i as f64 + 1.0) * alphas[k]).fract()));
        }
    }
    let weights = vec![1.0 / total_nodes as f64; total_nodes];
    QuasiTable {
        dims,
        offsets,
        weights,
    }
}

/// A model reduced against one measure at one time.
pub struct PreparedField<'a> {
    model: &'a Model,
    t: f64,
    atoms: &'a [f64],
    n: usize,
    coef: Vec<f64>,
    time_rule: Option<LocalRule>,
    time_mass: f64,
}

impl PreparedField<'_> {
    pub fn num_atoms(&self) -> usize {
        self.n
    }

    /// Mean-field coefficients at state `z` (length `2d`).
    pub fn eval(&self, z: &[f64], scratch: &mut EvalScratch, out: &mut CoeffSample) {
        let m = self.model;
        let d = m.d;
        out.clear();
        m.fill_rules(scratch, z, 0, &m.z_coords);
        for (r, p) in m.products.iter().enumerate() {
            let mut v = self.coef[r];
            if v == 0.0 {
                continue;
            }
            for (c, f) in &p.z {
                v *= m.factor(scratch, *c, z[*c], f);
            }
            for (o, tmpl) in out.block_mut(p.block).iter_mut().zip(&p.template) {
                *o += v * tmpl;
            }
        }
        for dt in &m.dense {
            self.add_dense(dt, z, scratch, out);
        }
        debug_assert_eq!(out.sigma.len(), d * d);
    }

    fn add_dense(&self, dt: &CompiledDense, z: &[f64], scratch: &mut EvalScratch, out: &mut CoeffSample) {
        let m = self.model;
        let d = m.d;
        let w = 2 * d;
        let k = dt.term.block.len(d);
        if self.n == 0 {
            return;
        }
        let mut vals = std::mem::take(&mut scratch.dense_vals);
        vals.clear();
        vals.resize(self.n * k, 0.0);
        scratch.coords[..w].copy_from_slice(z);
        for j in 0..self.n {
            let atom = &self.atoms[j * w..(j + 1) * w];
            scratch.coords[w..].copy_from_slice(atom);
            if m.smoothing.is_some() && dt.quasi.is_none() {
                m.fill_rules(scratch, atom, w, &dt.zeta_coords);
            }
            let row = &mut vals[j * k..(j + 1) * k];
            self.dense_at_atom(dt, scratch, row);
        }
        let slot = out.block_mut(dt.term.block);
        for (c, o) in slot.iter_mut().enumerate() {
            *o += pairwise_strided(&vals, c, k, self.n) / self.n as f64;
        }
        scratch.dense_vals = vals;
    }

    /// Kernel value (smoothed when applicable) with `scratch.coords` holding
    /// the concatenated `(z, zeta)`.
    fn dense_at_atom(&self, dt: &CompiledDense, scratch: &mut EvalScratch, row: &mut [f64]) {
        let m = self.model;
        let d = m.d;
        let w = 2 * d;
        let block = dt.term.block;
        row.iter_mut().for_each(|v| *v = 0.0);
        let Some(s) = &m.smoothing else {
            let (zc, zetac) = scratch.coords.split_at(w);
            call_dense(&dt.term, self.t, zc, zetac, &mut scratch.dense_out, block, d);
            row.copy_from_slice(&scratch.dense_out[..row.len()]);
            return;
        };

        // Time nodes: either the explicit time lattice (restricted to t >= 0)
        // or, for time-independent kernels, the nonnegative time mass.
        let time_nodes: Vec<(f64, f64)> = if dt.time_dependent {
            let rule = self.time_rule.as_ref().expect("smoothed model has a time rule");
            (0..rule.len)
                .map(|i| (rule.node(i), rule.w[i]))
                .filter(|(s, _)| *s >= 0.0)
                .collect()
        } else {
            vec![(self.t, self.time_mass)]
        };
        if time_nodes.is_empty() {
            return;
        }
        let base: Vec<f64> = scratch.coords.clone();
        let mut shifted = base.clone();

        let accumulate = |shifted: &[f64], weight: f64, tn: f64, scratch: &mut EvalScratch, row: &mut [f64]| {
            let (zc, zetac) = shifted.split_at(w);
            call_dense(&dt.term, tn, zc, zetac, &mut scratch.dense_out, block, d);
            for (o, v) in row.iter_mut().zip(&scratch.dense_out) {
                *o += weight * v;
            }
        };

        if let Some(q) = &dt.quasi {
            for &(tn, tw) in &time_nodes {
                for node in 0..q.weights.len() {
                    for (a, &c) in dt.coords.iter().enumerate() {
                        shifted[c] = base[c] - s.bandwidth * q.offsets[node * q.dims + a];
                    }
                    accumulate(&shifted, tw * q.weights[node], tn, scratch, row);
                }
            }
            return;
        }

        // Tensor lattice over the kernel's coordinates.
        let rules: Vec<LocalRule> = dt
            .coords
            .iter()
            .map(|&c| scratch.rules[c].expect("rule filled for dense coordinate"))
            .collect();
        if rules.iter().any(|r| r.len == 0) {
            return;
        }
        let mut idx = vec![0usize; rules.len()];
        for &(tn, tw) in &time_nodes {
            idx.iter_mut().for_each(|i| *i = 0);
            'outer: loop {
                let mut weight = tw;
                for (a, &c) in dt.coords.iter().enumerate() {
                    shifted[c] = rules[a].node(idx[a]);
                    weight *= rules[a].w[idx[a]];
                }
                accumulate(&shifted, weight, tn, scratch, row);
                for a in (0..idx.len()).rev() {
                    idx[a] += 1;
                    if idx[a] < rules[a].len {
                        continue 'outer;
                    }
                    idx[a] = 0;
                }
                break;
            }
        }
    }
}

/// Calls a dense kernel; diffusion outputs are mirrored from the upper
/// triangle so they are exactly symmetric.
fn call_dense(term: &DenseTerm, t: f64, z: &[f64], zeta: &[f64], out: &mut [f64], block: Block, d: usize) {
    let len = block.len(d);
    out[..len].iter_mut().for_each(|v| *v = 0.0);
    (term.kernel)(t, z, zeta, &mut out[..len]);
    if block == Block::Diffusion {
        for i in 0..d {
            for j in i + 1..d {
                out[j * d + i] = out[i * d + j];
            }
        }
    }
}
