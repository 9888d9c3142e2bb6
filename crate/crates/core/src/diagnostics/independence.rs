//! Factorization test for future Wiener increments.
//!
//! For times `s_1 < ... < s_k < s_{k+1}` on the snapshot grid it compares
//! `E[f(Z_{s_1..s_k}, W_{s_1..s_k}) g(W_{s_{k+1}} - W_{s_k})]` with
//! `E[f] E[g]`, treating each particle path as one sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::TrajectoryStore;
use crate::numeric::{clip_unit, pairwise_mean, pairwise_sum};

const MODULE: &str = "diagnostics";

/// Critical value of the studentized statistic.
pub const THRESHOLD: f64 = 3.0;

/// Functions of the past. All are bounded by one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PastFn {
    /// Clip of the mean of `y_0` over the past times.
    ClipY,
    /// Clip of the mean of `x_0` over the past times.
    ClipX,
    /// Clip of the mean of `W_0` over the past times.
    ClipW,
    /// `cos` of a fixed linear form in `(Z, W)` at the past times.
    CosZ,
    /// `cos` of a fixed linear form in `W` at the past times.
    CosW,
}

/// Functions of the future increment. All are bounded by one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FutureFn {
    /// Clip of the first component of the increment.
    ClipDw,
    /// `cos` of a fixed linear form in the increment.
    CosDw,
    /// The constant one.
    Const,
}

impl std::str::FromStr for PastFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::config(MODULE, format!("unknown f {s:?}; expected clip-y, clip-x, clip-w, cos-z or cos-w")))
    }
}

impl std::str::FromStr for FutureFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::config(MODULE, format!("unknown g {s:?}; expected clip-dw, cos-dw or const")))
    }
}

impl std::fmt::Display for PastFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PastFn::ClipY => "clip-y",
            PastFn::ClipX => "clip-x",
            PastFn::ClipW => "clip-w",
            PastFn::CosZ => "cos-z",
            PastFn::CosW => "cos-w",
        })
    }
}

impl std::fmt::Display for FutureFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FutureFn::ClipDw => "clip-dw",
            FutureFn::CosDw => "cos-dw",
            FutureFn::Const => "const",
        })
    }
}

/// The ten (f, g) pairs used by the calibrated test.
pub fn catalog_pairs() -> Vec<(PastFn, FutureFn)> {
    let fs = [PastFn::ClipY, PastFn::ClipX, PastFn::ClipW, PastFn::CosZ, PastFn::CosW];
    let gs = [FutureFn::ClipDw, FutureFn::CosDw];
    fs.iter().flat_map(|f| gs.iter().map(move |g| (*f, *g))).collect()
}

/// Fixed coefficient of coordinate `c` at past time `i`.
fn weight(i: usize, c: usize) -> f64 {
    0.7 * (1.0 + 0.37 * c as f64).recip() * if (i + c).is_multiple_of(2) { 1.0 } else { -1.0 }
}

impl PastFn {
    fn eval(self, z: &[&[f64]], w: &[&[f64]], d: usize) -> f64 {
        let k = z.len() as f64;
        match self {
            PastFn::ClipY => clip_unit(z.iter().map(|s| s[d]).sum::<f64>() / k),
            PastFn::ClipX => clip_unit(z.iter().map(|s| s[0]).sum::<f64>() / k),
            PastFn::ClipW => clip_unit(w.iter().map(|s| s[0]).sum::<f64>() / k),
            PastFn::CosZ => {
                let mut a = 0.0;
                for (i, (zi, wi)) in z.iter().zip(w).enumerate() {
                    for (c, v) in zi.iter().chain(wi.iter()).enumerate() {
                        a += weight(i, c) * v;
                    }
                }
                a.cos()
            }
            PastFn::CosW => {
                let mut a = 0.0;
                for (i, wi) in w.iter().enumerate() {
                    for (c, v) in wi.iter().enumerate() {
                        a += 1.3 * weight(i, c) * v;
                    }
                }
                a.cos()
            }
        }
    }
}

impl FutureFn {
    fn eval(self, dw: &[f64]) -> f64 {
        match self {
            FutureFn::ClipDw => clip_unit(dw[0]),
            FutureFn::CosDw => dw.iter().enumerate().map(|(c, v)| 1.1 * weight(0, c) * v).sum::<f64>().cos(),
            FutureFn::Const => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub times: Vec<f64>,
    pub f: PastFn,
    pub g: FutureFn,
    /// Mollification level of the tested run.
    pub level: u32,
    pub samples: usize,
    pub mean_fg: f64,
    pub mean_f_mean_g: f64,
    /// `mean((f - mean f)(g - mean g))`.
    pub difference: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub pass: bool,
}

/// Wiener path `W(t_k)` at the requested steps for every particle, row-major
/// `steps.len() x N x d`.
fn wiener_at(increments: &[Vec<f64>], steps: &[usize], n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(steps.len());
    let mut acc = vec![0.0; n * d];
    let mut k = 0;
    for &target in steps {
        while k < target {
            for (a, v) in acc.iter_mut().zip(&increments[k]) {
                *a += v;
            }
            k += 1;
        }
        out.push(acc.clone());
    }
    out
}

pub fn independence_test(store: &TrajectoryStore, times: &[f64], f: PastFn, g: FutureFn) -> Result<IndependenceReport> {
    let increments = store
        .increments
        .as_ref()
        .ok_or_else(|| Error::config(MODULE, "store has no Wiener increments; rerun with increments retained"))?;
    if times.len() < 2 {
        return Err(Error::config(MODULE, "independence test needs at least two times"));
    }
    if times.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::config(MODULE, "test times must be strictly increasing"));
    }
    let h = store.config.step_size();
    let mut snaps = Vec::with_capacity(times.len());
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        let k = (t / h).round();
        let idx = (k >= 0.0 && (k * h - t).abs() <= 1e-9 * t.max(1.0))
            .then(|| store.snapshot_at_step(k as usize))
            .flatten()
            .ok_or_else(|| Error::config(MODULE, format!("time {t} is not on the snapshot grid")))?;
        snaps.push(idx);
        steps.push(k as usize);
    }
    let (n, d, w) = (store.particles(), store.d(), store.width());
    let wiener = wiener_at(increments, &steps, n, d);
    let past = times.len() - 1;
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z: Vec<&[f64]> = snaps[..past].iter().map(|&s| &store.snapshots[s][i * w..(i + 1) * w]).collect();
            let wp: Vec<&[f64]> = wiener[..past].iter().map(|b| &b[i * d..(i + 1) * d]).collect();
            let dw: Vec<f64> = (0..d).map(|c| wiener[past][i * d + c] - wiener[past - 1][i * d + c]).collect();
            (f.eval(&z, &wp, d), g.eval(&dw))
        })
        .collect();
    let fv: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let gv: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mf, mg) = (pairwise_mean(&fv), pairwise_mean(&gv));
    let fg: Vec<f64> = pairs.iter().map(|(a, b)| a * b).collect();
    let dv: Vec<f64> = pairs.iter().map(|(a, b)| (a - mf) * (b - mg)).collect();
    let diff = pairwise_mean(&dv);
    let var = if n > 1 {
        pairwise_sum(&dv.iter().map(|v| (v - diff) * (v - diff)).collect::<Vec<_>>()) / (n - 1) as f64
    } else {
        0.0
    };
    let se = (var / n as f64).sqrt();
    let stat = if se > 0.0 { diff / se } else { 0.0 };
    Ok(IndependenceReport {
        times: times.to_vec(),
        f,
        g,
        level: store.config.level,
        samples: n,
        mean_fg: pairwise_mean(&fg),
        mean_f_mean_g: mf * mg,
        difference: diff,
        std_error: se,
        statistic: stat,
        pass: stat.abs() <= THRESHOLD,
    })
}

/// Deliberately broken store: the increments driving `(s_k, s_{k+1}]`
/// are replaced by copies of the increments just before `s_k`, so the
/// future window repeats the past.
pub fn leak_fixture(store: &TrajectoryStore, s_k: f64, s_next: f64) -> Result<TrajectoryStore> {
    let increments = store
        .increments
        .as_ref()
        .ok_or_else(|| Error::config(MODULE, "store has no Wiener increments; rerun with increments retained"))?;
    let h = store.config.step_size();
    let (a, b) = ((s_k / h).round() as usize, (s_next / h).round() as usize);
    if b <= a || b > increments.len() {
        return Err(Error::config(MODULE, "leak window must be a nonempty range of steps"));
    }
    let len = b - a;
    if len > a {
        return Err(Error::config(MODULE, "leak window is longer than the past it copies"));
    }
    let mut leaked = store.clone();
    let incs = leaked.increments.as_mut().unwrap();
    for j in a..b {
        incs[j] = incs[j - len].clone();
    }
    Ok(leaked)
}
