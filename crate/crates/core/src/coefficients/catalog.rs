//! Built-in coefficient systems, addressable by name from config files.
//!
//! | name             | d | character                                                  |
//! |------------------|---|------------------------------------------------------------|
//! | `free`           | 1 | `b0 = b1 = 0`, `sigma = I`                                 |
//! | `free-d2`        | 2 | same in two dimensions                                     |
//! | `transport`      | 1 | `b0 = tanh(y)`, `sigma = I`                                |
//! | `saturating`     | 1 | `b0 = b1 = tanh(kappa (xi - x))`, `sigma = I`              |
//! | `rough`          | 1 | drift and diffusion discontinuous in `t`, `y`, `eta`       |
//! | `rough-d2`       | 2 | two-dimensional rough system                               |
//! | `anisotropic-d2` | 2 | non-diagonal diffusion with `(x, xi)` interaction          |
//!
//! The rough systems switch on at `t = 1/2`: before that they coincide with
//! the free system, which is also what the mollifier uses as the extension
//! to negative times.

use super::terms::{Axis, Block, Modulus};
use super::validate::{validate_hypotheses, SamplerSpec};
use super::CoefficientSet;
use crate::error::{Error, Result};

pub const NAMES: [&str; 7] = [
    "free",
    "free-d2",
    "transport",
    "saturating",
    "rough",
    "rough-d2",
    "anisotropic-d2",
];

/// Switch-on time of the rough systems.
pub const ROUGH_SWITCH: f64 = 0.5;

/// `sign` with `sign(0) = 0`.
pub fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn positive_part_indicator(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn negative_part_indicator(u: f64) -> f64 {
    if u < 0.0 {
        1.0
    } else {
        0.0
    }
}

fn switch_on(t: f64) -> f64 {
    if t >= ROUGH_SWITCH {
        1.0
    } else {
        0.0
    }
}

fn identity(d: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = scale;
    }
    m
}

fn unit(d: usize, k: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[k] = scale;
    v
}

fn matrix_entry(d: usize, i: usize, j: usize, value: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    m[i * d + j] = value;
    m[j * d + i] = value;
    m
}

/// Looks up a catalog system by name.
pub fn by_name(name: &str) -> Result<CoefficientSet> {
    let cs = match name {
        "free" => free(1),
        "free-d2" => free(2),
        "transport" => transport(1),
        "saturating" => saturating(1.0, 1.0),
        "rough" => rough(),
        "rough-d2" => rough_d2(),
        "anisotropic-d2" => anisotropic_d2(),
        other => {
            return Err(Error::config(
                "coefficients",
                format!("unknown system {other:?}; expected one of {}", NAMES.join(", ")),
            ))
        }
    }?;
    checked(cs)
}

/// Rejects a system whose diffusion is not elliptic at some probe point.
fn checked(cs: CoefficientSet) -> Result<CoefficientSet> {
    let spec = SamplerSpec {
        num_points: 256,
        box_radius: 10.0,
        seed: 0x5eed,
        time_max: 2.0,
    };
    let report = validate_hypotheses(&cs, &spec)?;
    if !report.ellipticity.pass {
        return Err(Error::construction(
            "coefficients",
            format!(
                "system {:?} violates ellipticity: margin {:e}",
                report.system, report.ellipticity.margin
            ),
        ));
    }
    Ok(cs)
}

/// `b0 = b1 = 0`, `sigma = I`.
pub fn free(d: usize) -> Result<CoefficientSet> {
    let name = if d == 1 { "free".to_string() } else { format!("free-d{d}") };
    CoefficientSet::builder(name, d)
        .bound((d as f64).sqrt())
        .ellipticity(1.0)
        .modulus(Modulus::new("0", |_| 0.0))
        .constant(Block::Diffusion, identity(d, 1.0))
        .build()
}

/// `b0 = tanh(y)` coordinatewise, `b1 = 0`, `sigma = I`.
pub fn transport(d: usize) -> Result<CoefficientSet> {
    let name = if d == 1 { "transport".to_string() } else { format!("transport-d{d}") };
    let mut b = CoefficientSet::builder(name, d)
        .bound(2.0 * (d as f64).sqrt())
        .ellipticity(1.0)
        .modulus(Modulus::new("r", |r| r))
        .constant(Block::Diffusion, identity(d, 1.0));
    for k in 0..d {
        b = b.product(Block::Drift0, unit(d, k, 1.0), [(Axis::Y(k), f64::tanh)]);
    }
    b.build()
}

/// `b0 = b1 = c_sat * tanh(kappa * (xi - x))` (d = 1), `sigma = 1`.
pub fn saturating(c_sat: f64, kappa: f64) -> Result<CoefficientSet> {
    let kernel = move |_t: f64, z: &[f64], zeta: &[f64], out: &mut [f64]| {
        out[0] = c_sat * (kappa * (zeta[0] - z[0])).tanh();
    };
    let lip = c_sat * kappa * std::f64::consts::SQRT_2;
    CoefficientSet::builder("saturating", 1)
        .bound(2.0 * c_sat + 1.0)
        .ellipticity(1.0)
        .modulus(Modulus::new(format!("{lip:.4} r"), move |r| lip * r))
        .dense(Block::Drift0, vec![Axis::X(0), Axis::Xi(0)], kernel)
        .dense(Block::Drift1, vec![Axis::X(0), Axis::Xi(0)], kernel)
        .constant(Block::Diffusion, vec![1.0])
        .build()
}

/// One-dimensional rough system, active for `t >= 1/2`:
///
/// ```text
/// b0    = 0.5 tanh(y)
/// b1    = 0.4 sin(xi - x) - 0.4 sign(y) + 0.2 sign(eta)
/// sigma = 1 + 0.5 * 1{y eta > 0}
/// ```
///
/// Before the switch `b0 = b1 = 0` and `sigma = 1`.
pub fn rough() -> Result<CoefficientSet> {
    CoefficientSet::builder("rough", 1)
        .bound(3.0)
        .ellipticity(1.0)
        .modulus(Modulus::new("0.6 r", |r| 0.6 * r))
        .product(Block::Drift0, vec![0.5], [(Axis::Time, switch_on as fn(f64) -> f64), (Axis::Y(0), f64::tanh)])
        // sin(xi - x) = sin(xi) cos(x) - cos(xi) sin(x)
        .product(
            Block::Drift1,
            vec![0.4],
            [(Axis::Time, switch_on as fn(f64) -> f64), (Axis::Xi(0), f64::sin), (Axis::X(0), f64::cos)],
        )
        .product(
            Block::Drift1,
            vec![-0.4],
            [(Axis::Time, switch_on as fn(f64) -> f64), (Axis::Xi(0), f64::cos), (Axis::X(0), f64::sin)],
        )
        .product(Block::Drift1, vec![-0.4], [(Axis::Time, switch_on as fn(f64) -> f64), (Axis::Y(0), sign)])
        .product(Block::Drift1, vec![0.2], [(Axis::Time, switch_on as fn(f64) -> f64), (Axis::Eta(0), sign)])
        .constant(Block::Diffusion, vec![1.0])
        // 1{y eta > 0} = 1{y > 0} 1{eta > 0} + 1{y < 0} 1{eta < 0}
        .product(
            Block::Diffusion,
            vec![0.5],
            [
                (Axis::Time, switch_on as fn(f64) -> f64),
                (Axis::Y(0), positive_part_indicator),
                (Axis::Eta(0), positive_part_indicator),
            ],
        )
        .product(
            Block::Diffusion,
            vec![0.5],
            [
                (Axis::Time, switch_on as fn(f64) -> f64),
                (Axis::Y(0), negative_part_indicator),
                (Axis::Eta(0), negative_part_indicator),
            ],
        )
        .build()
}

/// Two-dimensional rough system, active for `t >= 1/2`:
///
/// ```text
/// b0_k  = 0.5 tanh(y_k)
/// b1_k  = 0.3 sin(xi_k - x_k) - 0.3 sign(y_k) + 0.2 sign(eta_k)
/// sigma = I + 0.5 * 1{y0 eta0 > 0} e0 e0^T + 0.25 * 1{y1 eta1 > 0} u u^T,  u = (1, 1) / sqrt(2)
/// ```
pub fn rough_d2() -> Result<CoefficientSet> {
    let d = 2;
    let s = switch_on as fn(f64) -> f64;
    let mut b = CoefficientSet::builder("rough-d2", d)
        .bound(4.1)
        .ellipticity(1.0)
        .modulus(Modulus::new("0.6 r", |r| 0.6 * r))
        .constant(Block::Diffusion, identity(d, 1.0));
    for k in 0..d {
        b = b
            .product(Block::Drift0, unit(d, k, 0.5), [(Axis::Time, s), (Axis::Y(k), f64::tanh)])
            .product(Block::Drift1, unit(d, k, 0.3), [(Axis::Time, s), (Axis::Xi(k), f64::sin), (Axis::X(k), f64::cos)])
            .product(Block::Drift1, unit(d, k, -0.3), [(Axis::Time, s), (Axis::Xi(k), f64::cos), (Axis::X(k), f64::sin)])
            .product(Block::Drift1, unit(d, k, -0.3), [(Axis::Time, s), (Axis::Y(k), sign)])
            .product(Block::Drift1, unit(d, k, 0.2), [(Axis::Time, s), (Axis::Eta(k), sign)]);
    }
    let templates = [
        (0usize, vec![0.5, 0.0, 0.0, 0.0]),
        (1usize, vec![0.125, 0.125, 0.125, 0.125]),
    ];
    for (k, tmpl) in templates {
        b = b
            .product(
                Block::Diffusion,
                tmpl.clone(),
                [(Axis::Time, s), (Axis::Y(k), positive_part_indicator), (Axis::Eta(k), positive_part_indicator)],
            )
            .product(
                Block::Diffusion,
                tmpl,
                [(Axis::Time, s), (Axis::Y(k), negative_part_indicator), (Axis::Eta(k), negative_part_indicator)],
            );
    }
    b.build()
}

/// Two-dimensional system with a non-diagonal diffusion:
///
/// ```text
/// b0_k  = 0.5 tanh(y_k),   b1_k = -0.5 tanh(y_k)
/// sigma = [[1.5 + 0.25 cos(x0 - xi0), 0.25 sin(x1 - xi1)],
///          [0.25 sin(x1 - xi1),       1.25              ]]
/// ```
pub fn anisotropic_d2() -> Result<CoefficientSet> {
    let d = 2;
    let mut b = CoefficientSet::builder("anisotropic-d2", d)
        .bound(4.0)
        .ellipticity(0.9)
        .modulus(Modulus::new("0.75 r", |r| 0.75 * r))
        .constant(Block::Diffusion, vec![1.5, 0.0, 0.0, 1.25]);
    for k in 0..d {
        b = b
            .product(Block::Drift0, unit(d, k, 0.5), [(Axis::Y(k), f64::tanh)])
            .product(Block::Drift1, unit(d, k, -0.5), [(Axis::Y(k), f64::tanh)]);
    }
    // cos(x0 - xi0) = cos x0 cos xi0 + sin x0 sin xi0
    b = b
        .product(Block::Diffusion, matrix_entry(d, 0, 0, 0.25), [(Axis::X(0), f64::cos), (Axis::Xi(0), f64::cos)])
        .product(Block::Diffusion, matrix_entry(d, 0, 0, 0.25), [(Axis::X(0), f64::sin), (Axis::Xi(0), f64::sin)]);
    // sin(x1 - xi1) = sin x1 cos xi1 - cos x1 sin xi1
    b = b
        .product(Block::Diffusion, matrix_entry(d, 0, 1, 0.25), [(Axis::X(1), f64::sin as fn(f64) -> f64), (Axis::Xi(1), f64::cos)])
        .product(Block::Diffusion, matrix_entry(d, 0, 1, -0.25), [(Axis::X(1), f64::cos as fn(f64) -> f64), (Axis::Xi(1), f64::sin)]);
    b.build()
}

/// Test systems that are not part of the catalog: some deliberately break
/// the hypotheses, others isolate one feature for hand-checkable values.
pub mod fixtures {
    use super::*;

    /// `b0 = value`, `b1 = 0`, `sigma = I`.
    pub fn constant_drift(value: Vec<f64>) -> Result<CoefficientSet> {
        let d = value.len();
        let bound = crate::numeric::euclidean_norm(&value) + (d as f64).sqrt();
        CoefficientSet::builder("constant", d)
            .bound(bound)
            .ellipticity(1.0)
            .modulus(Modulus::new("0", |_| 0.0))
            .constant(Block::Drift0, value)
            .constant(Block::Diffusion, identity(d, 1.0))
            .build()
    }

    /// `sigma = scale * I`, no drift.
    pub fn scaled_identity(d: usize, scale: f64, nu: f64) -> Result<CoefficientSet> {
        CoefficientSet::builder(format!("scaled-identity-{scale}"), d)
            .bound(scale.abs().max(1.0) * (d as f64).sqrt())
            .ellipticity(nu)
            .modulus(Modulus::new("0", |_| 0.0))
            .constant(Block::Diffusion, identity(d, scale))
            .build()
    }

    /// `sigma = 0` with a declared `nu`: violates ellipticity by `nu`.
    pub fn zero_diffusion(d: usize, nu: f64) -> Result<CoefficientSet> {
        CoefficientSet::builder("zero-diffusion", d)
            .bound(1.0)
            .ellipticity(nu)
            .constant(Block::Diffusion, vec![0.0; d * d])
            .build()
    }

    /// `b1 = c * sign(y0) e0`, `sigma = I`.
    pub fn sign_y_drift(d: usize, c: f64) -> Result<CoefficientSet> {
        CoefficientSet::builder("sign-y", d)
            .bound(c.abs() + (d as f64).sqrt())
            .ellipticity(1.0)
            .modulus(Modulus::new("0", |_| 0.0))
            .product(Block::Drift1, unit(d, 0, c), [(Axis::Y(0), sign)])
            .constant(Block::Diffusion, identity(d, 1.0))
            .build()
    }

    /// `b1 = sign(x)` (d = 1): discontinuous in `x`, so outside the catalog.
    pub fn sign_x_drift() -> Result<CoefficientSet> {
        CoefficientSet::builder("sign-x", 1)
            .bound(2.0)
            .ellipticity(1.0)
            .product(Block::Drift1, vec![1.0], [(Axis::X(0), sign)])
            .constant(Block::Diffusion, vec![1.0])
            .build()
    }

    /// `sigma = 1 + 0.5 * 1{y eta > 0}` (d = 1).
    pub fn indicator_diffusion() -> Result<CoefficientSet> {
        CoefficientSet::builder("indicator-sigma", 1)
            .bound(1.5)
            .ellipticity(1.0)
            .constant(Block::Diffusion, vec![1.0])
            .product(
                Block::Diffusion,
                vec![0.5],
                [(Axis::Y(0), positive_part_indicator), (Axis::Eta(0), positive_part_indicator)],
            )
            .product(
                Block::Diffusion,
                vec![0.5],
                [(Axis::Y(0), negative_part_indicator), (Axis::Eta(0), negative_part_indicator)],
            )
            .build()
    }

    /// `sigma = 1 + 0.5 * 1{eta > 0}` (d = 1).
    pub fn eta_indicator_diffusion() -> Result<CoefficientSet> {
        CoefficientSet::builder("eta-indicator-sigma", 1)
            .bound(1.5)
            .ellipticity(1.0)
            .constant(Block::Diffusion, vec![1.0])
            .product(Block::Diffusion, vec![0.5], [(Axis::Eta(0), positive_part_indicator)])
            .build()
    }

    /// `b0 = xi` (d = 1). Unbounded; only for mean-field arithmetic.
    pub fn linear_interaction() -> Result<CoefficientSet> {
        CoefficientSet::builder("linear-xi", 1)
            .bound(1e6)
            .ellipticity(1.0)
            .product(Block::Drift0, vec![1.0], [(Axis::Xi(0), |u: f64| u)])
            .constant(Block::Diffusion, vec![1.0])
            .build()
    }
}
