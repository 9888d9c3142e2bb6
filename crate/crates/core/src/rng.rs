//! Counter-based random numbers.
//!
//! Every random value in the crate is a pure function of
//! `(seed, domain, stream, counter)` evaluated with Philox-4x32-10. Particles
//! use their index as the stream and the step index as the counter, so the
//! draws do not depend on scheduling or worker count. Domains keep unrelated
//! consumers (initial law, Wiener increments, projections, ...) in disjoint
//! key spaces.

use std::f64::consts::PI;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox-4x32 with 10 rounds, as specified by Salmon et al. (Random123).
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(ctr[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(ctr[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Key-space separation between consumers of the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    Wiener = 1,
    Initial = 2,
    CopyWiener = 3,
    CopyInitial = 4,
    Subsample = 5,
    Projection = 6,
    Validator = 7,
    Quadrature = 8,
    Probe = 9,
}

/// A seeded counter-based generator. Cheap to copy; holds no state besides
/// the seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw 128-bit block for `(domain, stream, counter, lane)`.
    ///
    /// Counter layout: words 0-1 hold the stream (e.g. particle index),
    /// word 2 the counter (e.g. step index), word 3 the domain tag in the top
    /// byte and the lane (axis block) in the low 24 bits.
    pub fn block(&self, domain: Domain, stream: u64, counter: u32, lane: u32) -> [u32; 4] {
        debug_assert!(lane < (1 << 24));
        let ctr = [
            stream as u32,
            (stream >> 32) as u32,
            counter,
            ((domain as u32) << 24) | (lane & 0x00FF_FFFF),
        ];
        philox4x32_10(ctr, [self.seed as u32, (self.seed >> 32) as u32])
    }

    /// Two uniforms in `[0, 1)` with 53-bit resolution.
    pub fn uniform_pair(&self, domain: Domain, stream: u64, counter: u32, lane: u32) -> [f64; 2] {
        let b = self.block(domain, stream, counter, lane);
        let a = (u64::from(b[0]) << 32) | u64::from(b[1]);
        let c = (u64::from(b[2]) << 32) | u64::from(b[3]);
        [unit_closed_open(a), unit_closed_open(c)]
    }

    /// Two independent standard normals via Box-Muller on one Philox block.
    pub fn normal_pair(&self, domain: Domain, stream: u64, counter: u32, lane: u32) -> [f64; 2] {
        let b = self.block(domain, stream, counter, lane);
        let a = (u64::from(b[0]) << 32) | u64::from(b[1]);
        let c = (u64::from(b[2]) << 32) | u64::from(b[3]);
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = ((a >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = unit_closed_open(c);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        [r * theta.cos(), r * theta.sin()]
    }

    /// Fill `out` with standard normals for `(stream, counter)`; component
    /// `k` comes from lane `k / 2`, slot `k % 2`.
    pub fn fill_normals(&self, domain: Domain, stream: u64, counter: u32, out: &mut [f64]) {
        for (lane, chunk) in out.chunks_mut(2).enumerate() {
            let pair = self.normal_pair(domain, stream, counter, lane as u32);
            chunk.copy_from_slice(&pair[..chunk.len()]);
        }
    }

    /// Fill `out` with uniforms in `[0, 1)` for `(stream, counter)`.
    pub fn fill_uniforms(&self, domain: Domain, stream: u64, counter: u32, out: &mut [f64]) {
        for (lane, chunk) in out.chunks_mut(2).enumerate() {
            let pair = self.uniform_pair(domain, stream, counter, lane as u32);
            chunk.copy_from_slice(&pair[..chunk.len()]);
        }
    }
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn unit_closed_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * TWO_POW_M53
}
