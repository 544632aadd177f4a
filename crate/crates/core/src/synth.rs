//! Deterministic Swiss-roll generator.
//!
//! Sampling uses SplitMix64: the state advances by `0x9E3779B97F4A7C15`
//! (wrapping) and each output is the state passed through
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! A uniform real in `[0, 1)` is the top 53 bits of an output times `2^-53`.
//! For every point `u` is drawn first, then `v`. The radius is
//! `t = 1.5π(1 + 2u)` and the point is `(t cos t, 21 v, t sin t)`, with
//! intrinsic coordinates `(t, 21 v)`.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Height of the roll along its axis.
pub const ROLL_HEIGHT: f64 = 21.0;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (one of the pair is discarded).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

#[derive(Debug, Clone)]
pub struct SwissRoll {
    /// n×3 ambient coordinates.
    pub points: Array2<f64>,
    /// n×2 `(t, height)` ground truth.
    pub intrinsic: Array2<f64>,
    pub seed: u64,
}

/// Maps a unit-square sample to `(point, intrinsic)`.
pub fn roll_point(u: f64, v: f64) -> ([f64; 3], [f64; 2]) {
    let t = 1.5 * PI * (1.0 + 2.0 * u);
    let h = ROLL_HEIGHT * v;
    ([t * t.cos(), h, t * t.sin()], [t, h])
}

pub fn swiss_roll(n: usize, seed: u64) -> Result<SwissRoll> {
    if n == 0 {
        return Err(Error::InvalidParameter("swiss roll needs n >= 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut points = Array2::zeros((n, 3));
    let mut intrinsic = Array2::zeros((n, 2));
    for i in 0..n {
        let u = rng.next_f64();
        let v = rng.next_f64();
        let (p, q) = roll_point(u, v);
        for j in 0..3 {
            points[[i, j]] = p[j];
        }
        intrinsic[[i, 0]] = q[0];
        intrinsic[[i, 1]] = q[1];
    }
    Ok(SwissRoll {
        points,
        intrinsic,
        seed,
    })
}

/// Arc length of the spiral `r = t` measured from the origin.
pub fn arc_length(t: f64) -> f64 {
    0.5 * (t * (1.0 + t * t).sqrt() + t.asinh())
}
