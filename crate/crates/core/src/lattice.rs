//! Shared lattice types and the boundary convention.
//!
//! Every exponential coupling between neighbouring sites goes through
//! [`neighbor_exp`]. Under [`Boundary::OpenEnd`] the sites `x_0 = +inf` and
//! `x_{N+1} = -inf` are never materialised; the affected terms are returned as
//! exactly `0`. Under [`Boundary::Periodic`] indices wrap modulo `N`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TodaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    #[serde(rename = "open", alias = "open-end", alias = "openend")]
    OpenEnd,
    #[serde(rename = "periodic")]
    Periodic,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::OpenEnd => "open",
            Boundary::Periodic => "periodic",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Boundary {
    type Err = TodaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "open" | "open-end" | "openend" => Ok(Boundary::OpenEnd),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(TodaError::Config(format!("unknown boundary '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TodaConfig {
    pub n: usize,
    pub boundary: Boundary,
    pub tol_newton: f64,
    pub max_newton_iters: usize,
}

impl TodaConfig {
    pub const DEFAULT_TOL_NEWTON: f64 = 1e-12;
    pub const DEFAULT_MAX_NEWTON_ITERS: usize = 50;

    pub fn new(n: usize, boundary: Boundary) -> Result<Self> {
        let cfg = TodaConfig {
            n,
            boundary,
            tol_newton: Self::DEFAULT_TOL_NEWTON,
            max_newton_iters: Self::DEFAULT_MAX_NEWTON_ITERS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn open(n: usize) -> Self {
        Self::new(n, Boundary::OpenEnd).expect("n >= 1")
    }

    pub fn periodic(n: usize) -> Self {
        Self::new(n, Boundary::Periodic).expect("n >= 1")
    }

    pub fn with_newton(mut self, tol: f64, max_iters: usize) -> Result<Self> {
        self.tol_newton = tol;
        self.max_newton_iters = max_iters;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(TodaError::Config("particle count n must be >= 1".into()));
        }
        if !(self.tol_newton.is_finite() && self.tol_newton > 0.0) {
            return Err(TodaError::Config("tol_newton must be a positive finite number".into()));
        }
        if self.max_newton_iters == 0 {
            return Err(TodaError::Config("max_newton_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Phase-space point `(x, p)` of the N-particle lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl LatticeState {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let s = LatticeState { x, p };
        s.check_shape()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Uniform random state with `x_k, p_k` in `[-amplitude, amplitude]`.
    pub fn random(n: usize, amplitude: f64, rng: &mut impl Rng) -> Self {
        let x = (0..n).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
        let p = (0..n).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
        LatticeState { x, p }
    }

    /// Deterministic random state in `[-0.5, 0.5]` drawn from a ChaCha8 stream.
    pub fn seeded(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random(n, 0.5, &mut rng)
    }

    /// Deterministic state from [`StateSampler::for_boundary`].
    pub fn sampled(n: usize, boundary: Boundary, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StateSampler::for_boundary(boundary).draw(n, &mut rng)
    }

    /// Concatenated `(x, p)` vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_flat(v: &[f64]) -> Self {
        let n = v.len() / 2;
        LatticeState {
            x: v[..n].to_vec(),
            p: v[n..].to_vec(),
        }
    }

    /// Max-norm distance over all `x` and `p` entries.
    pub fn max_diff(&self, other: &LatticeState) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.p.iter().zip(&other.p))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.p).all(|v| v.is_finite())
    }

    fn check_shape(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(TodaError::LengthMismatch {
                what: "x",
                got: 0,
                expected: 1,
            });
        }
        if self.p.len() != self.x.len() {
            return Err(TodaError::LengthMismatch {
                what: "p",
                got: self.p.len(),
                expected: self.x.len(),
            });
        }
        check_finite("x", &self.x)?;
        check_finite("p", &self.p)
    }
}

/// Random states `x_k = -spacing (k - 1) + u_k`, `p_k = v_k` with `u, v`
/// uniform in `[-amplitude, amplitude]`.
///
/// Open-end lattices are sampled with the particles spread out (`spacing > 0`)
/// so that neighbour couplings `exp(x_{k+1} - x_k)` stay well below one; with
/// couplings of order one the real branch of `F_lambda` disappears for
/// `lambda` above roughly `1/2` once the chain is a few sites long. Periodic
/// lattices cannot be spread out and use `spacing = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSampler {
    pub amplitude: f64,
    pub spacing: f64,
}

impl StateSampler {
    pub const DEFAULT_AMPLITUDE: f64 = 0.5;
    pub const DEFAULT_OPEN_SPACING: f64 = 2.0;

    pub fn for_boundary(boundary: Boundary) -> Self {
        StateSampler {
            amplitude: Self::DEFAULT_AMPLITUDE,
            spacing: match boundary {
                Boundary::OpenEnd => Self::DEFAULT_OPEN_SPACING,
                Boundary::Periodic => 0.0,
            },
        }
    }

    pub fn draw(&self, n: usize, rng: &mut impl Rng) -> LatticeState {
        let mut s = LatticeState::random(n, self.amplitude, rng);
        for (k, x) in s.x.iter_mut().enumerate() {
            *x -= self.spacing * k as f64;
        }
        s
    }
}

pub(crate) fn check_finite(what: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|a| !a.is_finite()) {
        Some(i) => Err(TodaError::NonFinite { what, k: i + 1 }),
        None => Ok(()),
    }
}

pub(crate) fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(TodaError::LengthMismatch {
            what,
            got: v.len(),
            expected: n,
        });
    }
    Ok(())
}

pub fn validate_state(s: &LatticeState, cfg: &TodaConfig) -> Result<()> {
    s.check_shape()?;
    check_len("x", &s.x, cfg.n)
}

/// `exp(upper_{k+1} - lower_k)` for `0 <= k <= N`, with 1-based site labels.
///
/// `k = 0` touches `lower_0` and `k = N` touches `upper_{N+1}`; both vanish
/// under the open-end boundary and wrap under the periodic one.
pub fn neighbor_exp(upper: &[f64], lower: &[f64], k: usize, boundary: Boundary) -> f64 {
    let n = upper.len();
    debug_assert_eq!(n, lower.len());
    debug_assert!(k <= n);
    match boundary {
        Boundary::OpenEnd => {
            if k == 0 || k == n {
                0.0
            } else {
                (upper[k] - lower[k - 1]).exp()
            }
        }
        Boundary::Periodic => {
            let lo = if k == 0 { n - 1 } else { k - 1 };
            let up = k % n;
            (upper[up] - lower[lo]).exp()
        }
    }
}

/// `exp(x_{k+1} - x_k)` for `1 <= k <= N`.
pub fn gap_exp(x: &[f64], k: usize, cfg: &TodaConfig) -> Result<f64> {
    if k == 0 || k > x.len() {
        return Err(TodaError::IndexOutOfRange { k, n: x.len() });
    }
    Ok(neighbor_exp(x, x, k, cfg.boundary))
}

/// `exp(x_k - x_{k-1})` for `1 <= k <= N`; the `k = 1` term vanishes under the open-end boundary.
pub fn gap_exp_prev(x: &[f64], k: usize, cfg: &TodaConfig) -> Result<f64> {
    if k == 0 || k > x.len() {
        return Err(TodaError::IndexOutOfRange { k, n: x.len() });
    }
    Ok(neighbor_exp(x, x, k - 1, cfg.boundary))
}

/// Real 2x2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Matrix2 { a11, a12, a21, a22 }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    pub fn max_abs_diff(&self, other: &Matrix2) -> f64 {
        [
            self.a11 - other.a11,
            self.a12 - other.a12,
            self.a21 - other.a21,
            self.a22 - other.a22,
        ]
        .iter()
        .fold(0.0, |m, d| f64::max(m, d.abs()))
    }

    pub fn to_rows(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }
}

impl std::ops::Mul for Matrix2 {
    type Output = Matrix2;

    fn mul(self, r: Matrix2) -> Matrix2 {
        Matrix2::new(
            self.a11 * r.a11 + self.a12 * r.a21,
            self.a11 * r.a12 + self.a12 * r.a22,
            self.a21 * r.a11 + self.a22 * r.a21,
            self.a21 * r.a12 + self.a22 * r.a22,
        )
    }
}
