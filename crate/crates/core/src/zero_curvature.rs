//! Lax structure extracted from the Bäcklund maps themselves.
//!
//! The map `F_mu` supplies wave functions through
//! `exp(x^_k - x_k) = mu psi_{k+1} / psi_k`; the companion
//! `phi_k = -exp(-x_{k-1}) psi_{k-1}` turns the resulting three-term
//! recurrence into the first-order system
//! `(psi_{k+1}, phi_{k+1}) = L_k(mu) (psi_k, phi_k)`. The map `F_lambda` then
//! acts on wave functions through `V_k(mu)`, and commutativity of the maps
//! becomes `L~_k V_k = V_{k+1} L_k`.

use crate::backlund::{bt_forward, BtParam};
use crate::error::{Result, TodaError};
use crate::lattice::{
    check_finite, check_len, neighbor_exp, validate_state, Boundary, LatticeState, Matrix2, TodaConfig,
};

/// `psi_k` and `phi_k` for `k = 1..=N+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
}

impl WaveFunction {
    /// `(psi_k, phi_k)`, 1-based.
    pub fn at(&self, k: usize) -> [f64; 2] {
        [self.psi[k - 1], self.phi[k - 1]]
    }
}

fn nonzero(what: &str, v: f64) -> Result<()> {
    if v == 0.0 || !v.is_finite() {
        return Err(TodaError::Contract(format!(
            "{what} must be finite and nonzero, got {v}"
        )));
    }
    Ok(())
}

/// Wave function read off from the `F_mu` image `x^` of `x`, normalised by `psi_1`.
///
/// Open-end: `phi_1 = 0`. Periodic: `psi_0` is continued with `x_0 = x_N`, `x^_0 = x^_N`.
pub fn psi_from_hat(x: &[f64], xh: &[f64], mu: f64, psi1: f64, cfg: &TodaConfig) -> Result<WaveFunction> {
    nonzero("mu", mu)?;
    nonzero("psi_1", psi1)?;
    check_len("x", x, cfg.n)?;
    check_len("x^", xh, cfg.n)?;
    check_finite("x", x)?;
    check_finite("x^", xh)?;
    let n = cfg.n;
    let mut psi = Vec::with_capacity(n + 1);
    psi.push(psi1);
    for i in 0..n {
        psi.push(psi[i] * (xh[i] - x[i]).exp() / mu);
    }
    let phi1 = match cfg.boundary {
        Boundary::OpenEnd => 0.0,
        Boundary::Periodic => {
            let psi0 = mu * psi1 * (x[n - 1] - xh[n - 1]).exp();
            -(-x[n - 1]).exp() * psi0
        }
    };
    let mut phi = Vec::with_capacity(n + 1);
    phi.push(phi1);
    for i in 0..n {
        phi.push(-(-x[i]).exp() * psi[i]);
    }
    Ok(WaveFunction { psi, phi })
}

/// Transfer matrix `L_k(mu) = [[1/mu + p_k, e^{x_k}], [-e^{-x_k}, 0]]`.
pub fn lax_l(s: &LatticeState, k: usize, mu: f64) -> Result<Matrix2> {
    nonzero("mu", mu)?;
    let n = s.n();
    if k == 0 || k > n {
        return Err(TodaError::IndexOutOfRange { k, n });
    }
    let (x, p) = (s.x[k - 1], s.p[k - 1]);
    Ok(Matrix2::new(1.0 / mu + p, x.exp(), -(-x).exp(), 0.0))
}

/// Evolution matrix
/// `V_k(mu) = [[1 - lambda/mu - lambda^2 e^{x_k - x~_{k-1}}, -lambda e^{x_k}], [lambda e^{-x~_{k-1}}, 1]]`
/// for `k = 1..=N+1`.
///
/// Open-end: `x~_0 = +inf` kills the `k = 1` entries containing `x~_0`;
/// `x_{N+1} = -inf` kills those containing `x_{N+1}`. Periodic: `V_{N+1} = V_1`.
pub fn lax_v(x: &[f64], xt: &[f64], k: usize, mu: f64, lambda: BtParam, cfg: &TodaConfig) -> Result<Matrix2> {
    nonzero("mu", mu)?;
    check_len("x", x, cfg.n)?;
    check_len("x~", xt, cfg.n)?;
    let n = cfg.n;
    if k == 0 || k > n + 1 {
        return Err(TodaError::IndexOutOfRange { k, n: n + 1 });
    }
    let lam = lambda.value();
    let k = if cfg.boundary == Boundary::Periodic && k == n + 1 {
        1
    } else {
        k
    };
    // e^{x_k - x~_{k-1}}
    let cross = neighbor_exp(x, xt, k - 1, cfg.boundary);
    let ex = if k <= n { x[k - 1].exp() } else { 0.0 };
    let e_xt_prev = match (cfg.boundary, k) {
        (Boundary::OpenEnd, 1) => 0.0,
        (Boundary::Periodic, 1) => (-xt[n - 1]).exp(),
        _ => (-xt[k - 2]).exp(),
    };
    Ok(Matrix2::new(
        1.0 - lam / mu - lam * lam * cross,
        -lam * ex,
        lam * e_xt_prev,
        1.0,
    ))
}

/// `max_k |L~_k V_k - V_{k+1} L_k|` for a given image `st` of `s`.
///
/// Periodic: `k = 1..N`; open-end: `k = 1..N-1`.
pub fn zero_curvature_defect_for(
    s: &LatticeState,
    st: &LatticeState,
    lambda: BtParam,
    mu: f64,
    cfg: &TodaConfig,
) -> Result<f64> {
    validate_state(s, cfg)?;
    validate_state(st, cfg)?;
    let last = match cfg.boundary {
        Boundary::Periodic => cfg.n,
        Boundary::OpenEnd => cfg.n - 1,
    };
    let mut defect: f64 = 0.0;
    for k in 1..=last {
        let lhs = lax_l(st, k, mu)? * lax_v(&s.x, &st.x, k, mu, lambda, cfg)?;
        let rhs = lax_v(&s.x, &st.x, k + 1, mu, lambda, cfg)? * lax_l(s, k, mu)?;
        defect = defect.max(lhs.max_abs_diff(&rhs));
    }
    Ok(defect)
}

/// Zero-curvature defect of `F_lambda` with spectral parameter `mu`.
pub fn zero_curvature_defect(s: &LatticeState, lambda: BtParam, mu: f64, cfg: &TodaConfig) -> Result<f64> {
    let st = bt_forward(s, lambda, cfg)?.next;
    zero_curvature_defect_for(s, &st, lambda, mu, cfg)
}

/// Monodromy `T(mu) = L_N(mu) ... L_1(mu)`.
pub fn monodromy(s: &LatticeState, mu: f64) -> Result<Matrix2> {
    nonzero("mu", mu)?;
    let mut t = Matrix2::IDENTITY;
    for k in 1..=s.n() {
        t = lax_l(s, k, mu)? * t;
    }
    Ok(t)
}

/// `|prod exp(x~_k - x_k) - lambda^N T(lambda)_{11}|` (open-end only).
pub fn product_identity_defect(s: &LatticeState, lambda: BtParam, cfg: &TodaConfig) -> Result<f64> {
    if cfg.boundary == Boundary::Periodic {
        return Err(TodaError::UnsupportedBoundary("periodic"));
    }
    let st = bt_forward(s, lambda, cfg)?.next;
    let lam = lambda.value();
    let product: f64 = st.x.iter().zip(&s.x).map(|(a, b)| (a - b).exp()).product();
    let t11 = monodromy(s, lam)?.a11;
    Ok((product - lam.powi(cfg.n as i32) * t11).abs())
}

/// Conserved quantity of `F_lambda` carried by the monodromy: the trace for
/// periodic lattices, the `(1,1)` entry for open-end ones.
pub fn monodromy_invariant(s: &LatticeState, mu: f64, cfg: &TodaConfig) -> Result<f64> {
    let t = monodromy(s, mu)?;
    Ok(match cfg.boundary {
        Boundary::Periodic => t.trace(),
        Boundary::OpenEnd => t.a11,
    })
}
