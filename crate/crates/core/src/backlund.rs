//! Bäcklund maps of the Toda lattice and the discrete Lagrangian 1-form.
//!
//! `F_lambda : (x, p) -> (x~, p~)` is defined implicitly by
//!
//! ```text
//! p_k  = (exp(x~_k - x_k) - 1) / lambda + lambda exp(x_k - x~_{k-1})
//! p~_k = (exp(x~_k - x_k) - 1) / lambda + lambda exp(x_{k+1} - x~_k)
//! ```
//!
//! and generated by the edge Lagrangian
//!
//! ```text
//! Lambda(x, x~; lambda) = 1/lambda sum (exp(x~_k - x_k) - 1 - (x~_k - x_k)) - lambda sum exp(x_{k+1} - x~_k)
//! ```
//!
//! with `p = -dLambda/dx`, `p~ = dLambda/dx~`. Open-end maps are solved in
//! closed form by a continued-fraction recurrence; periodic maps by Newton
//! iteration on the branch connected to the identity as `lambda -> 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TodaError};
use crate::lattice::{check_finite, check_len, neighbor_exp, validate_state, Boundary, LatticeState, TodaConfig};

/// Nonzero Bäcklund parameter.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BtParam(f64);

impl BtParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda == 0.0 {
            return Err(TodaError::Config(format!(
                "Bäcklund parameter must be finite and nonzero, got {lambda}"
            )));
        }
        Ok(BtParam(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BtParam {
    type Error = TodaError;

    fn try_from(v: f64) -> Result<Self> {
        BtParam::new(v)
    }
}

impl From<BtParam> for f64 {
    fn from(p: BtParam) -> f64 {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtStepResult {
    pub next: LatticeState,
    /// `"continued-fraction"` for open-end steps, `"newton (k iterations)"` for periodic ones.
    pub branch_note: String,
}

fn expect_shapes(s: &LatticeState, cfg: &TodaConfig) -> Result<()> {
    validate_state(s, cfg)
}

/// Newton's method for `f(y) = 0` with a dense Jacobian. Returns the root and
/// the number of iterations used.
fn newton<F>(mut y: Vec<f64>, cfg: &TodaConfig, f: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>),
{
    let n = y.len();
    let mut residual = f64::INFINITY;
    for iter in 0..=cfg.max_newton_iters {
        let (r, jac) = f(&y);
        residual = r.iter().fold(0.0, |m, v| f64::max(m, v.abs()));
        if !residual.is_finite() {
            break;
        }
        if residual <= cfg.tol_newton {
            return Ok((y, iter));
        }
        if iter == cfg.max_newton_iters {
            break;
        }
        let rhs = DVector::from_iterator(n, r.into_iter().map(|v| -v));
        let Some(delta) = jac.lu().solve(&rhs) else {
            break;
        };
        for (yi, di) in y.iter_mut().zip(delta.iter()) {
            *yi += di;
        }
        if y.iter().any(|v| !v.is_finite()) {
            residual = f64::NAN;
            break;
        }
    }
    Err(TodaError::NewtonDiverged {
        iterations: cfg.max_newton_iters,
        residual,
    })
}

/// Initial log-ratio `ln(1 + lambda p_k)`, failing where the argument is not positive.
fn decoupled_guess(p: &[f64], lambda: f64) -> Result<Vec<f64>> {
    p.iter()
        .enumerate()
        .map(|(i, pk)| {
            let g = 1.0 + lambda * pk;
            if g > 0.0 {
                Ok((lambda * pk).ln_1p())
            } else {
                Err(TodaError::NonPositiveBranch { k: i + 1, value: g })
            }
        })
        .collect()
}

/// One step of `F_lambda`.
pub fn bt_forward(s: &LatticeState, lambda: BtParam, cfg: &TodaConfig) -> Result<BtStepResult> {
    expect_shapes(s, cfg)?;
    let lam = lambda.value();
    let n = cfg.n;
    let (x, p) = (&s.x, &s.p);
    let (xt, note) = match cfg.boundary {
        Boundary::OpenEnd => {
            // q_k = g_k - 1 with g_1 = 1 + lambda p_1,
            // g_k = 1 + lambda p_k - lambda^2 exp(x_k - x_{k-1}) / g_{k-1}
            let mut xt = vec![0.0; n];
            let mut g_prev = 1.0;
            for i in 0..n {
                let coupling = neighbor_exp(x, x, i, cfg.boundary);
                let q = lam * p[i]
                    - if coupling != 0.0 {
                        lam * lam * coupling / g_prev
                    } else {
                        0.0
                    };
                let g = 1.0 + q;
                if g.is_nan() || g <= 0.0 {
                    return Err(TodaError::NonPositiveBranch { k: i + 1, value: g });
                }
                xt[i] = x[i] + q.ln_1p();
                g_prev = g;
            }
            (xt, "continued-fraction".to_string())
        }
        Boundary::Periodic => {
            let guess: Vec<f64> = decoupled_guess(p, lam)?.iter().zip(x).map(|(d, xi)| xi + d).collect();
            let (xt, iters) = newton(guess, cfg, |y| {
                let mut r = vec![0.0; n];
                let mut jac = DMatrix::zeros(n, n);
                for i in 0..n {
                    let d = y[i] - x[i];
                    let back = neighbor_exp(x, y, i, cfg.boundary);
                    r[i] = d.exp_m1() / lam + lam * back - p[i];
                    jac[(i, i)] += d.exp() / lam;
                    jac[(i, (i + n - 1) % n)] -= lam * back;
                }
                (r, jac)
            })?;
            (xt, format!("newton ({iters} iterations)"))
        }
    };
    let pt = (0..n)
        .map(|i| (xt[i] - x[i]).exp_m1() / lam + lam * neighbor_exp(x, &xt, i + 1, cfg.boundary))
        .collect::<Vec<_>>();
    let next = LatticeState { x: xt, p: pt };
    if !next.is_finite() {
        return Err(TodaError::NonFinite {
            what: "Bäcklund image",
            k: 0,
        });
    }
    Ok(BtStepResult {
        next,
        branch_note: note,
    })
}

/// One step of `F_lambda^{-1}`: recovers `(x, p)` from `(x~, p~)`.
pub fn bt_inverse(st: &LatticeState, lambda: BtParam, cfg: &TodaConfig) -> Result<BtStepResult> {
    expect_shapes(st, cfg)?;
    let lam = lambda.value();
    let n = cfg.n;
    let (xt, pt) = (&st.x, &st.p);
    let (x, note) = match cfg.boundary {
        Boundary::OpenEnd => {
            // h_k = exp(x~_k - x_k): h_N = 1 + lambda p~_N,
            // h_k = 1 + lambda p~_k - lambda^2 exp(x~_{k+1} - x~_k) / h_{k+1}
            let mut x = vec![0.0; n];
            let mut h_next = 1.0;
            for i in (0..n).rev() {
                let coupling = neighbor_exp(xt, xt, i + 1, cfg.boundary);
                let q = lam * pt[i]
                    - if coupling != 0.0 {
                        lam * lam * coupling / h_next
                    } else {
                        0.0
                    };
                let h = 1.0 + q;
                if h.is_nan() || h <= 0.0 {
                    return Err(TodaError::NonPositiveBranch { k: i + 1, value: h });
                }
                x[i] = xt[i] - q.ln_1p();
                h_next = h;
            }
            (x, "continued-fraction".to_string())
        }
        Boundary::Periodic => {
            let guess: Vec<f64> = decoupled_guess(pt, lam)?.iter().zip(xt).map(|(d, xi)| xi - d).collect();
            let (x, iters) = newton(guess, cfg, |y| {
                let mut r = vec![0.0; n];
                let mut jac = DMatrix::zeros(n, n);
                for i in 0..n {
                    let d = xt[i] - y[i];
                    let fwd = neighbor_exp(y, xt, i + 1, cfg.boundary);
                    r[i] = d.exp_m1() / lam + lam * fwd - pt[i];
                    jac[(i, i)] -= d.exp() / lam;
                    jac[(i, (i + 1) % n)] += lam * fwd;
                }
                (r, jac)
            })?;
            (x, format!("newton ({iters} iterations)"))
        }
    };
    let p = (0..n)
        .map(|i| (xt[i] - x[i]).exp_m1() / lam + lam * neighbor_exp(&x, xt, i, cfg.boundary))
        .collect::<Vec<_>>();
    let prev = LatticeState { x, p };
    if !prev.is_finite() {
        return Err(TodaError::NonFinite {
            what: "inverse Bäcklund image",
            k: 0,
        });
    }
    Ok(BtStepResult {
        next: prev,
        branch_note: note,
    })
}

fn check_pair(x: &[f64], xt: &[f64], cfg: &TodaConfig) -> Result<()> {
    check_len("x", x, cfg.n)?;
    check_len("x~", xt, cfg.n)?;
    check_finite("x", x)?;
    check_finite("x~", xt)
}

/// Edge Lagrangian `Lambda(x, x~; lambda)`.
pub fn bt_lagrangian(x: &[f64], xt: &[f64], lambda: BtParam, cfg: &TodaConfig) -> Result<f64> {
    check_pair(x, xt, cfg)?;
    let lam = lambda.value();
    let mut kinetic = 0.0;
    let mut coupling = 0.0;
    for i in 0..cfg.n {
        let d = xt[i] - x[i];
        kinetic += d.exp_m1() - d;
        coupling += neighbor_exp(x, xt, i + 1, cfg.boundary);
    }
    Ok(kinetic / lam - lam * coupling)
}

/// `(dLambda/dx, dLambda/dx~)`.
pub fn bt_lagrangian_grad(x: &[f64], xt: &[f64], lambda: BtParam, cfg: &TodaConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    check_pair(x, xt, cfg)?;
    let lam = lambda.value();
    let n = cfg.n;
    let mut dx = vec![0.0; n];
    let mut dxt = vec![0.0; n];
    for i in 0..n {
        let e = (xt[i] - x[i]).exp_m1() / lam;
        dx[i] = -e - lam * neighbor_exp(x, xt, i, cfg.boundary);
        dxt[i] = e + lam * neighbor_exp(x, xt, i + 1, cfg.boundary);
    }
    Ok((dx, dxt))
}

/// `dLambda/dlambda` at fixed `(x, x~)`.
pub fn bt_lagrangian_dlambda(x: &[f64], xt: &[f64], lambda: BtParam, cfg: &TodaConfig) -> Result<f64> {
    check_pair(x, xt, cfg)?;
    let lam = lambda.value();
    let mut kinetic = 0.0;
    let mut coupling = 0.0;
    for i in 0..cfg.n {
        let d = xt[i] - x[i];
        kinetic += d.exp_m1() - d;
        coupling += neighbor_exp(x, xt, i + 1, cfg.boundary);
    }
    Ok(-kinetic / (lam * lam) - coupling)
}

/// Residuals of the momentum relations `p = -dLambda/dx`, `p~ = dLambda/dx~`
/// for a step `r` produced from `s`.
pub fn discrete_el_residual(
    s: &LatticeState,
    r: &BtStepResult,
    lambda: BtParam,
    cfg: &TodaConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    expect_shapes(s, cfg)?;
    expect_shapes(&r.next, cfg)?;
    let (dx, dxt) = bt_lagrangian_grad(&s.x, &r.next.x, lambda, cfg)?;
    let rp = s.p.iter().zip(&dx).map(|(p, d)| p + d).collect();
    let rpt = r.next.p.iter().zip(&dxt).map(|(p, d)| p - d).collect();
    Ok((rp, rpt))
}

fn compose(
    s: &LatticeState,
    first: BtParam,
    second: BtParam,
    cfg: &TodaConfig,
    order: &'static str,
) -> Result<(LatticeState, LatticeState)> {
    let tag = |e: TodaError| TodaError::CompositionFailed {
        order,
        source: Box::new(e),
    };
    let mid = bt_forward(s, first, cfg).map_err(tag)?.next;
    let end = bt_forward(&mid, second, cfg).map_err(tag)?.next;
    Ok((mid, end))
}

/// Max-norm of `F_lambda(F_mu(s)) - F_mu(F_lambda(s))`.
pub fn commutation_defect(s: &LatticeState, lambda: BtParam, mu: BtParam, cfg: &TodaConfig) -> Result<f64> {
    let (_, lam_after_mu) = compose(s, mu, lambda, cfg, "F_lambda after F_mu")?;
    let (_, mu_after_lam) = compose(s, lambda, mu, cfg, "F_mu after F_lambda")?;
    Ok(lam_after_mu.max_diff(&mu_after_lam))
}

/// Elementary square of the discrete solution: `x`, `x~ = F_lambda x`,
/// `x^ = F_mu x` and `x^~` reached through `x~`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementarySquare {
    pub base: LatticeState,
    pub tilde: LatticeState,
    pub hat: LatticeState,
    pub hat_tilde: LatticeState,
}

pub fn elementary_square(s: &LatticeState, lambda: BtParam, mu: BtParam, cfg: &TodaConfig) -> Result<ElementarySquare> {
    let (tilde, hat_tilde) = compose(s, lambda, mu, cfg, "F_mu after F_lambda")?;
    let hat = bt_forward(s, mu, cfg)
        .map_err(|e| TodaError::CompositionFailed {
            order: "F_mu",
            source: Box::new(e),
        })?
        .next;
    Ok(ElementarySquare {
        base: s.clone(),
        tilde,
        hat,
        hat_tilde,
    })
}

/// Residuals of the superposition formula tying `x, x~, x^, x^~`.
///
/// Periodic: one residual per site. Open-end: sites `1..N-1` followed by the
/// left and right boundary relations (`N + 1` values in total), written as
/// `1 - (l e^{x^_1} - m e^{x~_1}) / ((l - m) e^{x_1})` and
/// `e^{x^~_N - x~_N - x^_N + x_N} - (l - m) e^{x_N} / (l e^{x^_N} - m e^{x~_N})`.
pub fn superposition_residuals(
    x: &[f64],
    xt: &[f64],
    xh: &[f64],
    xht: &[f64],
    lambda: BtParam,
    mu: BtParam,
    cfg: &TodaConfig,
) -> Result<Vec<f64>> {
    let n = cfg.n;
    for (what, v) in [("x", x), ("x~", xt), ("x^", xh), ("x^~", xht)] {
        check_len(what, v, n)?;
        check_finite(what, v)?;
    }
    let (lam, mu) = (lambda.value(), mu.value());
    let tiny = |scale: f64| 4.0 * f64::EPSILON * scale;
    let mixed = |i: usize| -> (f64, f64) {
        let a = lam * xh[i].exp();
        let b = mu * xt[i].exp();
        (a - b, a.abs() + b.abs())
    };
    let interior = |i: usize| -> Result<f64> {
        let j = (i + 1) % n;
        let (den, scale) = mixed(i);
        if den.abs() <= tiny(scale) {
            return Err(TodaError::ZeroDenominator { k: i + 1 });
        }
        let (num, _) = mixed(j);
        Ok((xht[i] - xt[i] - xh[i] + x[j]).exp() - num / den)
    };
    match cfg.boundary {
        Boundary::Periodic => (0..n).map(interior).collect(),
        Boundary::OpenEnd => {
            let mut out = (0..n - 1).map(interior).collect::<Result<Vec<_>>>()?;
            let diff = lam - mu;
            if diff.abs() <= tiny(lam.abs() + mu.abs()) {
                return Err(TodaError::ZeroDenominator { k: 1 });
            }
            // Boundary relations are divided by exp(x_1) and multiplied by
            // exp(x_N) respectively so that they stay O(1) for spread-out chains.
            let rel = |i: usize| -> (f64, f64) {
                let a = lam * (xh[i] - x[i]).exp();
                let b = mu * (xt[i] - x[i]).exp();
                (a - b, a.abs() + b.abs())
            };
            let (num_left, _) = rel(0);
            out.push(1.0 - num_left / diff);
            let (den_right, scale) = rel(n - 1);
            if den_right.abs() <= tiny(scale) {
                return Err(TodaError::ZeroDenominator { k: n });
            }
            let last = n - 1;
            out.push((xht[last] - xt[last] - xh[last] + x[last]).exp() - diff / den_right);
            Ok(out)
        }
    }
}

/// Closure constant of the discrete 1-form on one elementary square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureConstant {
    /// `Lambda(x,x~;l) + Lambda(x~,x^~;m) - Lambda(x,x^;m) - Lambda(x^,x^~;l)`.
    pub ell: f64,
    /// `(1/l - 1/m) sum (x^~ - x~ - x^ + x)`.
    pub ell_reduced: f64,
}

pub fn closure_constant(s: &LatticeState, lambda: BtParam, mu: BtParam, cfg: &TodaConfig) -> Result<ClosureConstant> {
    let sq = elementary_square(s, lambda, mu, cfg)?;
    let l1 = bt_lagrangian(&sq.base.x, &sq.tilde.x, lambda, cfg)?;
    let l2 = bt_lagrangian(&sq.tilde.x, &sq.hat_tilde.x, mu, cfg)?;
    let l3 = bt_lagrangian(&sq.base.x, &sq.hat.x, mu, cfg)?;
    let l4 = bt_lagrangian(&sq.hat.x, &sq.hat_tilde.x, lambda, cfg)?;
    let ell = (l1 - l3) + (l2 - l4);
    let sum: f64 = (0..cfg.n)
        .map(|i| (sq.hat_tilde.x[i] - sq.tilde.x[i]) - (sq.hat.x[i] - sq.base.x[i]))
        .sum();
    let ell_reduced = (1.0 / lambda.value() - 1.0 / mu.value()) * sum;
    Ok(ClosureConstant { ell, ell_reduced })
}

/// `dLambda/dlambda` evaluated two ways: directly from the Lagrangian and via
/// `-(1/lambda) sum p + (1/lambda^2) sum (x~ - x)`. They agree when `(x, x~, p)`
/// satisfy the map equations.
pub fn spectrality_integral(x: &[f64], xt: &[f64], p: &[f64], lambda: BtParam, cfg: &TodaConfig) -> Result<(f64, f64)> {
    check_len("p", p, cfg.n)?;
    let direct = bt_lagrangian_dlambda(x, xt, lambda, cfg)?;
    let lam = lambda.value();
    let psum: f64 = p.iter().sum();
    let dsum: f64 = xt.iter().zip(x).map(|(a, b)| a - b).sum();
    Ok((direct, -psum / lam + dsum / (lam * lam)))
}

/// Spectrality integral of `F_lambda` as a function on phase space.
pub fn spectrality_at(s: &LatticeState, lambda: BtParam, cfg: &TodaConfig) -> Result<(f64, f64)> {
    let r = bt_forward(s, lambda, cfg)?;
    spectrality_integral(&s.x, &r.next.x, &s.p, lambda, cfg)
}

/// Max-norm of `J^T Omega J - Omega` for the finite-difference Jacobian `J`
/// of `map` at `s`, with `Omega = [[0, I], [-I, 0]]` in `(x, p)` ordering.
pub fn symplecticity_defect_of<F>(map: F, s: &LatticeState, h_fd: f64) -> Result<f64>
where
    F: Fn(&LatticeState) -> Result<LatticeState>,
{
    if !(h_fd.is_finite() && h_fd > 0.0) {
        return Err(TodaError::Contract(format!("h_fd must be positive, got {h_fd}")));
    }
    let y0 = s.to_flat();
    let dim = y0.len();
    let n = dim / 2;
    let mut jac = DMatrix::zeros(dim, dim);
    let mut probe = y0.clone();
    for j in 0..dim {
        probe[j] = y0[j] + h_fd;
        let up = map(&LatticeState::from_flat(&probe))?.to_flat();
        probe[j] = y0[j] - h_fd;
        let down = map(&LatticeState::from_flat(&probe))?.to_flat();
        probe[j] = y0[j];
        for i in 0..dim {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h_fd);
        }
    }
    let mut omega = DMatrix::zeros(dim, dim);
    for i in 0..n {
        omega[(i, n + i)] = 1.0;
        omega[(n + i, i)] = -1.0;
    }
    let pulled = jac.transpose() * &omega * &jac;
    Ok((pulled - omega).amax())
}

pub fn symplecticity_defect(s: &LatticeState, lambda: BtParam, cfg: &TodaConfig, h_fd: f64) -> Result<f64> {
    expect_shapes(s, cfg)?;
    symplecticity_defect_of(|st| bt_forward(st, lambda, cfg).map(|r| r.next), s, h_fd)
}

/// A signed unit step along coordinate direction `direction` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub direction: usize,
    pub forward: bool,
}

impl PathStep {
    pub fn plus(direction: usize) -> Self {
        PathStep {
            direction,
            forward: true,
        }
    }

    pub fn minus(direction: usize) -> Self {
        PathStep {
            direction,
            forward: false,
        }
    }
}

/// Lattice path in `Z^m` as a sequence of signed unit steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    steps: Vec<PathStep>,
}

impl DiscretePath {
    pub fn new(steps: Vec<PathStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(TodaError::Contract("discrete path must be nonempty".into()));
        }
        if steps.iter().any(|s| s.direction == 0) {
            return Err(TodaError::Contract("path directions are 1-based".into()));
        }
        Ok(DiscretePath { steps })
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }
}

/// Sum of signed edge Lagrangians along `path`, starting from `s0` at the origin.
pub fn path_action_discrete(
    s0: &LatticeState,
    path: &DiscretePath,
    params: &[BtParam],
    cfg: &TodaConfig,
) -> Result<f64> {
    expect_shapes(s0, cfg)?;
    let mut cur = s0.clone();
    let mut action = 0.0;
    for step in &path.steps {
        let lam = *params.get(step.direction - 1).ok_or_else(|| {
            TodaError::Contract(format!(
                "path direction {} exceeds the {} supplied parameters",
                step.direction,
                params.len()
            ))
        })?;
        if step.forward {
            let next = bt_forward(&cur, lam, cfg)?.next;
            action += bt_lagrangian(&cur.x, &next.x, lam, cfg)?;
            cur = next;
        } else {
            let prev = bt_inverse(&cur, lam, cfg)?.next;
            action -= bt_lagrangian(&prev.x, &cur.x, lam, cfg)?;
            cur = prev;
        }
    }
    Ok(action)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(x: &[f64], p: &[f64]) -> LatticeState {
        LatticeState::new(x.to_vec(), p.to_vec()).unwrap()
    }

    fn lam(v: f64) -> BtParam {
        BtParam::new(v).unwrap()
    }

    #[test]
    fn param_rejects_zero() {
        assert!(BtParam::new(0.0).is_err());
        assert!(BtParam::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<BtParam>("0.0").is_err());
        assert_eq!(serde_json::from_str::<BtParam>("0.5").unwrap().value(), 0.5);
    }

    #[test]
    fn forward_single_site() {
        let cfg = TodaConfig::open(1);
        let r = bt_forward(&st(&[0.0], &[1.0]), lam(1.0), &cfg).unwrap();
        assert!((r.next.x[0] - 2f64.ln()).abs() < 1e-15);
        assert!((r.next.p[0] - 1.0).abs() < 1e-15);
        assert_eq!(r.branch_note, "continued-fraction");
    }

    #[test]
    fn forward_two_sites_by_hand() {
        let cfg = TodaConfig::open(2);
        let s = st(&[0.0, 0.0], &[0.0, 0.0]);
        let r = bt_forward(&s, lam(0.5), &cfg).unwrap();
        assert_eq!(r.next.x[0], 0.0);
        assert!((r.next.x[1] - 0.75f64.ln()).abs() < 1e-15);
        // p~_1 = (g_1 - 1)/l + l exp(x_2 - x~_1) = 0 + 0.5, p~_2 = (0.75 - 1)/0.5 = -0.5
        assert!((r.next.p[0] - 0.5).abs() < 1e-15);
        assert!((r.next.p[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn forward_detects_missing_branch() {
        let cfg = TodaConfig::open(2);
        let err = bt_forward(&st(&[0.0, 0.0], &[-3.0, 0.0]), lam(0.5), &cfg).unwrap_err();
        assert!(matches!(err, TodaError::NonPositiveBranch { k: 1, .. }));
        let err = bt_forward(&st(&[0.0, 3.0], &[0.0, 0.0]), lam(0.5), &cfg).unwrap_err();
        assert!(matches!(err, TodaError::NonPositiveBranch { k: 2, .. }));
        assert!(err.is_branch_failure());
    }

    #[test]
    fn periodic_newton_reports_iterations() {
        let cfg = TodaConfig::periodic(3);
        let r = bt_forward(&st(&[0.1, -0.2, 0.05], &[0.3, -0.1, 0.2]), lam(0.2), &cfg).unwrap();
        assert!(r.branch_note.starts_with("newton ("));
        let capped = cfg.with_newton(1e-300, 2).unwrap();
        let err = bt_forward(&st(&[0.1, -0.2, 0.05], &[0.3, -0.1, 0.2]), lam(0.2), &capped).unwrap_err();
        assert!(matches!(err, TodaError::NewtonDiverged { .. }));
    }

    #[test]
    fn lagrangian_examples() {
        let cfg = TodaConfig::open(1);
        let v = bt_lagrangian(&[0.0], &[2f64.ln()], lam(1.0), &cfg).unwrap();
        assert!((v - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert_eq!(bt_lagrangian(&[0.4], &[0.4], lam(0.7), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn el_residual_single_site() {
        let cfg = TodaConfig::open(1);
        let s = st(&[0.2], &[0.8]);
        let r = bt_forward(&s, lam(0.6), &cfg).unwrap();
        let (rp, rpt) = discrete_el_residual(&s, &r, lam(0.6), &cfg).unwrap();
        assert!(rp[0].abs() < 1e-15 && rpt[0].abs() < 1e-15);
    }

    #[test]
    fn spectrality_single_site() {
        let cfg = TodaConfig::open(1);
        let (d, r) = spectrality_integral(&[0.0], &[2f64.ln()], &[1.0], lam(1.0), &cfg).unwrap();
        let expected = -1.0 + 2f64.ln();
        assert!((d - expected).abs() < 1e-15);
        assert!((r - expected).abs() < 1e-15);
    }

    #[test]
    fn closure_at_equal_parameters_is_exactly_zero() {
        let cfg = TodaConfig::open(3);
        let s = st(&[0.1, -0.3, 0.2], &[0.2, 0.1, -0.4]);
        let c = closure_constant(&s, lam(0.4), lam(0.4), &cfg).unwrap();
        assert_eq!(c.ell, 0.0);
        assert_eq!(c.ell_reduced, 0.0);
    }

    #[test]
    fn superposition_zero_denominator() {
        let cfg = TodaConfig::open(2);
        let s = st(&[0.1, -0.3], &[0.2, 0.1]);
        let sq = elementary_square(&s, lam(0.4), lam(0.4), &cfg).unwrap();
        let err = superposition_residuals(
            &sq.base.x,
            &sq.tilde.x,
            &sq.hat.x,
            &sq.hat_tilde.x,
            lam(0.4),
            lam(0.4),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, TodaError::ZeroDenominator { .. }));
    }

    #[test]
    fn superposition_rejects_free_quadruple() {
        let cfg = TodaConfig::periodic(3);
        let r = superposition_residuals(
            &[0.0, 0.1, 0.2],
            &[0.3, -0.1, 0.0],
            &[0.5, 0.2, -0.2],
            &[0.1, 0.1, 0.1],
            lam(0.3),
            lam(0.7),
            &cfg,
        )
        .unwrap();
        assert!(r.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn discrete_path_validation() {
        assert!(DiscretePath::new(vec![]).is_err());
        assert!(DiscretePath::new(vec![PathStep::plus(0)]).is_err());
        let cfg = TodaConfig::open(1);
        let path = DiscretePath::new(vec![PathStep::plus(3)]).unwrap();
        assert!(path_action_discrete(&st(&[0.0], &[0.1]), &path, &[lam(0.3)], &cfg).is_err());
    }

    #[test]
    fn single_site_symplectic_shear() {
        let cfg = TodaConfig::open(1);
        let d = symplecticity_defect(&st(&[0.3], &[0.4]), lam(0.5), &cfg, 1e-5).unwrap();
        assert!(d <= 1e-8, "{d}");
    }
}
