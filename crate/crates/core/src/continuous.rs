//! Two-time Lagrangian 1-form of the Toda lattice and the commuting
//! Hamiltonian flows it generates.
//!
//! The built-in instance has two times. The pieces that do not depend on Toda
//! specifics ([`HamiltonianSystem`], [`OneForm`], [`construct_one_form`],
//! [`action_along_path`]) accept any number of times.

use std::sync::Arc;

use crate::error::{Result, TodaError};
use crate::lattice::{check_finite, check_len, neighbor_exp, validate_state, Boundary, LatticeState, TodaConfig};
use crate::numerics::{central_gradient, gauss_legendre, try_central_gradient, DEFAULT_FD_STEP};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default number of Gauss–Legendre nodes per polyline segment.
pub const DEFAULT_QUAD_POINTS: usize = 8;

/// `E_k = exp(x_{k+1} - x_k)` for `k = 0..=N`, so that `E_{k-1}` is available at every site.
fn gaps(x: &[f64], boundary: Boundary) -> Vec<f64> {
    (0..=x.len()).map(|k| neighbor_exp(x, x, k, boundary)).collect()
}

#[inline]
fn next(v: &[f64], i: usize) -> f64 {
    v[(i + 1) % v.len()]
}

#[inline]
fn prev(v: &[f64], i: usize) -> f64 {
    v[(i + v.len() - 1) % v.len()]
}

// ---------------------------------------------------------------------------
// Hamiltonians

/// A Hamilton function on `R^{2N}` with gradient.
///
/// The default gradient is a central difference; implementors with closed-form
/// derivatives should override it.
pub trait Hamiltonian: Send + Sync {
    fn value(&self, x: &[f64], p: &[f64]) -> f64;

    /// `(dH/dx, dH/dp)`.
    fn gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        fd_gradient(|x, p| self.value(x, p), x, p, DEFAULT_FD_STEP)
    }
}

fn fd_gradient<F>(f: F, x: &[f64], p: &[f64], h: f64) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let gx = central_gradient(|xs| f(xs, p), x, h);
    let gp = central_gradient(|ps| f(x, ps), p, h);
    (gx, gp)
}

/// `H_1 = 1/2 sum p_k^2 + sum exp(x_{k+1} - x_k)`.
#[derive(Debug, Clone, Copy)]
pub struct TodaH1 {
    pub boundary: Boundary,
}

/// `H_2 = 1/3 sum p_k^3 + sum exp(x_{k+1} - x_k)(p_{k+1} + p_k)`.
#[derive(Debug, Clone, Copy)]
pub struct TodaH2 {
    pub boundary: Boundary,
}

impl Hamiltonian for TodaH1 {
    fn value(&self, x: &[f64], p: &[f64]) -> f64 {
        let e = gaps(x, self.boundary);
        0.5 * p.iter().map(|v| v * v).sum::<f64>() + e[1..].iter().sum::<f64>()
    }

    fn gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let e = gaps(x, self.boundary);
        let gx = (0..x.len()).map(|i| e[i] - e[i + 1]).collect();
        (gx, p.to_vec())
    }
}

impl Hamiltonian for TodaH2 {
    fn value(&self, x: &[f64], p: &[f64]) -> f64 {
        let e = gaps(x, self.boundary);
        let cubic: f64 = p.iter().map(|v| v * v * v).sum::<f64>() / 3.0;
        let coupling: f64 = (0..x.len())
            .filter(|&i| e[i + 1] != 0.0)
            .map(|i| e[i + 1] * (next(p, i) + p[i]))
            .sum();
        cubic + coupling
    }

    fn gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let e = gaps(x, self.boundary);
        let n = x.len();
        let mut gx = vec![0.0; n];
        let mut gp = vec![0.0; n];
        for i in 0..n {
            let (e_here, e_prev) = (e[i + 1], e[i]);
            let right = if e_here != 0.0 {
                e_here * (p[i] + next(p, i))
            } else {
                0.0
            };
            let left = if e_prev != 0.0 {
                e_prev * (prev(p, i) + p[i])
            } else {
                0.0
            };
            gx[i] = left - right;
            gp[i] = p[i] * p[i] + e_here + e_prev;
        }
        (gx, gp)
    }
}

/// Hamiltonian given by a closure, differentiated by central differences.
pub struct FnHamiltonian<F> {
    f: F,
    h_fd: f64,
}

impl<F> FnHamiltonian<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnHamiltonian {
            f,
            h_fd: DEFAULT_FD_STEP,
        }
    }

    pub fn with_step(f: F, h_fd: f64) -> Self {
        FnHamiltonian { f, h_fd }
    }
}

impl<F> Hamiltonian for FnHamiltonian<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    fn value(&self, x: &[f64], p: &[f64]) -> f64 {
        (self.f)(x, p)
    }

    fn gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        fd_gradient(&self.f, x, p, self.h_fd)
    }
}

/// A family of `m` Hamiltonians on a common `2N`-dimensional phase space.
/// Flow indices are 1-based.
#[derive(Clone)]
pub struct HamiltonianSystem {
    n: usize,
    hams: Vec<Arc<dyn Hamiltonian>>,
}

impl std::fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("n", &self.n)
            .field("m", &self.hams.len())
            .finish()
    }
}

impl HamiltonianSystem {
    pub fn new(n: usize, hams: Vec<Arc<dyn Hamiltonian>>) -> Result<Self> {
        if n == 0 || hams.is_empty() {
            return Err(TodaError::Contract(
                "system needs n >= 1 and at least one Hamiltonian".into(),
            ));
        }
        Ok(HamiltonianSystem { n, hams })
    }

    /// The Toda pair `(H_1, H_2)` with analytic gradients.
    pub fn toda(cfg: &TodaConfig) -> Self {
        HamiltonianSystem {
            n: cfg.n,
            hams: vec![
                Arc::new(TodaH1 { boundary: cfg.boundary }),
                Arc::new(TodaH2 { boundary: cfg.boundary }),
            ],
        }
    }

    pub fn m(&self) -> usize {
        self.hams.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn ham(&self, alpha: usize) -> Result<&dyn Hamiltonian> {
        if alpha == 0 || alpha > self.hams.len() {
            return Err(TodaError::Contract(format!(
                "flow index {alpha} out of range 1..={}",
                self.hams.len()
            )));
        }
        Ok(self.hams[alpha - 1].as_ref())
    }

    fn check_state(&self, s: &LatticeState) -> Result<()> {
        check_len("x", &s.x, self.n)?;
        check_len("p", &s.p, self.n)
    }

    pub fn value(&self, alpha: usize, s: &LatticeState) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.ham(alpha)?.value(&s.x, &s.p))
    }

    pub fn gradient(&self, alpha: usize, s: &LatticeState) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(s)?;
        let (gx, gp) = self.ham(alpha)?.gradient(&s.x, &s.p);
        check_finite("dH/dx", &gx)?;
        check_finite("dH/dp", &gp)?;
        Ok((gx, gp))
    }
}

pub fn toda_h1(s: &LatticeState, cfg: &TodaConfig) -> Result<f64> {
    validate_state(s, cfg)?;
    Ok(TodaH1 { boundary: cfg.boundary }.value(&s.x, &s.p))
}

pub fn toda_h2(s: &LatticeState, cfg: &TodaConfig) -> Result<f64> {
    validate_state(s, cfg)?;
    Ok(TodaH2 { boundary: cfg.boundary }.value(&s.x, &s.p))
}

/// `(dH_alpha/dp, -dH_alpha/dx)` at `s`.
pub fn hamiltonian_vector_field(
    sys: &HamiltonianSystem,
    alpha: usize,
    s: &LatticeState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (gx, gp) = sys.gradient(alpha, s)?;
    Ok((gp, gx.into_iter().map(|v| -v).collect()))
}

/// `{H_alpha, H_beta} = sum dH_alpha/dx dH_beta/dp - dH_alpha/dp dH_beta/dx`.
pub fn poisson_bracket(sys: &HamiltonianSystem, alpha: usize, beta: usize, s: &LatticeState) -> Result<f64> {
    let (ax, ap) = sys.gradient(alpha, s)?;
    let (bx, bp) = sys.gradient(beta, s)?;
    Ok((0..ax.len()).map(|k| ax[k] * bp[k] - ap[k] * bx[k]).sum())
}

// ---------------------------------------------------------------------------
// Flows

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub final_state: LatticeState,
    pub steps_taken: usize,
    pub step_size: f64,
}

/// Integrates the flow of `H_alpha` for time `t` with classical RK4 over
/// `ceil(|t| / step)` equal substeps. Negative `t` integrates backwards.
pub fn flow(sys: &HamiltonianSystem, alpha: usize, s: &LatticeState, t: f64, step: f64) -> Result<FlowResult> {
    if !(step.is_finite() && step > 0.0) {
        return Err(TodaError::Contract(format!("step must be positive, got {step}")));
    }
    if !t.is_finite() {
        return Err(TodaError::Contract("flow time must be finite".into()));
    }
    sys.check_state(s)?;
    sys.ham(alpha)?;
    if t == 0.0 {
        return Ok(FlowResult {
            final_state: s.clone(),
            steps_taken: 0,
            step_size: 0.0,
        });
    }
    let steps = (t.abs() / step).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let n = s.n();
    let mut y = s.to_flat();
    let field = |y: &[f64]| -> Result<Vec<f64>> {
        let st = LatticeState::from_flat(y);
        let (dx, dp) = hamiltonian_vector_field(sys, alpha, &st)?;
        let mut out = dx;
        out.extend(dp);
        Ok(out)
    };
    let axpy = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for substep in 1..=steps {
        let diverged = |_| TodaError::Divergence { substep };
        let k1 = field(&y).map_err(diverged)?;
        let k2 = field(&axpy(&y, &k1, 0.5 * h)).map_err(diverged)?;
        let k3 = field(&axpy(&y, &k2, 0.5 * h)).map_err(diverged)?;
        let k4 = field(&axpy(&y, &k3, h)).map_err(diverged)?;
        for i in 0..2 * n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TodaError::Divergence { substep });
        }
    }
    Ok(FlowResult {
        final_state: LatticeState::from_flat(&y),
        steps_taken: steps,
        step_size: h.abs(),
    })
}

/// Max-norm of `Phi_alpha^{t_a} Phi_beta^{t_b} s - Phi_beta^{t_b} Phi_alpha^{t_a} s`.
pub fn flow_commutator_defect(
    sys: &HamiltonianSystem,
    alpha: usize,
    beta: usize,
    s: &LatticeState,
    t_a: f64,
    t_b: f64,
    step: f64,
) -> Result<f64> {
    if alpha == beta {
        return Err(TodaError::Contract("commutator needs two distinct flows".into()));
    }
    let ab = flow(sys, alpha, &flow(sys, beta, s, t_b, step)?.final_state, t_a, step)?.final_state;
    let ba = flow(sys, beta, &flow(sys, alpha, s, t_a, step)?.final_state, t_b, step)?.final_state;
    Ok(ab.max_diff(&ba))
}

/// State at multi-time `t`, applying the flows in ascending index order
/// (flow 1 first).
pub fn evaluate_multitime(sys: &HamiltonianSystem, s0: &LatticeState, t: &[f64], step: f64) -> Result<LatticeState> {
    evaluate_multitime_ordered(sys, s0, t, step, false)
}

/// Same as [`evaluate_multitime`] but optionally applying the flows in descending order.
pub fn evaluate_multitime_ordered(
    sys: &HamiltonianSystem,
    s0: &LatticeState,
    t: &[f64],
    step: f64,
    reversed: bool,
) -> Result<LatticeState> {
    if t.len() != sys.m() {
        return Err(TodaError::LengthMismatch {
            what: "multi-time point",
            got: t.len(),
            expected: sys.m(),
        });
    }
    let mut order: Vec<usize> = (1..=sys.m()).collect();
    if reversed {
        order.reverse();
    }
    let mut s = s0.clone();
    for alpha in order {
        s = flow(sys, alpha, &s, t[alpha - 1], step)?.final_state;
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// Jets and Lagrangian 1-forms

/// First jet `(x, v_1, v_2)` for the two-time Toda form.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub x: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl Jet2 {
    pub fn new(x: Vec<f64>, v1: Vec<f64>, v2: Vec<f64>) -> Result<Self> {
        let j = Jet2 { x, v1, v2 };
        j.check()?;
        Ok(j)
    }

    fn check(&self) -> Result<()> {
        let n = self.x.len();
        if n == 0 {
            return Err(TodaError::LengthMismatch {
                what: "x",
                got: 0,
                expected: 1,
            });
        }
        check_len("v1", &self.v1, n)?;
        check_len("v2", &self.v2, n)?;
        check_finite("x", &self.x)?;
        check_finite("v1", &self.v1)?;
        check_finite("v2", &self.v2)
    }
}

/// Jet `(x, v_1, ..., v_m)` for an `m`-time form.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub x: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

impl From<Jet2> for Jet {
    fn from(j: Jet2) -> Self {
        Jet {
            x: j.x,
            v: vec![j.v1, j.v2],
        }
    }
}

impl Jet {
    fn velocity(&self, beta: usize) -> Result<&[f64]> {
        if beta == 0 || beta > self.v.len() {
            return Err(TodaError::Contract(format!(
                "velocity index {beta} out of range 1..={}",
                self.v.len()
            )));
        }
        Ok(&self.v[beta - 1])
    }

    fn with_x(&self, x: &[f64]) -> Jet {
        Jet {
            x: x.to_vec(),
            v: self.v.clone(),
        }
    }

    fn with_velocity(&self, beta: usize, vb: &[f64]) -> Jet {
        let mut j = self.clone();
        j.v[beta - 1] = vb.to_vec();
        j
    }
}

/// One component `L_alpha` of a Lagrangian 1-form.
///
/// Partial derivatives default to central differences.
pub trait FormComponent: Send + Sync {
    fn value(&self, jet: &Jet) -> Result<f64>;

    fn grad_x(&self, jet: &Jet) -> Result<Vec<f64>> {
        try_central_gradient(|x| self.value(&jet.with_x(x)), &jet.x, DEFAULT_FD_STEP)
    }

    /// `dL_alpha / dv_beta`, `beta` 1-based.
    fn grad_v(&self, jet: &Jet, beta: usize) -> Result<Vec<f64>> {
        let vb = jet.velocity(beta)?;
        try_central_gradient(|v| self.value(&jet.with_velocity(beta, v)), vb, DEFAULT_FD_STEP)
    }
}

/// `L = sum_alpha L_alpha dt_alpha`.
#[derive(Clone)]
pub struct OneForm {
    components: Vec<Arc<dyn FormComponent>>,
}

impl std::fmt::Debug for OneForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OneForm").field("m", &self.components.len()).finish()
    }
}

impl OneForm {
    pub fn new(components: Vec<Arc<dyn FormComponent>>) -> Result<Self> {
        if components.is_empty() {
            return Err(TodaError::Contract("1-form needs at least one component".into()));
        }
        Ok(OneForm { components })
    }

    /// The two-time Toda form with analytic partials.
    pub fn toda(cfg: &TodaConfig) -> Self {
        OneForm {
            components: vec![
                Arc::new(TodaL1 { boundary: cfg.boundary }),
                Arc::new(TodaL2 { boundary: cfg.boundary }),
            ],
        }
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, alpha: usize) -> Result<&dyn FormComponent> {
        if alpha == 0 || alpha > self.components.len() {
            return Err(TodaError::Contract(format!(
                "form component {alpha} out of range 1..={}",
                self.components.len()
            )));
        }
        Ok(self.components[alpha - 1].as_ref())
    }

    pub fn value(&self, alpha: usize, jet: &Jet) -> Result<f64> {
        self.component(alpha)?.value(jet)
    }
}

/// `L_1 = 1/2 sum v1_k^2 - sum exp(x_{k+1} - x_k)`.
#[derive(Debug, Clone, Copy)]
pub struct TodaL1 {
    pub boundary: Boundary,
}

/// `L_2 = sum v1_k v2_k - 1/3 sum v1_k^3 - sum exp(x_{k+1} - x_k)(v1_k + v1_{k+1})`.
#[derive(Debug, Clone, Copy)]
pub struct TodaL2 {
    pub boundary: Boundary,
}

fn toda_l1_raw(x: &[f64], v1: &[f64], boundary: Boundary) -> f64 {
    let e = gaps(x, boundary);
    0.5 * v1.iter().map(|v| v * v).sum::<f64>() - e[1..].iter().sum::<f64>()
}

fn toda_l2_raw(x: &[f64], v1: &[f64], v2: &[f64], boundary: Boundary) -> f64 {
    let e = gaps(x, boundary);
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += v1[i] * v2[i] - v1[i].powi(3) / 3.0;
        if e[i + 1] != 0.0 {
            acc -= e[i + 1] * (v1[i] + next(v1, i));
        }
    }
    acc
}

fn two_velocities(jet: &Jet) -> Result<(&[f64], &[f64])> {
    Ok((jet.velocity(1)?, jet.velocity(2)?))
}

impl FormComponent for TodaL1 {
    fn value(&self, jet: &Jet) -> Result<f64> {
        Ok(toda_l1_raw(&jet.x, jet.velocity(1)?, self.boundary))
    }

    fn grad_x(&self, jet: &Jet) -> Result<Vec<f64>> {
        let e = gaps(&jet.x, self.boundary);
        Ok((0..jet.x.len()).map(|i| e[i + 1] - e[i]).collect())
    }

    fn grad_v(&self, jet: &Jet, beta: usize) -> Result<Vec<f64>> {
        let vb = jet.velocity(beta)?;
        Ok(if beta == 1 { vb.to_vec() } else { vec![0.0; vb.len()] })
    }
}

impl FormComponent for TodaL2 {
    fn value(&self, jet: &Jet) -> Result<f64> {
        let (v1, v2) = two_velocities(jet)?;
        Ok(toda_l2_raw(&jet.x, v1, v2, self.boundary))
    }

    fn grad_x(&self, jet: &Jet) -> Result<Vec<f64>> {
        let v1 = jet.velocity(1)?;
        let e = gaps(&jet.x, self.boundary);
        Ok((0..jet.x.len())
            .map(|i| {
                let right = if e[i + 1] != 0.0 {
                    e[i + 1] * (v1[i] + next(v1, i))
                } else {
                    0.0
                };
                let left = if e[i] != 0.0 { e[i] * (prev(v1, i) + v1[i]) } else { 0.0 };
                right - left
            })
            .collect())
    }

    fn grad_v(&self, jet: &Jet, beta: usize) -> Result<Vec<f64>> {
        let (v1, v2) = two_velocities(jet)?;
        match beta {
            1 => {
                let e = gaps(&jet.x, self.boundary);
                Ok((0..v1.len()).map(|i| v2[i] - v1[i] * v1[i] - e[i + 1] - e[i]).collect())
            }
            2 => Ok(v1.to_vec()),
            _ => Ok(vec![0.0; jet.velocity(beta)?.len()]),
        }
    }
}

fn check_jet(j: &Jet2, cfg: &TodaConfig) -> Result<()> {
    j.check()?;
    check_len("x", &j.x, cfg.n)
}

pub fn toda_l1(j: &Jet2, cfg: &TodaConfig) -> Result<f64> {
    check_jet(j, cfg)?;
    Ok(toda_l1_raw(&j.x, &j.v1, cfg.boundary))
}

pub fn toda_l2(j: &Jet2, cfg: &TodaConfig) -> Result<f64> {
    check_jet(j, cfg)?;
    Ok(toda_l2_raw(&j.x, &j.v1, &j.v2, cfg.boundary))
}

/// Residuals of the algebraic multi-time Euler–Lagrange conditions.
///
/// `r_offdiag = dL_2/dv_1`, which vanishes iff
/// `v2_k = v1_k^2 + exp(x_{k+1} - x_k) + exp(x_k - x_{k-1})`;
/// `r_diag = dL_1/dv_1 - dL_2/dv_2`, identically zero for Toda.
pub fn el_algebraic_residuals(j: &Jet2, cfg: &TodaConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    check_jet(j, cfg)?;
    let jet: Jet = j.clone().into();
    let l1 = TodaL1 { boundary: cfg.boundary };
    let l2 = TodaL2 { boundary: cfg.boundary };
    let offdiag = l2.grad_v(&jet, 1)?;
    let diag = l1
        .grad_v(&jet, 1)?
        .iter()
        .zip(l2.grad_v(&jet, 2)?)
        .map(|(a, b)| a - b)
        .collect();
    Ok((offdiag, diag))
}

/// Jet on the solution sheet: `x` from the state, `v_alpha = dH_alpha/dp`.
pub fn hamiltonian_jet(sys: &HamiltonianSystem, s: &LatticeState) -> Result<Jet> {
    let v = (1..=sys.m())
        .map(|alpha| sys.gradient(alpha, s).map(|(_, gp)| gp))
        .collect::<Result<Vec<_>>>()?;
    Ok(Jet { x: s.x.clone(), v })
}

// ---------------------------------------------------------------------------
// Actions along curves

/// Piecewise-linear curve in multi-time.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylinePath {
    vertices: Vec<Vec<f64>>,
    quad_points_per_segment: usize,
}

impl PolylinePath {
    pub fn new(vertices: Vec<Vec<f64>>, quad_points_per_segment: usize) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(TodaError::Contract("a path needs at least two vertices".into()));
        }
        if quad_points_per_segment == 0 {
            return Err(TodaError::Contract("quad_points_per_segment must be >= 1".into()));
        }
        let dim = vertices[0].len();
        if dim == 0 {
            return Err(TodaError::Contract("path vertices must have positive dimension".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            check_len("path vertex", v, dim)?;
            check_finite("path vertex", v)?;
            if i > 0 && vertices[i - 1] == *v {
                return Err(TodaError::Contract(format!(
                    "consecutive vertices {i} and {} coincide",
                    i + 1
                )));
            }
        }
        Ok(PolylinePath {
            vertices,
            quad_points_per_segment,
        })
    }

    pub fn with_default_quadrature(vertices: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vertices, DEFAULT_QUAD_POINTS)
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn quad_points_per_segment(&self) -> usize {
        self.quad_points_per_segment
    }
}

/// `S = int_path sum_alpha L_alpha dt_alpha` on the solution through `s0`
/// (multi-time origin), by Gauss–Legendre quadrature on each segment.
pub fn action_along_path(
    form: &OneForm,
    sys: &HamiltonianSystem,
    s0: &LatticeState,
    path: &PolylinePath,
    step: f64,
) -> Result<f64> {
    let m = form.m();
    if path.dim() != m || sys.m() != m {
        return Err(TodaError::Contract(format!(
            "dimension mismatch: path {}, form {}, system {}",
            path.dim(),
            m,
            sys.m()
        )));
    }
    let (nodes, weights) = gauss_legendre(path.quad_points_per_segment);
    let mut total = 0.0;
    for seg in path.vertices.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let dt: Vec<f64> = b.iter().zip(a).map(|(bi, ai)| bi - ai).collect();
        let mut seg_sum = 0.0;
        for (z, w) in nodes.iter().zip(&weights) {
            let s = 0.5 * (z + 1.0);
            let t: Vec<f64> = a.iter().zip(&dt).map(|(ai, di)| ai + s * di).collect();
            let state = evaluate_multitime(sys, s0, &t, step)?;
            let jet = hamiltonian_jet(sys, &state)?;
            let mut integrand = 0.0;
            for (alpha, d) in dt.iter().enumerate() {
                if *d != 0.0 {
                    integrand += form.value(alpha + 1, &jet)? * d;
                }
            }
            seg_sum += 0.5 * w * integrand;
        }
        total += seg_sum;
    }
    Ok(total)
}

/// Central-difference estimate of `d/dt_alpha L_beta - d/dt_beta L_alpha`
/// at multi-time `t` on the solution through `s0`.
#[allow(clippy::too_many_arguments)]
pub fn closure_defect_pointwise(
    form: &OneForm,
    sys: &HamiltonianSystem,
    s0: &LatticeState,
    t: &[f64],
    alpha: usize,
    beta: usize,
    h_fd: f64,
    step: f64,
) -> Result<f64> {
    if alpha == beta {
        return Err(TodaError::Contract("closure defect needs alpha != beta".into()));
    }
    if !(h_fd.is_finite() && h_fd > 0.0) {
        return Err(TodaError::Contract(format!("h_fd must be positive, got {h_fd}")));
    }
    form.component(alpha)?;
    form.component(beta)?;
    let base = evaluate_multitime(sys, s0, t, step)?;
    let shifted_value = |dir: usize, comp: usize, h: f64| -> Result<f64> {
        let st = flow(sys, dir, &base, h, step)?.final_state;
        form.value(comp, &hamiltonian_jet(sys, &st)?)
    };
    let d_alpha_lbeta = (shifted_value(alpha, beta, h_fd)? - shifted_value(alpha, beta, -h_fd)?) / (2.0 * h_fd);
    let d_beta_lalpha = (shifted_value(beta, alpha, h_fd)? - shifted_value(beta, alpha, -h_fd)?) / (2.0 * h_fd);
    Ok(d_alpha_lbeta - d_beta_lalpha)
}

// ---------------------------------------------------------------------------
// Construction of a 1-form from commuting Hamiltonians

/// Inverse of the first Legendre map: `(x, v_1) -> p`.
pub type LegendreInverse = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;

struct ConstructedComponent {
    sys: HamiltonianSystem,
    alpha: usize,
    inverse: LegendreInverse,
}

impl FormComponent for ConstructedComponent {
    fn value(&self, jet: &Jet) -> Result<f64> {
        let p = (self.inverse)(&jet.x, jet.velocity(1)?)?;
        check_len("p", &p, jet.x.len())?;
        let va = jet.velocity(self.alpha)?;
        let pairing: f64 = p.iter().zip(va).map(|(a, b)| a * b).sum();
        let s = LatticeState { x: jet.x.clone(), p };
        Ok(pairing - self.sys.value(self.alpha, &s)?)
    }
}

/// Builds `L_alpha = <p, v_alpha> - H_alpha(x, p)` with `p = p(x, v_1)`.
pub fn construct_one_form(sys: &HamiltonianSystem, legendre_inverse: LegendreInverse) -> OneForm {
    let components = (1..=sys.m())
        .map(|alpha| {
            Arc::new(ConstructedComponent {
                sys: sys.clone(),
                alpha,
                inverse: legendre_inverse.clone(),
            }) as Arc<dyn FormComponent>
        })
        .collect();
    OneForm { components }
}

/// For Toda `dH_1/dp = p`, so the inverse Legendre map is the identity on velocities.
pub fn toda_legendre_inverse() -> LegendreInverse {
    Arc::new(|_x: &[f64], v1: &[f64]| Ok(v1.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(x: &[f64], p: &[f64]) -> LatticeState {
        LatticeState::new(x.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let per = TodaConfig::periodic(2);
        assert_eq!(toda_h1(&st(&[0.0, 0.0], &[1.0, -1.0]), &per).unwrap(), 3.0);
        assert_eq!(toda_h2(&st(&[0.0, 0.0], &[1.0, -1.0]), &per).unwrap(), 0.0);
        let open = TodaConfig::open(1);
        assert_eq!(toda_h1(&st(&[0.0], &[2.0]), &open).unwrap(), 2.0);
        assert!((toda_h2(&st(&[0.0], &[3.0]), &open).unwrap() - 9.0).abs() < 1e-14);
    }

    #[test]
    fn lagrangian_examples() {
        let open = TodaConfig::open(1);
        let per = TodaConfig::periodic(2);
        let j = Jet2::new(vec![0.0], vec![1.0], vec![1.0]).unwrap();
        assert_eq!(toda_l1(&j, &open).unwrap(), 0.5);
        assert!((toda_l2(&j, &open).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let z = Jet2::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(toda_l1(&z, &per).unwrap(), -2.0);
        assert_eq!(toda_l2(&z, &per).unwrap(), 0.0);
    }

    #[test]
    fn el_residual_examples() {
        let open = TodaConfig::open(1);
        let j = Jet2::new(vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let (off, diag) = el_algebraic_residuals(&j, &open).unwrap();
        assert_eq!(off, vec![0.0]);
        assert_eq!(diag, vec![0.0]);
        let eps = 1e-3;
        let j = Jet2::new(vec![0.0], vec![1.0], vec![1.0 + eps]).unwrap();
        let (off, _) = el_algebraic_residuals(&j, &open).unwrap();
        assert!((off[0] - eps).abs() < 1e-15);
    }

    #[test]
    fn vector_field_examples() {
        let open = TodaConfig::open(1);
        let sys = HamiltonianSystem::toda(&open);
        let s = st(&[0.0], &[1.0]);
        assert_eq!(hamiltonian_vector_field(&sys, 1, &s).unwrap(), (vec![1.0], vec![-0.0]));
        let (dx, dp) = hamiltonian_vector_field(&sys, 2, &s).unwrap();
        assert_eq!((dx[0], dp[0].abs()), (1.0, 0.0));
        let per = TodaConfig::periodic(2);
        let sys = HamiltonianSystem::toda(&per);
        let (dx, dp) = hamiltonian_vector_field(&sys, 1, &st(&[0.0, 0.0], &[0.0, 0.0])).unwrap();
        assert!(dx.iter().chain(&dp).all(|v| *v == 0.0));
        assert!(hamiltonian_vector_field(&sys, 3, &st(&[0.0, 0.0], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn flow_free_particle() {
        let open = TodaConfig::open(1);
        let sys = HamiltonianSystem::toda(&open);
        let s = st(&[0.0], &[1.0]);
        let r = flow(&sys, 1, &s, 1.0, DEFAULT_STEP).unwrap();
        assert_eq!(r.steps_taken, 1000);
        assert!((r.final_state.x[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.final_state.p[0], 1.0);
        let r = flow(&sys, 2, &s, 2.0, DEFAULT_STEP).unwrap();
        assert!((r.final_state.x[0] - 2.0).abs() < 1e-12);
        let r = flow(&sys, 1, &s, 0.0, DEFAULT_STEP).unwrap();
        assert_eq!(r.steps_taken, 0);
        assert_eq!(r.final_state, s);
        assert!(flow(&sys, 1, &s, 1.0, 0.0).is_err());
    }

    #[test]
    fn flow_reports_divergence() {
        let blowup = FnHamiltonian::new(|_x: &[f64], p: &[f64]| -p[0].powi(4) * 1e300);
        let sys = HamiltonianSystem::new(1, vec![Arc::new(blowup)]).unwrap();
        let err = flow(&sys, 1, &st(&[0.0], &[1e10]), 1.0, 0.5).unwrap_err();
        assert!(matches!(err, TodaError::Divergence { substep: 1 }));
    }

    #[test]
    fn multitime_free_particle() {
        let open = TodaConfig::open(1);
        let sys = HamiltonianSystem::toda(&open);
        let s = st(&[0.0], &[1.0]);
        let r = evaluate_multitime(&sys, &s, &[1.0, 2.0], DEFAULT_STEP).unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-12);
        assert_eq!(r.p[0], 1.0);
        assert_eq!(evaluate_multitime(&sys, &s, &[0.0, 0.0], DEFAULT_STEP).unwrap(), s);
        assert!(evaluate_multitime(&sys, &s, &[1.0], DEFAULT_STEP).is_err());
    }

    #[test]
    fn action_free_particle() {
        let open = TodaConfig::open(1);
        let sys = HamiltonianSystem::toda(&open);
        let form = OneForm::toda(&open);
        let s = st(&[0.0], &[1.0]);
        let path = PolylinePath::with_default_quadrature(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let a = action_along_path(&form, &sys, &s, &path, DEFAULT_STEP).unwrap();
        assert!((a - 7.0 / 6.0).abs() < 1e-10, "{a}");
        let straight = PolylinePath::with_default_quadrature(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let split =
            PolylinePath::with_default_quadrature(vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![2.0, 0.0]]).unwrap();
        let a1 = action_along_path(&form, &sys, &s, &straight, DEFAULT_STEP).unwrap();
        let a2 = action_along_path(&form, &sys, &s, &split, DEFAULT_STEP).unwrap();
        assert!((a1 - a2).abs() < 1e-12);
    }

    #[test]
    fn polyline_validation() {
        assert!(PolylinePath::new(vec![vec![0.0, 0.0]], 4).is_err());
        assert!(PolylinePath::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], 4).is_err());
        assert!(PolylinePath::new(vec![vec![0.0, 0.0], vec![1.0]], 4).is_err());
        assert!(PolylinePath::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], 0).is_err());
    }

    #[test]
    fn closure_rejects_equal_indices() {
        let open = TodaConfig::open(1);
        let sys = HamiltonianSystem::toda(&open);
        let form = OneForm::toda(&open);
        let s = st(&[0.0], &[1.0]);
        assert!(closure_defect_pointwise(&form, &sys, &s, &[0.3, 0.7], 1, 1, 1e-4, DEFAULT_STEP).is_err());
        let d = closure_defect_pointwise(&form, &sys, &s, &[0.3, 0.7], 1, 2, 1e-4, DEFAULT_STEP).unwrap();
        assert!(d.abs() < 1e-6);
    }

    #[test]
    fn constructed_single_time_form() {
        let h = FnHamiltonian::new(|_x: &[f64], p: &[f64]| 0.5 * p[0] * p[0]);
        let sys = HamiltonianSystem::new(1, vec![Arc::new(h)]).unwrap();
        let form = construct_one_form(&sys, Arc::new(|_x: &[f64], v: &[f64]| Ok(v.to_vec())));
        let jet = Jet {
            x: vec![0.3],
            v: vec![vec![1.7]],
        };
        assert!((form.value(1, &jet).unwrap() - 0.5 * 1.7 * 1.7).abs() < 1e-14);
    }

    #[test]
    fn poisson_bracket_control_pair() {
        let h = FnHamiltonian::new(|_x: &[f64], p: &[f64]| 0.5 * p[0] * p[0]);
        let k = FnHamiltonian::new(|x: &[f64], _p: &[f64]| 0.5 * x[0] * x[0]);
        let sys = HamiltonianSystem::new(1, vec![Arc::new(h), Arc::new(k)]).unwrap();
        let s = st(&[1.0], &[1.0]);
        assert!((poisson_bracket(&sys, 1, 2, &s).unwrap() + 1.0).abs() < 1e-9);
        assert_eq!(poisson_bracket(&sys, 1, 1, &s).unwrap(), 0.0);
    }
}
