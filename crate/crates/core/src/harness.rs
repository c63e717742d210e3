//! Experiment drivers behind the command-line front end: the invariant suite
//! (`verify`), trajectory output (`simulate`) and parameter sweeps (`sweep`).

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backlund::{
    bt_forward, closure_constant, commutation_defect, spectrality_at, symplecticity_defect, BtParam,
};
use crate::continuous::{
    action_along_path, evaluate_multitime, flow, flow_commutator_defect, poisson_bracket, toda_h1, toda_h2,
    HamiltonianSystem, OneForm, PolylinePath, DEFAULT_STEP,
};
use crate::error::{Result, TodaError};
use crate::lattice::{validate_state, Boundary, LatticeState, TodaConfig};
use crate::zero_curvature::{monodromy, monodromy_invariant, product_identity_defect, zero_curvature_defect};

pub const REPORT_VERSION: &str = concat!("toda-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Continuous,
    Backlund,
    Verify,
    Sweep,
}

/// Everything a run needs. Deserialised from the `--config` JSON file; any
/// field left out takes its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub n: usize,
    pub boundary: Boundary,
    pub seed: u64,
    /// Explicit initial state; overrides the seeded draw.
    pub state: Option<LatticeState>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Particle counts visited by `sweep`; empty means `[n]`.
    pub n_grid: Vec<usize>,
    /// Spectral parameters for the zero-curvature check.
    pub mu_grid: Vec<f64>,
    pub step: f64,
    pub h_fd: f64,
    /// Overrides every check tolerance in `verify` when set.
    pub tol: Option<f64>,
    pub tol_newton: f64,
    pub max_newton_iters: usize,
    /// Flow times `(t_a, t_b)` for the commutator and the far corner of the action paths.
    pub times: Vec<f64>,
    /// Multi-time polyline for `simulate` in continuous mode.
    pub path: Vec<Vec<f64>>,
    /// Number of seeded states `verify` samples; samples per path segment in `simulate`.
    pub samples: usize,
    /// Map iterations for spectrality conservation and `simulate` in Bäcklund mode.
    pub iterations: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::Verify,
            n: 4,
            boundary: Boundary::OpenEnd,
            seed: 1,
            state: None,
            lambda: vec![0.3],
            mu: vec![0.7],
            n_grid: Vec::new(),
            mu_grid: vec![0.5, 0.9, 1.3, 2.0, 3.0],
            step: DEFAULT_STEP,
            h_fd: 1e-5,
            tol: None,
            tol_newton: TodaConfig::DEFAULT_TOL_NEWTON,
            max_newton_iters: TodaConfig::DEFAULT_MAX_NEWTON_ITERS,
            times: vec![0.5, 0.5],
            path: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            samples: 5,
            iterations: 100,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| TodaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn toda(&self) -> Result<TodaConfig> {
        TodaConfig::new(self.n, self.boundary)?.with_newton(self.tol_newton, self.max_newton_iters)
    }

    pub fn lambdas(&self) -> Result<Vec<BtParam>> {
        self.lambda.iter().map(|&v| BtParam::new(v)).collect()
    }

    pub fn mus(&self) -> Result<Vec<BtParam>> {
        self.mu.iter().map(|&v| BtParam::new(v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = self.toda()?;
        let bad = |m: &str| Err(TodaError::Config(m.to_string()));
        if self.lambda.is_empty() || self.mu.is_empty() {
            return bad("lambda and mu lists must be nonempty");
        }
        self.lambdas()?;
        self.mus()?;
        if self.mu_grid.is_empty() || self.mu_grid.iter().any(|m| *m == 0.0 || !m.is_finite()) {
            return bad("mu_grid must be nonempty and exclude 0");
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(self.h_fd.is_finite() && self.h_fd > 0.0) {
            return bad("h_fd must be positive");
        }
        if let Some(t) = self.tol {
            if !(t.is_finite() && t >= 0.0) {
                return bad("tol must be a nonnegative number");
            }
        }
        if self.times.len() != 2 {
            return bad("times must hold exactly two entries");
        }
        if self.path.len() < 2 {
            return bad("path must contain at least two vertices");
        }
        PolylinePath::with_default_quadrature(self.path.clone())?;
        if self.path[0].len() != 2 {
            return bad("path vertices must be two-dimensional");
        }
        if self.samples == 0 || self.iterations == 0 {
            return bad("samples and iterations must be positive");
        }
        if self.n_grid.contains(&0) {
            return bad("n_grid entries must be >= 1");
        }
        if let Some(s) = &self.state {
            validate_state(s, &cfg)?;
        }
        Ok(())
    }

    /// The `i`-th initial state: the explicit state if given, otherwise a draw
    /// seeded with `seed + i`.
    pub fn initial_state(&self, n: usize, i: u64) -> LatticeState {
        match &self.state {
            Some(s) if s.n() == n => s.clone(),
            _ => LatticeState::sampled(n, self.boundary, self.seed.wrapping_add(i)),
        }
    }
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub checks: Vec<CheckRecord>,
    pub status: String,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.status == "pass"
    }

    /// Pretty JSON with keys sorted at every level.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report is serialisable");
        let mut s = serde_json::to_string_pretty(&value).expect("value is serialisable");
        s.push('\n');
        s
    }
}

struct Suite<'a> {
    run: &'a RunConfig,
    checks: Vec<CheckRecord>,
}

impl Suite<'_> {
    fn record(&mut self, name: &str, anchor: &str, tolerance: f64, value: Result<f64>) {
        let tolerance = self.run.tol.unwrap_or(tolerance);
        let rec = match value {
            Ok(v) => CheckRecord {
                name: name.into(),
                anchor: anchor.into(),
                value: Some(v),
                tolerance,
                pass: v.is_finite() && v.abs() <= tolerance,
                error: None,
            },
            Err(e) => CheckRecord {
                name: name.into(),
                anchor: anchor.into(),
                value: None,
                tolerance,
                pass: false,
                error: Some(e.to_string()),
            },
        };
        self.checks.push(rec);
    }
}

fn max_over<I>(items: I) -> Result<f64>
where
    I: IntoIterator<Item = Result<f64>>,
{
    let mut m: f64 = 0.0;
    for v in items {
        m = m.max(v?.abs());
    }
    Ok(m)
}

/// Runs the full invariant suite for `run` and collects the results.
pub fn cmd_verify(run: &RunConfig) -> Result<VerificationReport> {
    run.validate()?;
    let cfg = run.toda()?;
    let lambda = run.lambdas()?[0];
    let mu = run.mus()?[0];
    let n = cfg.n;
    let states: Vec<LatticeState> = (0..run.samples as u64).map(|i| run.initial_state(n, i)).collect();
    let sys = HamiltonianSystem::toda(&cfg);
    let form = OneForm::toda(&cfg);
    let discrete_tol = match cfg.boundary {
        Boundary::OpenEnd => 1e-10,
        Boundary::Periodic => (10.0 * cfg.tol_newton).max(1e-10),
    };
    let mut suite = Suite {
        run,
        checks: Vec::new(),
    };

    suite.record(
        "poisson_bracket",
        "{H1, H2} vanishes: the Toda flows are in involution",
        1e-12,
        max_over(states.iter().map(|s| poisson_bracket(&sys, 1, 2, s))),
    );
    let (ta, tb) = (run.times[0], run.times[1]);
    suite.record(
        "flow_commutativity",
        "Hamiltonian flows of H1 and H2 commute",
        1e-9,
        max_over(
            states
                .iter()
                .take(2)
                .map(|s| flow_commutator_defect(&sys, 1, 2, s, ta, tb, run.step)),
        ),
    );
    suite.record(
        "action_path_independence",
        "action of the two-time 1-form is independent of the curve",
        1e-6,
        (|| {
            let s = &states[0];
            let via_first = PolylinePath::with_default_quadrature(vec![vec![0.0, 0.0], vec![ta, 0.0], vec![ta, tb]])?;
            let via_second = PolylinePath::with_default_quadrature(vec![vec![0.0, 0.0], vec![0.0, tb], vec![ta, tb]])?;
            let a = action_along_path(&form, &sys, s, &via_first, run.step)?;
            let b = action_along_path(&form, &sys, s, &via_second, run.step)?;
            Ok(a - b)
        })(),
    );
    suite.record(
        "bt_commutativity",
        "Bäcklund maps F_lambda and F_mu commute",
        discrete_tol,
        max_over(states.iter().map(|s| commutation_defect(s, lambda, mu, &cfg))),
    );
    let closures: Result<Vec<_>> = states.iter().map(|s| closure_constant(s, lambda, mu, &cfg)).collect();
    match closures {
        Ok(cs) => {
            suite.record(
                "closure_constant",
                "discrete Lagrangian 1-form is closed on solutions",
                discrete_tol,
                Ok(cs.iter().map(|c| c.ell.abs()).fold(0.0, f64::max)),
            );
            suite.record(
                "closure_reduced_agreement",
                "closure constant equals its reduced coordinate-sum form",
                discrete_tol,
                Ok(cs.iter().map(|c| (c.ell - c.ell_reduced).abs()).fold(0.0, f64::max)),
            );
        }
        Err(e) => {
            suite.record(
                "closure_constant",
                "discrete Lagrangian 1-form is closed on solutions",
                discrete_tol,
                Err(e.clone()),
            );
            suite.record(
                "closure_reduced_agreement",
                "closure constant equals its reduced coordinate-sum form",
                discrete_tol,
                Err(e),
            );
        }
    }
    suite.record(
        "spectrality_conservation",
        "dLambda/dlambda is a common integral of the Bäcklund family",
        1e-9,
        (|| {
            let mut s = states[0].clone();
            let (d0, r0) = spectrality_at(&s, lambda, &cfg)?;
            let mut drift = (d0 - r0).abs();
            for _ in 0..run.iterations {
                s = bt_forward(&s, mu, &cfg)?.next;
                let (d, r) = spectrality_at(&s, lambda, &cfg)?;
                drift = drift.max((r - r0).abs()).max((d - r).abs());
            }
            Ok(drift)
        })(),
    );
    suite.record(
        "symplecticity",
        "Bäcklund map preserves the canonical symplectic form",
        1e-6,
        max_over(
            states
                .iter()
                .take(2)
                .map(|s| symplecticity_defect(s, lambda, &cfg, run.h_fd)),
        ),
    );
    let grid: Vec<f64> = run.mu_grid.iter().copied().filter(|m| *m != lambda.value()).collect();
    suite.record(
        "zero_curvature",
        "L~_k V_k = V_{k+1} L_k for the Bäcklund map",
        1e-10,
        max_over(
            states
                .iter()
                .flat_map(|s| grid.iter().map(move |&m| (s, m)))
                .map(|(s, m)| zero_curvature_defect(s, lambda, m, &cfg)),
        ),
    );
    let monodromy_anchor = match cfg.boundary {
        Boundary::Periodic => "trace of the monodromy matrix is an integral of the map",
        Boundary::OpenEnd => "(1,1) entry of the monodromy matrix is an integral of the map",
    };
    suite.record(
        "monodromy_invariant",
        monodromy_anchor,
        1e-8,
        (|| {
            let steps = (run.iterations / 2).max(1);
            let mut s = states[0].clone();
            let start: Vec<f64> = grid
                .iter()
                .map(|&m| monodromy_invariant(&s, m, &cfg))
                .collect::<Result<_>>()?;
            let mut drift: f64 = 0.0;
            for _ in 0..steps {
                s = bt_forward(&s, lambda, &cfg)?.next;
                for (&m, v0) in grid.iter().zip(&start) {
                    drift = drift.max((monodromy_invariant(&s, m, &cfg)? - v0).abs());
                }
            }
            Ok(drift)
        })(),
    );
    if cfg.boundary == Boundary::OpenEnd {
        suite.record(
            "product_identity",
            "prod exp(x~_k - x_k) = lambda^N T(lambda)_11",
            1e-10,
            max_over(states.iter().map(|s| product_identity_defect(s, lambda, &cfg))),
        );
    }

    let status = if suite.checks.iter().all(|c| c.pass) {
        "pass"
    } else {
        "fail"
    };
    Ok(VerificationReport {
        version: REPORT_VERSION.to_string(),
        seed: run.seed,
        config: run.clone(),
        checks: suite.checks,
        status: status.to_string(),
    })
}

/// Formats a number with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Outcome of a trajectory run: rows written before an error, if any.
#[derive(Debug)]
pub struct SimulationOutcome {
    pub rows: usize,
    pub error: Option<(usize, TodaError)>,
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |k| format!("{prefix}{k}"))
}

fn write_row<W: Write>(out: &mut W, cells: &[String]) -> std::io::Result<()> {
    writeln!(out, "{}", cells.join(","))
}

fn io_err(e: std::io::Error) -> TodaError {
    TodaError::Config(format!("write failed: {e}"))
}

/// Continuous trajectory along `run.path`: `t1, t2, x_k, p_k, H1, H2` at
/// `run.samples` equal increments per segment (plus the start vertex).
pub fn simulate_continuous<W: Write>(run: &RunConfig, out: &mut W) -> Result<SimulationOutcome> {
    run.validate()?;
    let cfg = run.toda()?;
    let sys = HamiltonianSystem::toda(&cfg);
    let n = cfg.n;
    let mut header = vec!["t1".to_string(), "t2".to_string()];
    header.extend(numbered("x", n));
    header.extend(numbered("p", n));
    header.extend(["H1".to_string(), "H2".to_string()]);
    write_row(out, &header).map_err(io_err)?;

    let emit = |out: &mut W, t: &[f64], s: &LatticeState| -> Result<()> {
        let mut row: Vec<String> = t.iter().map(|v| fmt_num(*v)).collect();
        row.extend(s.x.iter().chain(&s.p).map(|v| fmt_num(*v)));
        row.push(fmt_num(toda_h1(s, &cfg)?));
        row.push(fmt_num(toda_h2(s, &cfg)?));
        write_row(out, &row).map_err(io_err)
    };

    let mut state = evaluate_multitime(&sys, &run.initial_state(n, 0), &run.path[0], run.step);
    let mut rows = 0;
    let mut current = match state {
        Ok(s) => s,
        Err(e) => {
            return Ok(SimulationOutcome {
                rows,
                error: Some((0, e)),
            })
        }
    };
    emit(out, &run.path[0], &current)?;
    rows += 1;
    for seg in run.path.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        for j in 1..=run.samples {
            let frac_prev = (j - 1) as f64 / run.samples as f64;
            let frac = j as f64 / run.samples as f64;
            let t: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai + frac * (bi - ai)).collect();
            state = (|| {
                let mut s = current.clone();
                for alpha in 0..2 {
                    let dt = (b[alpha] - a[alpha]) * (frac - frac_prev);
                    s = flow(&sys, alpha + 1, &s, dt, run.step)?.final_state;
                }
                Ok(s)
            })();
            match state {
                Ok(s) => current = s,
                Err(e) => {
                    out.flush().map_err(io_err)?;
                    return Ok(SimulationOutcome {
                        rows,
                        error: Some((rows, e)),
                    });
                }
            }
            emit(out, &t, &current)?;
            rows += 1;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(SimulationOutcome { rows, error: None })
}

/// Iterates `F_lambda` (`lambda = run.lambda[0]`) and records, per iterate,
/// the edge Lagrangian of the step that produced it, the spectrality integral
/// of `F_mu` (`mu = run.mu[0]`) and the monodromy trace and `(1,1)` entry at `mu`.
pub fn simulate_backlund<W: Write>(run: &RunConfig, out: &mut W) -> Result<SimulationOutcome> {
    run.validate()?;
    let cfg = run.toda()?;
    let lambda = run.lambdas()?[0];
    let mu = run.mus()?[0];
    let n = cfg.n;
    let mut header = vec!["iter".to_string()];
    header.extend(numbered("x", n));
    header.extend(numbered("p", n));
    header.extend(["Lambda", "spectrality", "trace_T", "T11"].map(String::from));
    write_row(out, &header).map_err(io_err)?;

    let row_for = |i: usize, s: &LatticeState, lag: Option<f64>| -> Result<Vec<String>> {
        let (_, integral) = spectrality_at(s, mu, &cfg)?;
        let t = monodromy(s, mu.value())?;
        let mut row = vec![i.to_string()];
        row.extend(s.x.iter().chain(&s.p).map(|v| fmt_num(*v)));
        row.push(lag.map(fmt_num).unwrap_or_default());
        row.extend([integral, t.trace(), t.a11].map(fmt_num));
        Ok(row)
    };

    let mut s = run.initial_state(n, 0);
    let mut rows = 0;
    match row_for(0, &s, None) {
        Ok(r) => write_row(out, &r).map_err(io_err)?,
        Err(e) => {
            return Ok(SimulationOutcome {
                rows,
                error: Some((0, e)),
            })
        }
    }
    rows += 1;
    for i in 1..=run.iterations {
        let step = bt_forward(&s, lambda, &cfg).and_then(|r| {
            let lag = crate::backlund::bt_lagrangian(&s.x, &r.next.x, lambda, &cfg)?;
            let row = row_for(i, &r.next, Some(lag))?;
            Ok((r.next, row))
        });
        match step {
            Ok((next, row)) => {
                write_row(out, &row).map_err(io_err)?;
                s = next;
                rows += 1;
            }
            Err(e) => {
                out.flush().map_err(io_err)?;
                return Ok(SimulationOutcome {
                    rows,
                    error: Some((i, e)),
                });
            }
        }
    }
    out.flush().map_err(io_err)?;
    Ok(SimulationOutcome { rows, error: None })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
    pub status: String,
    pub commutation_defect: Option<f64>,
    pub ell: Option<f64>,
    pub ell_reduced: Option<f64>,
    pub zero_curvature_defect: Option<f64>,
}

fn sweep_cell(run: &RunConfig, n: usize, lambda: BtParam, mu: BtParam) -> Result<SweepRow> {
    let cfg = TodaConfig::new(n, run.boundary)?.with_newton(run.tol_newton, run.max_newton_iters)?;
    let s = run.initial_state(n, 0);
    let blank = SweepRow {
        n,
        lambda: lambda.value(),
        mu: mu.value(),
        status: "branch-invalid".into(),
        commutation_defect: None,
        ell: None,
        ell_reduced: None,
        zero_curvature_defect: None,
    };
    let measured = (|| -> Result<(f64, f64, f64, f64)> {
        let cd = commutation_defect(&s, lambda, mu, &cfg)?;
        let c = closure_constant(&s, lambda, mu, &cfg)?;
        let zc = zero_curvature_defect(&s, lambda, mu.value(), &cfg)?;
        Ok((cd, c.ell, c.ell_reduced, zc))
    })();
    match measured {
        Ok((cd, ell, red, zc)) => Ok(SweepRow {
            status: "ok".into(),
            commutation_defect: Some(cd),
            ell: Some(ell),
            ell_reduced: Some(red),
            zero_curvature_defect: Some(zc),
            ..blank
        }),
        Err(e) if e.is_branch_failure() => Ok(blank),
        Err(e) => Err(e),
    }
}

/// Evaluates every `(N, lambda, mu)` cell of the grid; cells run in parallel
/// and are returned in grid order.
pub fn cmd_sweep(run: &RunConfig) -> Result<Vec<SweepRow>> {
    run.validate()?;
    let ns = if run.n_grid.is_empty() {
        vec![run.n]
    } else {
        run.n_grid.clone()
    };
    let lambdas = run.lambdas()?;
    let mus = run.mus()?;
    let cells: Vec<(usize, BtParam, BtParam)> = ns
        .iter()
        .flat_map(|&n| {
            lambdas
                .iter()
                .flat_map(|&l| mus.iter().map(move |&m| (n, l, m)))
                .collect::<Vec<_>>()
        })
        .collect();
    cells.par_iter().map(|&(n, l, m)| sweep_cell(run, n, l, m)).collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: &mut W) -> Result<()> {
    write_row(
        out,
        &[
            "n",
            "lambda",
            "mu",
            "status",
            "commutation_defect",
            "ell",
            "ell_reduced",
            "zero_curvature_defect",
        ]
        .map(String::from),
    )
    .map_err(io_err)?;
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in rows {
        let cells = vec![
            r.n.to_string(),
            fmt_num(r.lambda),
            fmt_num(r.mu),
            r.status.clone(),
            opt(r.commutation_defect),
            opt(r.ell),
            opt(r.ell_reduced),
            opt(r.zero_curvature_defect),
        ];
        write_row(out, &cells).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_lambda_rejected_at_parse() {
        let err = RunConfig::from_json(r#"{"lambda": [0.0]}"#).unwrap_err();
        assert!(matches!(err, TodaError::Config(_)));
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"path": []}"#).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            boundary: Boundary::Periodic,
            lambda: vec![0.2, 0.25],
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn fmt_num_has_seventeen_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
