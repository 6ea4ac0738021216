//! Discrete solution procedures.
//!
//! - [`solve_coercive`]: the Dirichlet-eliminated linear solve for the
//!   shifted form `a_lambda`, `lambda >= lambda0`.
//! - [`solve_penalized`]: semismooth Newton on
//!   `a_lambda(u, v) - (1/eps)((psi - u)^+, v) = (f, v)`.
//! - [`solve_vi_coercive`]: continuation over a decreasing epsilon sequence
//!   with warm starts, finished by a primal-dual active-set polish so the
//!   final iterate solves the discrete complementarity problem to linear
//!   solver accuracy.
//! - [`solve_noncoercive_equation`] / [`solve_vi_noncoercive`]: the
//!   increasing and decreasing source-shift iterations
//!   `a(u_n, .) + lambda((1+y)u_n, .) = (f + lambda(1+y)u_{n-1}, .)`,
//!   valid for `r > 0`, with monotonicity ledgers.
//! - [`lcp_psor`]: projected successive over-relaxation on
//!   `min(A_lambda u - M f, u - psi) = 0`, the independent oracle.

use crate::assembly::DiscreteForm;
use crate::envelopes::EnvelopePair;
use crate::field::Field2;
use crate::grid::{norm_h2w, trace_levels, weighted_l2, GridFunction};
use crate::linalg::{norm2, Csr, LinearSolveError, SystemSolver};
use crate::operator::apply_a;
use crate::scalar::Real;
use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear solve failed: {0}")]
    Linear(#[from] LinearSolveError),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Nonconvergence {
        iterations: usize,
        residual: f64,
        partial: Option<Box<SolveReport>>,
    },
    #[error("lambda = {lambda} is below the coercivity threshold lambda0 = {lambda0}")]
    LambdaTooSmall { lambda: f64, lambda0: f64 },
    #[error("the monotone iterations require r > 0")]
    RequiresPositiveRate,
    #[error("obstacle exceeds boundary data on Gamma_1 by {0:.3e}")]
    ObstacleAboveData(f64),
    #[error("penalty epsilon sequence must be positive and strictly decreasing")]
    BadEpsSequence,
    #[error("envelope admissibility failed upfront (worst violation {0:.3e})")]
    EnvelopeInadmissible(f64),
    #[error("relaxation factor omega = {0} outside (0, 2)")]
    BadOmega(f64),
}

/// Continuation/penalty configuration.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    /// Strictly decreasing positive sequence.
    pub eps_sequence: Vec<f64>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Coercivity shift; `None` picks `lambda0`.
    pub lambda: Option<f64>,
    pub linear_tol: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            eps_sequence: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            newton_tol: 1e-11,
            newton_max_iter: 60,
            lambda: None,
            linear_tol: 1e-12,
        }
    }
}

impl PenaltyConfig {
    fn validate(&self, form: &DiscreteForm) -> Result<f64, SolverError> {
        if self.eps_sequence.is_empty()
            || self.eps_sequence.iter().any(|&e| !(e > 0.0))
            || self.eps_sequence.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(SolverError::BadEpsSequence);
        }
        resolve_lambda(form, self.lambda)
    }
}

fn resolve_lambda(form: &DiscreteForm, lambda: Option<f64>) -> Result<f64, SolverError> {
    let lambda0 = form.consts.lambda0;
    let lambda = lambda.unwrap_or(lambda0);
    if lambda < lambda0 * (1.0 - 1e-12) {
        return Err(SolverError::LambdaTooSmall { lambda, lambda0 });
    }
    Ok(lambda)
}

/// Per-epsilon record of the continuation.
#[derive(Debug, Clone)]
pub struct EpsRecord {
    pub eps: f64,
    /// `||(psi - u_eps)^+||_{L^2(w)}`.
    pub penalty_norm_h: f64,
    /// `||(psi - u_eps)^+||_V`.
    pub penalty_norm_v: f64,
    pub newton_iterations: usize,
    /// `||u_eps - u_prev||_V`.
    pub v_increment: f64,
    pub solution: Vec<f64>,
}

/// Ledger of the monotone outer iterations.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonotonicityLedger {
    /// Most negative nodal increase `min(u_n - u_{n-1})` seen (increasing
    /// iteration); zero or positive means perfectly monotone.
    pub worst_increase_violation: f64,
    /// Largest nodal increase seen in the decreasing iteration.
    pub worst_decrease_violation: f64,
    pub outer_iterations: usize,
}

/// Raw weighted-norm quantities of the second-order a priori estimate,
/// reported as numbers only.
#[derive(Debug, Clone, Copy, Default)]
pub struct H2Diagnostics {
    pub u_h2: f64,
    pub f_weighted_l2: f64,
    pub psi_weighted_h2: f64,
    pub u_weighted_l2: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub iterations: usize,
    pub linear_residual: f64,
    /// Max over free nodes of `|min((A u - f)_i / m_i, (u - psi)_i)|`
    /// (mass-scaled); for plain equations the first slot alone.
    pub complementarity_residual: f64,
    /// `||(psi - u)^+||_{L^2(w)}`.
    pub penalty_norm: f64,
    /// Worst envelope violation `max(m - u, u - M)` when envelopes given.
    pub envelope_violation: f64,
    /// `(y level, weighted Neumann trace)` diagnostics.
    pub trace_levels: Vec<(f64, f64)>,
    pub eps_history: Vec<EpsRecord>,
    pub ledger: Option<MonotonicityLedger>,
    pub h2: H2Diagnostics,
    pub converged: bool,
}

fn empty_report(solution: GridFunction) -> SolveReport {
    SolveReport {
        solution,
        iterations: 0,
        linear_residual: f64::NAN,
        complementarity_residual: f64::NAN,
        penalty_norm: 0.0,
        envelope_violation: 0.0,
        trace_levels: Vec::new(),
        eps_history: Vec::new(),
        ledger: None,
        h2: H2Diagnostics::default(),
        converged: false,
    }
}

/// Dirichlet elimination: identity rows at fixed nodes, fixed columns moved
/// to the right-hand side.
fn constrain(a: &Csr, fixed: &[bool], fixed_vals: &[f64], rhs: &[f64]) -> (Csr, Vec<f64>) {
    let n = a.n;
    let mut trip = Vec::with_capacity(a.nnz());
    let mut out_rhs = rhs.to_vec();
    for r in 0..n {
        if fixed[r] {
            trip.push((r, r, 1.0));
            out_rhs[r] = fixed_vals[r];
            continue;
        }
        for k in a.indptr[r]..a.indptr[r + 1] {
            let c = a.indices[k];
            if fixed[c] {
                out_rhs[r] -= a.data[k] * fixed_vals[c];
            } else {
                trip.push((r, c, a.data[k]));
            }
        }
    }
    (Csr::from_triplets(n, &mut trip), out_rhs)
}

/// Raw Dirichlet-eliminated linear solve of `(a + lambda (1+y)) u = M f`,
/// `u = g` on Gamma_1, for any `lambda >= 0`. Used by [`solve_coercive`]
/// (which enforces `lambda >= lambda0`) and by the manufactured-solution
/// studies at `lambda = 0`.
pub fn solve_linear_system(
    form: &DiscreteForm,
    lambda: f64,
    f: &GridFunction,
    g: &GridFunction,
    linear_tol: f64,
) -> Result<SolveReport, SolverError> {
    let alam = if lambda != 0.0 { form.matrix_a_lambda(lambda) } else { form.matrix_a.clone() };
    let rhs = form.mass_rhs.matvec_alloc(f.values());
    let (mat, rhs) = constrain(&alam, &form.dirichlet, g.values(), &rhs);
    let mut solver = SystemSolver::new(mat, linear_tol)?;
    let (x, res) = solver.solve(&rhs, None)?;
    let solution = GridFunction::from_values(form.grid.clone(), x);
    let mut rep = empty_report(solution);
    rep.linear_residual = res;
    rep.iterations = 1;
    rep.converged = true;
    Ok(rep)
}

/// Coercive linear solve (`lambda >= lambda0`).
pub fn solve_coercive(
    form: &DiscreteForm,
    lambda: f64,
    f: &GridFunction,
    g: &GridFunction,
) -> Result<SolveReport, SolverError> {
    let lambda = resolve_lambda(form, Some(lambda))?;
    let mut rep = solve_linear_system(form, lambda, f, g, 1e-12)?;
    let shifted: Vec<f64> = {
        let grid = form.grid.clone();
        let mut v = f.values().to_vec();
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let idx = grid.node_index(i, j);
                v[idx] -= lambda * (1.0 + grid.y_nodes[j]) * rep.solution.values()[idx];
            }
        }
        v
    };
    // strong residual of the unshifted operator against the shifted source
    let fshift = GridFunction::from_values(form.grid.clone(), shifted);
    rep.complementarity_residual =
        equation_residual(form, 0.0, rep.solution.values(), fshift.values());
    Ok(rep)
}

/// Mass-scaled strong residual `max |(A_lam u - M f)_i / m_i|` on free nodes.
fn equation_residual(form: &DiscreteForm, lambda: f64, u: &[f64], f: &[f64]) -> f64 {
    let alam = if lambda != 0.0 { form.matrix_a_lambda(lambda) } else { form.matrix_a.clone() };
    let au = alam.matvec_alloc(u);
    let mf = form.mass_rhs.matvec_alloc(f);
    let ml = form.mass_rhs.lumped();
    let mut worst: f64 = 0.0;
    for i in 0..u.len() {
        if !form.dirichlet[i] {
            worst = worst.max(((au[i] - mf[i]) / ml[i]).abs());
        }
    }
    worst
}

fn positive_part(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

struct PenalizedOutcome {
    u: Vec<f64>,
    newton_iterations: usize,
    linear_residual: f64,
    residual: f64,
    converged: bool,
}

/// Semismooth Newton for the penalized system with nodal penalty
/// `-(1/eps) M (psi - u)^+`.
#[allow(clippy::too_many_arguments)]
fn penalized_newton(
    form: &DiscreteForm,
    alam: &Csr,
    rhs0: &[f64],
    psi: &[f64],
    g: &[f64],
    eps: f64,
    config: &PenaltyConfig,
    warm: Option<&[f64]>,
) -> Result<PenalizedOutcome, SolverError> {
    let n = form.num_nodes();
    let mut u: Vec<f64> = match warm {
        Some(w) => w.to_vec(),
        None => {
            let mut u = vec![0.0; n];
            for i in 0..n {
                u[i] = if form.dirichlet[i] { g[i] } else { psi[i].max(0.0) };
            }
            u
        }
    };
    for i in 0..n {
        if form.dirichlet[i] {
            u[i] = g[i];
        }
    }
    let scale = norm2(rhs0) + norm2(&form.mass_rhs.matvec_alloc(&positive_part(psi))) / eps + 1e-300;
    let mut last_linear_res = 0.0;

    let residual = |u: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = (psi[i] - u[i]).max(0.0);
        }
        let mw = form.mass_rhs.matvec_alloc(&w);
        let au = alam.matvec_alloc(u);
        let mut r = vec![0.0; n];
        for i in 0..n {
            r[i] = if form.dirichlet[i] { 0.0 } else { au[i] - mw[i] / eps - rhs0[i] };
        }
        r
    };

    let mut res = residual(&u);
    let mut rnorm = norm2(&res);
    for it in 0..config.newton_max_iter {
        if rnorm <= config.newton_tol * scale {
            return Ok(PenalizedOutcome {
                u,
                newton_iterations: it,
                linear_residual: last_linear_res,
                residual: rnorm / scale,
                converged: true,
            });
        }
        let active: Vec<bool> =
            (0..n).map(|i| !form.dirichlet[i] && psi[i] - u[i] > 0.0).collect();
        let jpen = form.mass_rhs.mask_columns(&active);
        let jac = alam.add_scaled(&jpen, 1.0 / eps);
        let minus_res: Vec<f64> = res.iter().map(|&r| -r).collect();
        let zeros = vec![0.0; n];
        let (jc, rc) = constrain(&jac, &form.dirichlet, &zeros, &minus_res);
        let mut solver = SystemSolver::new(jc, config.linear_tol)?;
        let (delta, lres) = solver.solve(&rc, None)?;
        last_linear_res = lres;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect();
            let tres = residual(&trial);
            let tnorm = norm2(&tres);
            if tnorm <= (1.0 - 0.25 * t) * rnorm || tnorm <= config.newton_tol * scale {
                u = trial;
                res = tres;
                rnorm = tnorm;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(PenalizedOutcome {
                u,
                newton_iterations: it + 1,
                linear_residual: last_linear_res,
                residual: rnorm / scale,
                converged: false,
            });
        }
    }
    let converged = rnorm <= config.newton_tol * scale;
    Ok(PenalizedOutcome {
        u,
        newton_iterations: config.newton_max_iter,
        linear_residual: last_linear_res,
        residual: rnorm / scale,
        converged,
    })
}

fn check_obstacle_compat(
    form: &DiscreteForm,
    psi: &[f64],
    g: &[f64],
) -> Result<(), SolverError> {
    let mut worst: f64 = 0.0;
    for i in 0..form.num_nodes() {
        if form.dirichlet[i] {
            worst = worst.max(psi[i] - g[i]);
        }
    }
    if worst > 1e-10 {
        return Err(SolverError::ObstacleAboveData(worst));
    }
    Ok(())
}

/// One penalized solve at fixed `eps`.
pub fn solve_penalized(
    form: &DiscreteForm,
    config: &PenaltyConfig,
    f: &GridFunction,
    psi: &GridFunction,
    g: &GridFunction,
    eps: f64,
) -> Result<SolveReport, SolverError> {
    let lambda = config.validate(form)?;
    check_obstacle_compat(form, psi.values(), g.values())?;
    let alam = form.matrix_a_lambda(lambda);
    let rhs0 = form.mass_rhs.matvec_alloc(f.values());
    let out = penalized_newton(form, &alam, &rhs0, psi.values(), g.values(), eps, config, None)?;
    let solution = GridFunction::from_values(form.grid.clone(), out.u);
    let mut rep = empty_report(solution);
    rep.iterations = out.newton_iterations;
    rep.linear_residual = out.linear_residual;
    rep.converged = out.converged;
    let w = positive_part(
        &psi.values().iter().zip(rep.solution.values()).map(|(p, u)| p - u).collect::<Vec<_>>(),
    );
    rep.penalty_norm = form.matrix_mass.quadratic_form(&w, &w).max(0.0).sqrt();
    if !out.converged {
        let its = rep.iterations;
        let res = out.residual;
        return Err(SolverError::Nonconvergence {
            iterations: its,
            residual: res,
            partial: Some(Box::new(rep)),
        });
    }
    Ok(rep)
}

/// Primal-dual active-set polish: solves the exact discrete complementarity
/// problem `min(A u - rhs, u - psi) = 0` starting from a continuation
/// iterate.
fn active_set_polish(
    form: &DiscreteForm,
    alam: &Csr,
    rhs0: &[f64],
    psi: &[f64],
    g: &[f64],
    start: &[f64],
    linear_tol: f64,
) -> Result<(Vec<f64>, f64, usize), SolverError> {
    let n = form.num_nodes();
    let ml = form.mass_rhs.lumped();
    let mut u = start.to_vec();
    let mut active: Vec<bool> = (0..n)
        .map(|i| !form.dirichlet[i] && psi[i] - u[i] >= -1e-14 * (1.0 + psi[i].abs()))
        .collect();
    let mut last_res = 0.0;
    for it in 0..60 {
        // fix u = psi on the active set, u = g on Gamma_1, solve the rest
        let mut fixed = form.dirichlet.clone();
        let mut vals = g.to_vec();
        for i in 0..n {
            if active[i] {
                fixed[i] = true;
                vals[i] = psi[i];
            }
        }
        let (mat, rhs) = constrain(alam, &fixed, &vals, rhs0);
        let mut solver = SystemSolver::new(mat, linear_tol)?;
        let (x, res) = solver.solve(&rhs, Some(&u))?;
        u = x;
        last_res = res;
        // multipliers and the next active set
        let au = alam.matvec_alloc(&u);
        let mut next = vec![false; n];
        let mut changed = false;
        for i in 0..n {
            if form.dirichlet[i] {
                continue;
            }
            let s_hat = (au[i] - rhs0[i]) / ml[i];
            next[i] = psi[i] - u[i] + 1e-6 * s_hat > 1e-14 * (1.0 + psi[i].abs());
            if next[i] != active[i] {
                changed = true;
            }
        }
        if !changed {
            return Ok((u, last_res, it + 1));
        }
        active = next;
    }
    Err(SolverError::Nonconvergence { iterations: 60, residual: last_res, partial: None })
}

/// Continuation over the epsilon sequence with warm starts, polished to the
/// exact discrete complementarity solution.
pub fn solve_vi_coercive(
    form: &DiscreteForm,
    config: &PenaltyConfig,
    f: &GridFunction,
    psi: &GridFunction,
    g: &GridFunction,
) -> Result<SolveReport, SolverError> {
    let rhs0 = form.mass_rhs.matvec_alloc(f.values());
    solve_vi_coercive_shifted(form, config, &rhs0, f, psi, g)
}

/// Continuation core taking a preassembled right-hand side (the
/// non-coercive outer iteration shifts it).
fn solve_vi_coercive_shifted(
    form: &DiscreteForm,
    config: &PenaltyConfig,
    rhs0: &[f64],
    f_for_residual: &GridFunction,
    psi: &GridFunction,
    g: &GridFunction,
) -> Result<SolveReport, SolverError> {
    let lambda = config.validate(form)?;
    check_obstacle_compat(form, psi.values(), g.values())?;
    let alam = form.matrix_a_lambda(lambda);
    let mut eps_history: Vec<EpsRecord> = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut total_newton = 0usize;
    let mut linear_residual = 0.0;
    for &eps in &config.eps_sequence {
        let out = penalized_newton(
            form,
            &alam,
            rhs0,
            psi.values(),
            g.values(),
            eps,
            config,
            warm.as_deref(),
        )?;
        if !out.converged {
            let mut rep = empty_report(GridFunction::from_values(form.grid.clone(), out.u));
            rep.iterations = out.newton_iterations;
            rep.eps_history = eps_history;
            return Err(SolverError::Nonconvergence {
                iterations: out.newton_iterations,
                residual: out.residual,
                partial: Some(Box::new(rep)),
            });
        }
        total_newton += out.newton_iterations;
        linear_residual = out.linear_residual;
        let w = positive_part(
            &psi.values().iter().zip(out.u.iter()).map(|(p, u)| p - u).collect::<Vec<_>>(),
        );
        let penalty_norm_h = form.matrix_mass.quadratic_form(&w, &w).max(0.0).sqrt();
        let penalty_norm_v = form.v_norm_sq(&w).max(0.0).sqrt();
        let v_increment = match &warm {
            Some(prev) => {
                let d: Vec<f64> = out.u.iter().zip(prev.iter()).map(|(a, b)| a - b).collect();
                form.v_norm_sq(&d).max(0.0).sqrt()
            }
            None => f64::NAN,
        };
        eps_history.push(EpsRecord {
            eps,
            penalty_norm_h,
            penalty_norm_v,
            newton_iterations: out.newton_iterations,
            v_increment,
            solution: out.u.clone(),
        });
        warm = Some(out.u);
    }
    let last = warm.expect("nonempty eps sequence");
    let (u, res, pdas_iters) =
        active_set_polish(form, &alam, rhs0, psi.values(), g.values(), &last, config.linear_tol)?;
    let solution = GridFunction::from_values(form.grid.clone(), u);
    let mut rep = diagnostics(form, lambda, &solution, f_for_residual, Some(psi), None);
    rep.iterations = total_newton + pdas_iters;
    rep.linear_residual = res.max(linear_residual);
    rep.eps_history = eps_history;
    rep.converged = true;
    // the polished iterate must satisfy complementarity to solver accuracy
    let comp = lcp_residual(form, &alam, rhs0, rep.solution.values(), psi.values());
    rep.complementarity_residual = comp;
    Ok(rep)
}

/// Mass-scaled complementarity residual of the discrete LCP.
fn lcp_residual(form: &DiscreteForm, alam: &Csr, rhs0: &[f64], u: &[f64], psi: &[f64]) -> f64 {
    let ml = form.mass_rhs.lumped();
    let au = alam.matvec_alloc(u);
    let mut worst: f64 = 0.0;
    for i in 0..u.len() {
        if form.dirichlet[i] {
            continue;
        }
        let s_hat = (au[i] - rhs0[i]) / ml[i];
        let slack = u[i] - psi[i];
        worst = worst.max(s_hat.min(slack).abs());
    }
    worst
}

/// Monotone increasing iteration for the non-coercive equation (`r > 0`):
/// repeated coercive solves with source `f + lambda (1+y) u_{n-1}`.
pub fn solve_noncoercive_equation(
    form: &DiscreteForm,
    f: &GridFunction,
    g: &GridFunction,
    lambda: Option<f64>,
    tol: f64,
    max_outer: usize,
) -> Result<SolveReport, SolverError> {
    if !(form.params.r > 0.0) {
        return Err(SolverError::RequiresPositiveRate);
    }
    let lambda = resolve_lambda(form, lambda)?;
    let alam = form.matrix_a_lambda(lambda);
    let base_rhs = form.mass_rhs.matvec_alloc(f.values());
    let (mat, _) = constrain(&alam, &form.dirichlet, g.values(), &base_rhs);
    let mut solver = SystemSolver::new(mat, 1e-12)?;

    let mut u = vec![0.0; form.num_nodes()];
    let mut ledger = MonotonicityLedger::default();
    let mut linear_residual = 0.0;
    let mut converged = false;
    let mut outer = 0usize;
    while outer < max_outer {
        outer += 1;
        let shift = form.mass_1py_rhs.matvec_alloc(&u);
        let mut rhs: Vec<f64> = base_rhs.iter().zip(shift.iter()).map(|(a, b)| a + lambda * b).collect();
        // re-apply the boundary elimination to the shifted rhs
        let (_, rhs_c) = constrain(&alam, &form.dirichlet, g.values(), &rhs);
        rhs.copy_from_slice(&rhs_c);
        let (next, res) = solver.solve(&rhs, Some(&u))?;
        linear_residual = res;
        let mut min_inc = f64::INFINITY;
        for i in 0..next.len() {
            if !form.dirichlet[i] {
                min_inc = min_inc.min(next[i] - u[i]);
            }
        }
        ledger.worst_increase_violation = ledger.worst_increase_violation.min(min_inc.min(0.0));
        let diff = form.matrix_mass.quadratic_form(
            &next.iter().zip(u.iter()).map(|(a, b)| a - b).collect::<Vec<_>>(),
            &next.iter().zip(u.iter()).map(|(a, b)| a - b).collect::<Vec<_>>(),
        );
        u = next;
        let unorm = form.h_norm_sq(&u).max(0.0).sqrt();
        if diff.max(0.0).sqrt() <= tol * (1.0 + unorm) {
            converged = true;
            break;
        }
    }
    ledger.outer_iterations = outer;
    let solution = GridFunction::from_values(form.grid.clone(), u);
    let mut rep = diagnostics(form, 0.0, &solution, f, None, None);
    rep.iterations = outer;
    rep.linear_residual = linear_residual;
    rep.ledger = Some(ledger);
    rep.converged = converged;
    if !converged {
        let res = rep.linear_residual;
        return Err(SolverError::Nonconvergence {
            iterations: outer,
            residual: res,
            partial: Some(Box::new(rep)),
        });
    }
    Ok(rep)
}

/// Nodal admissibility guard for the decreasing iteration.
fn nodal_admissibility(
    form: &DiscreteForm,
    pair: &EnvelopePair,
    f: &GridFunction,
    psi: &GridFunction,
    g: &GridFunction,
) -> f64 {
    let grid = &form.grid;
    let p = &form.params;
    let mut worst: f64 = f64::NEG_INFINITY;
    for j in 0..grid.ny() {
        let y = grid.y_nodes[j];
        for i in 0..grid.nx() {
            let x = grid.x_nodes[i];
            let idx = grid.node_index(i, j);
            let m = pair.lower.value(x, y);
            let mm = pair.upper.value(x, y);
            worst = worst.max(m - mm);
            worst = worst.max(apply_a(&pair.lower, x, y, p) - f.values()[idx]);
            worst = worst.max(f.values()[idx] - apply_a(&pair.upper, x, y, p));
            worst = worst.max(psi.values()[idx] - mm);
            if grid.is_dirichlet(i, j) {
                worst = worst.max(m - g.values()[idx]);
                worst = worst.max(g.values()[idx] - mm);
            }
        }
    }
    worst
}

/// Monotone decreasing iteration for the non-coercive variational
/// inequality: starts from nodal samples of the upper envelope (used only
/// through the shifted source) and runs a coercive VI solve per step.
pub fn solve_vi_noncoercive(
    form: &DiscreteForm,
    config: &PenaltyConfig,
    f: &GridFunction,
    psi: &GridFunction,
    g: &GridFunction,
    pair: &EnvelopePair,
    tol: f64,
    max_outer: usize,
) -> Result<SolveReport, SolverError> {
    if !(form.params.r > 0.0) {
        return Err(SolverError::RequiresPositiveRate);
    }
    let lambda = config.validate(form)?;
    let adm = nodal_admissibility(form, pair, f, psi, g);
    if adm > 1e-9 {
        return Err(SolverError::EnvelopeInadmissible(adm));
    }
    let base_rhs = form.mass_rhs.matvec_alloc(f.values());
    let mut u_prev = GridFunction::from_field(form.grid.clone(), &pair.upper);
    let mut ledger = MonotonicityLedger::default();
    let mut converged = false;
    let mut outer = 0usize;
    let mut last: Option<SolveReport> = None;
    while outer < max_outer {
        outer += 1;
        let shift = form.mass_1py_rhs.matvec_alloc(u_prev.values());
        let rhs: Vec<f64> =
            base_rhs.iter().zip(shift.iter()).map(|(a, b)| a + lambda * b).collect();
        let rep = solve_vi_coercive_shifted(form, config, &rhs, f, psi, g)?;
        let mut max_inc = f64::NEG_INFINITY;
        let mut diff_sq: f64 = 0.0;
        {
            let d: Vec<f64> = rep
                .solution
                .values()
                .iter()
                .zip(u_prev.values().iter())
                .map(|(a, b)| a - b)
                .collect();
            for (i, &di) in d.iter().enumerate() {
                if !form.dirichlet[i] {
                    max_inc = max_inc.max(di);
                }
            }
            diff_sq = diff_sq.max(form.matrix_mass.quadratic_form(&d, &d).max(0.0));
        }
        if outer >= 2 {
            // the first step compares against envelope samples, which also
            // must dominate the iterate
            ledger.worst_decrease_violation =
                ledger.worst_decrease_violation.max(max_inc.max(0.0));
        } else {
            ledger.worst_decrease_violation =
                ledger.worst_decrease_violation.max(max_inc.max(0.0));
        }
        let unorm = form.h_norm_sq(rep.solution.values()).max(0.0).sqrt();
        let step = diff_sq.sqrt();
        u_prev = rep.solution.clone();
        last = Some(rep);
        if step <= tol * (1.0 + unorm) {
            converged = true;
            break;
        }
    }
    ledger.outer_iterations = outer;
    let mut rep = last.expect("at least one outer iteration");
    // final diagnostics in the unshifted variables
    let mut final_rep = diagnostics(form, 0.0, &rep.solution, f, Some(psi), Some(pair));
    final_rep.iterations = outer;
    final_rep.linear_residual = rep.linear_residual;
    final_rep.eps_history = core::mem::take(&mut rep.eps_history);
    final_rep.ledger = Some(ledger);
    final_rep.converged = converged;
    if !converged {
        let res = final_rep.linear_residual;
        return Err(SolverError::Nonconvergence {
            iterations: outer,
            residual: res,
            partial: Some(Box::new(final_rep)),
        });
    }
    Ok(final_rep)
}

/// Projected SOR on `min(A_lambda u - M f, u - psi) = 0`; the independent
/// complementarity oracle.
#[allow(clippy::too_many_arguments)]
pub fn lcp_psor(
    form: &DiscreteForm,
    lambda: f64,
    f: &GridFunction,
    psi: &GridFunction,
    g: &GridFunction,
    omega: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<GridFunction, SolverError> {
    if !(omega > 0.0 && omega < 2.0) {
        return Err(SolverError::BadOmega(omega));
    }
    let lambda = resolve_lambda(form, Some(lambda))?;
    check_obstacle_compat(form, psi.values(), g.values())?;
    let alam = form.matrix_a_lambda(lambda);
    let rhs_full = form.mass_rhs.matvec_alloc(f.values());
    let (mat, rhs) = constrain(&alam, &form.dirichlet, g.values(), &rhs_full);
    let n = form.num_nodes();
    let diag = mat.diag();
    let mut u = vec![0.0; n];
    for i in 0..n {
        u[i] = if form.dirichlet[i] { g.values()[i] } else { psi.values()[i].max(0.0) };
    }
    let ml = form.mass_rhs.lumped();
    for sweep in 0..max_sweeps {
        for r in 0..n {
            if form.dirichlet[r] {
                continue;
            }
            let mut s = rhs[r];
            for k in mat.indptr[r]..mat.indptr[r + 1] {
                let c = mat.indices[k];
                if c != r {
                    s -= mat.data[k] * u[c];
                }
            }
            let gs = s / diag[r];
            let cand = (1.0 - omega) * u[r] + omega * gs;
            u[r] = cand.max(psi.values()[r]);
        }
        if sweep % 4 == 3 || sweep + 1 == max_sweeps {
            let au = mat.matvec_alloc(&u);
            let mut worst: f64 = 0.0;
            for i in 0..n {
                if form.dirichlet[i] {
                    continue;
                }
                let s_hat = (au[i] - rhs[i]) / ml[i];
                worst = worst.max(s_hat.min(u[i] - psi.values()[i]).abs());
            }
            if worst <= tol {
                return Ok(GridFunction::from_values(form.grid.clone(), u));
            }
        }
    }
    Err(SolverError::Nonconvergence { iterations: max_sweeps, residual: f64::NAN, partial: None })
}

/// One ordered pair for the comparison suite.
pub enum ComparisonCase {
    Equation { f_low: GridFunction, f_high: GridFunction, g: GridFunction },
    Obstacle {
        f_low: GridFunction,
        psi_low: GridFunction,
        f_high: GridFunction,
        psi_high: GridFunction,
        g: GridFunction,
    },
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// `min(u_high - u_low)` per case: nonnegative when the comparison
    /// principle holds discretely.
    pub per_case: Vec<f64>,
    pub worst: f64,
}

/// Solves each ordered pair and reports the worst negative node of
/// `u_high - u_low`.
pub fn comparison_suite(
    form: &DiscreteForm,
    lambda: f64,
    cases: &[ComparisonCase],
) -> Result<ComparisonReport, SolverError> {
    let mut per_case = Vec::with_capacity(cases.len());
    let mut worst = f64::INFINITY;
    for case in cases {
        let (u1, u2) = match case {
            ComparisonCase::Equation { f_low, f_high, g } => (
                solve_coercive(form, lambda, f_low, g)?.solution,
                solve_coercive(form, lambda, f_high, g)?.solution,
            ),
            ComparisonCase::Obstacle { f_low, psi_low, f_high, psi_high, g } => (
                lcp_psor(form, lambda, f_low, psi_low, g, 1.2, 1e-11, 100_000)?,
                lcp_psor(form, lambda, f_high, psi_high, g, 1.2, 1e-11, 100_000)?,
            ),
        };
        let mut min_diff = f64::INFINITY;
        for i in 0..form.num_nodes() {
            if !form.dirichlet[i] {
                min_diff = min_diff.min(u2.values()[i] - u1.values()[i]);
            }
        }
        per_case.push(min_diff);
        worst = worst.min(min_diff);
    }
    Ok(ComparisonReport { per_case, worst })
}

/// Assembles the report diagnostics for a computed solution: strong
/// complementarity/equation residual, penalty norm, envelope violations,
/// trace levels, and the raw weighted-norm quantities of the second-order
/// a priori estimate.
pub fn diagnostics(
    form: &DiscreteForm,
    lambda: f64,
    u: &GridFunction,
    f: &GridFunction,
    psi: Option<&GridFunction>,
    pair: Option<&EnvelopePair>,
) -> SolveReport {
    let mut rep = empty_report(u.clone());
    rep.linear_residual = 0.0;
    match psi {
        Some(psi) => {
            let alam =
                if lambda != 0.0 { form.matrix_a_lambda(lambda) } else { form.matrix_a.clone() };
            let rhs0 = form.mass_rhs.matvec_alloc(f.values());
            rep.complementarity_residual =
                lcp_residual(form, &alam, &rhs0, u.values(), psi.values());
            let w = positive_part(
                &psi.values().iter().zip(u.values()).map(|(p, uu)| p - uu).collect::<Vec<_>>(),
            );
            rep.penalty_norm = form.matrix_mass.quadratic_form(&w, &w).max(0.0).sqrt();
        }
        None => {
            rep.complementarity_residual = equation_residual(form, lambda, u.values(), f.values());
        }
    }
    if let Some(pair) = pair {
        rep.envelope_violation = crate::envelopes::envelope_violation(u, pair);
    }
    rep.trace_levels = trace_levels(u, form.params.rho, form.params.sigma, 1, 10);
    rep.h2 = H2Diagnostics {
        u_h2: norm_h2w(u),
        f_weighted_l2: weighted_l2(f, |_x, y| (1.0 + y) * (1.0 + y)),
        psi_weighted_h2: psi
            .map(|p| {
                let grid = u.grid().clone();
                let vals: Vec<f64> = (0..grid.num_nodes())
                    .map(|idx| {
                        let (_, y) = grid.node_xy(idx);
                        (1.0 + y) * p.values()[idx]
                    })
                    .collect();
                norm_h2w(&GridFunction::from_values(grid, vals))
            })
            .unwrap_or(0.0),
        u_weighted_l2: weighted_l2(u, |_x, y| (1.0 + y).powi(4)),
    };
    rep.converged = true;
    rep
}

/// Penalization-operator monotonicity sample:
/// `(beta_eps(u) - beta_eps(v), u - v)` with the lumped mass, which is
/// nonnegative nodewise.
pub fn penalization_monotonicity_sample(
    form: &DiscreteForm,
    psi: &[f64],
    u: &[f64],
    v: &[f64],
    eps: f64,
) -> f64 {
    let ml = form.matrix_mass.lumped();
    let mut acc = 0.0;
    for i in 0..u.len() {
        let bu = -(psi[i] - u[i]).max(0.0) / eps;
        let bv = -(psi[i] - v[i]).max(0.0) / eps;
        acc += ml[i] * (bu - bv) * (u[i] - v[i]);
    }
    acc
}
