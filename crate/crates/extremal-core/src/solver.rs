//! Nonlinear solves of the discretized problem at fixed lambda: damped
//! Newton and the monotone (sub/supersolution) iteration.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::odecore::{assemble, Grid, TriLu, WeightedOperator};

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_NEWTON_ITER: usize = 50;
const MAX_MONOTONE_ITER: usize = 10_000;
/// Clipping guard below the blow-up level for singular nonlinearities.
pub const CLIP_MARGIN: f64 = 1e-8;

/// One converged point of the problem at a fixed lambda.
#[derive(Debug, Clone)]
pub struct Solution {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub u0: f64,
    pub sup_u: f64,
    pub residual_norm: f64,
    /// Principal eigenvalue of the linearization; filled by the spectrum module.
    pub mu1: Option<f64>,
    /// Number of clipping events against the blow-up guard during the solve.
    pub clip_events: u32,
    pub spec: Arc<ProblemSpec>,
    pub grid: Arc<Grid>,
}

impl Solution {
    fn from_state(
        spec: &Arc<ProblemSpec>,
        grid: &Arc<Grid>,
        lambda: f64,
        u: Vec<f64>,
        residual_norm: f64,
        clip_events: u32,
    ) -> Solution {
        let sup = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        Solution {
            lambda,
            u0: u[0],
            sup_u: sup,
            u,
            residual_norm,
            mu1: None,
            clip_events,
            spec: Arc::clone(spec),
            grid: Arc::clone(grid),
        }
    }
}

/// Discrete residual of the problem: `L[u] - lambda w f(u)` row-wise, with
/// the Dirichlet row reporting `u(R)`.
pub fn residual(spec: &ProblemSpec, grid: &Grid, u: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let s0 = spec.nonlinearity.s0();
    if u.iter().any(|v| *v >= s0) {
        return Err(Error::BlowUp);
    }
    let op = assemble(spec, grid, 0.0, None)?;
    Ok(residual_with(&op, spec, u, lambda))
}

pub(crate) fn residual_with(
    op: &WeightedOperator,
    spec: &ProblemSpec,
    u: &[f64],
    lambda: f64,
) -> Vec<f64> {
    let n = u.len();
    let mut res = op.apply(u);
    for i in 0..n - 1 {
        res[i] -= lambda * op.row_weight[i] * spec.nonlinearity.f_raw(u[i]);
    }
    res[n - 1] = u[n - 1];
    res
}

/// Backward-error style scaled residual norm: each row is measured against
/// its own magnitude `||A_i||_1 ||u||_inf + |lambda| w_i f(u_i) + w_i`, so a
/// norm of `tol` means the iterate solves a relatively `tol`-perturbed
/// discrete problem. This is the "weighted residual infinity norm" used for
/// every convergence decision.
pub(crate) fn scaled_residual_norm(
    op: &WeightedOperator,
    spec: &ProblemSpec,
    u: &[f64],
    lambda: f64,
    res: &[f64],
) -> f64 {
    let n = u.len();
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n - 1 {
        let rowmag = op.diag[i].abs()
            + (if i > 0 { op.sub[i].abs() } else { 0.0 })
            + op.sup[i].abs();
        let den = rowmag * umax
            + lambda.abs() * op.row_weight[i] * spec.nonlinearity.f_raw(u[i]).abs()
            + op.row_weight[i];
        worst = worst.max(res[i].abs() / den);
    }
    worst.max(res[n - 1].abs() / umax)
}

/// One undamped Newton step, kept only when it reduces the scaled residual.
fn polish_step(
    op: &WeightedOperator,
    spec: &ProblemSpec,
    u: &[f64],
    lambda: f64,
    nrm: f64,
) -> Option<(Vec<f64>, f64)> {
    let n = u.len();
    let mut jd = op.diag.clone();
    for i in 0..n - 1 {
        jd[i] -= lambda * op.row_weight[i] * spec.nonlinearity.fp_raw(u[i]);
    }
    jd[n - 1] = 1.0;
    let lu = TriLu::factor(&op.sub, &jd, &op.sup).ok()?;
    let res = residual_with(op, spec, u, lambda);
    let neg: Vec<f64> = res.iter().map(|v| -v).collect();
    let du = lu.solve(&neg);
    let s0 = spec.nonlinearity.s0();
    let mut cand: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + b).collect();
    if s0.is_finite() {
        for v in cand.iter_mut() {
            *v = v.min(s0 - CLIP_MARGIN);
        }
    }
    let cres = residual_with(op, spec, &cand, lambda);
    let cnrm = scaled_residual_norm(op, spec, &cand, lambda, &cres);
    if cnrm < nrm {
        Some((cand, cnrm))
    } else {
        None
    }
}

fn clip_to_domain(spec: &ProblemSpec, u: &mut [f64]) -> u32 {
    let s0 = spec.nonlinearity.s0();
    if !s0.is_finite() {
        return 0;
    }
    let cap = s0 - CLIP_MARGIN;
    let mut events = 0;
    for v in u.iter_mut() {
        if *v > cap {
            *v = cap;
            events += 1;
        }
    }
    events
}

/// Damped Newton solve of the discrete problem at fixed `lambda`.
///
/// Armijo backtracking (factor 0.5, minimum step 2^-20) enforces monotone
/// decrease of the scaled residual; iterates are clipped below the blow-up
/// level and clipping events are reported on the returned solution.
pub fn newton_solve(
    spec: &Arc<ProblemSpec>,
    grid: &Arc<Grid>,
    lambda: f64,
    u_init: &[f64],
    tol: f64,
) -> Result<Solution> {
    if lambda < 0.0 {
        return Err(Error::Parameter("lambda must be nonnegative".into()));
    }
    let s0 = spec.nonlinearity.s0();
    if u_init.len() != grid.len() {
        return Err(Error::Parameter("initial guess length must match grid".into()));
    }
    if u_init.iter().any(|v| *v < 0.0 || *v >= s0) {
        return Err(Error::Parameter("initial guess outside [0, s0)".into()));
    }
    let op = assemble(spec, grid, 0.0, None)?;
    let mut u = u_init.to_vec();
    let mut clip_events = 0u32;
    let mut res = residual_with(&op, spec, &u, lambda);
    let mut nrm = scaled_residual_norm(&op, spec, &u, lambda, &res);
    for _ in 0..MAX_NEWTON_ITER {
        if nrm <= tol {
            // polish: full steps push the forward error to the roundoff
            // floor instead of cond(A) * tol
            for _ in 0..2 {
                match polish_step(&op, spec, &u, lambda, nrm) {
                    Some((pu, pnrm)) => {
                        u = pu;
                        nrm = pnrm;
                    }
                    None => break,
                }
            }
            return Ok(Solution::from_state(spec, grid, lambda, u, nrm, clip_events));
        }
        // Jacobian: L - lambda w f'(u) on the diagonal
        let mut jd = op.diag.clone();
        let n = u.len();
        for i in 0..n - 1 {
            jd[i] -= lambda * op.row_weight[i] * spec.nonlinearity.fp_raw(u[i]);
        }
        jd[n - 1] = 1.0;
        let lu = TriLu::factor(&op.sub, &jd, &op.sup)?;
        let neg: Vec<f64> = res.iter().map(|v| -v).collect();
        let du = lu.solve(&neg);
        let mut step = 1.0f64;
        let mut accepted = false;
        while step >= 2.0f64.powi(-20) {
            let mut cand: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + step * b).collect();
            clip_events += clip_to_domain(spec, &mut cand);
            let cres = residual_with(&op, spec, &cand, lambda);
            let cnrm = scaled_residual_norm(&op, spec, &cand, lambda, &cres);
            if cnrm < nrm * (1.0 - 1e-4 * step) {
                u = cand;
                res = cres;
                nrm = cnrm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            let sup = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            if s0.is_finite() && sup >= s0 - 10.0 * CLIP_MARGIN {
                return Err(Error::BlowUp);
            }
            return Err(Error::NoConvergence(format!(
                "newton stalled at scaled residual {nrm:.3e} (lambda = {lambda})"
            )));
        }
    }
    if nrm <= tol {
        return Ok(Solution::from_state(spec, grid, lambda, u, nrm, clip_events));
    }
    let sup = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    if s0.is_finite() && sup >= s0 - 10.0 * CLIP_MARGIN {
        return Err(Error::BlowUp);
    }
    Err(Error::NoConvergence(format!(
        "newton out of iterations at scaled residual {nrm:.3e} (lambda = {lambda})"
    )))
}

/// Monotone iteration from the zero subsolution:
/// `(L + c) u_n = lambda f(u_{n-1}) + c u_{n-1}` in the weighted rows.
///
/// `c` may be supplied; by default it is recomputed each iteration as
/// `1.5 lambda f'(sup u + margin)` with margin `min(0.1 (s0 - sup u), 0.5)`,
/// which keeps the update map order-preserving. The iterate sequence must be
/// nodewise nondecreasing; a violation aborts with a discretization
/// breakdown error, and non-convergence within 10000 sweeps signals
/// `lambda >= lambda*`.
pub fn monotone_iterate(
    spec: &Arc<ProblemSpec>,
    grid: &Arc<Grid>,
    lambda: f64,
    c: Option<f64>,
    tol: f64,
) -> Result<Solution> {
    if lambda < 0.0 {
        return Err(Error::Parameter("lambda must be nonnegative".into()));
    }
    let n = grid.len();
    let s0 = spec.nonlinearity.s0();
    let mut u = vec![0.0; n];
    if lambda == 0.0 {
        let op = assemble(spec, grid, 0.0, None)?;
        let res = residual_with(&op, spec, &u, 0.0);
        let nrm = scaled_residual_norm(&op, spec, &u, 0.0, &res);
        return Ok(Solution::from_state(spec, grid, 0.0, u, nrm, 0));
    }
    let base = assemble(spec, grid, 0.0, None)?;
    let mut c_saturated = false;
    for it in 1..=MAX_MONOTONE_ITER {
        let sup = u.iter().fold(0.0f64, |m, v| m.max(*v));
        let c_it = match c {
            Some(v) => v,
            None => {
                let margin = if s0.is_finite() {
                    (0.1 * (s0 - sup)).min(0.5)
                } else {
                    0.5
                };
                let eval_at = (sup + margin).min(s0 - CLIP_MARGIN);
                1.5 * lambda * spec.nonlinearity.fp_raw(eval_at)
            }
        };
        // shifted operator rows: L + c w I (raw scale at the pole row)
        let mut jd = base.diag.clone();
        for i in 0..n - 1 {
            jd[i] += c_it * base.row_weight[i];
        }
        jd[n - 1] = 1.0;
        let lu = TriLu::factor(&base.sub, &jd, &base.sup)?;
        let mut rhs = vec![0.0; n];
        for i in 0..n - 1 {
            rhs[i] =
                base.row_weight[i] * (lambda * spec.nonlinearity.f_raw(u[i]) + c_it * u[i]);
        }
        let next = lu.solve(&rhs);
        let mut diff = 0.0f64;
        for i in 0..n {
            if next[i] < u[i] - 1e-11 * (1.0 + u[i].abs()) {
                if !c_saturated {
                    // one retry with an enlarged shift before declaring breakdown
                    c_saturated = true;
                    log::warn!(
                        "monotone iterate: shift saturated at iteration {it}; retrying with 4c"
                    );
                    continue;
                }
                return Err(Error::MonotonicityViolation { iteration: it });
            }
            diff = diff.max((next[i] - u[i]).abs());
        }
        if s0.is_finite() && next.iter().any(|v| *v >= s0 - CLIP_MARGIN) {
            return Err(Error::NoConvergence(format!(
                "monotone iterates reached the blow-up level (lambda = {lambda} >= lambda*?)"
            )));
        }
        u = next;
        if diff <= tol {
            let res = residual_with(&base, spec, &u, lambda);
            let nrm = scaled_residual_norm(&base, spec, &u, lambda, &res);
            return Ok(Solution::from_state(spec, grid, lambda, u, nrm, 0));
        }
    }
    Err(Error::NoConvergence(format!(
        "monotone iteration did not converge in {MAX_MONOTONE_ITER} sweeps (lambda = {lambda} >= lambda*?)"
    )))
}
