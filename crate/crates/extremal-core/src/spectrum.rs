//! Principal eigenvalue of the linearized operator, the torsion function,
//! and the two-sided bounds on the extremal parameter.
//!
//! The discrete eigenproblem is the pencil `A phi = mu M phi` on the
//! interior unknowns, where `A` is the assembled operator with potential
//! `-lambda f'(u)` and `M` the weighted mass `diag(row_weight)`. Scaling the
//! rows by the quadrature weights symmetrizes the pencil whenever the
//! residual advection component vanishes, and the smallest eigenvalue is
//! then found by Sturm-sequence bisection; the non-self-adjoint case falls
//! back to shifted inverse iteration anchored at the infimum of the
//! symmetrized quadratic form, with eigenfunction positivity as the
//! acceptance test for having caught the principal mode.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::odecore::{assemble, solve_linear, Grid, TriLu, WeightedOperator};

const EIG_RESIDUAL_TOL: f64 = 1e-8;
const MAX_INVERSE_ITER: usize = 500;

/// Principal eigenpair; `phi` is normalized to `sup phi = 1`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub mu: f64,
    pub phi: Vec<f64>,
    pub iterations: u32,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    SemiStableBoundary,
    Unstable,
}

struct Pencil {
    // interior rows 0..m (Dirichlet dof eliminated)
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    mass: Vec<f64>,
    // q-scaled symmetric part for Sturm counts and form infima
    sym_diag: Vec<f64>,
    sym_off: Vec<f64>,
    sym_mass: Vec<f64>,
    symmetric: bool,
}

fn build_pencil(spec: &ProblemSpec, grid: &Grid, u: &[f64], lambda: f64) -> Result<Pencil> {
    let n = grid.len();
    let mut pot = vec![0.0; n];
    for i in 0..n {
        pot[i] = -lambda * spec.nonlinearity.fp_raw(u[i].min(spec.nonlinearity.s0() - 1e-9));
    }
    let op = assemble(spec, grid, 0.0, Some(&pot))?;
    Ok(pencil_from_op(&op, spec))
}

fn pencil_from_op(op: &WeightedOperator, spec: &ProblemSpec) -> Pencil {
    let n = op.len();
    let m = n - 1; // interior unknowns
    let sub = op.sub[..m].to_vec();
    let diag = op.diag[..m].to_vec();
    let sup = op.sup[..m].to_vec();
    let mut mass: Vec<f64> = op.row_weight[..m].iter().map(|w| w.max(0.0)).collect();
    mass[0] = 1.0; // pole row is already in raw operator scale
    let q = &op.cell_weight;
    let mut sym_diag = vec![0.0; m];
    let mut sym_off = vec![0.0; m - 1];
    let mut sym_mass = vec![0.0; m];
    for i in 0..m {
        sym_diag[i] = q[i] * diag[i];
        sym_mass[i] = q[i] * mass[i];
        if i + 1 < m {
            sym_off[i] = 0.5 * (q[i] * sup[i] + q[i + 1] * sub[i + 1]);
        }
    }
    let symmetric = spec.advection.is_gradient();
    Pencil {
        sub,
        diag,
        sup,
        mass,
        sym_diag,
        sym_off,
        sym_mass,
        symmetric,
    }
}

/// Number of pencil eigenvalues (of the symmetrized pencil) below `sigma`,
/// by the inertia of `S - sigma M` via its LDL^T pivots.
fn count_below(p: &Pencil, sigma: f64) -> usize {
    let m = p.sym_diag.len();
    let mut count = 0usize;
    let mut dprev = p.sym_diag[0] - sigma * p.sym_mass[0];
    if dprev == 0.0 {
        dprev = -1e-300;
    }
    if dprev < 0.0 {
        count += 1;
    }
    for i in 1..m {
        let mut d = p.sym_diag[i] - sigma * p.sym_mass[i] - p.sym_off[i - 1].powi(2) / dprev;
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
        dprev = d;
    }
    count
}

/// Smallest eigenvalue of the symmetrized pencil by Sturm bisection.
fn sturm_smallest(p: &Pencil) -> f64 {
    // Gershgorin-style bracket for the pencil
    let m = p.sym_diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let off = (if i > 0 { p.sym_off[i - 1].abs() } else { 0.0 })
            + (if i + 1 < m { p.sym_off[i].abs() } else { 0.0 });
        lo = lo.min((p.sym_diag[i] - off) / p.sym_mass[i]);
        hi = hi.max((p.sym_diag[i] + off) / p.sym_mass[i]);
    }
    let (mut lo, mut hi) = (lo - 1.0, hi + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(p, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn inverse_iteration(
    p: &Pencil,
    sigma: f64,
    warm: Option<&[f64]>,
) -> Result<(f64, Vec<f64>, u32, f64)> {
    let m = p.diag.len();
    let shifted_d: Vec<f64> = (0..m).map(|i| p.diag[i] - sigma * p.mass[i]).collect();
    let lu = TriLu::factor(&p.sub, &shifted_d, &p.sup)?;
    let mut phi: Vec<f64> = match warm {
        Some(w) if w.len() == m => w.to_vec(),
        _ => vec![1.0; m],
    };
    let norm0 = phi.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    phi.iter_mut().for_each(|v| *v /= norm0);
    // roundoff floor of the residual evaluation: entries of A reach 1/h^2,
    // so the achievable eigen-residual scales with eps * ||A||_inf
    let row_mag = (0..m)
        .map(|i| {
            p.diag[i].abs()
                + (if i > 0 { p.sub[i].abs() } else { 0.0 })
                + (if i + 1 < m { p.sup[i].abs() } else { 0.0 })
        })
        .fold(0.0f64, f64::max);
    let floor = 32.0 * f64::EPSILON * row_mag;
    let mut mu;
    let mut best: Option<(f64, Vec<f64>, u32, f64)> = None;
    for it in 1..=MAX_INVERSE_ITER {
        let rhs: Vec<f64> = (0..m).map(|i| p.mass[i] * phi[i]).collect();
        let mut next = lu.solve(&rhs);
        // orient so the largest-magnitude entry is positive
        let (mut amax, mut imax) = (0.0f64, 0usize);
        for (i, v) in next.iter().enumerate() {
            if v.abs() > amax {
                amax = v.abs();
                imax = i;
            }
        }
        if amax < 1e-300 {
            return Err(Error::NoConvergence("inverse iteration produced zero vector".into()));
        }
        let sgn = next[imax].signum();
        next.iter_mut().for_each(|v| *v *= sgn / amax);
        // Rayleigh-style estimate in the q-inner product
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for i in 0..m {
            let av = p.diag[i] * next[i]
                + (if i > 0 { p.sub[i] * next[i - 1] } else { 0.0 })
                + (if i + 1 < m { p.sup[i] * next[i + 1] } else { 0.0 });
            num += next[i] * av;
            den += next[i] * p.mass[i] * next[i];
        }
        mu = num / den;
        // eigen-residual check
        let mut rmax = 0.0f64;
        let mut mnorm = 0.0f64;
        for i in 0..m {
            let av = p.diag[i] * next[i]
                + (if i > 0 { p.sub[i] * next[i - 1] } else { 0.0 })
                + (if i + 1 < m { p.sup[i] * next[i + 1] } else { 0.0 });
            let mv = p.mass[i] * next[i];
            rmax = rmax.max((av - mu * mv).abs());
            mnorm = mnorm.max(mv.abs());
        }
        phi = next;
        let rel = rmax / mnorm.max(1e-300);
        if rmax <= (EIG_RESIDUAL_TOL * mnorm).max(floor) {
            return Ok((mu, phi, it as u32, rel));
        }
        if best.as_ref().is_none_or(|b| rmax < b.3) {
            best = Some((mu, phi.clone(), it as u32, rmax));
        }
    }
    // accept the best iterate when it sits at the roundoff floor
    if let Some((mu, phi, it, rmax)) = best {
        let mnorm = phi
            .iter()
            .zip(&p.mass)
            .fold(0.0f64, |m, (v, w)| m.max((v * w).abs()));
        if rmax <= 100.0 * floor {
            return Ok((mu, phi, it, rmax / mnorm.max(1e-300)));
        }
    }
    Err(Error::NoConvergence(format!(
        "inverse iteration did not converge after {MAX_INVERSE_ITER} steps"
    )))
}

fn phi_is_positive(phi: &[f64]) -> bool {
    let sup = phi.iter().fold(0.0f64, |a, v| a.max(*v));
    // pole node may legitimately dominate; interior entries must not dip
    // below a tiny negative tolerance
    phi.iter().all(|v| *v >= -1e-7 * sup.max(1e-300))
}

/// Principal eigenvalue of the linearized operator `-Delta_g + A.grad - lambda f'(u)`
/// relative to the weighted mass matrix.
pub fn principal_eigenvalue(
    spec: &ProblemSpec,
    grid: &Grid,
    u: &[f64],
    lambda: f64,
) -> Result<EigenPair> {
    principal_eigenvalue_warm(spec, grid, u, lambda, None)
}

/// Warm-started variant used along continuation branches.
pub fn principal_eigenvalue_warm(
    spec: &ProblemSpec,
    grid: &Grid,
    u: &[f64],
    lambda: f64,
    warm: Option<&[f64]>,
) -> Result<EigenPair> {
    let p = build_pencil(spec, grid, u, lambda)?;
    let form_inf = sturm_smallest(&p);
    if p.symmetric {
        // the symmetrized pencil IS the eigenproblem: one anchored inverse
        // iteration recovers the positive eigenfunction
        let sigma = form_inf - 1e-8 * (1.0 + form_inf.abs());
        let (mu, phi_i, iterations, residual) = inverse_iteration(&p, sigma, warm)?;
        if !phi_is_positive(&phi_i) {
            return Err(Error::NoConvergence(
                "computed mode is not principal (sign-changing eigenfunction)".into(),
            ));
        }
        let mut phi = phi_i;
        phi.push(0.0); // Dirichlet dof
        return Ok(EigenPair {
            mu,
            phi,
            iterations,
            residual,
        });
    }
    // non-self-adjoint case: anchor near the quadratic-form infimum and
    // retry with left-shifted anchors until the eigenfunction is positive
    let mut gap = 0.1 * (1.0 + form_inf.abs());
    let mut sigma = form_inf - 1e-6 * (1.0 + form_inf.abs());
    let mut last_err: Option<Error> = None;
    for _ in 0..8 {
        match inverse_iteration(&p, sigma, warm) {
            Ok((mu, phi_i, iterations, residual)) => {
                if phi_is_positive(&phi_i) {
                    let mut phi = phi_i;
                    phi.push(0.0);
                    return Ok(EigenPair {
                        mu,
                        phi,
                        iterations,
                        residual,
                    });
                }
                last_err = Some(Error::NoConvergence(
                    "computed mode is not principal (sign-changing eigenfunction)".into(),
                ));
            }
            Err(e) => last_err = Some(e),
        }
        sigma -= gap;
        gap *= 2.0;
    }
    Err(last_err.unwrap_or_else(|| Error::NoConvergence("eigen solve failed".into())))
}

/// Infimum of the semistability quadratic form
/// `int (w xi'^2 + w C xi xi' - lambda w f'(u) xi^2) / int (mass) xi^2`,
/// i.e. the smallest eigenvalue of the symmetrized pencil. Coincides with
/// the principal eigenvalue exactly when `C = 0`.
pub fn semistability_form_infimum(
    spec: &ProblemSpec,
    grid: &Grid,
    u: &[f64],
    lambda: f64,
) -> Result<f64> {
    let p = build_pencil(spec, grid, u, lambda)?;
    Ok(sturm_smallest(&p))
}

/// Torsion function: solution of the weighted problem with unit source,
/// `-(w u')' + w C u' = w`, `u'(0) = u(R) = 0`.
pub fn torsion_function(spec: &ProblemSpec, grid: &Grid) -> Result<Vec<f64>> {
    let op = assemble(spec, grid, 0.0, None)?;
    let n = grid.len();
    let mut rhs = vec![0.0; n];
    rhs[..n - 1].copy_from_slice(&op.row_weight[..n - 1]);
    solve_linear(&op, &rhs)
}

/// Two-sided bounds `beta (stationary) <= lambda* <= lambda_1`.
///
/// The upper bound is the first eigenvalue of `-Delta_g + A.grad`; the lower
/// bound maximizes `beta / f(beta max w)` over admissible `beta`, with the
/// MEMS and Gelfand maximizers taken in closed form.
pub fn lambda_star_bounds(spec: &ProblemSpec, grid: &Grid) -> Result<(f64, f64)> {
    let zeros = vec![0.0; grid.len()];
    let upper = principal_eigenvalue(spec, grid, &zeros, 0.0)?.mu;
    let w = torsion_function(spec, grid)?;
    let wmax = w.iter().fold(0.0f64, |m, v| m.max(*v));
    if !(wmax > 0.0) {
        return Err(Error::Domain("torsion function has nonpositive maximum".into()));
    }
    let nl = &spec.nonlinearity;
    let lower = match nl.kind {
        crate::model::NonlinearityKind::Mems => 4.0 / (27.0 * wmax),
        crate::model::NonlinearityKind::Gelfand => 1.0 / (std::f64::consts::E * wmax),
        crate::model::NonlinearityKind::Power => {
            // maximize beta / (1 + beta wmax)^m by golden-section search
            let objective = |beta: f64| beta / nl.f_raw(beta * wmax);
            golden_max(objective, 1e-12, 1e4 / wmax, 1e-10)
        }
    };
    Ok((lower, upper))
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

/// Classify a converged solution by the sign of the principal eigenvalue.
pub fn stability_check(
    spec: &ProblemSpec,
    grid: &Grid,
    u: &[f64],
    lambda: f64,
    tol_eig: f64,
) -> Result<Stability> {
    let mu = principal_eigenvalue(spec, grid, u, lambda)?.mu;
    Ok(if mu > tol_eig {
        Stability::Stable
    } else if mu >= -tol_eig {
        Stability::SemiStableBoundary
    } else {
        Stability::Unstable
    })
}

/// Convenience: fill `mu1` on a solver solution.
pub fn attach_mu1(sol: &mut crate::solver::Solution) -> Result<f64> {
    let spec: Arc<ProblemSpec> = Arc::clone(&sol.spec);
    let grid = Arc::clone(&sol.grid);
    let mu = principal_eigenvalue(&spec, &grid, &sol.u, sol.lambda)?.mu;
    sol.mu1 = Some(mu);
    Ok(mu)
}
