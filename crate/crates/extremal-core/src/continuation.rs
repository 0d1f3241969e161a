//! Pseudo-arclength continuation of the solution branch from (0, 0), fold
//! detection and refinement, extremal-parameter estimation, second-branch
//! extraction and critical-dimension sweeps.
//!
//! The branch is globally parameterized by the pole value u0 (monotone for
//! these radial problems); each step solves the bordered system
//! `{residual = 0, t_u0 (u0 - u0_prev) + t_lam (lambda - lambda_prev) = ds}`
//! with a secant tangent predictor. Fold location is the sign change of the
//! principal eigenvalue, refined by bisection in u0.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::odecore::{assemble, make_grid, Grading, Grid, WeightedOperator};
use crate::parallel;
use crate::solver::{self, Solution};
use crate::spectrum;

/// Step-control and tolerance knobs of a branch trace.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationSettings {
    /// Initial arclength step in the (u0, lambda) plane.
    pub ds: f64,
    pub max_steps: usize,
    /// Trace stops once u0 exceeds this ceiling.
    pub u0_ceiling: f64,
    /// Scaled-residual tolerance of the inner solves.
    pub tol: f64,
    /// Eigenvalue tolerance relative to lambda_1 for stability flags.
    pub tol_eig_rel: f64,
}

impl ContinuationSettings {
    /// Spec-dependent defaults: ds = 0.05 R, ceiling 0.999 s0 for the
    /// singular nonlinearity and 30 otherwise.
    pub fn for_spec(spec: &ProblemSpec) -> ContinuationSettings {
        let s0 = spec.nonlinearity.s0();
        ContinuationSettings {
            ds: 0.05 * spec.radius(),
            max_steps: 2000,
            u0_ceiling: if s0.is_finite() { 0.999 * s0 } else { 30.0 },
            tol: solver::DEFAULT_TOL,
            tol_eig_rel: 1e-5,
        }
    }
}

/// One accepted continuation point.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub s: f64,
    pub lambda: f64,
    pub u0: f64,
    pub sup_u: f64,
    pub mu1: f64,
    pub stable: bool,
    pub solution: Solution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    FoldPassedAndCeiling,
    MaxSteps,
    BlowUpDetected,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::FoldPassedAndCeiling => "fold-passed-and-ceiling",
            Termination::MaxSteps => "max-steps",
            Termination::BlowUpDetected => "blow-up-detected",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaStarKind {
    Fold,
    SingularAsymptote,
}

/// Estimate of the extremal parameter with an error bar.
#[derive(Debug, Clone, Copy)]
pub struct LambdaStar {
    pub value: f64,
    pub half_width: f64,
    pub kind: LambdaStarKind,
}

/// Ordered branch with fold metadata.
#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub fold_index: Option<usize>,
    pub lambda_star: Option<LambdaStar>,
    pub termination: Termination,
    /// First eigenvalue of the advection Laplacian (mu1 of the trivial
    /// branch point); sets the absolute eigenvalue tolerance.
    pub lambda1: f64,
    pub settings: ContinuationSettings,
    pub spec: Arc<ProblemSpec>,
    pub grid: Arc<Grid>,
}

impl Branch {
    pub fn tol_eig(&self) -> f64 {
        self.settings.tol_eig_rel * self.lambda1.abs().max(1.0)
    }

    pub fn has_fold(&self) -> bool {
        self.fold_index.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Minimal,
    Second,
}

struct Stepper<'a> {
    spec: &'a Arc<ProblemSpec>,
    grid: &'a Arc<Grid>,
    op: WeightedOperator,
    tol: f64,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a Arc<ProblemSpec>, grid: &'a Arc<Grid>, tol: f64) -> Result<Stepper<'a>> {
        Ok(Stepper {
            spec,
            grid,
            op: assemble(spec, grid, 0.0, None)?,
            tol,
        })
    }

    /// Solve `{residual = 0, cu0 u(0) + clam lambda = target}`.
    fn solve_constrained(
        &self,
        cu0: f64,
        clam: f64,
        target: f64,
        seed: &[f64],
        lambda_guess: f64,
    ) -> Result<(Vec<f64>, f64)> {
        let spec = self.spec;
        let n = self.grid.len();
        let s0 = spec.nonlinearity.s0();
        let mut u = seed.to_vec();
        if s0.is_finite() {
            for v in u.iter_mut() {
                *v = v.min(s0 - solver::CLIP_MARGIN).max(0.0);
            }
        }
        let mut lambda = lambda_guess;
        // after first convergence, two extra full steps polish the iterate
        // to the roundoff floor (forward accuracy, not just backward)
        let mut polish_left = 2u8;
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        for _ in 0..60 {
            let res = solver::residual_with(&self.op, spec, &u, lambda);
            let nrm = solver::scaled_residual_norm(&self.op, spec, &u, lambda, &res);
            let g = cu0 * u[0] + clam * lambda - target;
            if nrm <= self.tol && g.abs() <= 1e-10 * target.abs().max(1.0) {
                if best.as_ref().is_none_or(|b| nrm < b.2) {
                    best = Some((u.clone(), lambda, nrm));
                }
                if polish_left == 0 {
                    let (bu, bl, _) = best.unwrap();
                    return Ok((bu, bl));
                }
                polish_left -= 1;
            }
            let mut jd = self.op.diag.clone();
            for i in 0..n - 1 {
                jd[i] -= lambda * self.op.row_weight[i] * spec.nonlinearity.fp_raw(u[i]);
            }
            jd[n - 1] = 1.0;
            let lu = crate::odecore::TriLu::factor(&self.op.sub, &jd, &self.op.sup)?;
            let mut b = vec![0.0; n];
            for i in 0..n - 1 {
                b[i] = -self.op.row_weight[i] * spec.nonlinearity.f_raw(u[i]);
            }
            let neg: Vec<f64> = res.iter().map(|v| -v).collect();
            let z1 = lu.solve(&neg);
            let z2 = lu.solve(&b);
            let denom = clam - cu0 * z2[0];
            if denom.abs() < 1e-300 {
                return Err(Error::SingularOperator);
            }
            let dlam = (-g - cu0 * z1[0]) / denom;
            // limit steps so singular nonlinearities stay inside the domain
            let mut step = 1.0f64;
            if s0.is_finite() {
                for i in 0..n {
                    let du = z1[i] - dlam * z2[i];
                    if du > 0.0 {
                        let room = s0 - solver::CLIP_MARGIN - u[i];
                        if du > room {
                            step = step.min((0.9 * room / du).max(0.05));
                        }
                    }
                }
            }
            for i in 0..n {
                u[i] += step * (z1[i] - dlam * z2[i]);
                if u[i] < 0.0 && i != 0 {
                    u[i] = 0.0;
                }
            }
            if s0.is_finite() {
                for v in u.iter_mut() {
                    *v = v.min(s0 - solver::CLIP_MARGIN);
                }
            }
            lambda += step * dlam;
        }
        if let Some((bu, bl, _)) = best {
            return Ok((bu, bl));
        }
        Err(Error::NoConvergence("bordered corrector stalled".into()))
    }

    fn solve_pinned_u0(&self, u0: f64, lambda_guess: f64, seed: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.solve_constrained(1.0, 0.0, u0, seed, lambda_guess)
    }
}

fn scaled_seed(u: &[f64], grid: &Grid, u0_target: f64, s0: f64) -> Vec<f64> {
    let r = grid.nodes();
    let radius = grid.radius();
    let mut seed: Vec<f64> = if u[0] > 1e-9 {
        let q = u0_target / u[0];
        u.iter().map(|v| v * q).collect()
    } else {
        r.iter().map(|x| u0_target * (1.0 - x / radius)).collect()
    };
    if s0.is_finite() {
        for v in seed.iter_mut() {
            *v = v.min(s0 - 10.0 * solver::CLIP_MARGIN).max(0.0);
        }
    }
    seed
}

#[allow(clippy::too_many_arguments)]
fn point_from(
    spec: &Arc<ProblemSpec>,
    grid: &Arc<Grid>,
    op: &WeightedOperator,
    s: f64,
    lambda: f64,
    u: Vec<f64>,
    mu1: f64,
    tol_eig: f64,
) -> BranchPoint {
    let res = solver::residual_with(op, spec, &u, lambda);
    let nrm = solver::scaled_residual_norm(op, spec, &u, lambda, &res);
    let sup = u.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let sol = Solution {
        lambda,
        u0: u[0],
        sup_u: sup,
        residual_norm: nrm,
        mu1: Some(mu1),
        clip_events: 0,
        u,
        spec: Arc::clone(spec),
        grid: Arc::clone(grid),
    };
    BranchPoint {
        s,
        lambda,
        u0: sol.u0,
        sup_u: sol.sup_u,
        mu1,
        stable: mu1 >= -tol_eig,
        solution: sol,
    }
}

/// Trace the branch from `(lambda, u) = (0, 0)` until the pole value
/// reaches the ceiling, the step count runs out, or blow-up is detected.
/// The principal eigenvalue is recorded at every accepted point and the
/// first sign change is refined into an explicit fold point.
pub fn trace_branch(
    spec: &Arc<ProblemSpec>,
    grid: &Arc<Grid>,
    settings: &ContinuationSettings,
) -> Result<Branch> {
    if !(settings.ds > 0.0) {
        return Err(Error::Parameter("continuation step must be positive".into()));
    }
    let s0 = spec.nonlinearity.s0();
    if settings.u0_ceiling >= s0 {
        return Err(Error::Parameter("u0 ceiling must stay below s0".into()));
    }
    let stepper = Stepper::new(spec, grid, settings.tol)?;
    let n = grid.len();

    let mut u = vec![0.0; n];
    let mut lambda = 0.0f64;
    let mut mu = spectrum::principal_eigenvalue(spec, grid, &u, 0.0)?.mu;
    let lambda1 = mu;
    let tol_eig = settings.tol_eig_rel * lambda1.abs().max(1.0);

    let mut points = Vec::with_capacity(256);
    points.push(point_from(spec, grid, &stepper.op, 0.0, 0.0, u.clone(), mu, tol_eig));

    // initial tangent from du/dlambda at the origin
    let mut tangent = {
        let mut jd = stepper.op.diag.clone();
        jd[n - 1] = 1.0;
        let lu = crate::odecore::TriLu::factor(&stepper.op.sub, &jd, &stepper.op.sup)?;
        let mut b = vec![0.0; n];
        for i in 0..n - 1 {
            b[i] = stepper.op.row_weight[i] * spec.nonlinearity.f_raw(0.0);
        }
        let du_dlam = lu.solve(&b);
        let norm = (du_dlam[0].powi(2) + 1.0).sqrt();
        [du_dlam[0] / norm, 1.0 / norm]
    };

    let mut warm_phi: Option<Vec<f64>> = None;
    let mut ds = settings.ds;
    let ds_max = 16.0 * settings.ds;
    let mut s = 0.0f64;
    let mut fails = 0usize;
    let mut successes = 0usize;
    let mut fold_index: Option<usize> = None;
    let mut termination = Termination::MaxSteps;

    while points.len() < settings.max_steps {
        let u0_pred = u[0] + tangent[0] * ds;
        let lam_pred = lambda + tangent[1] * ds;
        let target = tangent[0] * u[0] + tangent[1] * lambda + ds;
        let seed = scaled_seed(&u, grid, u0_pred.max(1e-12), s0);
        let attempt = stepper.solve_constrained(tangent[0], tangent[1], target, &seed, lam_pred);
        let (un, lamn) = match attempt {
            Ok(v) => v,
            Err(_) => {
                fails += 1;
                ds *= 0.5;
                successes = 0;
                if ds < 1e-8 || fails > 120 {
                    if fold_index.is_none() {
                        return Err(Error::ContinuationStalled);
                    }
                    let sup = points.last().map(|p| p.sup_u).unwrap_or(0.0);
                    termination = if s0.is_finite() && sup >= s0 - 1e-3 {
                        Termination::BlowUpDetected
                    } else {
                        Termination::MaxSteps
                    };
                    break;
                }
                continue;
            }
        };
        if lamn < -1e-9 || un[0] <= u[0] {
            fails += 1;
            ds *= 0.5;
            successes = 0;
            if ds < 1e-8 || fails > 120 {
                if fold_index.is_none() {
                    return Err(Error::ContinuationStalled);
                }
                termination = Termination::MaxSteps;
                break;
            }
            continue;
        }
        fails = 0;
        let mun = match spectrum::principal_eigenvalue_warm(
            spec,
            grid,
            &un,
            lamn,
            warm_phi.as_deref(),
        ) {
            Ok(pair) => {
                warm_phi = Some(pair.phi[..n - 1].to_vec());
                pair.mu
            }
            Err(e) => {
                log::warn!("eigenvalue solve failed along branch: {e}");
                mu
            }
        };

        if fold_index.is_none() && mu > 0.0 && mun <= 0.0 {
            // refine the fold: bisection on sign(mu1) in u0
            let refined = refine_fold(
                &stepper,
                spec,
                grid,
                u[0],
                un[0],
                lamn,
                &un,
                tol_eig,
            );
            if let Ok((uf, lamf, muf)) = refined {
                let d = ((uf[0] - u[0]).powi(2) + (lamf - lambda).powi(2)).sqrt();
                let sf = s + d;
                points.push(point_from(spec, grid, &stepper.op, sf, lamf, uf, muf, tol_eig));
                fold_index = Some(points.len() - 1);
            } else {
                log::warn!("fold refinement failed; using bracketing points");
                fold_index = Some(points.len());
            }
        }

        let d = ((un[0] - u[0]).powi(2) + (lamn - lambda).powi(2)).sqrt();
        s += d;
        let norm = d.max(1e-300);
        tangent = [(un[0] - u[0]) / norm, (lamn - lambda) / norm];
        u = un;
        lambda = lamn;
        mu = mun;
        points.push(point_from(spec, grid, &stepper.op, s, lambda, u.clone(), mu, tol_eig));
        successes += 1;
        if successes >= 3 {
            ds = (ds * 1.3).min(ds_max);
        }
        if u[0] >= settings.u0_ceiling {
            termination = Termination::FoldPassedAndCeiling;
            break;
        }
    }

    Ok(Branch {
        points,
        fold_index,
        lambda_star: None,
        termination,
        lambda1,
        settings: *settings,
        spec: Arc::clone(spec),
        grid: Arc::clone(grid),
    })
}

#[allow(clippy::too_many_arguments)]
fn refine_fold(
    stepper: &Stepper<'_>,
    spec: &Arc<ProblemSpec>,
    grid: &Arc<Grid>,
    u0_lo: f64,
    u0_hi: f64,
    lambda_hi: f64,
    profile_hi: &[f64],
    tol_eig: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let s0 = spec.nonlinearity.s0();
    let (mut lo, mut hi) = (u0_lo, u0_hi);
    let mut best = (profile_hi.to_vec(), lambda_hi, f64::INFINITY);
    let mut carrier = profile_hi.to_vec();
    let mut lam_c = lambda_hi;
    for _ in 0..70 {
        let mid = 0.5 * (lo + hi);
        let seed = scaled_seed(&carrier, grid, mid, s0);
        let (um, lamm) = stepper.solve_pinned_u0(mid, lam_c, &seed)?;
        let mum = spectrum::principal_eigenvalue(spec, grid, &um, lamm)?.mu;
        if mum.abs() < best.2.abs() {
            best = (um.clone(), lamm, mum);
        }
        if mum.abs() <= 0.1 * tol_eig {
            return Ok(best);
        }
        if mum > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        carrier = um;
        lam_c = lamm;
        if hi - lo < 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(best)
}

/// Locate the extremal parameter.
///
/// Fold case: five tightly spaced pinned solves bracketing the fold are fit
/// by a quadratic in u0; the vertex is the estimate and the fit residual the
/// error bar. Asymptote case (no fold): the lambda limit of the branch tail
/// is extrapolated and flagged singular.
pub fn find_lambda_star(branch: &mut Branch) -> Result<LambdaStar> {
    let est = match branch.fold_index {
        Some(k) => {
            let stepper = Stepper::new(&branch.spec, &branch.grid, branch.settings.tol)?;
            let fold = &branch.points[k];
            let s0 = branch.spec.nonlinearity.s0();
            let u0c = fold.u0;
            let delta = if s0.is_finite() {
                1e-3 * (s0 - u0c).min(u0c).max(1e-6)
            } else {
                1e-3 * u0c.max(1.0)
            };
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for k in -2i32..=2 {
                let u0 = u0c + k as f64 * delta;
                let seed = scaled_seed(&fold.solution.u, &branch.grid, u0, s0);
                let (_, lam) = stepper.solve_pinned_u0(u0, fold.lambda, &seed)?;
                xs.push(u0 - u0c);
                ys.push(lam);
            }
            let (c0, c1, c2) = quad_fit(&xs, &ys);
            let vertex = if c2.abs() > 1e-300 {
                c0 - c1 * c1 / (4.0 * c2)
            } else {
                ys[2]
            };
            let mut resid = 0.0f64;
            for (x, y) in xs.iter().zip(&ys) {
                resid = resid.max((c0 + c1 * x + c2 * x * x - y).abs());
            }
            let half_width = resid.max((vertex - ys[2]).abs()).max(1e-14 * vertex.abs());
            LambdaStar {
                value: vertex,
                half_width,
                kind: LambdaStarKind::Fold,
            }
        }
        None => {
            let (value, half_width) = asymptote_estimate(&branch.points)?;
            LambdaStar {
                value,
                half_width,
                kind: LambdaStarKind::SingularAsymptote,
            }
        }
    };
    branch.lambda_star = Some(est);
    Ok(est)
}

/// Lambda limit of the branch by extrema averaging (oscillating tail) or
/// Aitken extrapolation (monotone tail).
pub fn asymptote_estimate(points: &[BranchPoint]) -> Result<(f64, f64)> {
    if points.len() < 4 {
        return Err(Error::BranchIncomplete(
            "branch terminated before fold or asymptote detection".into(),
        ));
    }
    let lam: Vec<f64> = points.iter().map(|p| p.lambda).collect();
    let mut extrema = Vec::new();
    let mut extrema_idx = Vec::new();
    for i in 1..lam.len() - 1 {
        let dl = lam[i] - lam[i - 1];
        let dr = lam[i + 1] - lam[i];
        if dl * dr < 0.0 {
            extrema.push(lam[i]);
            extrema_idx.push(i);
        }
    }
    if extrema.len() == 1 {
        // single turning point followed by a monotone tail: the turning
        // value itself marks the lambda limit
        let k = extrema_idx[0];
        let lo = k.saturating_sub(2);
        let hi = (k + 2).min(lam.len() - 1);
        let hw = lam[lo..=hi]
            .iter()
            .fold(0.0f64, |m, v| m.max((v - lam[k]).abs()));
        return Ok((lam[k], hw));
    }
    if extrema.len() >= 2 {
        let take = extrema.len().min(4);
        let used = &extrema[..take];
        let mut mids = Vec::new();
        for w in used.windows(2) {
            mids.push(0.5 * (w[0] + w[1]));
        }
        let est = mids.iter().sum::<f64>() / mids.len() as f64;
        let hw = used
            .iter()
            .fold(0.0f64, |m, e| m.max((e - est).abs()));
        return Ok((est, hw));
    }
    // monotone tail: Aitken on the last three points
    let n = lam.len();
    let (l0, l1, l2) = (lam[n - 3], lam[n - 2], lam[n - 1]);
    let d1 = l1 - l0;
    let d2 = l2 - l1;
    let denom = d2 - d1;
    let est = if denom.abs() > 1e-14 * l2.abs().max(1.0) && (d2 / d1).abs() < 0.97 {
        l2 - d2 * d2 / denom
    } else {
        l2
    };
    Ok((est, (est - l2).abs() + d2.abs()))
}

fn quad_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    // least-squares fit y = c0 + c1 x + c2 x^2 via normal equations
    let n = xs.len() as f64;
    let (mut sx, mut sx2, mut sx3, mut sx4) = (0.0, 0.0, 0.0, 0.0);
    let (mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let x2 = x * x;
        sx += x;
        sx2 += x2;
        sx3 += x2 * x;
        sx4 += x2 * x2;
        sy += y;
        sxy += x * y;
        sx2y += x2 * y;
    }
    // solve the 3x3 system by Cramer
    let a = [[n, sx, sx2], [sx, sx2, sx3], [sx2, sx3, sx4]];
    let b = [sy, sxy, sx2y];
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut m0 = a;
    for i in 0..3 {
        m0[i][0] = b[i];
    }
    let mut m1 = a;
    for i in 0..3 {
        m1[i][1] = b[i];
    }
    let mut m2 = a;
    for i in 0..3 {
        m2[i][2] = b[i];
    }
    (det(&m0) / d, det(&m1) / d, det(&m2) / d)
}

/// Locate a solution at the requested lambda on the requested segment and
/// polish it with a fixed-lambda Newton solve.
pub fn solution_at(branch: &Branch, lambda: f64, segment: Segment) -> Result<Solution> {
    let star = branch
        .lambda_star
        .ok_or_else(|| Error::BranchIncomplete("call find_lambda_star first".into()))?;
    if lambda >= star.value - star.half_width {
        return Err(Error::Parameter(format!(
            "lambda = {lambda} is not strictly below lambda* = {} - {}",
            star.value, star.half_width
        )));
    }
    let fold = branch.fold_index;
    let pts: Vec<&BranchPoint> = match segment {
        Segment::Minimal => match fold {
            Some(k) => branch.points[..=k].iter().collect(),
            None => branch.points.iter().collect(),
        },
        Segment::Second => {
            let k = fold.ok_or_else(|| {
                Error::BranchIncomplete("second segment requested but branch has no fold".into())
            })?;
            branch.points[k..].iter().collect()
        }
    };
    // find bracketing pair in lambda along the segment
    let mut bracket: Option<(&BranchPoint, &BranchPoint)> = None;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.lambda - lambda) * (b.lambda - lambda) <= 0.0 {
            bracket = Some((a, b));
            break;
        }
    }
    let (a, b) = bracket.ok_or_else(|| {
        Error::BranchIncomplete(format!(
            "segment does not cover lambda = {lambda}"
        ))
    })?;
    let t = if (b.lambda - a.lambda).abs() > 1e-300 {
        (lambda - a.lambda) / (b.lambda - a.lambda)
    } else {
        0.5
    };
    let seed: Vec<f64> = a
        .solution
        .u
        .iter()
        .zip(&b.solution.u)
        .map(|(x, y)| x + t * (y - x))
        .collect();
    let mut sol = solver::newton_solve(&branch.spec, &branch.grid, lambda, &seed, branch.settings.tol)?;
    spectrum::attach_mu1(&mut sol)?;
    Ok(sol)
}

/// The refined fold-point profile (the discrete stand-in for the extremal
/// solution); its principal eigenvalue is zero to the fold tolerance.
pub fn extremal_profile(branch: &Branch) -> Result<Solution> {
    let k = branch
        .fold_index
        .ok_or_else(|| Error::BranchIncomplete("branch has no fold".into()))?;
    Ok(branch.points[k].solution.clone())
}

// ---------------------------------------------------------------------------
// Dimension sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Regular,
    Singular,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Regular => "regular",
            Classification::Singular => "singular",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub dimension: u32,
    pub lambda_star: f64,
    pub sup_u_star: f64,
    pub classification: Classification,
    pub error: Option<String>,
}

/// Classify one dimension by tracing at three grids (M/4, M/2, M).
///
/// Singular when any of the following fires:
///   - no fold is detected before the ceiling on the finest grid,
///   - (singular nonlinearity) the fold profile approaches the blow-up
///     level within `50 h_min^{2/3}` on the finest grid,
///   - sup u* at the fold grows by more than 20% under each grid doubling,
///   - the doubling increments of sup u* fail to decay (resolution-limited
///     unbounded growth: each refinement adds as much as the previous one).
fn sweep_one(
    spec: &Arc<ProblemSpec>,
    grid_m: usize,
    grading: Grading,
    settings: &ContinuationSettings,
) -> Result<SweepRow> {
    let radius = spec.radius();
    let mut sups: Vec<Option<f64>> = Vec::new();
    let mut finest: Option<Branch> = None;
    for m in [grid_m / 4, grid_m / 2, grid_m] {
        let m = m.max(64);
        let grid = Arc::new(make_grid(radius, m, grading)?);
        let mut branch = trace_branch(spec, &grid, settings)?;
        let _ = find_lambda_star(&mut branch);
        sups.push(branch.fold_index.map(|k| branch.points[k].sup_u));
        finest = Some(branch);
    }
    let branch = finest.unwrap();
    let s0 = spec.nonlinearity.s0();
    let (classification, lambda_star, sup_star) = match branch.fold_index {
        None => {
            let (value, _) = asymptote_estimate(&branch.points)?;
            let sup = branch.points.last().map(|p| p.sup_u).unwrap_or(f64::NAN);
            (Classification::Singular, value, sup)
        }
        Some(k) => {
            let sup_f = branch.points[k].sup_u;
            let mut singular = false;
            if s0.is_finite() {
                let h_min = branch.grid.min_spacing();
                if s0 - sup_f < 50.0 * h_min.powf(2.0 / 3.0) {
                    singular = true;
                }
            }
            if let (Some(s1), Some(s2), Some(s3)) = (sups[0], sups[1], sups[2]) {
                let g1 = (s2 - s1) / s1.abs().max(1e-12);
                let g2 = (s3 - s2) / s2.abs().max(1e-12);
                if g1 > 0.2 && g2 > 0.2 {
                    singular = true;
                }
                // non-decaying doubling increments: growth limited only by
                // resolution, not by the problem
                let (i1, i2) = (s2 - s1, s3 - s2);
                if i2 >= 0.5 * i1 && i2 > 0.02 * (1.0 + s3.abs()) {
                    singular = true;
                }
            } else {
                // fold appears only at the finest grid
                singular = true;
            }
            let lam = if singular {
                asymptote_estimate(&branch.points)
                    .map(|(v, _)| v)
                    .unwrap_or(branch.points[k].lambda)
            } else {
                branch
                    .lambda_star
                    .map(|e| e.value)
                    .unwrap_or(branch.points[k].lambda)
            };
            (
                if singular {
                    Classification::Singular
                } else {
                    Classification::Regular
                },
                lam,
                sup_f,
            )
        }
    };
    Ok(SweepRow {
        dimension: spec.model.dimension,
        lambda_star,
        sup_u_star: sup_star,
        classification,
        error: None,
    })
}

fn sweep_specs(template: &ProblemSpec, dims: &[u32]) -> Vec<(u32, Result<Arc<ProblemSpec>>)> {
    dims.iter()
        .map(|&n| {
            let spec = template.model.with_dimension(n).and_then(|model| {
                ProblemSpec::new(model, template.nonlinearity, template.advection.clone())
            });
            (n, spec.map(Arc::new))
        })
        .collect()
}

fn sweep_row(
    n: u32,
    spec: Result<Arc<ProblemSpec>>,
    grid_m: usize,
    grading: Grading,
    settings: &ContinuationSettings,
) -> SweepRow {
    let failed = |msg: String| SweepRow {
        dimension: n,
        lambda_star: f64::NAN,
        sup_u_star: f64::NAN,
        classification: Classification::Singular,
        error: Some(msg),
    };
    match spec {
        Ok(spec) => match sweep_one(&spec, grid_m, grading, settings) {
            Ok(row) => row,
            Err(e) => failed(e.to_string()),
        },
        Err(e) => failed(e.to_string()),
    }
}

/// Trace and classify every requested dimension; rows run on the rayon
/// pool when the `parallel` feature is enabled.
pub fn dimension_sweep(
    template: &ProblemSpec,
    dims: &[u32],
    grid_m: usize,
    grading: Grading,
    settings: &ContinuationSettings,
) -> Vec<SweepRow> {
    let specs = sweep_specs(template, dims);
    parallel::par_map(specs, |(n, spec)| {
        sweep_row(n, spec, grid_m, grading, settings)
    })
}

/// Strictly sequential variant of [`dimension_sweep`]; reference path for
/// the benchmark comparison and the no-rayon build.
pub fn dimension_sweep_seq(
    template: &ProblemSpec,
    dims: &[u32],
    grid_m: usize,
    grading: Grading,
    settings: &ContinuationSettings,
) -> Vec<SweepRow> {
    sweep_specs(template, dims)
        .into_iter()
        .map(|(n, spec)| sweep_row(n, spec, grid_m, grading, settings))
        .collect()
}

// ---------------------------------------------------------------------------
// CSV export / ingestion
// ---------------------------------------------------------------------------

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `branch.csv` (`s,lambda,u0,sup_u,mu1,stable`), optionally dumping
/// the full solution vectors as `point_<k>.csv` files next to it.
pub fn write_branch_csv(branch: &Branch, dir: &Path, dump_points: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = String::from("s,lambda,u0,sup_u,mu1,stable\n");
    for p in &branch.points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt17(p.s),
            fmt17(p.lambda),
            fmt17(p.u0),
            fmt17(p.sup_u),
            fmt17(p.mu1),
            p.stable
        ));
    }
    let mut f = std::fs::File::create(dir.join("branch.csv"))?;
    f.write_all(out.as_bytes())?;
    if dump_points {
        let r = branch.grid.nodes();
        for (k, p) in branch.points.iter().enumerate() {
            let mut body = String::from("r,u\n");
            for (ri, ui) in r.iter().zip(&p.solution.u) {
                body.push_str(&format!("{},{}\n", fmt17(*ri), fmt17(*ui)));
            }
            std::fs::write(dir.join(format!("point_{k}.csv")), body)?;
        }
    }
    Ok(())
}

/// Re-ingest `branch.csv`, re-solving each profile pinned at its recorded
/// pole value on the supplied grid.
pub fn load_branch_csv(
    spec: &Arc<ProblemSpec>,
    grid: &Arc<Grid>,
    path: &Path,
    settings: &ContinuationSettings,
) -> Result<Branch> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != "s,lambda,u0,sup_u,mu1,stable" {
        return Err(Error::Parse(format!("unexpected branch.csv header `{header}`")));
    }
    let stepper = Stepper::new(spec, grid, settings.tol)?;
    let s0 = spec.nonlinearity.s0();
    let mut carrier = vec![0.0; grid.len()];
    let mut points = Vec::new();
    let zeros = vec![0.0; grid.len()];
    let lambda1 = spectrum::principal_eigenvalue(spec, grid, &zeros, 0.0)?.mu;
    let tol_eig = settings.tol_eig_rel * lambda1.abs().max(1.0);
    let mut fold_index = None;
    let mut prev_mu = f64::INFINITY;
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::Parse(format!("branch.csv row {k}: need 6 columns")));
        }
        let s: f64 = cols[0].trim().parse().map_err(|_| bad_row(k, line))?;
        let lambda: f64 = cols[1].trim().parse().map_err(|_| bad_row(k, line))?;
        let u0: f64 = cols[2].trim().parse().map_err(|_| bad_row(k, line))?;
        let mu1: f64 = cols[4].trim().parse().map_err(|_| bad_row(k, line))?;
        let u = if u0 <= 1e-14 {
            zeros.clone()
        } else {
            let seed = scaled_seed(&carrier, grid, u0, s0);
            let (u, lam_re) = stepper.solve_pinned_u0(u0, lambda, &seed)?;
            if (lam_re - lambda).abs() > 1e-6 * (1.0 + lambda.abs()) {
                return Err(Error::Parse(format!(
                    "branch.csv row {k}: recomputed lambda {lam_re} differs from recorded {lambda}"
                )));
            }
            u
        };
        carrier = u.clone();
        if fold_index.is_none() && prev_mu > 0.0 && mu1 <= 0.0 && !points.is_empty() {
            fold_index = Some(points.len());
        }
        prev_mu = mu1;
        points.push(point_from(spec, grid, &stepper.op, s, lambda, u, mu1, tol_eig));
    }
    if points.is_empty() {
        return Err(Error::Parse("branch.csv has no rows".into()));
    }
    Ok(Branch {
        points,
        fold_index,
        lambda_star: None,
        termination: Termination::MaxSteps,
        lambda1,
        settings: *settings,
        spec: Arc::clone(spec),
        grid: Arc::clone(grid),
    })
}

fn bad_row(k: usize, line: &str) -> Error {
    Error::Parse(format!("branch.csv row {k}: cannot parse `{line}`"))
}
