//! Geometry, nonlinearity and advection data of the radial problem
//!
//! ```text
//!   -(e^a psi^{N-1} u')' + e^a psi^{N-1} C(r) u' = lambda e^a psi^{N-1} f(u),
//!   u'(0) = u(R) = 0,
//! ```
//!
//! together with all pointwise evaluations derived from them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interp::MonotoneCubic;

/// Default truncation cap standing in for an infinite blow-up level when
/// building the C^1-truncated nonlinearity (Gelfand / power case).
pub const DEFAULT_TRUNCATION_CAP: f64 = 50.0;

// ---------------------------------------------------------------------------
// Radial scalar fields
// ---------------------------------------------------------------------------

/// A scalar coefficient function of the radius, either closed form or tabulated.
#[derive(Debug, Clone)]
pub enum RadialFn {
    Zero,
    Constant(f64),
    Expr(Expr),
    Table(MonotoneCubic),
}

impl RadialFn {
    pub fn parse(src: &str) -> Result<RadialFn> {
        let trimmed = src.trim();
        if let Ok(c) = trimmed.parse::<f64>() {
            return Ok(if c == 0.0 {
                RadialFn::Zero
            } else {
                RadialFn::Constant(c)
            });
        }
        Ok(RadialFn::Expr(Expr::parse(trimmed)?))
    }

    /// Load a two-column CSV `(r, value)`; strictly increasing r, first row r=0.
    pub fn from_csv_str(data: &str) -> Result<RadialFn> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, line) in data.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(',');
            let (a, b) = (it.next(), it.next());
            let (a, b) = match (a, b) {
                (Some(a), Some(b)) => (a.trim(), b.trim()),
                _ => return Err(Error::Parse(format!("csv line {}: need two columns", k + 1))),
            };
            if xs.is_empty() && a.parse::<f64>().is_err() {
                continue; // header row
            }
            let r: f64 = a
                .parse()
                .map_err(|_| Error::Parse(format!("csv line {}: bad radius `{a}`", k + 1)))?;
            let v: f64 = b
                .parse()
                .map_err(|_| Error::Parse(format!("csv line {}: bad value `{b}`", k + 1)))?;
            xs.push(r);
            ys.push(v);
        }
        if xs.first().copied() != Some(0.0) {
            return Err(Error::Parse("tabulated field must start at r = 0".into()));
        }
        Ok(RadialFn::Table(MonotoneCubic::new(xs, ys)?))
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            RadialFn::Zero => 0.0,
            RadialFn::Constant(c) => *c,
            RadialFn::Expr(e) => e.eval(r),
            RadialFn::Table(t) => t.eval(r),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, RadialFn::Zero)
    }
}

// ---------------------------------------------------------------------------
// Riemannian model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceForm {
    Euclidean,
    Hyperbolic,
    Spherical,
    Custom,
}

/// Warped-product model `ds^2 = dr^2 + psi(r)^2 dtheta^2` on a geodesic ball.
#[derive(Debug, Clone)]
pub struct RiemannianModel {
    pub kind: SpaceForm,
    pub dimension: u32,
    pub radius: f64,
    custom_psi: Option<RadialFn>,
}

impl RiemannianModel {
    pub fn new(kind: SpaceForm, dimension: u32, radius: f64) -> Result<RiemannianModel> {
        if kind == SpaceForm::Custom {
            return Err(Error::Parameter(
                "custom space form needs an explicit warping function".into(),
            ));
        }
        let m = RiemannianModel {
            kind,
            dimension,
            radius,
            custom_psi: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn custom(dimension: u32, radius: f64, psi: RadialFn) -> Result<RiemannianModel> {
        let m = RiemannianModel {
            kind: SpaceForm::Custom,
            dimension,
            radius,
            custom_psi: Some(psi),
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.dimension < 1 {
            return Err(Error::Parameter("dimension must be >= 1".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Parameter("radius must be positive and finite".into()));
        }
        if self.kind == SpaceForm::Spherical && self.radius >= std::f64::consts::PI {
            return Err(Error::Parameter("spherical radius must satisfy R < pi".into()));
        }
        // psi > 0 on (0, R]; pole regularity psi(r)/r -> 1 for N >= 2
        let samples = 64;
        for k in 1..=samples {
            let r = self.radius * k as f64 / samples as f64;
            if !(self.psi(r) > 0.0) {
                return Err(Error::Parameter(format!(
                    "warping function must be positive on (0, R]; psi({r}) <= 0"
                )));
            }
        }
        if self.dimension >= 2 {
            let r = self.radius.min(1.0) * 1e-5;
            let ratio = self.psi(r) / r;
            if (ratio - 1.0).abs() > 1e-2 {
                return Err(Error::Parameter(format!(
                    "pole regularity violated: psi(r)/r = {ratio} near r = 0"
                )));
            }
        }
        Ok(())
    }

    pub fn psi(&self, r: f64) -> f64 {
        match self.kind {
            SpaceForm::Euclidean => r,
            SpaceForm::Hyperbolic => r.sinh(),
            SpaceForm::Spherical => r.sin(),
            SpaceForm::Custom => self.custom_psi.as_ref().unwrap().eval(r),
        }
    }

    pub fn psi_prime(&self, r: f64) -> f64 {
        match self.kind {
            SpaceForm::Euclidean => 1.0,
            SpaceForm::Hyperbolic => r.cosh(),
            SpaceForm::Spherical => r.cos(),
            SpaceForm::Custom => {
                let f = self.custom_psi.as_ref().unwrap();
                let h = 1e-6 * self.radius.max(1.0);
                let lo = (r - h).max(0.0);
                (f.eval(r + h) - f.eval(lo)) / (r + h - lo)
            }
        }
    }

    /// Same geometry with a different dimension, revalidated.
    pub fn with_dimension(&self, dimension: u32) -> Result<RiemannianModel> {
        let m = RiemannianModel {
            kind: self.kind,
            dimension,
            radius: self.radius,
            custom_psi: self.custom_psi.clone(),
        };
        m.validate()?;
        Ok(m)
    }

    /// `psi(r)^{N-1}`, with the N = 1 case evaluating to 1 for every r.
    pub fn psi_pow(&self, r: f64) -> f64 {
        if self.dimension == 1 {
            1.0
        } else {
            self.psi(r).powi(self.dimension as i32 - 1)
        }
    }
}

// ---------------------------------------------------------------------------
// Nonlinearity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityKind {
    Gelfand,
    Power,
    Mems,
}

/// One of the three source terms: `e^s`, `(1+s)^m` or `1/(1-s)^2`.
#[derive(Debug, Clone, Copy)]
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    /// Exponent of the power case; ignored otherwise.
    pub m: f64,
}

impl Nonlinearity {
    pub fn gelfand() -> Nonlinearity {
        Nonlinearity {
            kind: NonlinearityKind::Gelfand,
            m: f64::NAN,
        }
    }

    pub fn mems() -> Nonlinearity {
        Nonlinearity {
            kind: NonlinearityKind::Mems,
            m: f64::NAN,
        }
    }

    pub fn power(m: f64) -> Result<Nonlinearity> {
        if !(m > 1.0) {
            return Err(Error::Parameter("power exponent must satisfy m > 1".into()));
        }
        Ok(Nonlinearity {
            kind: NonlinearityKind::Power,
            m,
        })
    }

    /// Blow-up level `s0`.
    pub fn s0(&self) -> f64 {
        match self.kind {
            NonlinearityKind::Mems => 1.0,
            _ => f64::INFINITY,
        }
    }

    /// Critical dimension of the associated extremal-solution problem.
    pub fn critical_dimension(&self) -> u32 {
        match self.kind {
            NonlinearityKind::Gelfand => 10,
            NonlinearityKind::Power => 11,
            NonlinearityKind::Mems => 8,
        }
    }

    fn check_domain(&self, s: f64) -> Result<()> {
        if s < 0.0 {
            return Err(Error::Domain(format!("nonlinearity argument {s} < 0")));
        }
        if s >= self.s0() {
            return Err(Error::BlowUp);
        }
        Ok(())
    }

    /// f(s), validated against the domain `[0, s0)`.
    pub fn eval_f(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(self.f_raw(s))
    }

    /// f'(s), validated.
    pub fn eval_fp(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(self.fp_raw(s))
    }

    /// f''(s), validated.
    pub fn eval_fpp(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match self.kind {
            NonlinearityKind::Gelfand => s.exp(),
            NonlinearityKind::Power => self.m * (self.m - 1.0) * (1.0 + s).powf(self.m - 2.0),
            NonlinearityKind::Mems => 6.0 / (1.0 - s).powi(4),
        })
    }

    /// Unchecked f(s); callers must keep `s` inside `[0, s0)`.
    pub fn f_raw(&self, s: f64) -> f64 {
        match self.kind {
            NonlinearityKind::Gelfand => s.exp(),
            NonlinearityKind::Power => (1.0 + s).powf(self.m),
            NonlinearityKind::Mems => 1.0 / ((1.0 - s) * (1.0 - s)),
        }
    }

    /// Unchecked f'(s).
    pub fn fp_raw(&self, s: f64) -> f64 {
        match self.kind {
            NonlinearityKind::Gelfand => s.exp(),
            NonlinearityKind::Power => self.m * (1.0 + s).powf(self.m - 1.0),
            NonlinearityKind::Mems => 2.0 / (1.0 - s).powi(3),
        }
    }

    /// Truncation level of the regularized nonlinearity: `s0 - eps` with a
    /// finite cap substituted when `s0` is infinite.
    pub fn truncation_level(&self, eps: f64, cap: f64) -> f64 {
        if self.s0().is_finite() {
            self.s0() - eps
        } else {
            cap - eps
        }
    }

    /// C^1-truncated nonlinearity `g_eps`: equals f below the truncation
    /// level and switches to C^1-matched power growth `~ u^p` above it.
    pub fn eval_truncated_f(&self, s: f64, eps: f64, p: f64, cap: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Parameter("truncation eps must lie in (0,1)".into()));
        }
        if !(p > 1.0) {
            return Err(Error::Parameter("truncation exponent must satisfy p > 1".into()));
        }
        if s < 0.0 {
            return Err(Error::Domain(format!("nonlinearity argument {s} < 0")));
        }
        let level = self.truncation_level(eps, cap);
        if s < level {
            return Ok(self.f_raw(s));
        }
        Ok(match self.kind {
            NonlinearityKind::Mems => {
                // 1/eps^2 - 2(1-eps)/(p eps^3) + 2 u^p/(p eps^3 (1-eps)^{p-1})
                1.0 / (eps * eps) - 2.0 * (1.0 - eps) / (p * eps.powi(3))
                    + 2.0 * s.powf(p) / (p * eps.powi(3) * (1.0 - eps).powf(p - 1.0))
            }
            _ => {
                let fl = self.f_raw(level);
                let fpl = self.fp_raw(level);
                fl - fpl * level / p + fpl * s.powf(p) / (p * level.powf(p - 1.0))
            }
        })
    }

    /// Derivative of `eval_truncated_f` in `s`.
    pub fn eval_truncated_fp(&self, s: f64, eps: f64, p: f64, cap: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Parameter("truncation eps must lie in (0,1)".into()));
        }
        if s < 0.0 {
            return Err(Error::Domain(format!("nonlinearity argument {s} < 0")));
        }
        let level = self.truncation_level(eps, cap);
        if s < level {
            return Ok(self.fp_raw(s));
        }
        Ok(match self.kind {
            NonlinearityKind::Mems => {
                2.0 * s.powf(p - 1.0) / (eps.powi(3) * (1.0 - eps).powf(p - 1.0))
            }
            _ => {
                let fpl = self.fp_raw(level);
                fpl * s.powf(p - 1.0) / level.powf(p - 1.0)
            }
        })
    }
}

/// Critical dimension table lookup (10 / 11 / 8).
pub fn critical_dimension(nl: &Nonlinearity) -> u32 {
    nl.critical_dimension()
}

// ---------------------------------------------------------------------------
// Advection
// ---------------------------------------------------------------------------

/// Radial advection data in decomposed form `A = -grad a + C`.
///
/// `a` is the potential part (entering the weight `e^a psi^{N-1}`) and `C`
/// the residual radial component of the first-order term.
#[derive(Debug, Clone)]
pub struct AdvectionField {
    pub a: RadialFn,
    pub c: RadialFn,
}

impl AdvectionField {
    pub fn none() -> AdvectionField {
        AdvectionField {
            a: RadialFn::Zero,
            c: RadialFn::Zero,
        }
    }

    pub fn new(a: RadialFn, c: RadialFn) -> AdvectionField {
        AdvectionField { a, c }
    }

    /// True when the residual component vanishes identically, i.e. the field
    /// is a pure gradient in the stored sign convention.
    pub fn is_gradient(&self) -> bool {
        self.c.is_zero()
    }
}

/// Split a raw radial field into `A = -grad a + C`.
///
/// On a geodesic ball a radial divergence-free component regular at the pole
/// vanishes identically, so the decomposition is `a(r) = -int_0^r A(s) ds`
/// with `C = 0`. The potential is tabulated by cumulative Simpson quadrature.
pub fn decompose_radial<F: Fn(f64) -> f64>(a_raw: F, model: &RiemannianModel) -> AdvectionField {
    let n = 2048usize;
    let h = model.radius / n as f64;
    let mut xs = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    xs.push(0.0);
    ys.push(0.0);
    let mut acc = 0.0;
    for i in 0..n {
        let r0 = i as f64 * h;
        let r1 = r0 + h;
        acc += h / 6.0 * (a_raw(r0) + 4.0 * a_raw(0.5 * (r0 + r1)) + a_raw(r1));
        xs.push(r1);
        ys.push(-acc);
    }
    let table = MonotoneCubic::new(xs, ys).expect("uniform sampling is strictly increasing");
    AdvectionField {
        a: RadialFn::Table(table),
        c: RadialFn::Zero,
    }
}

// ---------------------------------------------------------------------------
// Problem specification
// ---------------------------------------------------------------------------

/// Full input of a solve: geometry + nonlinearity + advection.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub model: RiemannianModel,
    pub nonlinearity: Nonlinearity,
    pub advection: AdvectionField,
}

impl ProblemSpec {
    pub fn new(
        model: RiemannianModel,
        nonlinearity: Nonlinearity,
        advection: AdvectionField,
    ) -> Result<ProblemSpec> {
        let spec = ProblemSpec {
            model,
            nonlinearity,
            advection,
        };
        let a0 = spec.advection.a.eval(0.0);
        if !a0.is_finite() {
            return Err(Error::Parameter("advection potential a(0) must be finite".into()));
        }
        for k in 1..=64 {
            let r = spec.model.radius * k as f64 / 64.0;
            if !(spec.weight(r) > 0.0) {
                return Err(Error::Parameter(format!(
                    "weight e^a psi^(N-1) must be positive on (0, R]; failed at r = {r}"
                )));
            }
        }
        Ok(spec)
    }

    pub fn shared(self) -> Arc<ProblemSpec> {
        Arc::new(self)
    }

    /// Radial weight `w(r) = e^{a(r)} psi(r)^{N-1}`.
    pub fn weight(&self, r: f64) -> f64 {
        self.advection.a.eval(r).exp() * self.model.psi_pow(r)
    }

    /// Checked variant of [`ProblemSpec::weight`] for the public evaluation op.
    pub fn eval_weight(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r > self.model.radius {
            return Err(Error::Domain(format!(
                "radius {r} outside [0, {}]",
                self.model.radius
            )));
        }
        Ok(self.weight(r))
    }

    pub fn radius(&self) -> f64 {
        self.model.radius
    }
}
