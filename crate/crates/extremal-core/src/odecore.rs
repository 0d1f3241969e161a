//! Radial grid, banded discretization of the weighted operator, linear
//! solves and weighted quadrature.

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grading {
    Uniform,
    BoundaryRefined,
}

/// Radial mesh `0 = r_0 < r_1 < ... < r_M = R`.
#[derive(Debug, Clone)]
pub struct Grid {
    nodes: Vec<f64>,
    pub grading: Grading,
}

/// Build a grid with `M + 1` nodes. Boundary-refined grading concentrates
/// nodes near r = R with adjacent spacing ratio bounded by 2^1.5 - 1 < 2.
pub fn make_grid(radius: f64, m: usize, grading: Grading) -> Result<Grid> {
    if m < 16 {
        return Err(Error::Parameter(format!("grid needs M >= 16, got {m}")));
    }
    if !(radius > 0.0) {
        return Err(Error::Parameter("grid radius must be positive".into()));
    }
    let mut nodes = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let x = i as f64 / m as f64;
        let v = match grading {
            Grading::Uniform => radius * x,
            Grading::BoundaryRefined => radius * (1.0 - (1.0 - x).powf(1.5)),
        };
        nodes.push(v);
    }
    nodes[0] = 0.0;
    nodes[m] = radius;
    Ok(Grid { nodes, grading })
}

impl Grid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn m(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn radius(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Tridiagonal factorization with partial pivoting
// ---------------------------------------------------------------------------

/// LU factorization of a tridiagonal matrix with row partial pivoting.
/// Pivoting introduces one extra superdiagonal of fill-in.
///
/// Rows are equilibrated by their infinity norms before factoring: the
/// radial weight spans many orders of magnitude across rows (r^{N-1} at the
/// pole against 1/h^2 at the boundary) and unscaled partial pivoting picks
/// poor pivots on such systems.
#[derive(Debug, Clone)]
pub struct TriLu {
    n: usize,
    low: Vec<f64>,   // multipliers
    diag: Vec<f64>,  // U main diagonal
    up1: Vec<f64>,   // U first superdiagonal
    up2: Vec<f64>,   // U second superdiagonal (fill-in)
    swapped: Vec<bool>,
    row_scale: Vec<f64>,
}

impl TriLu {
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<TriLu> {
        let n = diag.len();
        let mut a: Vec<f64> = sub.to_vec(); // a[i] couples row i to i-1
        let mut b: Vec<f64> = diag.to_vec();
        let mut c: Vec<f64> = sup.to_vec(); // c[i] couples row i to i+1
        let mut row_scale = vec![1.0; n];
        for i in 0..n {
            let m = a[i].abs().max(b[i].abs()).max(c[i].abs());
            if m > 0.0 && m.is_finite() {
                row_scale[i] = 1.0 / m;
                a[i] *= row_scale[i];
                b[i] *= row_scale[i];
                c[i] *= row_scale[i];
            }
        }
        let mut d = vec![0.0; n];
        let mut low = vec![0.0; n];
        let mut swapped = vec![false; n];
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = (1e-300 * scale).max(f64::MIN_POSITIVE);
        for i in 0..n - 1 {
            if b[i].abs() >= a[i + 1].abs() {
                if b[i].abs() < tiny {
                    return Err(Error::SingularOperator);
                }
                let m = a[i + 1] / b[i];
                low[i] = m;
                b[i + 1] -= m * c[i];
                // d[i] stays zero
            } else {
                // swap rows i and i+1
                swapped[i] = true;
                let m = b[i] / a[i + 1];
                low[i] = m;
                let (bi, ci, di) = (
                    a[i + 1],
                    b[i + 1],
                    if i + 2 < n { c[i + 1] } else { 0.0 },
                );
                let new_b1 = c[i] - m * ci;
                let new_c1 = -m * di;
                b[i] = bi;
                c[i] = ci;
                d[i] = di;
                b[i + 1] = new_b1;
                if i + 2 < n {
                    c[i + 1] = new_c1;
                }
            }
        }
        if b[n - 1].abs() < tiny {
            return Err(Error::SingularOperator);
        }
        Ok(TriLu {
            n,
            low,
            diag: b,
            up1: c,
            up2: d,
            swapped,
            row_scale,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = rhs
            .iter()
            .zip(&self.row_scale)
            .map(|(v, s)| v * s)
            .collect();
        for i in 0..n - 1 {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.low[i] * x[i];
        }
        x[n - 1] /= self.diag[n - 1];
        if n >= 2 {
            x[n - 2] = (x[n - 2] - self.up1[n - 2] * x[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - self.up1[i] * x[i + 1] - self.up2[i] * x[i + 2]) / self.diag[i];
        }
        x
    }
}

// ---------------------------------------------------------------------------
// Weighted operator
// ---------------------------------------------------------------------------

/// Tridiagonal discretization of
/// `L[u] = -(w u')' + w C u' + w (c + V) u` with `w = e^a psi^{N-1}`,
/// a regularity row at the pole and `u(R) = 0` enforced exactly.
///
/// Interior rows carry the operator value multiplied by `w(r_i)`
/// (`row_weight[i]`); the pole row is the finite-volume balance over
/// `[0, r_{1/2}]` divided by the cell mass, i.e. the raw operator value.
#[derive(Debug, Clone)]
pub struct WeightedOperator {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    /// Factor multiplying the raw differential-operator value in each row.
    pub row_weight: Vec<f64>,
    /// Quadrature weights making `diag(cell_weight) * A` symmetric for C = 0.
    pub cell_weight: Vec<f64>,
    pub shift: f64,
    pub potential: Vec<f64>,
    /// Rows where centered advection broke the M-matrix pattern and
    /// first-order upwinding was substituted.
    pub upwind_rows: usize,
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Assemble the discrete operator with shift `c >= 0` and nodal potential `V`.
pub fn assemble(
    spec: &ProblemSpec,
    grid: &Grid,
    shift_c: f64,
    potential: Option<&[f64]>,
) -> Result<WeightedOperator> {
    let r = grid.nodes();
    let m = grid.m();
    if let Some(v) = potential {
        if v.len() != m + 1 {
            return Err(Error::Parameter("potential length must match grid".into()));
        }
    }
    let w = |x: f64| spec.weight(x);
    let mut sub = vec![0.0; m + 1];
    let mut diag = vec![0.0; m + 1];
    let mut sup = vec![0.0; m + 1];
    let mut row_weight = vec![1.0; m + 1];
    let mut cell_weight = vec![0.0; m + 1];
    let pot = |i: usize| potential.map_or(0.0, |v| v[i]);
    let mut upwind_rows = 0usize;

    // pole row: finite-volume balance over [0, r_{1/2}] divided by the cell
    // mass W0 = int_0^{r_1/2} w dr; the left face flux vanishes by u'(0) = 0
    // (and by w(0) = 0 when N >= 2), which encodes the symmetry condition.
    let rh = 0.5 * (r[0] + r[1]);
    let w0_cell = simpson(w, 0.0, rh, 32).max(1e-300);
    let wface0 = w(rh);
    let h0 = r[1] - r[0];
    diag[0] = wface0 / (h0 * w0_cell) + (shift_c + pot(0));
    sup[0] = -wface0 / (h0 * w0_cell);
    row_weight[0] = 1.0;
    cell_weight[0] = w0_cell;

    for i in 1..m {
        let hm = r[i] - r[i - 1];
        let hp = r[i + 1] - r[i];
        let dv = 0.5 * (r[i + 1] - r[i - 1]);
        let wm = w(r[i] - 0.5 * hm);
        let wp = w(r[i] + 0.5 * hp);
        let wi = w(r[i]);
        let lm = wm / (hm * dv);
        let lp = wp / (hp * dv);
        let mut s = -lm;
        let mut d = lm + lp + wi * (shift_c + pot(i));
        let mut u = -lp;
        let ci = spec.advection.c.eval(r[i]);
        if ci != 0.0 {
            // centered first derivative on a nonuniform grid
            let cm = -hp / (hm * (hm + hp));
            let cp = hm / (hp * (hm + hp));
            let cc = (hp - hm) / (hm * hp);
            let (sc, dc, uc) = (wi * ci * cm, wi * ci * cc, wi * ci * cp);
            if s + sc > 0.0 || u + uc > 0.0 {
                // centered advection breaks the sign pattern: upwind
                upwind_rows += 1;
                if ci > 0.0 {
                    s += -wi * ci / hm;
                    d += wi * ci / hm;
                } else {
                    d += -wi * ci / hp;
                    u += wi * ci / hp;
                }
            } else {
                s += sc;
                d += dc;
                u += uc;
            }
        }
        if !(s.is_finite() && d.is_finite() && u.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite operator coefficient at node {i} (r = {})",
                r[i]
            )));
        }
        sub[i] = s;
        diag[i] = d;
        sup[i] = u;
        row_weight[i] = wi;
        cell_weight[i] = dv;
    }

    // Dirichlet row u(R) = 0
    diag[m] = 1.0;
    row_weight[m] = 1.0;
    cell_weight[m] = 0.5 * (r[m] - r[m - 1]);

    Ok(WeightedOperator {
        sub,
        diag,
        sup,
        row_weight,
        cell_weight,
        shift: shift_c,
        potential: potential.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; m + 1]),
        upwind_rows,
    })
}

impl WeightedOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Matrix-vector product `A u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * u[i];
            if i > 0 {
                v += self.sub[i] * u[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * u[i + 1];
            }
            out[i] = v;
        }
        out
    }

    /// True when off-diagonals are nonpositive and rows weakly diagonally
    /// dominant (the discrete maximum-principle sign pattern).
    pub fn is_m_matrix(&self) -> bool {
        let n = self.diag.len();
        for i in 0..n {
            if i > 0 && self.sub[i] > 1e-14 {
                return false;
            }
            if i + 1 < n && self.sup[i] > 1e-14 {
                return false;
            }
            let off = (if i > 0 { self.sub[i].abs() } else { 0.0 })
                + (if i + 1 < n { self.sup[i].abs() } else { 0.0 });
            if self.diag[i] < off - 1e-9 * self.diag[i].abs().max(1.0) {
                return false;
            }
        }
        true
    }
}

/// Direct solve `A u = rhs` with partial pivoting and iterative refinement;
/// the returned solution satisfies `||A u - rhs||_inf <= 1e-10 ||rhs||_inf`
/// whenever the conditioning allows it.
pub fn solve_linear(op: &WeightedOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    let lu = TriLu::factor(&op.sub, &op.diag, &op.sup)?;
    let mut x = lu.solve(rhs);
    let rhs_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for _ in 0..3 {
        let ax = op.apply(&x);
        let mut res_norm = 0.0f64;
        let mut res = vec![0.0; rhs.len()];
        for i in 0..rhs.len() {
            res[i] = rhs[i] - ax[i];
            res_norm = res_norm.max(res[i].abs());
        }
        if res_norm <= 1e-12 * rhs_norm {
            break;
        }
        let dx = lu.solve(&res);
        for i in 0..x.len() {
            x[i] += dx[i];
        }
    }
    Ok(x)
}

/// `( int_0^R density |values|^p dr )^{1/p}` by composite trapezoid.
pub fn weighted_lp_norm(grid: &Grid, density: &[f64], values: &[f64], p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::Parameter(format!("lp norm needs p >= 1, got {p}")));
    }
    let r = grid.nodes();
    if density.len() != r.len() || values.len() != r.len() {
        return Err(Error::Parameter("density/values length must match grid".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("values must be finite".into()));
    }
    if density.iter().any(|d| *d < 0.0) {
        return Err(Error::Parameter("density must be nonnegative".into()));
    }
    let mut acc = 0.0;
    for i in 0..r.len() - 1 {
        let h = r[i + 1] - r[i];
        let fi = density[i] * values[i].abs().powf(p);
        let fj = density[i + 1] * values[i + 1].abs().powf(p);
        acc += 0.5 * h * (fi + fj);
    }
    Ok(acc.powf(1.0 / p))
}

/// Integral `int_0^{r_i} density dr` by trapezoid, returned for every node.
pub fn cumulative_trapezoid(grid: &Grid, density: &[f64]) -> Vec<f64> {
    let r = grid.nodes();
    let mut out = vec![0.0; r.len()];
    for i in 1..r.len() {
        out[i] = out[i - 1] + 0.5 * (r[i] - r[i - 1]) * (density[i] + density[i - 1]);
    }
    out
}

/// Outward flux `-e^a psi^{N-1} u'(r_i)` by centered differencing.
pub fn flux(spec: &ProblemSpec, grid: &Grid, u: &[f64], i: usize) -> Result<f64> {
    let r = grid.nodes();
    if i >= r.len() || u.len() != r.len() {
        return Err(Error::Parameter("flux index out of range".into()));
    }
    let du = if i == 0 {
        0.0 // symmetry condition
    } else if i == r.len() - 1 {
        (u[i] - u[i - 1]) / (r[i] - r[i - 1])
    } else {
        let hm = r[i] - r[i - 1];
        let hp = r[i + 1] - r[i];
        -hp / (hm * (hm + hp)) * u[i - 1] + (hp - hm) / (hm * hp) * u[i]
            + hm / (hp * (hm + hp)) * u[i + 1]
    };
    Ok(-spec.weight(r[i]) * du)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AdvectionField, Nonlinearity, ProblemSpec, RiemannianModel, SpaceForm};
    use approx::assert_relative_eq;

    fn spec(n: u32, kind: SpaceForm) -> ProblemSpec {
        ProblemSpec::new(
            RiemannianModel::new(kind, n, 1.0).unwrap(),
            Nonlinearity::gelfand(),
            AdvectionField::none(),
        )
        .unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = make_grid(1.0, 16, Grading::Uniform).unwrap();
        assert_eq!(g.nodes()[4], 0.25);
        assert_eq!(g.nodes()[8], 0.5);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[16], 1.0);
        let g = make_grid(2.0, 16, Grading::Uniform).unwrap();
        assert_relative_eq!(g.nodes()[1] - g.nodes()[0], 0.125);
        let g = make_grid(1.0, 64, Grading::BoundaryRefined).unwrap();
        let n = g.nodes();
        let first = n[1] - n[0];
        let last = n[64] - n[63];
        assert!(last < first, "boundary-refined grading must shrink near R");
        for w in n.windows(3) {
            let (h0, h1) = (w[1] - w[0], w[2] - w[1]);
            let ratio = (h0 / h1).max(h1 / h0);
            assert!(ratio <= 2.0 + 1e-12, "spacing ratio {ratio} > 2");
        }
        assert!(make_grid(1.0, 8, Grading::Uniform).is_err());
    }

    #[test]
    fn interior_row_is_standard_laplacian_for_flat_weight() {
        let s = spec(1, SpaceForm::Euclidean);
        let g = make_grid(1.0, 32, Grading::Uniform).unwrap();
        let op = assemble(&s, &g, 0.0, None).unwrap();
        let h = 1.0 / 32.0;
        for i in 1..31 {
            assert_relative_eq!(op.sub[i], -1.0 / (h * h), max_relative = 1e-12);
            assert_relative_eq!(op.diag[i], 2.0 / (h * h), max_relative = 1e-12);
            assert_relative_eq!(op.sup[i], -1.0 / (h * h), max_relative = 1e-12);
        }
    }

    #[test]
    fn affine_function_has_zero_interior_residual() {
        let s = spec(1, SpaceForm::Euclidean);
        let g = make_grid(1.0, 64, Grading::Uniform).unwrap();
        let op = assemble(&s, &g, 0.0, None).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| 2.0 * (1.0 - r)).collect();
        let au = op.apply(&u);
        for i in 1..g.m() {
            assert!(au[i].abs() < 1e-9, "interior residual {} at {i}", au[i]);
        }
    }

    #[test]
    fn radial_laplacian_of_parabola_is_constant() {
        // -(r^2 u')'/r^2 = 6 for u = 1 - r^2 in N = 3
        let s = spec(3, SpaceForm::Euclidean);
        for m in [64usize, 128, 256] {
            let g = make_grid(1.0, m, Grading::Uniform).unwrap();
            let op = assemble(&s, &g, 0.0, None).unwrap();
            let u: Vec<f64> = g.nodes().iter().map(|r| 1.0 - r * r).collect();
            let au = op.apply(&u);
            let h = 1.0 / m as f64;
            for i in 0..g.m() {
                let r = g.nodes()[i];
                if r < 0.15 {
                    continue; // relative truncation is O(1) against the vanishing weight
                }
                let val = au[i] / op.row_weight[i];
                assert!(
                    (val - 6.0).abs() < 40.0 * h * h + 1e-9,
                    "m={m} i={i} value {val}"
                );
            }
        }
    }

    #[test]
    fn manufactured_convergence_order_all_geometries() {
        // residual of the discrete operator applied to a smooth manufactured
        // solution decreases at order >= 1.9 under grid doubling
        for kind in [SpaceForm::Euclidean, SpaceForm::Hyperbolic, SpaceForm::Spherical] {
            for n in [2u32, 3] {
                let s = spec(n, kind);
                let mut errs = Vec::new();
                for m in [64usize, 128, 256] {
                    let g = make_grid(1.0, m, Grading::Uniform).unwrap();
                    let op = assemble(&s, &g, 0.0, None).unwrap();
                    let u: Vec<f64> = g
                        .nodes()
                        .iter()
                        .map(|r| (std::f64::consts::FRAC_PI_2 * r).cos())
                        .collect();
                    let au = op.apply(&u);
                    let exact = |r: f64| {
                        // -(w u')' / w with u = cos(pi r / 2)
                        let c = std::f64::consts::FRAC_PI_2;
                        let up = -c * (c * r).sin();
                        let upp = -c * c * (c * r).cos();
                        let logw_p = (n as f64 - 1.0) * s.model.psi_prime(r) / s.model.psi(r);
                        -(upp + logw_p * up)
                    };
                    let mut emax = 0.0f64;
                    for i in 1..g.m() {
                        let r = g.nodes()[i];
                        if r < 0.2 {
                            continue;
                        }
                        emax = emax.max((au[i] / op.row_weight[i] - exact(r)).abs());
                    }
                    errs.push(emax);
                }
                let o1 = (errs[0] / errs[1]).log2();
                let o2 = (errs[1] / errs[2]).log2();
                assert!(
                    o1 >= 1.9 && o2 >= 1.9,
                    "{kind:?} N={n}: orders {o1:.2}, {o2:.2} (errors {errs:?})"
                );
            }
        }
    }

    #[test]
    fn torsion_solves_match_closed_forms() {
        // N=1: u=(1-r^2)/2 ; N=3: u=(1-r^2)/6
        for (n, scale) in [(1u32, 2.0), (3u32, 6.0)] {
            let s = spec(n, SpaceForm::Euclidean);
            let g = make_grid(1.0, 256, Grading::Uniform).unwrap();
            let op = assemble(&s, &g, 0.0, None).unwrap();
            let rhs: Vec<f64> = (0..g.len())
                .map(|i| if i == g.m() { 0.0 } else { op.row_weight[i] })
                .collect();
            let u = solve_linear(&op, &rhs).unwrap();
            for (i, r) in g.nodes().iter().enumerate() {
                let exact = (1.0 - r * r) / scale;
                assert!(
                    (u[i] - exact).abs() < 1e-4,
                    "N={n} torsion mismatch at r={r}: {} vs {exact}",
                    u[i]
                );
            }
            // residual postcondition
            let au = op.apply(&u);
            let rn = au
                .iter()
                .zip(&rhs)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale_rhs = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(rn <= 1e-10 * scale_rhs.max(1.0), "residual {rn}");
        }
    }

    #[test]
    fn factor_rejects_singular_matrix() {
        let z = [0.0; 4];
        assert!(matches!(
            TriLu::factor(&z, &z, &z),
            Err(crate::error::Error::SingularOperator)
        ));
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let s = spec(2, SpaceForm::Euclidean);
        let g = make_grid(1.0, 32, Grading::Uniform).unwrap();
        let op = assemble(&s, &g, 1.0, None).unwrap();
        let u = solve_linear(&op, &vec![0.0; g.len()]).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn lp_norm_examples() {
        let g = make_grid(1.0, 1024, Grading::Uniform).unwrap();
        let ones = vec![1.0; g.len()];
        for p in [1.0, 2.0, 3.5] {
            assert_relative_eq!(
                weighted_lp_norm(&g, &ones, &ones, p).unwrap(),
                1.0,
                epsilon = 1e-12
            );
        }
        let vals: Vec<f64> = g.nodes().to_vec();
        assert_relative_eq!(
            weighted_lp_norm(&g, &ones, &vals, 2.0).unwrap(),
            (1.0f64 / 3.0).sqrt(),
            epsilon = 1e-5
        );
        let dens: Vec<f64> = g.nodes().iter().map(|r| r * r).collect();
        assert_relative_eq!(
            weighted_lp_norm(&g, &dens, &ones, 1.0).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-5
        );
        assert!(weighted_lp_norm(&g, &ones, &ones, 0.5).is_err());
    }

    #[test]
    fn trapezoid_is_exact_for_piecewise_linear() {
        let g = make_grid(1.0, 64, Grading::BoundaryRefined).unwrap();
        let ones = vec![1.0; g.len()];
        let vals: Vec<f64> = g.nodes().iter().map(|r| 0.25 + 1.5 * r).collect();
        // exact integral of 0.25 + 1.5 r over [0,1]
        assert_relative_eq!(
            weighted_lp_norm(&g, &ones, &vals, 1.0).unwrap(),
            1.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn flux_examples() {
        let g = make_grid(1.0, 64, Grading::Uniform).unwrap();
        let s1 = spec(1, SpaceForm::Euclidean);
        let zero = vec![0.0; g.len()];
        assert_relative_eq!(flux(&s1, &g, &zero, 10).unwrap(), 0.0);
        let lin: Vec<f64> = g.nodes().iter().map(|r| 1.0 - r).collect();
        assert_relative_eq!(flux(&s1, &g, &lin, 20).unwrap(), 1.0, epsilon = 1e-12);
        let s3 = spec(3, SpaceForm::Euclidean);
        let par: Vec<f64> = g.nodes().iter().map(|r| 1.0 - r * r).collect();
        assert_relative_eq!(flux(&s3, &g, &par, 32).unwrap(), 0.25, epsilon = 1e-10);
        assert!(flux(&s1, &g, &zero, 100).is_err());
    }

    #[test]
    fn adjoint_consistency_with_gradient_advection() {
        // q-scaled matrix is symmetric when C = 0, including nonzero a(r)
        let model = RiemannianModel::new(SpaceForm::Hyperbolic, 3, 1.0).unwrap();
        let adv = AdvectionField::new(
            crate::model::RadialFn::parse("r^2/4").unwrap(),
            crate::model::RadialFn::Zero,
        );
        let s = ProblemSpec::new(model, Nonlinearity::gelfand(), adv).unwrap();
        let g = make_grid(1.0, 96, Grading::BoundaryRefined).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|r| 0.3 + r).collect();
        let op = assemble(&s, &g, 0.7, Some(&v)).unwrap();
        for i in 0..g.m() {
            let a = op.cell_weight[i] * op.sup[i];
            let b = op.cell_weight[i + 1] * op.sub[i + 1];
            // boundary row is the Dirichlet identity, skip its pairing
            if i + 1 == g.m() {
                continue;
            }
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn m_matrix_sign_pattern() {
        let s = spec(3, SpaceForm::Spherical);
        let g = make_grid(1.0, 64, Grading::Uniform).unwrap();
        let op = assemble(&s, &g, 0.5, None).unwrap();
        assert!(op.is_m_matrix());
    }
}
