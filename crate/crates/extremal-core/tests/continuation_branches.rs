//! Branch tracing, fold location and second-branch validation against the
//! shooting oracle and the structural branch invariants.

mod support;

use std::sync::Arc;

use extremal_core::continuation::{
    find_lambda_star, load_branch_csv, solution_at, trace_branch, write_branch_csv, Branch,
    ContinuationSettings, LambdaStarKind, Segment,
};
use extremal_core::spectrum::{lambda_star_bounds, stability_check, Stability};
use extremal_core::{
    decompose_radial, make_grid, AdvectionField, Grading, Nonlinearity, ProblemSpec, RadialFn,
    RiemannianModel, SpaceForm,
};
use support::{frozen, OracleGeom, OracleNl, OracleProblem};

fn spec_of(nl: Nonlinearity, n: u32, kind: SpaceForm) -> Arc<ProblemSpec> {
    Arc::new(
        ProblemSpec::new(
            RiemannianModel::new(kind, n, 1.0).unwrap(),
            nl,
            AdvectionField::none(),
        )
        .unwrap(),
    )
}

fn traced(spec: &Arc<ProblemSpec>, m: usize, ceiling: f64) -> Branch {
    let grid = Arc::new(make_grid(spec.radius(), m, Grading::Uniform).unwrap());
    let mut settings = ContinuationSettings::for_spec(spec);
    settings.u0_ceiling = ceiling;
    let mut branch = trace_branch(spec, &grid, &settings).unwrap();
    find_lambda_star(&mut branch).unwrap();
    branch
}

#[test]
fn bratu_fold_matches_oracle() {
    // frozen constant agrees with the live oracle first
    let oracle = OracleProblem::new(OracleNl::Gelfand, 1, OracleGeom::Euclid, 1.0);
    let (a_star, l_star) = oracle.first_fold(6.0, 0.5).unwrap();
    assert!(
        (l_star - frozen::BRATU_LAMBDA_STAR).abs() < 1e-6,
        "oracle fold {l_star}"
    );
    assert!((a_star - frozen::BRATU_U0_STAR).abs() < 1e-4);

    let spec = spec_of(Nonlinearity::gelfand(), 1, SpaceForm::Euclidean);
    let branch = traced(&spec, 2048, 6.0);
    let star = branch.lambda_star.unwrap();
    assert_eq!(star.kind, LambdaStarKind::Fold);
    assert!(
        (star.value - frozen::BRATU_LAMBDA_STAR).abs() < 1e-3,
        "traced fold {} vs {}",
        star.value,
        frozen::BRATU_LAMBDA_STAR
    );
}

#[test]
fn branch_structure_gelfand_planar() {
    let spec = spec_of(Nonlinearity::gelfand(), 2, SpaceForm::Euclidean);
    let branch = traced(&spec, 1024, 8.0);
    let star = branch.lambda_star.unwrap();
    assert!((star.value - frozen::GELFAND_N2_LAMBDA_STAR).abs() < 5e-3);
    let k = branch.fold_index.unwrap();
    // u0 strictly increasing along the whole branch
    for w in branch.points.windows(2) {
        assert!(w[1].u0 > w[0].u0, "u0 parameterization not monotone");
    }
    // lambda strictly increasing up to the fold, decreasing after
    for w in branch.points[..=k].windows(2) {
        assert!(w[1].lambda > w[0].lambda - 1e-12);
    }
    for w in branch.points[k..].windows(2) {
        assert!(w[1].lambda < w[0].lambda + 1e-9);
    }
    // mu1 sign change brackets the fold exactly once
    let mut crossings = 0;
    for w in branch.points.windows(2) {
        if w[0].mu1 > 0.0 && w[1].mu1 <= 0.0 {
            crossings += 1;
        }
    }
    assert_eq!(crossings, 1);
    assert!(branch.points[..k].iter().all(|p| p.mu1 > 0.0));
    assert!(branch.points[k + 1..].iter().all(|p| p.mu1 < 0.0));
    // fold point itself sits on the stability boundary
    assert!(branch.points[k].mu1.abs() < branch.tol_eig());
    // the mu1 crossing coincides with the lambda extremum within 2 steps
    let lam_max_idx = branch
        .points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.lambda.partial_cmp(&b.1.lambda).unwrap())
        .unwrap()
        .0;
    assert!((lam_max_idx as i64 - k as i64).abs() <= 2);
}

#[test]
fn mu1_is_continuous_along_branch() {
    // empirically logged rate constant K; the near-blow-up tail is excluded
    // because f'' diverges there and mu1 legitimately varies fast
    let spec = spec_of(Nonlinearity::mems(), 2, SpaceForm::Euclidean);
    let branch = traced(&spec, 512, 0.95);
    let mut max_rate: f64 = 0.0;
    for w in branch.points.windows(2) {
        if w[1].sup_u > 0.85 {
            break;
        }
        let ds = (w[1].s - w[0].s).max(1e-12);
        max_rate = max_rate.max((w[1].mu1 - w[0].mu1).abs() / ds);
    }
    println!("mu1 continuity constant K = {max_rate:.3}");
    assert!(
        max_rate < 200.0 * branch.lambda1.max(1.0),
        "mu1 jump rate {max_rate} signals mode switching"
    );
}

#[test]
fn second_branch_points_are_unstable() {
    let spec = spec_of(Nonlinearity::gelfand(), 2, SpaceForm::Euclidean);
    let branch = traced(&spec, 512, 8.0);
    let k = branch.fold_index.unwrap();
    assert!(branch.points.len() > k + 3, "no post-fold segment traced");
    for p in &branch.points[k + 1..] {
        assert!(p.mu1 < 0.0, "post-fold point with mu1 = {}", p.mu1);
        assert!(!p.stable);
    }
}

#[test]
fn solution_at_examples() {
    let spec = spec_of(Nonlinearity::gelfand(), 2, SpaceForm::Euclidean);
    let branch = traced(&spec, 1024, 8.0);
    let star = branch.lambda_star.unwrap().value;

    // minimal branch vanishes as lambda -> 0
    let lo = solution_at(&branch, 0.02, Segment::Minimal).unwrap();
    assert!(lo.sup_u < 0.02);

    // both segments at 0.95 lambda*
    let lam = 0.95 * star;
    let umin = solution_at(&branch, lam, Segment::Minimal).unwrap();
    let usec = solution_at(&branch, lam, Segment::Second).unwrap();
    assert!(umin.residual_norm <= 1e-10);
    assert!(usec.residual_norm <= 1e-10);
    assert!(usec.u0 > umin.u0, "segment ordering by u0");
    assert!(umin.mu1.unwrap() > 0.0);
    assert!(usec.mu1.unwrap() < 0.0);

    // beyond lambda* errors
    assert!(solution_at(&branch, star * 1.01, Segment::Minimal).is_err());
}

#[test]
fn both_segments_match_oracle_roots_1d() {
    let spec = spec_of(Nonlinearity::gelfand(), 1, SpaceForm::Euclidean);
    let branch = traced(&spec, 2048, 6.0);
    let lam = 0.9 * frozen::BRATU_LAMBDA_STAR;
    let umin = solution_at(&branch, lam, Segment::Minimal).unwrap();
    let usec = solution_at(&branch, lam, Segment::Second).unwrap();
    assert!(
        (umin.u0 - frozen::BRATU_U0_MIN_09).abs() < 1e-3,
        "minimal root {} vs {}",
        umin.u0,
        frozen::BRATU_U0_MIN_09
    );
    assert!(
        (usec.u0 - frozen::BRATU_U0_SECOND_09).abs() < 1e-3,
        "second root {} vs {}",
        usec.u0,
        frozen::BRATU_U0_SECOND_09
    );
}

#[test]
fn extremal_profile_sits_on_stability_boundary() {
    let spec = spec_of(Nonlinearity::mems(), 2, SpaceForm::Euclidean);
    let grid = Arc::new(make_grid(1.0, 512, Grading::BoundaryRefined).unwrap());
    let mut settings = ContinuationSettings::for_spec(&spec);
    settings.u0_ceiling = 0.95;
    let mut branch = trace_branch(&spec, &grid, &settings).unwrap();
    find_lambda_star(&mut branch).unwrap();
    let prof = extremal_core::continuation::extremal_profile(&branch).unwrap();
    let tol_eig = branch.tol_eig();
    assert!(
        prof.mu1.unwrap().abs() < 10.0 * tol_eig,
        "fold mu1 = {} vs tol {}",
        prof.mu1.unwrap(),
        tol_eig
    );
    // regular extremal solution below the critical dimension
    assert!(prof.sup_u < 1.0);
    // matches the oracle fold value
    assert!((branch.lambda_star.unwrap().value - frozen::MEMS_N2_LAMBDA_STAR).abs() < 3e-3);
    // stability classification at the fold
    let st = stability_check(&spec, &grid, &prof.u, prof.lambda, tol_eig).unwrap();
    assert_eq!(st, Stability::SemiStableBoundary);
}

#[test]
fn mems_lambda_star_three_digits_1d() {
    let spec = spec_of(Nonlinearity::mems(), 1, SpaceForm::Euclidean);
    let branch = traced(&spec, 1024, 0.995);
    let star = branch.lambda_star.unwrap().value;
    assert!(
        (star - frozen::MEMS_N1_LAMBDA_STAR).abs() < 5e-4,
        "mems 1d lambda* {} vs {}",
        star,
        frozen::MEMS_N1_LAMBDA_STAR
    );
}

#[test]
fn lambda_star_grid_convergence_order() {
    // lambda*(M) Cauchy with order >= 1.9 on M in {256, 512, 1024}
    let spec = spec_of(Nonlinearity::gelfand(), 2, SpaceForm::Euclidean);
    let mut stars = Vec::new();
    for m in [256usize, 512, 1024] {
        stars.push(traced(&spec, m, 3.0).lambda_star.unwrap().value);
    }
    let d1 = (stars[0] - stars[1]).abs();
    let d2 = (stars[1] - stars[2]).abs();
    let order = (d1 / d2).log2();
    assert!(
        order >= 1.9,
        "grid convergence order {order:.3} (stars {stars:?})"
    );
}

#[test]
fn gradient_field_equivalence() {
    // raw A kept as residual component C vs its decomposition into a
    // potential: same continuum problem, lambda* agrees under refinement
    let model = RiemannianModel::new(SpaceForm::Euclidean, 2, 1.0).unwrap();
    let raw = Arc::new(
        ProblemSpec::new(
            model.clone(),
            Nonlinearity::gelfand(),
            AdvectionField::new(RadialFn::Zero, RadialFn::parse("-r/2").unwrap()),
        )
        .unwrap(),
    );
    let decomposed = Arc::new(
        ProblemSpec::new(
            model,
            Nonlinearity::gelfand(),
            decompose_radial(|r| -r / 2.0, raw.model()),
        )
        .unwrap(),
    );
    let star_raw = traced(&raw, 1024, 4.0).lambda_star.unwrap().value;
    let star_dec = traced(&decomposed, 1024, 4.0).lambda_star.unwrap().value;
    assert!(
        (star_raw - star_dec).abs() < 2e-3 * star_dec,
        "raw {star_raw} vs decomposed {star_dec}"
    );
    // and both agree with the continuum value for a(r) = r^2/4
    assert!((star_dec - frozen::GELFAND_N2_GRAD_LAMBDA_STAR).abs() < 5e-3);
}

#[test]
fn bounds_sandwich_on_benchmarks() {
    let cases: [(Nonlinearity, u32, SpaceForm, f64); 4] = [
        (Nonlinearity::gelfand(), 2, SpaceForm::Euclidean, frozen::GELFAND_N2_LAMBDA_STAR),
        (Nonlinearity::mems(), 2, SpaceForm::Hyperbolic, frozen::MEMS_N2_HYPER_LAMBDA_STAR),
        (Nonlinearity::mems(), 3, SpaceForm::Euclidean, frozen::MEMS_N3_LAMBDA_STAR),
        (Nonlinearity::power(2.0).unwrap(), 3, SpaceForm::Spherical, frozen::POWER2_N3_SPHERE_LAMBDA_STAR),
    ];
    for (nl, n, kind, lstar) in cases {
        let spec = spec_of(nl, n, kind);
        let grid = make_grid(1.0, 512, Grading::Uniform).unwrap();
        let (lo, up) = lambda_star_bounds(&spec, &grid).unwrap();
        assert!(
            lo <= lstar && lstar <= up,
            "{:?} N={n} {kind:?}: {lo} <= {lstar} <= {up} violated",
            nl.kind
        );
    }
}

#[test]
fn csv_export_is_deterministic_and_reingestable() {
    let spec = spec_of(Nonlinearity::gelfand(), 2, SpaceForm::Euclidean);
    let grid = Arc::new(make_grid(1.0, 256, Grading::Uniform).unwrap());
    let mut settings = ContinuationSettings::for_spec(&spec);
    settings.u0_ceiling = 3.0;
    let branch = trace_branch(&spec, &grid, &settings).unwrap();

    let dir1 = std::env::temp_dir().join("extremal_branch_a");
    let dir2 = std::env::temp_dir().join("extremal_branch_b");
    write_branch_csv(&branch, &dir1, false).unwrap();
    write_branch_csv(&branch, &dir2, true).unwrap();
    let text1 = std::fs::read_to_string(dir1.join("branch.csv")).unwrap();
    let text2 = std::fs::read_to_string(dir2.join("branch.csv")).unwrap();
    assert_eq!(text1, text2, "branch export must be byte-identical");
    assert!(text1.starts_with("s,lambda,u0,sup_u,mu1,stable\n"));
    assert!(dir2.join("point_0.csv").exists());
    let p0 = std::fs::read_to_string(dir2.join("point_0.csv")).unwrap();
    assert!(p0.starts_with("r,u\n"));

    // round-trip: profiles re-solved from (u0, lambda) reproduce mu1
    let loaded = load_branch_csv(&spec, &grid, &dir1.join("branch.csv"), &settings).unwrap();
    assert_eq!(loaded.points.len(), branch.points.len());
    for (orig, re) in branch.points.iter().zip(&loaded.points).skip(1) {
        let mu_re = extremal_core::spectrum::principal_eigenvalue(
            &spec,
            &grid,
            &re.solution.u,
            re.lambda,
        )
        .unwrap()
        .mu;
        assert!(
            (mu_re - orig.mu1).abs() <= 1e-8 * orig.mu1.abs().max(1.0),
            "mu1 mismatch after round-trip: {} vs {}",
            mu_re,
            orig.mu1
        );
    }
}

#[test]
fn csv_load_rejects_wrong_header() {
    let spec = spec_of(Nonlinearity::gelfand(), 2, SpaceForm::Euclidean);
    let grid = Arc::new(make_grid(1.0, 64, Grading::Uniform).unwrap());
    let settings = ContinuationSettings::for_spec(&spec);
    let dir = std::env::temp_dir().join("extremal_bad_header");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("branch.csv");
    std::fs::write(&path, "wrong,header\n0,0\n").unwrap();
    assert!(load_branch_csv(&spec, &grid, &path, &settings).is_err());
}

#[test]
fn sweep_rejects_dimension_zero() {
    use extremal_core::continuation::dimension_sweep_seq;
    let spec = spec_of(Nonlinearity::gelfand(), 2, SpaceForm::Euclidean);
    let mut cfg = ContinuationSettings::for_spec(&spec);
    cfg.u0_ceiling = 2.0;
    let rows = dimension_sweep_seq(&spec, &[0, 2], 256, Grading::Uniform, &cfg);
    assert!(rows[0].error.is_some(), "dimension 0 must fail validation");
    assert!(rows[1].error.is_none());
}

trait SpecExt {
    fn model(&self) -> &RiemannianModel;
}

impl SpecExt for Arc<ProblemSpec> {
    fn model(&self) -> &RiemannianModel {
        &self.as_ref().model
    }
}
