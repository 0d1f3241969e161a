//! Criterion comparison of the rayon sweep against the sequential fallback.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use extremal_core::continuation::{
    dimension_sweep, dimension_sweep_seq, ContinuationSettings,
};
use extremal_core::{AdvectionField, Grading, Nonlinearity, ProblemSpec, RiemannianModel, SpaceForm};

fn template() -> ProblemSpec {
    ProblemSpec::new(
        RiemannianModel::new(SpaceForm::Euclidean, 2, 1.0).unwrap(),
        Nonlinearity::gelfand(),
        AdvectionField::none(),
    )
    .unwrap()
}

fn settings(spec: &ProblemSpec) -> ContinuationSettings {
    let mut s = ContinuationSettings::for_spec(spec);
    s.u0_ceiling = 4.0;
    s
}

fn bench_sweep(c: &mut Criterion) {
    let spec = template();
    let cfg = settings(&spec);
    let dims: Vec<u32> = (2..=6).collect();
    let mut group = c.benchmark_group("dimension_sweep");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter_batched(
            || (spec.clone(), dims.clone()),
            |(spec, dims)| dimension_sweep_seq(&spec, &dims, 256, Grading::Uniform, &cfg),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("rayon", |b| {
        b.iter_batched(
            || (spec.clone(), dims.clone()),
            |(spec, dims)| dimension_sweep(&spec, &dims, 256, Grading::Uniform, &cfg),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
