use criterion::{criterion_group, criterion_main, Criterion};
use decoq_core::dfs::find_invariant_observables;
use decoq_core::dynamics::propagate;
use decoq_core::fixtures::{
    bell_like, collective_z, dephasing_model, interior_projector, oscillator_model,
};
use decoq_core::{generate_distribution, ket_bra, ClosureOptions, Frequency};

fn oscillator_closure(c: &mut Criterion) {
    let model = oscillator_model(10, 3, Frequency::from(1.0), 1.0).unwrap();
    let (obs, h0, controls) = model.closure_inputs();
    let options = ClosureOptions {
        compression: Some(interior_projector(10)),
        ..ClosureOptions::default()
    };
    c.bench_function("closure/oscillator_d10", |b| {
        b.iter(|| generate_distribution(&obs, &h0, &controls, &options).unwrap())
    });
}

fn dephasing_dfs(c: &mut Criterion) {
    let mut group = c.benchmark_group("dfs");
    group.sample_size(10);
    for n in [2usize, 3, 4] {
        let s = collective_z(n);
        let h0 = s.scale_real(0.5);
        group.bench_function(format!("collective_dephasing_n{n}"), |b| {
            b.iter(|| {
                find_invariant_observables(&h0, &[], std::slice::from_ref(&s), 1e-10).unwrap()
            })
        });
    }
    group.finish();
}

fn dephasing_propagation(c: &mut Criterion) {
    let model = dephasing_model(2, 4, 0.5, ket_bra(1, 2, 4).unwrap()).unwrap();
    let psi = model.initial_state(&bell_like(1, 2, 4)).unwrap();
    let mut group = c.benchmark_group("propagate");
    group.sample_size(10);
    group.bench_function("dephasing_n2_t10_dt0.01", |b| {
        b.iter(|| propagate(&model, &psi, (0.0, 10.0), 0.01, true).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    oscillator_closure,
    dephasing_dfs,
    dephasing_propagation
);
criterion_main!(benches);
