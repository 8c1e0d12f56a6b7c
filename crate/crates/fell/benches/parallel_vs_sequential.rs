use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fell::absorption::{verify_absorption, Representation};
use fell::bundle::validate_bundle;
use fell::corpus;
use fell::cross_sectional::reduced_algebra;

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let n = default.current_num_threads();
    vec![("1-thread".to_string(), one), (format!("default-{n}"), default)]
}

fn bench(c: &mut Criterion) {
    let b = corpus::random_bundle(6).unwrap().bundle;
    let pair = corpus::pair_groupoid(4).unwrap().bundle;
    let mut g = c.benchmark_group("parallel_vs_sequential");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(format!("validate/{name}"), |bn| {
            bn.iter(|| pool.install(|| black_box(validate_bundle(&b, 1e-9).passed())))
        });
        g.bench_function(format!("reduced_algebra/{name}"), |bn| {
            bn.iter(|| pool.install(|| black_box(reduced_algebra(&pair).unwrap().algebra.dim())))
        });
        let rep = Representation::carrier(&b);
        g.bench_function(format!("absorption/{name}"), |bn| {
            bn.iter(|| pool.install(|| black_box(verify_absorption(&b, &rep, 1e-8).unwrap().passed())))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
