use criterion::{criterion_group, criterion_main, Criterion};
use magswarm_bench::simulation;

fn render(c: &mut Criterion) {
    let sim = simulation(2.0);
    c.bench_function("render_frame", |b| b.iter(|| sim.render()));
}

criterion_group!(benches, render);
criterion_main!(benches);
