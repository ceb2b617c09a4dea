use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use skewlab::dynamics::{f_star, f_star_fixed_point};
use skewlab::foliation::{invariance_check, pencil_001, CheckMode, NUMERIC_TOL};
use skewlab::green::GreenEvaluator;
use skewlab::measure::sampler::preimages_exact;
use skewlab::normal_form::normal_form_at;
use skewlab::numeric::poly_roots;
use skewlab::poincare::{sigma_fiber, PoincareEvaluator, Policy};
use skewlab::{C64, P2};

fn numeric(c: &mut Criterion) {
    let coeffs: Vec<C64> = (0..65).map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
    c.bench_function("poly_roots_degree_64", |b| b.iter(|| poly_roots(black_box(&coeffs), 1e-13).unwrap()));
    let f = f_star();
    let p = P2::new([C64::new(0.3, 0.1), C64::new(1.0, 0.0), C64::new(0.7, -0.2)]).unwrap();
    c.bench_function("preimages_f_star", |b| b.iter(|| preimages_exact(&f, black_box(&p)).unwrap()));
    let g = GreenEvaluator::new(f.clone());
    c.bench_function("green_value_1e-10", |b| b.iter(|| g.green_value(black_box(&p.unit_lift()), 1e-10).unwrap()));
}

fn local(c: &mut Criterion) {
    let f = f_star();
    let a = f_star_fixed_point();
    c.bench_function("normal_form_at_order_12", |b| b.iter(|| normal_form_at(&f, black_box(&a), 1, 12, None).unwrap()));
    let ev = PoincareEvaluator::new(&f, &a, 1, Policy::default()).unwrap();
    let x = [C64::new(1.5, -0.7), C64::new(-2.0, 1.1)];
    c.bench_function("eval_sigma_radius_2", |b| b.iter(|| ev.eval_sigma_raw(black_box(x)).unwrap()));
    let seed = [C64::new(0.09, 0.06), C64::new(-0.03, 0.075)];
    let s = ev.eval_sigma_raw(seed).unwrap();
    let mut group = c.benchmark_group("fibers");
    group.sample_size(10);
    group.bench_function("sigma_fiber_depth_6", |b| b.iter(|| sigma_fiber(&ev, black_box(&s.point), 6).unwrap()));
    group.finish();
}

fn foliation(c: &mut Criterion) {
    let f = f_star();
    let w = pencil_001();
    c.bench_function("invariance_check_exact", |b| {
        b.iter(|| invariance_check(&f, black_box(&w), CheckMode::Exact, NUMERIC_TOL).unwrap())
    });
}

criterion_group!(benches, numeric, local, foliation);
criterion_main!(benches);
