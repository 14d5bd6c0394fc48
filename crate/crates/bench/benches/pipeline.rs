use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use scedex_core::gpmle::{fit_gp_pml, mle_asymptotic_cov, sigma_gamma0, CrossDependence};
use scedex_core::hypothesis::{space_test, time_test};
use scedex_core::mc::{logistic_tail_copula, simulate_panel, Dependence, SimSpec};
use scedex_core::{pool, scedasis_all, sigma1_matrix, IntermediateK, PanelSample, TailCopulaGrid};

fn panel(n: usize, m: usize) -> PanelSample {
    let spec = SimSpec::homogeneous(n, m, 0.2, Dependence::Logistic { alpha: 0.6 }, 42);
    simulate_panel(&spec).expect("valid spec")
}

fn estimation(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimation");
    for m in [10, 49] {
        let p = panel(4000, m);
        let k = IntermediateK::for_panel(1000, &p).unwrap();
        g.bench_with_input(BenchmarkId::new("pool", m), &p, |b, p| b.iter(|| pool(black_box(p))));
        g.bench_with_input(BenchmarkId::new("scedasis_all", m), &p, |b, p| {
            b.iter(|| scedasis_all(black_box(p), k))
        });
        g.bench_with_input(BenchmarkId::new("sigma1", m), &p, |b, p| {
            b.iter(|| sigma1_matrix(black_box(p), k))
        });
        g.bench_with_input(BenchmarkId::new("space_test", m), &p, |b, p| {
            b.iter(|| space_test(black_box(p), k))
        });
        g.bench_with_input(BenchmarkId::new("time_test", m), &p, |b, p| {
            b.iter(|| time_test(black_box(p), k, 0))
        });
    }
    g.finish();
}

fn gp_mle(c: &mut Criterion) {
    let mut g = c.benchmark_group("gp_mle");
    g.sample_size(20);
    let p = panel(4000, 10);
    let k = IntermediateK::for_panel(1000, &p).unwrap();
    g.bench_function("fit", |b| b.iter(|| fit_gp_pml(black_box(&p), k)));
    let fit = fit_gp_pml(&p, k).unwrap();
    g.bench_function("grid_build", |b| {
        b.iter(|| TailCopulaGrid::build(black_box(&p), k, TailCopulaGrid::DEFAULT_NODES))
    });
    g.bench_function("asymptotic_cov", |b| b.iter(|| mle_asymptotic_cov(black_box(&fit), &p)));
    let r = logistic_tail_copula(0.5);
    let f = move |_: usize, _: usize, s: f64, t: f64| 0.5 * r(s, t);
    g.bench_function("sigma_gamma0_quadrature", |b| {
        b.iter(|| {
            sigma_gamma0(
                black_box(0.25),
                &[0.5, 0.5],
                CrossDependence::Function { r: &f, tolerance: 1e-7 },
            )
        })
    });
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulation");
    g.sample_size(20);
    for dep in [Dependence::Independent, Dependence::Logistic { alpha: 0.5 }] {
        let spec = SimSpec::homogeneous(5000, 4, 0.1, dep, 1);
        let name = match dep {
            Dependence::Independent => "independent",
            _ => "logistic",
        };
        g.bench_function(name, |b| b.iter(|| simulate_panel(black_box(&spec))));
    }
    g.finish();
}

criterion_group!(benches, estimation, gp_mle, simulation);
criterion_main!(benches);
