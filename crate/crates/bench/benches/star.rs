use criterion::{criterion_group, criterion_main, Criterion};
use fedosov_bench::{weyl_setup, weyl_solution};
use fedosov_core::algebroid::parse_section;
use fedosov_core::fixtures::chart;
use fedosov_core::solve_r;
use fedosov_core::uea::{normal_order, LieData, Strategy, UeaElement};
use std::hint::black_box;

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_r");
    for (name, l, t) in [("so3", 4, 6), ("rank2", 4, 6), ("tangent2", 4, 6)] {
        let s = weyl_setup(name, l, t);
        g.bench_function(format!("{name} L={l} T={t}"), |b| b.iter(|| solve_r(black_box(&s)).unwrap()));
    }
    g.finish();
}

fn star(c: &mut Criterion) {
    let mut g = c.benchmark_group("star");
    for (name, f, h) in [("heis3", "p1^2*p2", "p2*p3^2"), ("so3", "p1^2*p2", "p2*p3^2"), ("rank2", "q1*p1^2", "p2^2 + q1^2*p1")] {
        let sol = weyl_solution(name, 6, 6);
        let ch = chart(name);
        let (f, h) = (parse_section(f, ch.n, ch.rank).unwrap(), parse_section(h, ch.n, ch.rank).unwrap());
        g.bench_function(format!("{name} cubic*cubic L=6"), |b| b.iter(|| sol.star(black_box(&f), black_box(&h)).unwrap()));
    }
    g.finish();
}

fn pbw(c: &mut Criterion) {
    let lie = LieData::from_chart(&chart("so3")).unwrap();
    let w = UeaElement::word(3, &[2, 1, 0, 2, 1, 0, 2]);
    c.bench_function("so3 normal order, length 7", |b| b.iter(|| normal_order(black_box(&w), &lie, Strategy::Leftmost)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = solve, star, pbw
}
criterion_main!(benches);
