use criterion::{black_box, criterion_group, criterion_main, Criterion};

use scbicm_core::bitmap::BitMapping;
use scbicm_core::density::{threshold, DeOptions, DensityEvolution, EdgeGraph};
use scbicm_core::lifting::lift;
use scbicm_core::protograph::{build_single_chain, SingleChainParams};
use scbicm_core::simulator::{bp_decode, TannerGraph};
use scbicm_core::workflow::qam16_profile;

fn density_evolution(c: &mut Criterion) {
    let p = SingleChainParams::new(3, 6, 10, 2).unwrap();
    let g = build_single_chain(&p).unwrap();
    let eg = EdgeGraph::new(&g);
    let opts = DeOptions::default();
    let eps = vec![0.49; g.vn_count()];
    c.bench_function("de_run_c36_10_2", |b| {
        b.iter(|| DensityEvolution::new(&eg, black_box(&eps)).run(&opts))
    });
    let profile = qam16_profile().unwrap();
    let map = BitMapping::uniform(4, g.vn_count());
    c.bench_function("threshold_c36_10_2_uniform", |b| {
        b.iter(|| threshold(&g, &map, &profile, &opts).unwrap())
    });
}

fn decoding(c: &mut Criterion) {
    let p = SingleChainParams::new(3, 6, 10, 2).unwrap();
    let code = lift(&build_single_chain(&p).unwrap(), 500, 1).unwrap();
    let tg = TannerGraph::new(&code);
    // weak, mixed-sign channel values so that every iteration runs
    let llr: Vec<f64> = (0..code.n)
        .map(|i| if i % 7 == 0 { -0.3 } else { 0.4 })
        .collect();
    c.bench_function("bp_10_iters_n10000", |b| {
        b.iter(|| bp_decode(&tg, black_box(&llr), 10))
    });
}

criterion_group!(benches, density_evolution, decoding);
criterion_main!(benches);
