use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use sigmdn_bench::{fixture_network, fixture_scenario};
use sigmdn_core::features::assemble_tv;
use sigmdn_core::mdn::{forward, MixtureParams};
use sigmdn_core::pricing::{mixture_european_price, quadrature_price, OptionKind, OptionSpec};
use sigmdn_core::signature::signature_of_path;
use sigmdn_core::stochastic::{simulate_cir, simulate_terminal_prices_tv, CirParams};
use sigmdn_core::StreamKey;

fn bench_simulation(c: &mut Criterion) {
    let params = CirParams::new(0.6, 0.05, 0.05, 0.005, 0.1).unwrap();
    c.bench_function("cir_path_252_steps", |b| {
        b.iter(|| simulate_cir(&params, black_box(0.05), 1.0, 1.0 / 252.0, StreamKey::new(1)))
    });

    let scenario = fixture_scenario();
    c.bench_function("gbm_terminal_1000_paths", |b| {
        b.iter(|| simulate_terminal_prices_tv(&scenario, 1000, StreamKey::new(2)))
    });
}

fn bench_signature(c: &mut Criterion) {
    let path: Vec<Vec<f64>> = (0..253)
        .map(|k| {
            let t = k as f64 / 252.0;
            vec![t, (7.0 * t).sin() * 0.1]
        })
        .collect();
    c.bench_function("signature_2d_level5_252_steps", |b| {
        b.iter(|| signature_of_path(black_box(&path), 5))
    });
}

fn bench_inference(c: &mut Criterion) {
    let scenario = fixture_scenario();
    let (layout, params) = fixture_network();

    c.bench_function("feature_assembly_tv", |b| {
        b.iter(|| assemble_tv(black_box(&scenario), 5, &layout))
    });

    let features = assemble_tv(&scenario, 5, &layout).unwrap();
    c.bench_function("mdn_forward_paper_architecture", |b| {
        b.iter(|| forward(&params, black_box(&features.values)))
    });

    let mix = forward(&params, &features.values).unwrap();
    let spec = OptionSpec::new(OptionKind::Call, 1.0, 1.0).unwrap();
    c.bench_function("closed_form_price_d10", |b| {
        b.iter(|| mixture_european_price(black_box(&mix), &spec, 0.95))
    });

    c.bench_function("feature_forward_price_end_to_end", |b| {
        b.iter_batched(
            || scenario.clone(),
            |s| {
                let x = assemble_tv(&s, 5, &layout).unwrap();
                let mix: MixtureParams = forward(&params, &x.values).unwrap();
                mixture_european_price(&mix, &spec, 0.95).unwrap()
            },
            BatchSize::SmallInput,
        )
    });

    c.bench_function("quadrature_price_32768", |b| {
        b.iter(|| quadrature_price(black_box(&mix), &spec, 0.95, 32_768))
    });
}

criterion_group!(benches, bench_simulation, bench_signature, bench_inference);
criterion_main!(benches);
