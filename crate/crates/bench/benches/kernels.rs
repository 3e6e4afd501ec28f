use std::hint::black_box;

use coinforge_core::augment::expand;
use coinforge_core::houghdetect::{hough_circles, DetectParams};
use coinforge_core::synth::{random_gray, render_disc, DiscSpec};
use coinforge_core::tinynn::{conv2d_backward, conv2d_forward, ModelConfig, Tensor};
use criterion::{criterion_group, criterion_main, Criterion};

fn hough(c: &mut Criterion) {
    let spec = DiscSpec { cx: 74.5, cy: 70.0, radius: 48.0, fg: 190, bg: 60 };
    let img = render_disc(150, 150, &spec, 5.0, 1).unwrap();
    let params = DetectParams::default();
    c.bench_function("hough_circles 150x150", |b| b.iter(|| hough_circles(black_box(&img), &params).unwrap()));
}

fn conv(c: &mut Criterion) {
    let x = Tensor::<f32>::from_fn(&[4, 8, 74, 74], |i| (i % 13) as f32 / 13.0);
    let w = Tensor::<f32>::from_fn(&[16, 8, 3, 3], |i| (i % 7) as f32 * 0.01);
    let b = Tensor::<f32>::zeros(&[16]);
    let y = conv2d_forward(&x, &w, &b, 1).unwrap();
    c.bench_function("conv2d_forward 4x8x74x74 -> 16", |bn| {
        bn.iter(|| conv2d_forward(black_box(&x), &w, &b, 1).unwrap())
    });
    c.bench_function("conv2d_backward 4x8x74x74 -> 16", |bn| {
        bn.iter(|| conv2d_backward(black_box(&x), &w, 1, &y, true).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let config = ModelConfig::coinnet_s(6, 150, 150);
    let params = config.init_params::<f32>(0).unwrap();
    let x = Tensor::<f32>::from_fn(&[4, 1, 150, 150], |i| (i % 17) as f32 / 17.0);
    let labels = [0, 1, 2, 3];
    c.bench_function("coinnet-s loss_and_grads, 4 images", |b| {
        b.iter(|| config.loss_and_grads(&params, black_box(x.clone()), &labels, 0.25).unwrap())
    });
}

fn augment(c: &mut Criterion) {
    let img = random_gray(150, 150, 3);
    c.bench_function("expand one 150x150 image", |b| b.iter(|| expand(black_box(&img), "bench").unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = hough, conv, network, augment
}
criterion_main!(benches);
