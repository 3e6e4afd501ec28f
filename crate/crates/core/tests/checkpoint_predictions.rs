use coinforge_core::synth::{render_disc, DiscSpec};
use coinforge_core::tinynn::{
    decode_checkpoint, encode_checkpoint, predict_set, train, ImageSet, ModelConfig, TrainOptions,
};

/// Bright disc versus dark disc, 24×24.
fn discs(n: usize, seed: u64) -> ImageSet {
    let mut set = ImageSet::new(1, 24, 24);
    for i in 0..n {
        let label = i % 2;
        let spec = DiscSpec {
            cx: 11.5,
            cy: 11.5,
            radius: 7.0 + (i % 3) as f64,
            fg: if label == 0 { 200 } else { 60 },
            bg: 120,
        };
        let img = render_disc(24, 24, &spec, 4.0, seed + i as u64).unwrap();
        set.push_raster(&img, label).unwrap();
    }
    set
}

#[test]
fn reloaded_weights_predict_identically() {
    let (tr, te) = (discs(32, 1), discs(12, 100));
    let config = ModelConfig::coinnet_s(2, 24, 24);
    let out =
        train(&config, &tr, &te, &TrainOptions { epochs: 3, batch_size: 8, seed: 2, ..Default::default() }).unwrap();
    assert_eq!(out.history.len(), 4);
    let bytes = encode_checkpoint(&config, &out.state.params).unwrap();
    let (cfg2, params2) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(cfg2, config);
    assert_eq!(predict_set(&cfg2, &params2, &te).unwrap(), out.predictions);
    assert_eq!(encode_checkpoint(&cfg2, &params2).unwrap(), bytes);
}
