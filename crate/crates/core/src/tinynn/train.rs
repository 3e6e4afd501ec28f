use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, TrainState};
use super::model::ModelConfig;
use super::tensor::Tensor;
use super::NnError;
use crate::raster::Raster;

/// Samples per parallel work unit. Gradients are summed chunk by chunk in
/// index order, so results do not depend on the thread count.
pub const CHUNK: usize = 4;
pub const DEFAULT_BATCH_SIZE: usize = 32;

/// 8-bit images of one shape with class labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageSet {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<u8>,
    labels: Vec<usize>,
}

impl ImageSet {
    pub fn new(channels: usize, height: usize, width: usize) -> ImageSet {
        ImageSet { channels, height, width, pixels: Vec::new(), labels: Vec::new() }
    }

    /// Appends channel-planar pixels.
    pub fn push_planar(&mut self, pixels: &[u8], label: usize) -> Result<(), NnError> {
        if pixels.len() != self.sample_len() {
            return Err(NnError::Shape(format!("sample of {} values, expected {}", pixels.len(), self.sample_len())));
        }
        self.pixels.extend_from_slice(pixels);
        self.labels.push(label);
        Ok(())
    }

    pub fn push_raster(&mut self, img: &Raster, label: usize) -> Result<(), NnError> {
        if (img.width(), img.height(), img.channels()) != (self.width, self.height, self.channels) {
            return Err(NnError::Shape(format!(
                "{}x{}x{} image in a {}x{}x{} set",
                img.width(),
                img.height(),
                img.channels(),
                self.width,
                self.height,
                self.channels
            )));
        }
        let c = self.channels;
        let planar: Vec<u8> = (0..c).flat_map(|ch| img.data().iter().skip(ch).step_by(c).copied()).collect();
        self.push_planar(&planar, label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Batch tensor of the given samples, pixels scaled to [0, 1].
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<f32>, NnError> {
        let per = self.sample_len();
        let mut data = Vec::with_capacity(per * indices.len());
        for &i in indices {
            data.extend(self.pixels[i * per..][..per].iter().map(|&v| f32::from(v) / 255.0));
        }
        if !data.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(NnError::Normalization);
        }
        Tensor::new(vec![indices.len(), self.channels, self.height, self.width], data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 30, batch_size: DEFAULT_BATCH_SIZE, seed: 0, adam: AdamConfig::default() }
    }
}

/// One row of the training curve. Epoch 0 is the untrained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub test_accuracy: f64,
}

/// What the observer sees after each evaluation.
pub struct EpochView<'a> {
    pub metrics: &'a EpochMetrics,
    pub predictions: &'a [usize],
    pub state: &'a TrainState<f32>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub state: TrainState<f32>,
    pub predictions: Vec<usize>,
}

/// Test-set predictions, in sample order.
pub fn predict_set(config: &ModelConfig, params: &[Tensor<f32>], set: &ImageSet) -> Result<Vec<usize>, NnError> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let parts: Vec<Result<Vec<usize>, NnError>> =
        idx.par_chunks(CHUNK * 4).map(|chunk| config.predict(params, set.batch(chunk)?)).collect();
    let mut out = Vec::with_capacity(set.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Mean loss over one batch and the summed, `1/N`-scaled gradients.
fn batch_step(
    config: &ModelConfig,
    params: &[Tensor<f32>],
    set: &ImageSet,
    batch: &[usize],
) -> Result<(f64, Vec<Tensor<f32>>), NnError> {
    let scale = 1.0 / batch.len() as f32;
    type Part = Result<(f64, Vec<Tensor<f32>>), NnError>;
    let parts: Vec<Part> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let labels: Vec<usize> = chunk.iter().map(|&i| set.labels()[i]).collect();
            config.loss_and_grads(params, set.batch(chunk)?, &labels, scale)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("nonempty batch")?;
    for part in iter {
        let (l, g) = part?;
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            a.add_assign(b);
        }
    }
    Ok((loss / batch.len() as f64, grads))
}

/// Trains for `options.epochs` epochs, evaluating on `test` before the first
/// epoch and after each one. The observer may stop training early.
pub fn train_with(
    config: &ModelConfig,
    train: &ImageSet,
    test: &ImageSet,
    options: &TrainOptions,
    mut observer: impl FnMut(&EpochView) -> ControlFlow<()>,
) -> Result<TrainOutcome, NnError> {
    let classes = config.num_classes()?;
    if train.is_empty() || test.is_empty() {
        return Err(NnError::EmptySet);
    }
    for set in [train, test] {
        if set.shape() != config.input_shape() {
            return Err(NnError::Shape(format!("set shape {:?}, model input {:?}", set.shape(), config.input_shape())));
        }
        if let Some(&label) = set.labels().iter().find(|&&l| l >= classes) {
            return Err(NnError::Label { label, classes });
        }
    }
    if options.batch_size == 0 {
        return Err(NnError::Config("batch size must be positive".into()));
    }
    let mut state =
        TrainState::new(config.init_params(options.seed)?, config.param_names(), options.adam, options.seed);
    let mut shuffler = ChaCha8Rng::seed_from_u64(options.seed);
    shuffler.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();

    let mut predictions = predict_set(config, &state.params, test)?;
    let m = EpochMetrics { epoch: 0, train_loss: None, test_accuracy: accuracy(&predictions, test.labels()) };
    history.push(m.clone());
    let mut stop = observer(&EpochView { metrics: &m, predictions: &predictions, state: &state }).is_break();

    while !stop && state.epoch < options.epochs {
        let epoch = state.epoch + 1;
        order.shuffle(&mut shuffler);
        let mut loss_sum = 0.0;
        for batch in order.chunks(options.batch_size) {
            let (loss, grads) = batch_step(config, &state.params, train, batch)?;
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            adam_step(&mut state, &grads)?;
            loss_sum += loss * batch.len() as f64;
        }
        state.epoch = epoch;
        predictions = predict_set(config, &state.params, test)?;
        let m = EpochMetrics {
            epoch,
            train_loss: Some(loss_sum / train.len() as f64),
            test_accuracy: accuracy(&predictions, test.labels()),
        };
        history.push(m.clone());
        stop = observer(&EpochView { metrics: &m, predictions: &predictions, state: &state }).is_break();
    }
    Ok(TrainOutcome { history, state, predictions })
}

pub fn train(
    config: &ModelConfig,
    train: &ImageSet,
    test: &ImageSet,
    options: &TrainOptions,
) -> Result<TrainOutcome, NnError> {
    train_with(config, train, test, options, |_| ControlFlow::Continue(()))
}

/// `epoch,train_loss,test_acc`; the loss cell is empty for epoch 0.
pub fn epoch_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,test_acc\n");
    for m in history {
        let loss = m.train_loss.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", m.epoch, loss, m.test_accuracy));
    }
    out
}
