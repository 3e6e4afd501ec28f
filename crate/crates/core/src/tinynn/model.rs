use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool_backward, maxpool_forward, relu_backward,
    relu_forward,
};
use super::loss::{argmax_rows, xent_parts};
use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize },
    MaxPool { window: usize },
    Relu,
    Flatten,
    Dense { units: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelConfig {
    /// conv(8,3,1)-relu-maxpool(2)-conv(16,3,1)-relu-maxpool(2)-flatten-dense(64)-relu-dense(n)
    pub fn coinnet_s(num_classes: usize, height: usize, width: usize) -> ModelConfig {
        use LayerSpec::*;
        ModelConfig {
            height,
            width,
            channels: 1,
            layers: vec![
                Conv { out_channels: 8, kernel: 3, stride: 1 },
                Relu,
                MaxPool { window: 2 },
                Conv { out_channels: 16, kernel: 3, stride: 1 },
                Relu,
                MaxPool { window: 2 },
                Flatten,
                Dense { units: 64 },
                Relu,
                Dense { units: num_classes },
            ],
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    /// Per-sample activation shapes: the input, then the output of every layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let bad = |i: usize, msg: String| NnError::Config(format!("layer {i}: {msg}"));
        let mut shapes = vec![self.input_shape().to_vec()];
        if shapes[0].contains(&0) {
            return Err(NnError::Config(format!("input shape {:?} has a zero extent", shapes[0])));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("nonempty").clone();
            let next = match *layer {
                LayerSpec::Conv { out_channels, kernel, stride } => {
                    let [_, h, w] =
                        <[usize; 3]>::try_from(cur).map_err(|s| bad(i, format!("conv needs an image, got {s:?}")))?;
                    if out_channels == 0 || kernel == 0 || stride == 0 || kernel > h || kernel > w {
                        return Err(bad(i, format!("conv({out_channels},{kernel},{stride}) on {h}x{w}")));
                    }
                    vec![out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                LayerSpec::MaxPool { window } => {
                    let [c, h, w] = <[usize; 3]>::try_from(cur)
                        .map_err(|s| bad(i, format!("maxpool needs an image, got {s:?}")))?;
                    if window == 0 || window > h || window > w {
                        return Err(bad(i, format!("maxpool({window}) on {h}x{w}")));
                    }
                    vec![c, h / window, w / window]
                }
                LayerSpec::Relu => cur,
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Dense { units } => {
                    if cur.len() != 1 {
                        return Err(bad(i, format!("dense needs a flat input, got {cur:?}")));
                    }
                    if units == 0 {
                        return Err(bad(i, "dense with zero units".into()));
                    }
                    vec![units]
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Width of the final dense layer.
    pub fn num_classes(&self) -> Result<usize, NnError> {
        self.shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Dense { units }) => Ok(*units),
            _ => Err(NnError::Config("model must end in a dense layer".into())),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.num_classes().map(|_| ())
    }

    /// Shapes of every parameter tensor in layer order (weight then bias).
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { out_channels, kernel, .. } => {
                    out.push(vec![out_channels, shapes[i][0], kernel, kernel]);
                    out.push(vec![out_channels]);
                }
                LayerSpec::Dense { units } => {
                    out.push(vec![units, shapes[i][0]]);
                    out.push(vec![units]);
                }
                _ => {}
            }
        }
        Ok(out)
    }

    /// `layer{i}.weight` / `layer{i}.bias`, matching `param_shapes`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Conv { .. } | LayerSpec::Dense { .. }) {
                out.push(format!("layer{i}.weight"));
                out.push(format!("layer{i}.bias"));
            }
        }
        out
    }

    /// He-uniform weights (limit √(6/fan_in)) and zero biases.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<Vec<Tensor<T>>, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for shape in self.param_shapes()? {
            if shape.len() == 1 {
                out.push(Tensor::zeros(&shape));
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let limit = (6.0 / fan_in as f64).sqrt();
                out.push(Tensor::from_fn(&shape, |_| T::from_f64(rng.random_range(-limit..limit))));
            }
        }
        Ok(out)
    }

    fn check_params<T: Scalar>(&self, params: &[Tensor<T>]) -> Result<(), NnError> {
        let expected = self.param_shapes()?;
        if expected.len() != params.len() || expected.iter().zip(params).any(|(s, p)| s != p.shape()) {
            return Err(NnError::Shape(format!(
                "parameters {:?} do not match model {:?}",
                params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>(),
                expected
            )));
        }
        Ok(())
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<(), NnError> {
        let s = x.shape();
        if s.len() != 4 || s[1..] != self.input_shape() {
            return Err(NnError::Shape(format!("input {s:?}, model expects [N, {:?}]", self.input_shape())));
        }
        Ok(())
    }

    fn run<T: Scalar>(
        &self,
        params: &[Tensor<T>],
        x: Tensor<T>,
        keep: bool,
    ) -> Result<(Tensor<T>, Vec<Saved<T>>), NnError> {
        self.check_params(params)?;
        self.check_input(&x)?;
        let n = x.shape()[0];
        let mut tape = Vec::new();
        let mut cur = x;
        let mut p = 0;
        for layer in &self.layers {
            let (next, saved) = match *layer {
                LayerSpec::Conv { stride, .. } => {
                    p += 2;
                    (conv2d_forward(&cur, &params[p - 2], &params[p - 1], stride)?, None)
                }
                LayerSpec::Dense { .. } => {
                    p += 2;
                    (dense_forward(&cur, &params[p - 2], &params[p - 1])?, None)
                }
                LayerSpec::Relu => (relu_forward(&cur), None),
                LayerSpec::MaxPool { window } => {
                    let (y, argmax) = maxpool_forward(&cur, window)?;
                    (y, Some(Saved::Pool { shape: cur.shape().to_vec(), argmax }))
                }
                LayerSpec::Flatten => {
                    let shape = cur.shape().to_vec();
                    let d = cur.len() / n.max(1);
                    let taken = std::mem::replace(&mut cur, Tensor::zeros(&[0]));
                    (taken.reshape(&[n, d])?, Some(Saved::Flatten(shape)))
                }
            };
            // layers without a Saved entry still need their input
            let prev = std::mem::replace(&mut cur, next);
            if keep {
                tape.push(saved.unwrap_or(Saved::Input(prev)));
            }
        }
        Ok((cur, tape))
    }

    /// Logits for a batch `[N, C, H, W]`.
    pub fn forward<T: Scalar>(&self, params: &[Tensor<T>], x: Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(self.run(params, x, false)?.0)
    }

    /// Sum of per-sample cross-entropy losses and the parameter gradients of
    /// `scale × that sum`.
    pub fn loss_and_grads<T: Scalar>(
        &self,
        params: &[Tensor<T>],
        x: Tensor<T>,
        labels: &[usize],
        scale: T,
    ) -> Result<(f64, Vec<Tensor<T>>), NnError> {
        let (logits, tape) = self.run(params, x, true)?;
        let (loss, dlogits) = xent_parts(&logits, labels, scale)?;
        let grads = self.backward(params, tape, dlogits)?;
        Ok((loss, grads))
    }

    fn backward<T: Scalar>(
        &self,
        params: &[Tensor<T>],
        mut tape: Vec<Saved<T>>,
        dy: Tensor<T>,
    ) -> Result<Vec<Tensor<T>>, NnError> {
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; params.len()];
        let mut p = params.len();
        let mut g = dy;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let saved = tape.pop().expect("one tape entry per layer");
            g = match (layer, saved) {
                (LayerSpec::Conv { stride, .. }, Saved::Input(x)) => {
                    p -= 2;
                    let cg = conv2d_backward(&x, &params[p], *stride, &g, i > 0)?;
                    grads[p] = Some(cg.dw);
                    grads[p + 1] = Some(cg.db);
                    match cg.dx {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                (LayerSpec::Dense { .. }, Saved::Input(x)) => {
                    p -= 2;
                    let (dx, dw, db) = dense_backward(&x, &params[p], &g)?;
                    grads[p] = Some(dw);
                    grads[p + 1] = Some(db);
                    dx
                }
                (LayerSpec::Relu, Saved::Input(x)) => relu_backward(&x, &g)?,
                (LayerSpec::MaxPool { .. }, Saved::Pool { shape, argmax }) => maxpool_backward(&g, &argmax, &shape)?,
                (LayerSpec::Flatten, Saved::Flatten(shape)) => g.reshape(&shape)?,
                _ => unreachable!("tape entries follow the layer list"),
            };
        }
        Ok(grads.into_iter().map(|g| g.expect("every parameter receives a gradient")).collect())
    }

    /// Class index per sample; ties go to the lowest index.
    pub fn predict<T: Scalar>(&self, params: &[Tensor<T>], x: Tensor<T>) -> Result<Vec<usize>, NnError> {
        Ok(argmax_rows(&self.forward(params, x)?))
    }
}

enum Saved<T> {
    Input(Tensor<T>),
    Pool { shape: Vec<usize>, argmax: Vec<usize> },
    Flatten(Vec<usize>),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        use LayerSpec::*;
        ModelConfig {
            height: 7,
            width: 6,
            channels: 2,
            layers: vec![
                Conv { out_channels: 3, kernel: 2, stride: 1 },
                Relu,
                MaxPool { window: 2 },
                Flatten,
                Dense { units: 5 },
                Relu,
                Dense { units: 4 },
            ],
        }
    }

    #[test]
    fn coinnet_s_shape_chain() {
        let cfg = ModelConfig::coinnet_s(6, 150, 150);
        let shapes = cfg.shapes().unwrap();
        assert_eq!(shapes[1], vec![8, 148, 148]);
        assert_eq!(shapes[3], vec![8, 74, 74]);
        assert_eq!(shapes[4], vec![16, 72, 72]);
        assert_eq!(shapes[7], vec![16 * 36 * 36]);
        assert_eq!(cfg.num_classes().unwrap(), 6);
        assert_eq!(cfg.param_shapes().unwrap()[4], vec![64, 20736]);
        assert_eq!(cfg.param_names().len(), 8);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = tiny();
        cfg.layers.remove(3);
        assert!(cfg.validate().is_err());
        let mut cfg = tiny();
        cfg.layers.pop();
        cfg.layers.pop();
        assert!(cfg.validate().is_ok());
        cfg.layers.push(LayerSpec::Relu);
        assert!(cfg.num_classes().is_err());
        let mut cfg = tiny();
        cfg.layers[0] = LayerSpec::Conv { out_channels: 3, kernel: 9, stride: 1 };
        assert!(cfg.validate().is_err());
        let json =
            r#"{"height":4,"width":4,"channels":1,"layers":[{"kind":"flatten"},{"kind":"dense","units":2,"extra":1}]}"#;
        assert!(serde_json::from_str::<ModelConfig>(json).is_err());
    }

    #[test]
    fn wrong_input_or_params() {
        let cfg = tiny();
        let params = cfg.init_params::<f64>(1).unwrap();
        assert!(cfg.forward(&params, Tensor::zeros(&[2, 2, 7, 7])).is_err());
        assert!(cfg.forward(&params[1..], Tensor::zeros(&[2, 2, 7, 6])).is_err());
        assert_eq!(cfg.forward(&params, Tensor::zeros(&[2, 2, 7, 6])).unwrap().shape(), &[2, 4]);
    }

    #[test]
    fn init_is_seeded_he_uniform() {
        let cfg = tiny();
        let a = cfg.init_params::<f32>(9).unwrap();
        assert_eq!(a, cfg.init_params::<f32>(9).unwrap());
        assert_ne!(a, cfg.init_params::<f32>(10).unwrap());
        let limit = (6.0f32 / 8.0).sqrt();
        assert!(a[0].data().iter().all(|v| v.abs() <= limit));
        assert!(a[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_prediction_matches_single() {
        let cfg = tiny();
        let params = cfg.init_params::<f64>(3).unwrap();
        let x = Tensor::from_fn(&[5, 2, 7, 6], |i| ((i * 37 % 101) as f64) / 101.0);
        let batch = cfg.predict(&params, x.clone()).unwrap();
        let per = 2 * 7 * 6;
        for (k, &b) in batch.iter().enumerate() {
            let xi = Tensor::new(vec![1, 2, 7, 6], x.data()[k * per..][..per].to_vec()).unwrap();
            assert_eq!(cfg.predict(&params, xi).unwrap(), vec![b]);
        }
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let cfg = tiny();
        let mut params = cfg.init_params::<f64>(4).unwrap();
        for p in params.iter_mut() {
            for (k, v) in p.data_mut().iter_mut().enumerate() {
                *v += 0.01 * ((k % 7) as f64 - 3.0);
            }
        }
        let x = Tensor::from_fn(&[3, 2, 7, 6], |i| ((i * 53 % 97) as f64) / 97.0);
        let labels = [0, 3, 1];
        let (_, grads) = cfg.loss_and_grads(&params, x.clone(), &labels, 1.0).unwrap();
        let h = 1e-5;
        for (pi, g) in grads.iter().enumerate() {
            for k in (0..g.len()).step_by(3) {
                let mut plus = params.clone();
                plus[pi].data_mut()[k] += h;
                let mut minus = params.clone();
                minus[pi].data_mut()[k] -= h;
                let lp = cfg.loss_and_grads(&plus, x.clone(), &labels, 1.0).unwrap().0;
                let lm = cfg.loss_and_grads(&minus, x.clone(), &labels, 1.0).unwrap().0;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = g.data()[k];
                let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(err <= 1e-4, "param {pi}[{k}]: {analytic} vs {numeric}");
            }
        }
    }
}
