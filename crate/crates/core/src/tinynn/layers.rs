//! Forward and backward kernels. Activations are laid out `[N, C, H, W]`
//! (images) or `[N, D]` (vectors).

use super::tensor::{axpy, dot, Scalar, Tensor};
use super::NnError;

fn expect_rank<T: Scalar>(t: &Tensor<T>, rank: usize, what: &str) -> Result<(), NnError> {
    if t.shape().len() != rank {
        return Err(NnError::Shape(format!("{what}: expected rank {rank}, got shape {:?}", t.shape())));
    }
    Ok(())
}

fn conv_out(extent: usize, kernel: usize, stride: usize) -> Result<usize, NnError> {
    if kernel == 0 || stride == 0 || extent < kernel {
        return Err(NnError::Shape(format!("kernel {kernel} / stride {stride} does not fit extent {extent}")));
    }
    Ok((extent - kernel) / stride + 1)
}

fn check_conv<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize) -> Result<[usize; 8], NnError> {
    expect_rank(x, 4, "conv input")?;
    expect_rank(w, 4, "conv weight")?;
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (f, wc, k, k2) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if wc != c || k != k2 {
        return Err(NnError::Shape(format!("conv weight {:?} does not match input {:?}", w.shape(), x.shape())));
    }
    if b.shape() != [f] {
        return Err(NnError::Shape(format!("conv bias {:?}, expected [{f}]", b.shape())));
    }
    let oh = conv_out(h, k, stride)?;
    let ow = conv_out(wd, k, stride)?;
    Ok([n, c, h, wd, f, k, oh, ow])
}

/// Valid-padding cross-correlation plus bias: `[N,C,H,W] ⋆ [F,C,k,k] → [N,F,H',W']`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>, NnError> {
    let [n, c, h, wd, f, k, oh, ow] = check_conv(x, w, b, stride)?;
    let mut y = Tensor::zeros(&[n, f, oh, ow]);
    let (xs, ws, bs) = (x.data(), w.data(), b.data());
    let out = y.data_mut();
    for ni in 0..n {
        for fi in 0..f {
            let plane = &mut out[(ni * f + fi) * oh * ow..][..oh * ow];
            plane.iter_mut().for_each(|v| *v = bs[fi]);
            for ci in 0..c {
                let input = &xs[(ni * c + ci) * h * wd..][..h * wd];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = ws[((fi * c + ci) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let row = &input[(oy * stride + ky) * wd + kx..];
                            let dst = &mut plane[oy * ow..][..ow];
                            if stride == 1 {
                                axpy(wv, &row[..ow], dst);
                            } else {
                                for (ox, d) in dst.iter_mut().enumerate() {
                                    *d += wv * row[ox * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

pub struct ConvGrads<T> {
    /// `None` when the input gradient was not requested.
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

/// Gradients of `conv2d_forward` given the upstream gradient `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
    want_dx: bool,
) -> Result<ConvGrads<T>, NnError> {
    let b_shape = Tensor::<T>::zeros(&[w.shape().first().copied().unwrap_or(0)]);
    let [n, c, h, wd, f, k, oh, ow] = check_conv(x, w, &b_shape, stride)?;
    if dy.shape() != [n, f, oh, ow] {
        return Err(NnError::Shape(format!("conv upstream {:?}, expected {:?}", dy.shape(), [n, f, oh, ow])));
    }
    let (xs, ws, dys) = (x.data(), w.data(), dy.data());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[f]);
    let mut dx = want_dx.then(|| Tensor::zeros(x.shape()));
    let mut scratch = vec![T::zero(); ow];
    for ni in 0..n {
        for fi in 0..f {
            let grad = &dys[(ni * f + fi) * oh * ow..][..oh * ow];
            db.data_mut()[fi] += grad.iter().copied().sum::<T>();
            for ci in 0..c {
                let input = &xs[(ni * c + ci) * h * wd..][..h * wd];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((fi * c + ci) * k + ky) * k + kx;
                        if stride == 1 {
                            // accumulate row products elementwise, reduce once
                            scratch.iter_mut().for_each(|s| *s = T::zero());
                            for oy in 0..oh {
                                let row = &input[(oy + ky) * wd + kx..][..ow];
                                let g = &grad[oy * ow..][..ow];
                                for ((s, &a), &b) in scratch.iter_mut().zip(row).zip(g) {
                                    *s += a * b;
                                }
                            }
                            dw.data_mut()[widx] += scratch.iter().copied().sum::<T>();
                        } else {
                            let mut acc = T::zero();
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    acc += grad[oy * ow + ox] * input[(oy * stride + ky) * wd + ox * stride + kx];
                                }
                            }
                            dw.data_mut()[widx] += acc;
                        }
                        if let Some(dx) = dx.as_mut() {
                            let wv = ws[widx];
                            let target = &mut dx.data_mut()[(ni * c + ci) * h * wd..][..h * wd];
                            for oy in 0..oh {
                                let g = &grad[oy * ow..][..ow];
                                let row = &mut target[(oy * stride + ky) * wd + kx..];
                                if stride == 1 {
                                    axpy(wv, g, &mut row[..ow]);
                                } else {
                                    for (ox, &gv) in g.iter().enumerate() {
                                        row[ox * stride] += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { dx, dw, db })
}

/// `[N, in] · [out, in]ᵀ + b → [N, out]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    expect_rank(x, 2, "dense input")?;
    expect_rank(w, 2, "dense weight")?;
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let (units, wd) = (w.shape()[0], w.shape()[1]);
    if wd != d || b.shape() != [units] {
        return Err(NnError::Shape(format!(
            "dense weight {:?} / bias {:?} do not match input {:?}",
            w.shape(),
            b.shape(),
            x.shape()
        )));
    }
    let mut y = Tensor::zeros(&[n, units]);
    for ni in 0..n {
        let xi = &x.data()[ni * d..][..d];
        for u in 0..units {
            y.data_mut()[ni * units + u] = dot(xi, &w.data()[u * d..][..d]) + b.data()[u];
        }
    }
    Ok(y)
}

/// `(dx, dw, db)`.
pub type DenseGrads<T> = (Tensor<T>, Tensor<T>, Tensor<T>);

pub fn dense_backward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, dy: &Tensor<T>) -> Result<DenseGrads<T>, NnError> {
    expect_rank(x, 2, "dense input")?;
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let units = w.shape()[0];
    if w.shape() != [units, d] || dy.shape() != [n, units] {
        return Err(NnError::Shape(format!(
            "dense backward shapes x {:?}, w {:?}, dy {:?}",
            x.shape(),
            w.shape(),
            dy.shape()
        )));
    }
    let mut dx = Tensor::zeros(&[n, d]);
    let mut dw = Tensor::zeros(&[units, d]);
    let mut db = Tensor::zeros(&[units]);
    // unit-major so each weight row stays cached across the batch
    for u in 0..units {
        let wu = &w.data()[u * d..][..d];
        for ni in 0..n {
            let g = dy.data()[ni * units + u];
            db.data_mut()[u] += g;
            axpy(g, &x.data()[ni * d..][..d], &mut dw.data_mut()[u * d..][..d]);
            axpy(g, wu, &mut dx.data_mut()[ni * d..][..d]);
        }
    }
    Ok((dx, dw, db))
}

/// Non-overlapping max pooling (stride = window, trailing rows/columns
/// dropped). Also returns, per output cell, the flat input index it came
/// from; ties go to the first cell in row-major order.
pub fn maxpool_forward<T: Scalar>(x: &Tensor<T>, window: usize) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    expect_rank(x, 4, "maxpool input")?;
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let oh = conv_out(h, window, window)?;
    let ow = conv_out(w, window, window)?;
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let xs = x.data();
    let (mut best, mut best_idx) = (vec![T::zero(); ow], vec![0usize; ow]);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for dy in 0..window {
                let start = base + (oy * window + dy) * w;
                let row = &xs[start..][..ow * window];
                for (ox, cell) in row.chunks_exact(window).enumerate() {
                    for (dx, &v) in cell.iter().enumerate() {
                        // strict comparison keeps the first maximum in row-major order
                        if (dy == 0 && dx == 0) || v > best[ox] {
                            best[ox] = v;
                            best_idx[ox] = start + ox * window + dx;
                        }
                    }
                }
            }
            let at = argmax.len();
            y.data_mut()[at..at + ow].copy_from_slice(&best);
            argmax.extend_from_slice(&best_idx);
        }
    }
    Ok((y, argmax))
}

pub fn maxpool_backward<T: Scalar>(
    dy: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>, NnError> {
    if dy.len() != argmax.len() {
        return Err(NnError::Shape(format!("maxpool upstream has {} cells, argmax {}", dy.len(), argmax.len())));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&g, &i) in dy.data().iter().zip(argmax) {
        if i >= dx.len() {
            return Err(NnError::Shape(format!("argmax index {i} outside input {input_shape:?}")));
        }
        dx.data_mut()[i] += g;
    }
    Ok(dx)
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v.max(T::zero())).collect()).expect("same shape")
}

/// Passes the gradient where the forward input was positive.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if x.shape() != dy.shape() {
        return Err(NnError::Shape(format!("relu upstream {:?} vs input {:?}", dy.shape(), x.shape())));
    }
    let data = x.data().iter().zip(dy.data()).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect();
    Tensor::new(x.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Quadruple loop straight from the definition.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: usize) -> Vec<f64> {
        let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [f, _, k, _] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
        let (oh, ow) = ((h - k) / s + 1, (wd - k) / s + 1);
        let xi = |a: usize, b: usize, c2: usize, d: usize| x.data()[((a * c + b) * h + c2) * wd + d];
        let wi = |a: usize, b: usize, c2: usize, d: usize| w.data()[((a * c + b) * k + c2) * k + d];
        let mut out = Vec::new();
        for ni in 0..n {
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[fi];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    acc += wi(fi, ci, ky, kx) * xi(ni, ci, oy * s + ky, ox * s + kx);
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 1, 5, 4], &mut rng);
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let x = Tensor::from_fn(&[1, 1, 6, 6], |_| 2.5f64);
        let w = Tensor::from_fn(&[1, 1, 3, 3], |_| 1.0);
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 22.5));
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (shape, f, k, s) in [([2, 3, 7, 6], 4, 3, 1), ([1, 2, 9, 9], 3, 3, 2), ([3, 1, 5, 8], 2, 2, 3)] {
            let x = random(&shape, &mut rng);
            let w = random(&[f, shape[1], k, k], &mut rng);
            let b = random(&[f], &mut rng);
            let y = conv2d_forward(&x, &w, &b, s).unwrap();
            let naive = naive_conv(&x, &w, &b, s);
            for (a, e) in y.data().iter().zip(&naive) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f64>::zeros(&[1, 2, 5, 5]);
        let w = Tensor::<f64>::zeros(&[3, 1, 3, 3]);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[3]), 1).is_err());
        let w = Tensor::<f64>::zeros(&[3, 2, 6, 6]);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[3]), 1).is_err());
        let w = Tensor::<f64>::zeros(&[3, 2, 3, 3]);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[2]), 1).is_err());
        assert!(conv2d_backward(&x, &w, 1, &Tensor::zeros(&[1, 3, 2, 2]), true).is_err());
    }

    #[test]
    fn relu_backward_gates() {
        let x = Tensor::new(vec![4], vec![2.0, -1.0, 0.5, 0.0]).unwrap();
        let dy = Tensor::new(vec![4], vec![3.0, 3.0, -7.0, 1.0]).unwrap();
        assert_eq!(relu_backward(&x, &dy).unwrap().data(), &[3.0, 0.0, -7.0, 0.0]);
        assert_eq!(relu_forward(&x).data(), &[2.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn maxpool_routes_to_first_argmax() {
        // one 2x2 window full of ties, one with a unique max
        let x = Tensor::new(vec![1, 1, 2, 4], vec![5.0, 5.0, 1.0, 2.0, 5.0, 5.0, 9.0, 3.0]).unwrap();
        let (y, arg) = maxpool_forward(&x, 2).unwrap();
        assert_eq!(y.data(), &[5.0, 9.0]);
        assert_eq!(arg, vec![0, 6]);
        let dx = maxpool_backward(&Tensor::new(vec![1, 1, 1, 2], vec![1.5, -2.0]).unwrap(), &arg, x.shape()).unwrap();
        assert_eq!(dx.data(), &[1.5, 0.0, 0.0, 0.0, 0.0, 0.0, -2.0, 0.0]);
    }

    #[test]
    fn maxpool_drops_remainder() {
        let x = Tensor::<f64>::from_fn(&[1, 2, 5, 5], |i| i as f64);
        let (y, _) = maxpool_forward(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert_eq!(y.data()[0], 6.0);
    }
}
