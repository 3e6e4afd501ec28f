use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Sum of per-row cross-entropy losses and `(softmax − onehot)·scale`.
pub(crate) fn xent_parts<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    scale: T,
) -> Result<(f64, Tensor<T>), NnError> {
    if logits.shape().len() != 2 || logits.shape()[0] != labels.len() {
        return Err(NnError::Shape(format!("logits {:?} for {} labels", logits.shape(), labels.len())));
    }
    let c = logits.shape()[1];
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0f64;
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(NnError::Label { label, classes: c });
        }
        let row = &logits.data()[i * c..][..c];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: T = exps.iter().copied().sum();
        total += (z.ln() - (row[label] - max)).to_f64().unwrap_or(f64::NAN);
        let g = &mut grad.data_mut()[i * c..][..c];
        for (k, (gk, &e)) in g.iter_mut().zip(&exps).enumerate() {
            let p = e / z;
            *gk = (if k == label { p - T::one() } else { p }) * scale;
        }
    }
    Ok((total, grad))
}

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot)/N` with respect to the logits.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>), NnError> {
    if labels.is_empty() {
        return Err(NnError::Shape("empty batch".into()));
    }
    let n = labels.len();
    let (sum, grad) = xent_parts(logits, labels, T::one() / T::from_f64(n as f64))?;
    Ok((T::from_f64(sum / n as f64), grad))
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if logits.shape().len() != 2 {
        return Err(NnError::Shape(format!("logits {:?}", logits.shape())));
    }
    let c = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let z: T = row.iter().copied().sum();
        row.iter_mut().for_each(|v| *v = *v / z);
    }
    Ok(out)
}

/// Argmax per row; ties go to the lowest index.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let c = logits.shape().get(1).copied().unwrap_or(0);
    if c == 0 {
        return Vec::new();
    }
    logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
