use super::array::ArrayND;
use crate::error::{Error, Result};

/// Mean squared error over every element, with its gradient
/// `2(output − target)/count`.
pub fn mse_loss(output: &ArrayND, target: &ArrayND) -> Result<(f64, ArrayND)> {
    if output.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse: output {:?} vs target {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let count = output.len().max(1) as f64;
    let mut grad = ArrayND::zeros(output.shape());
    let mut sum = 0.0;
    for ((g, &o), &t) in grad.data_mut().iter_mut().zip(output.data()).zip(target.data()) {
        let d = o - t;
        sum += d * d;
        *g = 2.0 * d / count;
    }
    Ok((sum / count, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−log softmax(logits)[target]` and its gradient `softmax − one_hot`.
pub fn softmax_crossentropy(logits: &[f64], one_hot: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != one_hot.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} target entries",
            logits.len(),
            one_hot.len()
        )));
    }
    let ones = one_hot.iter().filter(|&&v| v == 1.0).count();
    let zeros = one_hot.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != one_hot.len() {
        return Err(Error::InvalidArgument(format!("{one_hot:?} is not one-hot")));
    }
    let target = one_hot.iter().position(|&v| v == 1.0).unwrap();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let loss = log_norm - logits[target];
    let grad = softmax(logits)
        .into_iter()
        .zip(one_hot)
        .map(|(p, t)| p - t)
        .collect();
    Ok((loss, grad))
}

/// One-hot row for class `class` of `n`.
pub fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[class] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let a = ArrayND::from_vec(&[2], vec![0.3, 0.4]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
        let o = ArrayND::from_vec(&[1], vec![1.0]).unwrap();
        let t = ArrayND::from_vec(&[1], vec![0.0]).unwrap();
        let (l, g) = mse_loss(&o, &t).unwrap();
        assert_eq!((l, g.data()[0]), (1.0, 2.0));
        assert!(mse_loss(&a, &o).is_err());
    }

    #[test]
    fn crossentropy_examples() {
        let (l, g) = softmax_crossentropy(&[0.3; 4], &one_hot(2, 4)).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((g[2] + 0.75).abs() < 1e-15 && (g[0] - 0.25).abs() < 1e-15);
        let (l, g) = softmax_crossentropy(&[1000.0, 0.0, 0.0, 0.0], &one_hot(0, 4)).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-300);
        assert!(g.iter().all(|v| v.is_finite()));
        assert!(softmax_crossentropy(&[0.0; 4], &[0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(softmax_crossentropy(&[0.0; 4], &[1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(softmax_crossentropy(&[0.0; 4], &[0.0; 4]).is_err());
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&[0.1, -2.0, 3.0, 0.5]);
        let b = softmax(&[100.1, 98.0, 103.0, 100.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
