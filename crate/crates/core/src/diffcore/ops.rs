//! Untracked tensor kernels shared by the tape and by inference code.

use rand::Rng;

use super::{DiffError, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), DiffError> {
    if a.shape() != b.shape() {
        return Err(DiffError::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    a.matmul(b)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    same_shape("add", a, b)?;
    Ok(a.zip_map(b, |x, y| x + y))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    same_shape("mul", a, b)?;
    Ok(a.zip_map(b, |x, y| x * y))
}

pub fn tanh(a: &Tensor) -> Tensor {
    a.map(f64::tanh)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    a.map(sigmoid_scalar)
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|v| v.max(0.0))
}

pub(crate) fn apply_mask(a: &Tensor, mask: &[f64]) -> Tensor {
    let data = a.data().iter().zip(mask).map(|(v, m)| v * m).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("mask matches tensor length")
}

/// Inverted dropout on a plain tensor; identity when `training` is false.
pub fn dropout<R: Rng + ?Sized>(a: &Tensor, rate: f64, training: bool, rng: &mut R) -> Result<Tensor, DiffError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(DiffError::InvalidRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(a.clone());
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(a.map(|v| if rng.gen::<f64>() < rate { 0.0 } else { v * keep }))
}

/// Softmax of each row, with the row maximum subtracted first.
pub fn rowwise_softmax(m: &Tensor) -> Result<Tensor, DiffError> {
    if m.is_empty() {
        return Err(DiffError::Empty { op: "rowwise_softmax" });
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Gathers rows of `values` and sums them into `n_out` segments, in entry order.
pub fn segment_sum(
    values: &Tensor,
    segment_of: &[usize],
    gather_from: &[usize],
    n_out: usize,
) -> Result<Tensor, DiffError> {
    if segment_of.len() != gather_from.len() {
        return Err(DiffError::ShapeMismatch {
            op: "segment_sum",
            lhs: (segment_of.len(), 1),
            rhs: (gather_from.len(), 1),
        });
    }
    let mut out = Tensor::zeros(n_out, values.cols());
    for (&s, &src) in segment_of.iter().zip(gather_from) {
        if s >= n_out {
            return Err(DiffError::IndexOutOfRange { index: s, bound: n_out });
        }
        if src >= values.rows() {
            return Err(DiffError::IndexOutOfRange {
                index: src,
                bound: values.rows(),
            });
        }
        for (o, v) in out.row_mut(s).iter_mut().zip(values.row(src)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Mean binary cross-entropy. Probabilities are used as given; clamp first.
pub fn bce(p: &[f64], labels: &[f64]) -> Result<f64, DiffError> {
    if p.is_empty() {
        return Err(DiffError::Empty { op: "bce" });
    }
    if p.len() != labels.len() {
        return Err(DiffError::ShapeMismatch {
            op: "bce",
            lhs: (p.len(), 1),
            rhs: (labels.len(), 1),
        });
    }
    let total: f64 = p
        .iter()
        .zip(labels)
        .map(|(&p, &y)| y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        .sum();
    Ok(-total / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_equal_row() {
        let s = rowwise_softmax(&Tensor::row_vector(vec![3.0; 4])).unwrap();
        assert_eq!(s.data(), &[0.25; 4]);
    }

    #[test]
    fn softmax_single() {
        let s = rowwise_softmax(&Tensor::row_vector(vec![0.0])).unwrap();
        assert_eq!(s.data(), &[1.0]);
    }

    #[test]
    fn softmax_log_ratio() {
        let s = rowwise_softmax(&Tensor::row_vector(vec![1f64.ln(), 3f64.ln()])).unwrap();
        assert_abs_diff_eq!(s.data()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.data()[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let s = rowwise_softmax(&Tensor::row_vector(vec![1000.0, 1000.0])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn segment_sum_hand_example() {
        let v = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let out = segment_sum(&v, &[0, 0, 1], &[1, 2, 0], 2).unwrap();
        assert_eq!(out.data(), &[5.0, 1.0]);
    }

    #[test]
    fn segment_sum_empty_and_self() {
        let v = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(segment_sum(&v, &[], &[], 2).unwrap().data(), &[0.0, 0.0]);
        let seven = Tensor::scalar(7.0);
        assert_eq!(segment_sum(&seven, &[0], &[0], 1).unwrap().data(), &[7.0]);
    }

    #[test]
    fn segment_sum_out_of_range() {
        let v = Tensor::zeros(2, 1);
        assert!(matches!(
            segment_sum(&v, &[0], &[5], 1),
            Err(DiffError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            segment_sum(&v, &[3], &[0], 1),
            Err(DiffError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn activations_at_known_points() {
        assert_eq!(tanh(&Tensor::scalar(0.0)).data(), &[0.0]);
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).data(), &[0.5]);
        assert_eq!(relu(&Tensor::row_vector(vec![-1.0, 2.0])).data(), &[0.0, 2.0]);
    }

    #[test]
    fn dropout_zero_rate_and_inference_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::row_vector(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout(&a, 0.0, true, &mut rng).unwrap(), a);
        assert_eq!(dropout(&a, 0.5, false, &mut rng).unwrap(), a);
    }

    #[test]
    fn dropout_rescales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::filled(1, 1000, 1.0);
        let out = dropout(&a, 0.2, true, &mut rng).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 1.25));
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        assert!((150..250).contains(&zeros), "{zeros} dropped");
    }

    #[test]
    fn binary_shape_mismatch() {
        assert!(add(&Tensor::zeros(1, 2), &Tensor::zeros(2, 1)).is_err());
        assert!(mul(&Tensor::zeros(1, 2), &Tensor::zeros(1, 3)).is_err());
    }
}
