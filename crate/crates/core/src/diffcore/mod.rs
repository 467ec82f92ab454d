//! Dense matrices with tape-based reverse-mode differentiation.
//!
//! A forward pass records every operation on a [`Tape`]; [`Tape::gradients`]
//! then sweeps the tape once in reverse. Tapes are cheap and rebuilt for each
//! forward pass. All reductions run in a fixed sequential order, so identical
//! tapes produce bitwise-identical gradients.

pub mod ops;
mod param;
mod tape;
mod tensor;

use thiserror::Error;

pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("tensor {rows}x{cols} cannot hold {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("backward needs a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: (usize, usize) },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParameter(String),
}

/// One parameter entry compared between the tape and central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradEntry {
    /// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub fn relative_error(&self) -> f64 {
        let denom = self.analytic.abs().max(self.numeric.abs()).max(1e-8);
        (self.analytic - self.numeric).abs() / denom
    }
}

/// Outcome of comparing tape gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat entry index of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn from_entries(entries: &[GradEntry]) -> Self {
        let mut report = GradCheckReport {
            max_relative_error: 0.0,
            worst: None,
            entries_checked: entries.len(),
        };
        for e in entries {
            let err = e.relative_error();
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((e.param.clone(), e.index));
            }
        }
        report
    }
}

/// Tape gradient and central difference `(f(θ+h) − f(θ−h)) / 2h` for every
/// parameter entry of the scalar built by `f`.
pub fn gradient_entries<F, E>(store: &ParamStore, h: f64, f: F) -> Result<Vec<GradEntry>, E>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, E>,
    E: From<DiffError>,
{
    let eval = |params: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new();
        let out = f(&mut tape, params)?;
        Ok(tape.value(out).item()?)
    };

    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let analytic = tape.gradients(loss, store)?;
    drop(tape);

    let mut work = store.clone();
    let mut entries = Vec::with_capacity(store.num_scalars());
    for id in store.ids() {
        for k in 0..store.value(id).len() {
            let original = store.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = original + h;
            let plus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = original - h;
            let minus = eval(&work)?;
            work.value_mut(id).data_mut()[k] = original;
            entries.push(GradEntry {
                param: store.get(id).name.clone(),
                index: k,
                analytic: analytic.get(id).data()[k],
                numeric: (plus - minus) / (2.0 * h),
            });
        }
    }
    Ok(entries)
}

/// Maximum [`GradEntry::relative_error`] over every parameter entry.
pub fn grad_check<F, E>(store: &ParamStore, h: f64, f: F) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, E>,
    E: From<DiffError>,
{
    Ok(GradCheckReport::from_entries(&gradient_entries(store, h, f)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn lone_parameter_has_unit_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::scalar(3.5)).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(&store, p).unwrap();
        tape.backward(v, &mut store).unwrap();
        assert_eq!(store.grad(p).data(), &[1.0]);
    }

    #[test]
    fn sum_of_wx_gradient() {
        // loss = Σ_i (W x)_i  ⇒  ∂loss/∂W[i][j] = x_j
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 4.0]]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let x = tape
            .constant(Tensor::from_rows(&[vec![0.5], vec![-2.0], vec![3.0]]).unwrap())
            .unwrap();
        let wv = tape.param(&store, w).unwrap();
        let y = tape.matmul(wv, x).unwrap();
        let loss = tape.sum(y).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[0.5, -2.0, 3.0, 0.5, -2.0, 3.0]);
    }

    #[test]
    fn unreachable_parameters_get_zero() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0)).unwrap();
        let b = store.add("b", Tensor::scalar(5.0)).unwrap();

        let mut first = Tape::new();
        let av = first.param(&store, a).unwrap();
        let first_loss = first.scale(av, 3.0).unwrap();
        first.backward(first_loss, &mut store).unwrap();
        assert_eq!(store.grad(a).data(), &[3.0]);

        let mut second = Tape::new();
        let bv = second.param(&store, b).unwrap();
        let loss = second.tanh(bv).unwrap();
        second.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(a).data(), &[0.0]);
        assert!(store.grad(b).data()[0] > 0.0);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(2, 2)).unwrap();
        let mut tape = Tape::new();
        let av = tape.param(&store, a).unwrap();
        assert!(matches!(
            tape.backward(av, &mut store),
            Err(DiffError::NonScalarOutput { shape: (2, 2) })
        ));
    }

    #[test]
    fn scalar_activation_checks() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::scalar(0.0)).unwrap();
        let id = store.id("x").unwrap();

        let tanh = grad_check(&store, 1e-5, |tape, s| {
            let x = tape.param(s, id)?;
            tape.tanh(x)
        })
        .unwrap();
        assert!(tanh.max_relative_error < 1e-8);

        let mut tape = Tape::new();
        let x = tape.param(&store, id).unwrap();
        let y = tape.sigmoid(x).unwrap();
        let g = tape.gradients(y, &store).unwrap();
        assert_eq!(g.get(id).data(), &[0.25]);
    }

    #[test]
    fn two_layer_net_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let w1 = store.add("w1", random_tensor(&mut rng, 4, 6)).unwrap();
        let b1 = store.add("b1", random_tensor(&mut rng, 1, 6)).unwrap();
        let w2 = store.add("w2", random_tensor(&mut rng, 6, 1)).unwrap();
        let x = random_tensor(&mut rng, 5, 4);
        let labels = [1.0, 0.0, 1.0, 1.0, 0.0];

        let report = grad_check(&store, 1e-5, |tape, s| {
            let xv = tape.constant(x.clone())?;
            let (w1, b1, w2) = (tape.param(s, w1)?, tape.param(s, b1)?, tape.param(s, w2)?);
            let h = tape.matmul(xv, w1)?;
            let h = tape.add_row(h, b1)?;
            let h = tape.tanh(h)?;
            let logit = tape.matmul(h, w2)?;
            let p = tape.sigmoid(logit)?;
            tape.bce(p, &labels)
        })
        .unwrap();
        assert_eq!(report.entries_checked, 24 + 6 + 6);
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    /// Every differentiable op, checked on random inputs in [−2, 2].
    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let a = store.add("a", random_tensor(&mut rng, 3, 4)).unwrap();
        let b = store.add("b", random_tensor(&mut rng, 4, 2)).unwrap();
        let c = store.add("c", random_tensor(&mut rng, 3, 4)).unwrap();
        let r = store.add("r", random_tensor(&mut rng, 1, 4)).unwrap();
        let s = store.add("s", random_tensor(&mut rng, 1, 1)).unwrap();
        let weights = random_tensor(&mut rng, 10, 3);

        let report = grad_check(&store, 1e-5, |tape, st| {
            let (a, b, c, r, s) = (
                tape.param(st, a)?,
                tape.param(st, b)?,
                tape.param(st, c)?,
                tape.param(st, r)?,
                tape.param(st, s)?,
            );
            let ab = tape.matmul(a, b)?; // 3x2
            let sum = tape.add(a, c)?;
            let prod = tape.mul(sum, c)?;
            let shifted = tape.add_row(prod, r)?;
            let scaled = tape.scale_by(shifted, s)?;
            // keep tanh out of saturation so no gradient is buried in rounding noise
            let scaled = tape.scale(scaled, 0.1)?;
            let offset = tape.add_scalar(scaled, 0.3)?;
            let t = tape.tanh(offset)?;
            let seg = tape.segment_sum(t, &[0, 0, 1, 2, 2], &[1, 2, 0, 2, 0], 3)?;
            let rs = tape.row_sum(seg)?; // 3x1
            let rst = tape.transpose(rs)?; // 1x3
            let soft = tape.row_softmax(rst)?;
            let sig = tape.sigmoid(ab)?;
            let cat = tape.concat_cols(&[sig, seg, a])?; // 3x(2+4+4)
            let cat = tape.scale(cat, 0.5)?;
            let pooled = tape.matmul(soft, cat)?; // 1x10
            let w = tape.constant(weights.clone())?;
            let lin = tape.matmul(pooled, w)?; // 1x3
            let relu = tape.relu(lin)?;
            let p = tape.sigmoid(relu)?;
            let p = tape.clamp(p, 1e-7, 1.0 - 1e-7)?;
            let p = tape.transpose(p)?;
            tape.bce(p, &[1.0, 0.0, 1.0])
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn backward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let w = store.add("w", random_tensor(&mut rng, 6, 6)).unwrap();
        let x = random_tensor(&mut rng, 4, 6);
        let run = || {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone()).unwrap();
            let wv = tape.param(&store, w).unwrap();
            let h = tape.matmul(xv, wv).unwrap();
            let h = tape.tanh(h).unwrap();
            let h = tape.segment_sum(h, &[0, 1, 1, 0], &[3, 2, 0, 1], 2).unwrap();
            let l = tape.sum(h).unwrap();
            tape.gradients(l, &store).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dropout_on_tape_zero_rate_is_identity() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = tape.constant(Tensor::row_vector(vec![1.0, 2.0])).unwrap();
        assert_eq!(tape.dropout(x, 0.0, &mut rng).unwrap(), x);
        assert!(tape.dropout(x, 1.0, &mut rng).is_err());
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(1e300)).unwrap();
        assert!(matches!(tape.scale(x, 1e300), Err(DiffError::NonFinite { .. })));
    }
}
