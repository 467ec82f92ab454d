use std::collections::HashMap;

use rand::Rng;

use super::{ops, DiffError, Gradients, ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    SegmentSum {
        input: Var,
        segment_of: Vec<usize>,
        gather_from: Vec<usize>,
    },
    RowSum(Var),
    RowSoftmax(Var),
    ConcatCols(Vec<Var>),
    Clamp(Var, f64, f64),
    Bce(Var, Vec<f64>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order of the
/// computation graph, so the backward pass is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var, DiffError> {
        if !value.is_finite() {
            return Err(DiffError::NonFinite { op: name });
        }
        let requires_grad = match &op {
            Op::Constant => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::ScaleBy(a, b) => {
                self.requires(*a) || self.requires(*b)
            }
            Op::ConcatCols(parts) => parts.iter().any(|p| self.requires(*p)),
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Dropout(a, _)
            | Op::SegmentSum { input: a, .. }
            | Op::RowSum(a)
            | Op::RowSoftmax(a)
            | Op::Clamp(a, _, _)
            | Op::Bce(a, _)
            | Op::Sum(a) => self.requires(*a),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, DiffError> {
        self.push(value, Op::Constant, "constant")
    }

    /// Records a parameter leaf. Repeated calls for the same id return the
    /// same variable so gradients from every use accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var, DiffError> {
        if let Some(v) = self.param_vars.get(&id) {
            return Ok(*v);
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), "param")?;
        self.param_vars.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let value = ops::add(self.value(a), self.value(b))?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let value = ops::mul(self.value(a), self.value(b))?;
        self.push(value, Op::Mul(a, b), "mul")
    }

    /// Adds a `1 × d` row to every row of an `n × d` matrix.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var, DiffError> {
        let (mv, rv) = (self.value(m), self.value(row));
        if rv.rows() != 1 || rv.cols() != mv.cols() {
            return Err(DiffError::ShapeMismatch {
                op: "add_row",
                lhs: mv.shape(),
                rhs: rv.shape(),
            });
        }
        let mut value = mv.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        self.push(value, Op::AddRow(m, row), "add_row")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, DiffError> {
        let value = self.value(a).map(|v| v * factor);
        self.push(value, Op::Scale(a, factor), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var, DiffError> {
        let value = self.value(a).map(|v| v + offset);
        self.push(value, Op::AddScalar(a), "add_scalar")
    }

    /// Multiplies every entry of `m` by the `1 × 1` variable `s`.
    pub fn scale_by(&mut self, m: Var, s: Var) -> Result<Var, DiffError> {
        let factor = self.value(s).item().map_err(|_| DiffError::ShapeMismatch {
            op: "scale_by",
            lhs: self.shape(m),
            rhs: self.shape(s),
        })?;
        let value = self.value(m).map(|v| v * factor);
        self.push(value, Op::ScaleBy(m, s), "scale_by")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = ops::tanh(self.value(a));
        self.push(value, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = ops::sigmoid(self.value(a));
        self.push(value, Op::Sigmoid(a), "sigmoid")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = ops::relu(self.value(a));
        self.push(value, Op::Relu(a), "relu")
    }

    /// Inverted dropout. A zero rate returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var, DiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(DiffError::InvalidRate(rate));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = ops::apply_mask(self.value(a), &mask);
        self.push(value, Op::Dropout(a, mask), "dropout")
    }

    /// `out[s] = Σ values[gather_from[m]]` over entries with `segment_of[m] = s`.
    pub fn segment_sum(
        &mut self,
        values: Var,
        segment_of: &[usize],
        gather_from: &[usize],
        n_out: usize,
    ) -> Result<Var, DiffError> {
        let value = ops::segment_sum(self.value(values), segment_of, gather_from, n_out)?;
        self.push(
            value,
            Op::SegmentSum {
                input: values,
                segment_of: segment_of.to_vec(),
                gather_from: gather_from.to_vec(),
            },
            "segment_sum",
        )
    }

    /// Sums each row, giving an `n × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = self.value(a);
        let mut value = Tensor::zeros(av.rows(), 1);
        for r in 0..av.rows() {
            value.data_mut()[r] = av.row(r).iter().sum();
        }
        self.push(value, Op::RowSum(a), "row_sum")
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = ops::rowwise_softmax(self.value(a))?;
        self.push(value, Op::RowSoftmax(a), "row_softmax")
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let rows = parts.first().map_or(0, |p| self.shape(*p).0);
        let mut cols = 0;
        for p in parts {
            let shape = self.shape(*p);
            if shape.0 != rows {
                return Err(DiffError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: (rows, cols),
                    rhs: shape,
                });
            }
            cols += shape.1;
        }
        let mut value = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                let src = self.value(*p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        self.push(value, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, DiffError> {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi), "clamp")
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 labels.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Result<Var, DiffError> {
        let value = Tensor::scalar(ops::bce(self.value(p).data(), labels)?);
        self.push(value, Op::Bce(p, labels.to_vec()), "bce")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), "sum")
    }

    /// Reverse sweep from the scalar `loss`. Parameters not reachable from
    /// `loss` get zero gradients.
    pub fn gradients(&self, loss: Var, store: &ParamStore) -> Result<Gradients, DiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(DiffError::NonScalarOutput { shape });
        }
        let mut out = store.zero_gradients();
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let slot = &mut out.0[id.index()];
                    if slot.shape() != g.shape() {
                        return Err(DiffError::ShapeMismatch {
                            op: "backward",
                            lhs: slot.shape(),
                            rhs: g.shape(),
                        });
                    }
                    slot.add_assign(&g);
                }
                Op::MatMul(a, b) => {
                    if self.requires(*a) {
                        let ga = g.matmul_nt(self.value(*b))?;
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.requires(*b) {
                        let gb = self.value(*a).matmul_tn(&g)?;
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    if self.requires(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.requires(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires(*a) {
                        accumulate(&mut grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    }
                    if self.requires(*b) {
                        accumulate(&mut grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                    }
                }
                Op::AddRow(m, row) => {
                    if self.requires(*row) {
                        accumulate(&mut grads, *row, g.column_sums());
                    }
                    if self.requires(*m) {
                        accumulate(&mut grads, *m, g);
                    }
                }
                Op::Scale(a, factor) => {
                    let f = *factor;
                    accumulate(&mut grads, *a, g.map(|x| x * f));
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::ScaleBy(m, s) => {
                    if self.requires(*s) {
                        let gs: f64 = g
                            .data()
                            .iter()
                            .zip(self.value(*m).data())
                            .map(|(x, y)| x * y)
                            .sum();
                        accumulate(&mut grads, *s, Tensor::scalar(gs));
                    }
                    if self.requires(*m) {
                        let f = self.value(*s).data()[0];
                        accumulate(&mut grads, *m, g.map(|x| x * f));
                    }
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(&node.value, |x, y| if y > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Dropout(a, mask) => {
                    accumulate(&mut grads, *a, ops::apply_mask(&g, mask));
                }
                Op::SegmentSum {
                    input,
                    segment_of,
                    gather_from,
                } => {
                    let (rows, cols) = self.shape(*input);
                    let mut ga = Tensor::zeros(rows, cols);
                    for (&s, &src) in segment_of.iter().zip(gather_from) {
                        for (o, v) in ga.row_mut(src).iter_mut().zip(g.row(s)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::RowSum(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.data()[r];
                        ga.row_mut(r).iter_mut().for_each(|v| *v = gr);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(x, p)| x * p).sum();
                        for ((o, gx), p) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = p * (gx - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.shape(*p);
                        if self.requires(*p) {
                            let mut gp = Tensor::zeros(rows, cols);
                            for r in 0..rows {
                                gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                            }
                            accumulate(&mut grads, *p, gp);
                        }
                        offset += cols;
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let ga = g.zip_map(self.value(*a), |x, v| if v >= lo && v <= hi { x } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Bce(p, labels) => {
                    let upstream = g.data()[0];
                    let pv = self.value(*p);
                    let n = labels.len() as f64;
                    let data = pv
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&p, &y)| -upstream * (y / p - (1.0 - y) / (1.0 - p)) / n)
                        .collect();
                    accumulate(&mut grads, *p, Tensor::new(pv.rows(), pv.cols(), data)?);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::filled(rows, cols, g.data()[0]));
                }
            }
        }
        Ok(out)
    }

    /// Zeroes every parameter gradient in `store`, then writes ∂loss/∂param.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), DiffError> {
        store.zero_grad();
        let grads = self.gradients(loss, store)?;
        store.set_gradients(grads)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
