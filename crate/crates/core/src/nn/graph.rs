//! Tape-based reverse-mode automatic differentiation over matrices.
//!
//! Every node holds a `rows x cols` value. Rows are batch members (or the
//! real/imaginary parts of a complex waveform, see [`Graph::mzm`]); columns
//! are features or time samples. A graph is built once per forward pass and
//! dropped after [`Graph::backward`].

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;

use super::activations::{
    clip_tx, clip_tx_grad, relu, relu_grad, sigmoid, softmax_in_place, LOG_FLOOR,
};
use super::tensor::{ParamSet, Tensor};
use crate::dsp::SpectralFilter;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// First operand of an affine layer.
#[derive(Debug, Clone)]
pub enum AffineInput {
    /// One-hot rows given by zero-based indices into `width` classes. The
    /// product with the weight matrix is a column gather.
    OneHot { indices: Vec<usize>, width: usize },
    Dense(Var),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine {
        input: AffineInput,
        state: Option<Var>,
        weight: Var,
        bias: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    /// Adds a constant (noise realization); gradient passes unchanged.
    AddConst(Var),
    Relu(Var),
    ClipTx(Var),
    Sigmoid(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    CrossEntropy { probs: Var, targets: Vec<usize> },
    Mean(Vec<Var>),
    Interleave { slots: Vec<Var> },
    Slot { series: Var, slot: usize, window: usize },
    Windows { series: Var, starts: Vec<usize>, len: usize },
    FilterReal { x: Var, filter: Arc<SpectralFilter> },
    FilterComplex { x: Var, filter: Arc<SpectralFilter> },
    Mzm(Var),
    SquareLaw(Var),
    Sin(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Gradients of a scalar output with respect to every node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Records a leaf. Leaves receive gradients but have no inputs.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn tensor(&mut self, t: &Tensor) -> Var {
        self.leaf(t.value().clone())
    }

    /// Records every tensor of `params` as a leaf, in order.
    pub fn bind(&mut self, params: &ParamSet) -> Vec<Var> {
        params.iter().map(|(_, t)| self.tensor(t)).collect()
    }

    pub fn affine(
        &mut self,
        input: AffineInput,
        state: Option<Var>,
        weight: Var,
        bias: Var,
    ) -> Var {
        let w = &self.nodes[weight.0].value;
        let b = &self.nodes[bias.0].value;
        let in_width = match &input {
            AffineInput::OneHot { width, .. } => *width,
            AffineInput::Dense(x) => self.nodes[x.0].value.ncols(),
        };
        let state_width = state.map_or(0, |h| self.nodes[h.0].value.ncols());
        assert_eq!(
            w.ncols(),
            in_width + state_width,
            "affine: weight has {} columns, inputs provide {}",
            w.ncols(),
            in_width + state_width
        );
        assert_eq!(b.dim(), (1, w.nrows()), "affine: bias shape");
        let rows = match &input {
            AffineInput::OneHot { indices, .. } => indices.len(),
            AffineInput::Dense(x) => self.nodes[x.0].value.nrows(),
        };
        let mut z = Array2::zeros((rows, w.nrows()));
        z += b;
        match &input {
            AffineInput::OneHot { indices, width } => {
                for (mut row, &m) in z.axis_iter_mut(Axis(0)).zip(indices) {
                    assert!(m < *width, "one-hot index {m} out of range {width}");
                    row += &w.column(m);
                }
            }
            AffineInput::Dense(x) => {
                let x = &self.nodes[x.0].value;
                general_mat_mul(1.0, x, &w.slice(s![.., ..in_width]).t(), 1.0, &mut z);
            }
        }
        if let Some(h) = state {
            let h = &self.nodes[h.0].value;
            assert_eq!(h.nrows(), rows, "affine: state batch size");
            general_mat_mul(1.0, h, &w.slice(s![.., in_width..]).t(), 1.0, &mut z);
        }
        self.push(
            z,
            Op::Affine {
                input,
                state,
                weight,
                bias,
            },
        )
    }

    /// `x W^T + b` for a dense input.
    pub fn dense(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        self.affine(AffineInput::Dense(x), None, weight, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 1.0 - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn add_const(&mut self, a: Var, c: &Array2<f64>) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddConst(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(relu);
        self.push(v, Op::Relu(a))
    }

    pub fn clip_tx(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(clip_tx);
        self.push(v, Op::ClipTx(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sin);
        self.push(v, Op::Sin(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for row in v.axis_iter_mut(Axis(0)) {
            softmax_in_place(row);
        }
        self.push(v, Op::Softmax(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Mean over rows of `-ln(max(p[target], LOG_FLOOR))`; a `1 x 1` node.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Var {
        let p = self.value(probs);
        assert_eq!(p.nrows(), targets.len(), "cross_entropy: batch size");
        let total: f64 = targets
            .iter()
            .enumerate()
            .map(|(r, &m)| -p[[r, m]].max(LOG_FLOOR).ln())
            .sum();
        let v = Array2::from_elem((1, 1), total / targets.len() as f64);
        self.push(
            v,
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
        )
    }

    /// Sum of all entries; a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Mean of scalar (`1 x 1`) nodes.
    pub fn mean(&mut self, terms: &[Var]) -> Var {
        let total: f64 = terms.iter().map(|&t| self.scalar(t)).sum();
        let v = Array2::from_elem((1, 1), total / terms.len() as f64);
        self.push(v, Op::Mean(terms.to_vec()))
    }

    /// Flattens per-slot blocks `slots[t]` (each `batch x n`) into one
    /// `1 x (batch * W * n)` series ordered member by member:
    /// member 0 slots 0..W, member 1 slots 0..W, ...
    pub fn interleave(&mut self, slots: &[Var]) -> Var {
        let window = slots.len();
        let (batch, n) = self.value(slots[0]).dim();
        let mut out = Array2::zeros((1, batch * window * n));
        {
            let flat = out.as_slice_mut().expect("contiguous");
            for (t, &slot) in slots.iter().enumerate() {
                let v = self.value(slot);
                assert_eq!(v.dim(), (batch, n), "interleave: slot shapes differ");
                for b in 0..batch {
                    let dst = (b * window + t) * n;
                    for (k, &x) in v.row(b).iter().enumerate() {
                        flat[dst + k] = x;
                    }
                }
            }
        }
        self.push(
            out,
            Op::Interleave {
                slots: slots.to_vec(),
            },
        )
    }

    /// Inverse of [`Graph::interleave`] for one slot: a `batch x n` node.
    pub fn slot(&mut self, series: Var, slot: usize, window: usize, batch: usize) -> Var {
        let s = self.value(series);
        let total = s.ncols();
        assert_eq!(total % (batch * window), 0, "slot: series length");
        let n = total / (batch * window);
        let flat = s.as_slice().expect("contiguous");
        let out = Array2::from_shape_fn((batch, n), |(b, k)| flat[(b * window + slot) * n + k]);
        self.push(
            out,
            Op::Slot {
                series,
                slot,
                window,
            },
        )
    }

    /// Gathers `series[start .. start + len]` for each start into rows.
    pub fn windows(&mut self, series: Var, starts: &[usize], len: usize) -> Var {
        let s = self.value(series);
        let flat = s.as_slice().expect("contiguous");
        let mut out = Array2::zeros((starts.len(), len));
        for (mut row, &st) in out.axis_iter_mut(Axis(0)).zip(starts) {
            row.assign(&ndarray::ArrayView1::from(&flat[st..st + len]));
        }
        self.push(
            out,
            Op::Windows {
                series,
                starts: starts.to_vec(),
                len,
            },
        )
    }

    /// Real-to-real spectral filter on a `1 x N` signal; keeps the real part.
    pub fn filter_real(&mut self, x: Var, filter: &Arc<SpectralFilter>) -> Var {
        let v = self.value(x);
        assert_eq!(v.nrows(), 1, "filter_real expects a single row");
        let y = filter.apply_real(v.as_slice().expect("contiguous"), false);
        let out = Array2::from_shape_vec((1, y.len()), y).expect("row");
        self.push(
            out,
            Op::FilterReal {
                x,
                filter: Arc::clone(filter),
            },
        )
    }

    /// Complex spectral filter on a `2 x N` node (rows: real, imaginary).
    pub fn filter_complex(&mut self, x: Var, filter: &Arc<SpectralFilter>) -> Var {
        let mut buf = to_complex(self.value(x));
        filter.apply(&mut buf);
        let out = from_complex(&buf);
        self.push(
            out,
            Op::FilterComplex {
                x,
                filter: Arc::clone(filter),
            },
        )
    }

    /// Sinusoidal modulator: real drive `1 x N` to optical field `2 x N`
    /// with zero imaginary part.
    pub fn mzm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        assert_eq!(v.nrows(), 1, "mzm expects a single row");
        let mut out = Array2::zeros((2, v.ncols()));
        out.row_mut(0).assign(&v.row(0).mapv(f64::sin));
        self.push(out, Op::Mzm(x))
    }

    /// Square-law detection of a `2 x N` field: `re^2 + im^2`.
    pub fn square_law(&mut self, x: Var) -> Var {
        let v = self.value(x);
        assert_eq!(v.nrows(), 2, "square_law expects a complex field");
        let p = &v.row(0).mapv(|a| a * a) + &v.row(1).mapv(|a| a * a);
        let out = p.insert_axis(Axis(0));
        self.push(out, Op::SquareLaw(x))
    }

    /// Hash of which linear piece every ReLU and clipping node sits on.
    /// Equal signatures mean no kink was crossed between two evaluations.
    pub fn activation_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu(a) => {
                    for &x in self.value(a) {
                        (x > 0.0).hash(&mut h);
                    }
                }
                Op::ClipTx(a) => {
                    for &x in self.value(a) {
                        (x > 0.0, x < super::TX_CLIP).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(
            self.value(output).dim(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Affine {
                    input,
                    state,
                    weight,
                    bias,
                } => {
                    let w = self.value(*weight);
                    let in_width = match input {
                        AffineInput::OneHot { width, .. } => *width,
                        AffineInput::Dense(x) => self.value(*x).ncols(),
                    };
                    let mut gw = Array2::zeros(w.dim());
                    accumulate(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    match input {
                        AffineInput::OneHot { indices, .. } => {
                            for (row, &m) in g.axis_iter(Axis(0)).zip(indices) {
                                let mut col = gw.column_mut(m);
                                col += &row;
                            }
                        }
                        AffineInput::Dense(x) => {
                            let xv = self.value(*x);
                            general_mat_mul(
                                1.0,
                                &g.t(),
                                xv,
                                0.0,
                                &mut gw.slice_mut(s![.., ..in_width]),
                            );
                            let gx = g.dot(&w.slice(s![.., ..in_width]));
                            accumulate(&mut grads, *x, gx);
                        }
                    }
                    if let Some(h) = state {
                        let hv = self.value(*h);
                        general_mat_mul(
                            1.0,
                            &g.t(),
                            hv,
                            0.0,
                            &mut gw.slice_mut(s![.., in_width..]),
                        );
                        let gh = g.dot(&w.slice(s![.., in_width..]));
                        accumulate(&mut grads, *h, gh);
                    }
                    accumulate(&mut grads, *weight, gw);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -&g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, &g * *k),
                Op::OneMinus(a) => accumulate(&mut grads, *a, -&g),
                Op::AddConst(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Relu(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gi, &x| *gi *= relu_grad(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::ClipTx(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gi, &x| *gi *= clip_tx_grad(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|gi, &y| *gi *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sin(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gi, &x| *gi *= x.cos());
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let p = &node.value;
                    let mut ga = g.clone();
                    for (mut grow, prow) in ga.axis_iter_mut(Axis(0)).zip(p.axis_iter(Axis(0))) {
                        let dot: f64 = grow.iter().zip(prow.iter()).map(|(x, y)| x * y).sum();
                        Zip::from(&mut grow)
                            .and(&prow)
                            .for_each(|gi, &pi| *gi = pi * (*gi - dot));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let width = self.value(p).ncols();
                        let gp = g.slice(s![.., offset..offset + width]).to_owned();
                        accumulate(&mut grads, p, gp);
                        offset += width;
                    }
                }
                Op::CrossEntropy { probs, targets } => {
                    let p = self.value(*probs);
                    let scale = g[[0, 0]] / targets.len() as f64;
                    let mut gp = Array2::zeros(p.dim());
                    for (r, &m) in targets.iter().enumerate() {
                        let pm = p[[r, m]];
                        if pm > LOG_FLOOR {
                            gp[[r, m]] = -scale / pm;
                        }
                    }
                    accumulate(&mut grads, *probs, gp);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(terms) => {
                    let share = g[[0, 0]] / terms.len() as f64;
                    for &t in terms {
                        accumulate(&mut grads, t, Array2::from_elem((1, 1), share));
                    }
                }
                Op::Interleave { slots } => {
                    let window = slots.len();
                    let flat = g.as_slice().expect("contiguous");
                    let (batch, n) = self.value(slots[0]).dim();
                    for (t, &slot) in slots.iter().enumerate() {
                        let gs = Array2::from_shape_fn((batch, n), |(b, k)| {
                            flat[(b * window + t) * n + k]
                        });
                        accumulate(&mut grads, slot, gs);
                    }
                }
                Op::Slot {
                    series,
                    slot,
                    window,
                } => {
                    let total = self.value(*series).ncols();
                    let (batch, n) = g.dim();
                    let mut gs = Array2::zeros((1, total));
                    {
                        let flat = gs.as_slice_mut().expect("contiguous");
                        for b in 0..batch {
                            let dst = (b * window + slot) * n;
                            for k in 0..n {
                                flat[dst + k] = g[[b, k]];
                            }
                        }
                    }
                    accumulate(&mut grads, *series, gs);
                }
                Op::Windows { series, starts, len } => {
                    let total = self.value(*series).ncols();
                    let mut gs = Array2::zeros((1, total));
                    {
                        let flat = gs.as_slice_mut().expect("contiguous");
                        for (row, &st) in g.axis_iter(Axis(0)).zip(starts) {
                            for (k, &v) in row.iter().enumerate().take(*len) {
                                flat[st + k] += v;
                            }
                        }
                    }
                    accumulate(&mut grads, *series, gs);
                }
                Op::FilterReal { x, filter } => {
                    let gx = filter.apply_real(g.as_slice().expect("contiguous"), true);
                    accumulate(
                        &mut grads,
                        *x,
                        Array2::from_shape_vec((1, gx.len()), gx).expect("row"),
                    );
                }
                Op::FilterComplex { x, filter } => {
                    let mut buf = to_complex(&g);
                    filter.apply_adjoint(&mut buf);
                    accumulate(&mut grads, *x, from_complex(&buf));
                }
                Op::Mzm(x) => {
                    let xv = self.value(*x);
                    let gx = Array2::from_shape_fn(xv.dim(), |(_, k)| g[[0, k]] * xv[[0, k]].cos());
                    accumulate(&mut grads, *x, gx);
                }
                Op::SquareLaw(x) => {
                    let e = self.value(*x);
                    let gx = Array2::from_shape_fn(e.dim(), |(r, k)| 2.0 * g[[0, k]] * e[[r, k]]);
                    accumulate(&mut grads, *x, gx);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

fn to_complex(v: &Array2<f64>) -> Vec<Complex64> {
    assert_eq!(v.nrows(), 2, "complex nodes have two rows");
    v.row(0)
        .iter()
        .zip(v.row(1).iter())
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect()
}

fn from_complex(buf: &[Complex64]) -> Array2<f64> {
    let n = buf.len();
    Array2::from_shape_fn((2, n), |(r, k)| if r == 0 { buf[k].re } else { buf[k].im })
}
