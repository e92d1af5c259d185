//! Recurrent cells, evaluated either directly or recorded on a [`Graph`].
//!
//! All functions are batched: inputs and states carry one row per sequence.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::activations::{clip_tx, relu, sigmoid};
use crate::nn::{AffineInput, Graph, Var};

/// Side-dependent output nonlinearity of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Transmitter: clipping to `[0, pi/4]`.
    ClipTx,
    /// Receiver.
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ClipTx => clip_tx(x),
            Activation::Relu => relu(x),
        }
    }

    pub fn record(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::ClipTx => g.clip_tx(x),
            Activation::Relu => g.relu(x),
        }
    }
}

/// Cell input at one time step.
#[derive(Debug, Clone, Copy)]
pub enum StepInput<'a> {
    /// Zero-based message indices out of `width`.
    OneHot { indices: &'a [usize], width: usize },
    Dense(ArrayView2<'a, f64>),
}

impl StepInput<'_> {
    pub fn rows(&self) -> usize {
        match self {
            StepInput::OneHot { indices, .. } => indices.len(),
            StepInput::Dense(x) => x.nrows(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            StepInput::OneHot { width, .. } => *width,
            StepInput::Dense(x) => x.ncols(),
        }
    }
}

/// `W (x; h) + b` with the one-hot product realized as a column gather.
pub fn affine(
    input: StepInput<'_>,
    state: ArrayView2<'_, f64>,
    weight: &Array2<f64>,
    bias: &Array2<f64>,
) -> Result<Array2<f64>> {
    let in_width = input.width();
    let rows = input.rows();
    if weight.ncols() != in_width + state.ncols() || bias.dim() != (1, weight.nrows()) {
        return Err(Error::ShapeMismatch {
            context: "cell layer",
            expected: vec![weight.nrows(), weight.ncols()],
            actual: vec![bias.ncols(), in_width + state.ncols()],
        });
    }
    if state.nrows() != rows {
        return Err(Error::ShapeMismatch {
            context: "cell state batch",
            expected: vec![rows],
            actual: vec![state.nrows()],
        });
    }
    let mut z = Array2::zeros((rows, weight.nrows()));
    z += bias;
    match input {
        StepInput::OneHot { indices, width } => {
            for (mut row, &m) in z.axis_iter_mut(Axis(0)).zip(indices) {
                if m >= width {
                    return Err(Error::MessageOutOfRange {
                        message: m + 1,
                        alphabet: width,
                    });
                }
                row += &weight.column(m);
            }
        }
        StepInput::Dense(x) => {
            general_mat_mul(1.0, &x, &weight.slice(s![.., ..in_width]).t(), 1.0, &mut z);
        }
    }
    if state.ncols() > 0 {
        general_mat_mul(
            1.0,
            &state,
            &weight.slice(s![.., in_width..]).t(),
            1.0,
            &mut z,
        );
    }
    Ok(z)
}

/// `h_t = act(W (x_t; h_{t-1}) + b)`.
pub fn vanilla_cell_step(
    input: StepInput<'_>,
    state: ArrayView2<'_, f64>,
    weight: &Array2<f64>,
    bias: &Array2<f64>,
    act: Activation,
) -> Result<Array2<f64>> {
    let mut z = affine(input, state, weight, bias)?;
    z.mapv_inplace(|v| act.apply(v));
    Ok(z)
}

/// Gated update given the two gate activations:
/// `h_t = (1 - g_b) h_{t-1} + g_b act(W3 (x_t; g_a h_{t-1}) + b3)`.
pub fn gru_combine(
    input: StepInput<'_>,
    state: ArrayView2<'_, f64>,
    reset_gate: ArrayView2<'_, f64>,
    update_gate: ArrayView2<'_, f64>,
    candidate: (&Array2<f64>, &Array2<f64>),
    act: Activation,
) -> Result<Array2<f64>> {
    let gated = &reset_gate * &state;
    let cand = vanilla_cell_step(input, gated.view(), candidate.0, candidate.1, act)?;
    Ok(&state + &(&update_gate * &(&cand - &state)))
}

/// The gated cell: two sigmoid gates `g_a`, `g_b` from `(x_t; h_{t-1})`,
/// then [`gru_combine`]. `layers` holds `(W1, b1), (W2, b2), (W3, b3)`.
pub fn gru_cell_step(
    input: StepInput<'_>,
    state: ArrayView2<'_, f64>,
    layers: [(&Array2<f64>, &Array2<f64>); 3],
    act: Activation,
) -> Result<Array2<f64>> {
    let mut ga = affine(input, state, layers[0].0, layers[0].1)?;
    ga.mapv_inplace(sigmoid);
    let mut gb = affine(input, state, layers[1].0, layers[1].1)?;
    gb.mapv_inplace(sigmoid);
    gru_combine(input, state, ga.view(), gb.view(), layers[2], act)
}

/// Records one vanilla step. `layer` is `[W, b]`.
pub fn record_vanilla(
    g: &mut Graph,
    input: AffineInput,
    state: Var,
    layer: &[Var],
    act: Activation,
) -> Var {
    let z = g.affine(input, Some(state), layer[0], layer[1]);
    act.record(g, z)
}

/// Records one gated step. `layers` is `[W1, b1, W2, b2, W3, b3]`.
pub fn record_gru(
    g: &mut Graph,
    input: AffineInput,
    state: Var,
    layers: &[Var],
    act: Activation,
) -> Var {
    let za = g.affine(input.clone(), Some(state), layers[0], layers[1]);
    let ga = g.sigmoid(za);
    let zb = g.affine(input.clone(), Some(state), layers[2], layers[3]);
    let gb = g.sigmoid(zb);
    let gated = g.mul(ga, state);
    let zc = g.affine(input, Some(gated), layers[4], layers[5]);
    let cand = act.record(g, zc);
    let delta = g.sub(cand, state);
    let step = g.mul(gb, delta);
    g.add(state, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{param_grads, ParamSet, Tensor, TX_CLIP};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(r: usize, c: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale))
    }

    /// Direct scalar evaluation of the gated cell for one sequence.
    fn gru_scalar_oracle(
        x: &[f64],
        h: &[f64],
        w: [&Array2<f64>; 3],
        b: [&Array2<f64>; 3],
        act: Activation,
    ) -> Vec<f64> {
        let layer = |w: &Array2<f64>, b: &Array2<f64>, v: &[f64]| -> Vec<f64> {
            (0..w.nrows())
                .map(|r| b[[0, r]] + (0..v.len()).map(|c| w[[r, c]] * v[c]).sum::<f64>())
                .collect()
        };
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        let ga: Vec<f64> = layer(w[0], b[0], &xh).into_iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
        let gb: Vec<f64> = layer(w[1], b[1], &xh).into_iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
        let xg: Vec<f64> = x.iter().copied().chain(h.iter().zip(&ga).map(|(a, b)| a * b)).collect();
        let cand: Vec<f64> = layer(w[2], b[2], &xg).into_iter().map(|z| act.apply(z)).collect();
        (0..h.len()).map(|i| (1.0 - gb[i]) * h[i] + gb[i] * cand[i]).collect()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let w = Array2::zeros((3, 7));
        let b = Array2::zeros((1, 3));
        let h = Array2::from_elem((2, 3), 0.4);
        let x = [1usize, 2];
        let out = vanilla_cell_step(
            StepInput::OneHot { indices: &x, width: 4 },
            h.view(),
            &w,
            &b,
            Activation::ClipTx,
        )
        .unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_state_reduces_to_dense_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = rand_mat(4, 9, 1.0, &mut rng);
        let b = rand_mat(1, 4, 1.0, &mut rng);
        let x = rand_mat(3, 5, 1.0, &mut rng);
        let h = Array2::zeros((3, 4));
        let out = vanilla_cell_step(StepInput::Dense(x.view()), h.view(), &w, &b, Activation::Relu).unwrap();
        for r in 0..3 {
            for o in 0..4 {
                let z: f64 = b[[0, o]] + (0..5).map(|c| w[[o, c]] * x[[r, c]]).sum::<f64>();
                assert!((out[[r, o]] - z.max(0.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let w = Array2::zeros((3, 6));
        let b = Array2::zeros((1, 3));
        let x = Array2::zeros((1, 4));
        let h = Array2::zeros((1, 3));
        assert!(vanilla_cell_step(StepInput::Dense(x.view()), h.view(), &w, &b, Activation::Relu).is_err());
        let idx = [7usize];
        let w = Array2::zeros((3, 7));
        assert!(matches!(
            vanilla_cell_step(StepInput::OneHot { indices: &idx, width: 4 }, h.view(), &w, &b, Activation::Relu),
            Err(Error::MessageOutOfRange { .. })
        ));
    }

    #[test]
    fn closed_update_gate_holds_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w3 = rand_mat(3, 7, 1.0, &mut rng);
        let b3 = rand_mat(1, 3, 1.0, &mut rng);
        let h = rand_mat(2, 3, 0.7, &mut rng);
        let x = [0usize, 3];
        let input = StepInput::OneHot { indices: &x, width: 4 };
        let ga = Array2::from_elem((2, 3), 0.3);
        let gb = Array2::zeros((2, 3));
        let out = gru_combine(input, h.view(), ga.view(), gb.view(), (&w3, &b3), Activation::Relu).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn open_gates_reduce_to_vanilla() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w3 = rand_mat(3, 7, 1.0, &mut rng);
        let b3 = rand_mat(1, 3, 1.0, &mut rng);
        let h = rand_mat(2, 3, 0.7, &mut rng);
        let x = [2usize, 1];
        let input = StepInput::OneHot { indices: &x, width: 4 };
        let ones = Array2::ones((2, 3));
        let gated = gru_combine(input, h.view(), ones.view(), ones.view(), (&w3, &b3), Activation::ClipTx).unwrap();
        let vanilla = vanilla_cell_step(input, h.view(), &w3, &b3, Activation::ClipTx).unwrap();
        let diff = (&gated - &vanilla).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-15));
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n_in, n_h) = (5, 4);
        let ws: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(n_h, n_in + n_h, 1.0, &mut rng)).collect();
        let bs: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(1, n_h, 1.0, &mut rng)).collect();
        let x = rand_mat(3, n_in, 1.0, &mut rng);
        let h = rand_mat(3, n_h, 1.0, &mut rng);
        for act in [Activation::Relu, Activation::ClipTx] {
            let out = gru_cell_step(
                StepInput::Dense(x.view()),
                h.view(),
                [(&ws[0], &bs[0]), (&ws[1], &bs[1]), (&ws[2], &bs[2])],
                act,
            )
            .unwrap();
            for r in 0..3 {
                let want = gru_scalar_oracle(
                    x.row(r).as_slice().unwrap(),
                    h.row(r).as_slice().unwrap(),
                    [&ws[0], &ws[1], &ws[2]],
                    [&bs[0], &bs[1], &bs[2]],
                    act,
                );
                for (c, w) in want.iter().enumerate() {
                    assert!((out[[r, c]] - w).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn recorded_cells_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ws: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(4, 10, 1.0, &mut rng)).collect();
        let bs: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(1, 4, 1.0, &mut rng)).collect();
        let h = rand_mat(3, 4, 0.5, &mut rng);
        let idx = vec![5usize, 0, 2];
        let input = StepInput::OneHot { indices: &idx, width: 6 };

        let mut g = Graph::new();
        let hv = g.leaf(h.clone());
        let vars: Vec<Var> = ws.iter().zip(&bs).flat_map(|(w, b)| [w.clone(), b.clone()]).map(|m| g.leaf(m)).collect();
        let onehot = AffineInput::OneHot { indices: idx.clone(), width: 6 };
        let v = record_vanilla(&mut g, onehot.clone(), hv, &vars[..2], Activation::ClipTx);
        let r = record_gru(&mut g, onehot, hv, &vars, Activation::ClipTx);

        let v_direct = vanilla_cell_step(input, h.view(), &ws[0], &bs[0], Activation::ClipTx).unwrap();
        let r_direct = gru_cell_step(
            input,
            h.view(),
            [(&ws[0], &bs[0]), (&ws[1], &bs[1]), (&ws[2], &bs[2])],
            Activation::ClipTx,
        )
        .unwrap();
        assert!((g.value(v) - &v_direct).iter().all(|d| d.abs() < 1e-15));
        assert!((g.value(r) - &r_direct).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn recorded_gru_gradient_matches_finite_differences() {
        use crate::nn::gradcheck::{check, Probe, DEFAULT_STEP};
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = ParamSet::new();
        p.push("h", Tensor::from_matrix(rand_mat(2, 3, 0.5, &mut rng)));
        for i in 1..=3 {
            p.push(format!("W{i}"), Tensor::from_matrix(rand_mat(3, 7, 1.0, &mut rng)));
            p.push(format!("b{i}"), Tensor::from_matrix(rand_mat(1, 3, 0.5, &mut rng)));
        }
        let weights = rand_mat(2, 3, 1.0, &mut rng);
        let build = |p: &ParamSet| {
            let mut g = Graph::new();
            let vars = g.bind(p);
            let input = AffineInput::OneHot { indices: vec![1, 3], width: 4 };
            let h1 = record_gru(&mut g, input.clone(), vars[0], &vars[1..], Activation::Relu);
            let h2 = record_gru(&mut g, input, h1, &vars[1..], Activation::Relu);
            let w = g.leaf(weights.clone());
            let prod = g.mul(h2, w);
            let out = g.sum(prod);
            (g, vars, out)
        };
        let (g, vars, out) = build(&p);
        let grads = param_grads(&g.backward(out), &vars);
        let report = check(&p, &grads, DEFAULT_STEP, |p| {
            let (g, _, out) = build(p);
            Probe { value: g.scalar(out), signature: g.activation_signature() }
        });
        assert!(report.passes(1e-4), "{report:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transmitter_cell_output_in_range(seed in any::<u64>(), scale in 0.1f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = rand_mat(6, 10, scale, &mut rng);
            let b = rand_mat(1, 6, scale, &mut rng);
            let h = rand_mat(3, 6, scale, &mut rng);
            let idx = [0usize, 3, 1];
            let out = vanilla_cell_step(StepInput::OneHot { indices: &idx, width: 4 }, h.view(), &w, &b, Activation::ClipTx).unwrap();
            prop_assert!(out.iter().all(|&v| (0.0..=TX_CLIP).contains(&v)));
        }

        #[test]
        fn gated_state_stays_in_clip_range(seed in any::<u64>(), scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ws: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(6, 10, scale, &mut rng)).collect();
            let bs: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(1, 6, scale, &mut rng)).collect();
            let h = Array2::from_shape_fn((3, 6), |_| rng.random_range(0.0..=TX_CLIP));
            let idx = [0usize, 3, 1];
            let out = gru_cell_step(
                StepInput::OneHot { indices: &idx, width: 4 },
                h.view(),
                [(&ws[0], &bs[0]), (&ws[1], &bs[1]), (&ws[2], &bs[2])],
                Activation::ClipTx,
            ).unwrap();
            prop_assert!(out.iter().all(|&v| (-1e-15..=TX_CLIP + 1e-15).contains(&v)));
        }

        #[test]
        fn gru_is_continuous_in_state(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ws: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(4, 8, 1.0, &mut rng)).collect();
            let bs: Vec<Array2<f64>> = (0..3).map(|_| rand_mat(1, 4, 1.0, &mut rng)).collect();
            let h = rand_mat(1, 4, 1.0, &mut rng);
            let dh = rand_mat(1, 4, 1e-9, &mut rng);
            let idx = [2usize];
            let input = StepInput::OneHot { indices: &idx, width: 4 };
            let layers = [(&ws[0], &bs[0]), (&ws[1], &bs[1]), (&ws[2], &bs[2])];
            let a = gru_cell_step(input, h.view(), layers, Activation::Relu).unwrap();
            let b = gru_cell_step(input, (&h + &dh).view(), layers, Activation::Relu).unwrap();
            prop_assert!((&a - &b).iter().all(|d| d.abs() < 1e-7));
        }
    }
}
