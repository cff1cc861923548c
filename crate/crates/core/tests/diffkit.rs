use ekg_core::diffkit::attention::scaled_dot_product_attention;
use ekg_core::diffkit::lstm::{BiLstm, LstmCell};
use ekg_core::diffkit::{DiffError, Mask, ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    let x = tape.constant(Tensor::zeros(vec![1, 3]));
    let y = x.softmax(1).unwrap().value();
    for &p in y.data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_rows_sum_to_one_and_are_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    for axis in [0, 1] {
        let x = tape.constant(rand_tensor(&mut rng, &[5, 7]).cast::<f64>());
        let y = x.scale(10.0).softmax(axis).unwrap().value();
        let (r, c) = (y.rows(), y.cols());
        let sums: Vec<f64> = if axis == 1 {
            (0..r).map(|i| y.row(i).iter().sum()).collect()
        } else {
            (0..c).map(|j| (0..r).map(|i| y.at(i, j)).sum()).collect()
        };
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-6));
        assert!(y.data().iter().all(|&p| p > 0.0));
    }
}

#[test]
fn cross_entropy_is_zero_on_a_perfect_prediction() {
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    let logits = tape.constant(Tensor::new(vec![1, 3], vec![-800.0, 0.0, -800.0]).unwrap());
    let loss = logits.cross_entropy_ls(&[1], 0.0).unwrap().item();
    assert_eq!(loss, 0.0);
}

#[test]
fn matmul_reports_both_shapes() {
    let store = ParamStore::<f32>::new();
    let tape = Tape::new(&store);
    let a = tape.constant(Tensor::zeros(vec![2, 3]));
    let b = tape.constant(Tensor::zeros(vec![4, 2]));
    match a.matmul(b) {
        Err(DiffError::Shape { op, lhs, rhs }) => {
            assert_eq!(op, "matmul");
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![4, 2]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn causal_mask_gives_exact_zeros_above_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    let q = tape.constant(rand_tensor(&mut rng, &[6, 4]));
    let k = tape.constant(rand_tensor(&mut rng, &[6, 4]));
    let v = tape.constant(rand_tensor(&mut rng, &[6, 4]));
    let (_, w) = scaled_dot_product_attention(q, k, v, Some(&Mask::causal(6))).unwrap();
    let w = w.value();
    for i in 0..6 {
        for j in 0..6 {
            if j > i {
                assert_eq!(w.at(i, j), 0.0);
            }
        }
    }
}

#[test]
fn single_position_attention_returns_value_row() {
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    let q = tape.constant(Tensor::new(vec![1, 3], vec![0.2, -0.4, 1.0]).unwrap());
    let k = tape.constant(Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap());
    let v = tape.constant(Tensor::new(vec![1, 3], vec![7.0, -8.0, 9.5]).unwrap());
    let (out, _) = scaled_dot_product_attention(q, k, v, None).unwrap();
    assert_eq!(out.value().data(), &[7.0, -8.0, 9.5]);
}

#[test]
fn attention_rows_are_normalised() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    for trial in 0..20 {
        let (m, n) = (1 + trial % 5, 2 + trial % 7);
        let q = tape.constant(rand_tensor(&mut rng, &[m, 8]).cast::<f64>());
        let k = tape.constant(rand_tensor(&mut rng, &[n, 8]));
        let v = tape.constant(rand_tensor(&mut rng, &[n, 8]));
        let (_, w) = scaled_dot_product_attention(q.scale(3.0), k, v, None).unwrap();
        let w = w.value();
        for i in 0..m {
            assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn attention_mask_shape_mismatch_is_an_error() {
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    let x = tape.constant(Tensor::zeros(vec![3, 4]));
    let err = scaled_dot_product_attention(x, x, x, Some(&Mask::causal(2))).unwrap_err();
    assert!(matches!(err, DiffError::Shape { .. }));
}

#[test]
fn zero_lstm_weights_give_zero_hidden_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let cell = LstmCell::new(&mut store, "cell", 3, 4, &mut rng);
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let tape = Tape::new(&store);
    let x = tape.constant(rand_tensor(&mut rng, &[2, 3]));
    let zero = tape.constant(Tensor::zeros(vec![2, 4]));
    let (h, _) = cell.forward(x, zero, zero).unwrap();
    assert!(h.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_step_bilstm_reads_the_same_input_both_ways() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::<f64>::new();
    let lstm = BiLstm::new(&mut store, "bi", 3, 4, 1, &mut rng);
    // Make the backward cell a copy of the forward cell.
    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.name.contains(".fwd."))
        .map(|(_, p)| p.name.clone())
        .collect();
    for name in names {
        let src = store.get(store.find(&name).unwrap()).clone();
        let dst = store.find(&name.replace(".fwd.", ".bwd.")).unwrap();
        *store.get_mut(dst) = src;
    }
    let tape = Tape::new(&store);
    let x = tape.constant(rand_tensor(&mut rng, &[2, 3]));
    let out = lstm.forward(&[x]).unwrap();
    assert_eq!(out.len(), 1);
    let v = out[0].value();
    for i in 0..2 {
        assert_eq!(&v.row(i)[..4], &v.row(i)[4..]);
    }
}

#[test]
fn bilstm_rejects_empty_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f64>::new();
    let lstm = BiLstm::new(&mut store, "bi", 3, 4, 2, &mut rng);
    assert!(matches!(lstm.forward::<f64>(&[]), Err(DiffError::Contract(_))));
}

/// Scalar-loop LSTM used as an independent oracle.
fn scalar_lstm(
    wx: &Tensor<f64>,
    bx: &Tensor<f64>,
    wh: &Tensor<f64>,
    hidden: usize,
    inputs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut outs = Vec::new();
    for x in inputs {
        let mut gates = vec![0.0; 4 * hidden];
        for (g, gate) in gates.iter_mut().enumerate() {
            let mut acc = bx.data()[g];
            for (p, xv) in x.iter().enumerate() {
                acc += xv * wx.at(p, g);
            }
            for (p, hv) in h.iter().enumerate() {
                acc += hv * wh.at(p, g);
            }
            *gate = acc;
        }
        for u in 0..hidden {
            let i = sig(gates[u]);
            let f = sig(gates[hidden + u]);
            let g = gates[2 * hidden + u].tanh();
            let o = sig(gates[3 * hidden + u]);
            c[u] = f * c[u] + i * g;
            h[u] = o * c[u].tanh();
        }
        outs.push(h.clone());
    }
    outs
}

#[test]
fn lstm_matches_scalar_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store = ParamStore::<f64>::new();
    let cell = LstmCell::new(&mut store, "cell", 3, 5, &mut rng);
    // non-zero biases so every path is exercised
    let b = cell.input.bias.unwrap();
    *store.get_mut(b) = rand_tensor(&mut rng, &[20]);
    let inputs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let expected = scalar_lstm(
        store.get(cell.input.weight),
        store.get(b),
        store.get(cell.recurrent.weight),
        5,
        &inputs,
    );
    let tape = Tape::new(&store);
    let vars: Vec<_> = inputs
        .iter()
        .map(|x| tape.constant(Tensor::new(vec![1, 3], x.clone()).unwrap()))
        .collect();
    let outs = cell.run(&vars, false).unwrap();
    for (o, e) in outs.iter().zip(&expected) {
        for (a, b) in o.value().data().iter().zip(e) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn forward_pass_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut store = ParamStore::<f64>::new();
        let lstm = BiLstm::new(&mut store, "bi", 4, 3, 2, &mut rng);
        let tape = Tape::new(&store);
        let xs: Vec<_> = (0..4).map(|_| tape.constant(rand_tensor(&mut rng, &[2, 4]))).collect();
        let out = lstm.forward(&xs).unwrap();
        out.iter()
            .flat_map(|v| v.value().data().to_vec())
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
