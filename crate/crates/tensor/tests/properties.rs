use proptest::prelude::*;
use slicegan_tensor::{Activation, BatchNormConfig, BatchNormStats, Tape, Tensor};

fn tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    Tensor::randn_seeded(shape.to_vec(), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..9, seed in any::<u64>(), scale in 0.1f32..50.0) {
        let mut t = tensor(&[rows, cols], seed);
        t.data_mut().iter_mut().for_each(|v| *v *= scale);
        let y = Activation::Softmax.forward(t.data(), cols);
        for row in y.chunks(cols) {
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn batchnorm_standardizes_each_channel(batch in 8usize..16, c in 1usize..4, seed in any::<u64>()) {
        let mut x = tensor(&[batch, 3, c], seed).cast::<f64>();
        // shift and stretch channels so normalization has work to do
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = *v * (1.0 + (i % c) as f64) + 3.0 * (i % c) as f64;
        }
        let mut stats = BatchNormStats::new(c);
        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(&x);
        let g = tape.constant([c], vec![1.0; c]).unwrap();
        let b = tape.constant([c], vec![0.0; c]).unwrap();
        let y = tape.batchnorm(xv, g, b, &mut stats, BatchNormConfig::default(), true).unwrap();
        let y = tape.value(y);
        let n = (y.len() / c) as f64;
        for ch in 0..c {
            let vals: Vec<f64> = y.iter().skip(ch).step_by(c).copied().collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-4);
            prop_assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn forward_and_backward_stay_finite(seed in any::<u64>()) {
        let x = tensor(&[2, 4, 4, 2], seed).with_requires_grad();
        let k = tensor(&[3, 3, 2, 3], seed ^ 1).with_requires_grad();
        let mut tape = Tape::<f32>::new();
        let xv = tape.leaf(&x);
        let kv = tape.leaf(&k);
        let y = tape.conv2d_transpose(xv, kv, 2).unwrap();
        let y = tape.activation(y, Activation::Tanh);
        let l = tape.mean(y);
        tape.backward(l).unwrap();
        prop_assert!(tape.value(y).iter().all(|v| v.is_finite()));
        prop_assert!(tape.grad(kv).unwrap().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn zero_kernel_or_input_gives_zero_output() {
    let mut tape = Tape::<f32>::new();
    let x = tape.leaf(&tensor(&[1, 4, 4, 3], 1));
    let k = tape.constant([5, 5, 3, 2], vec![0.0; 150]).unwrap();
    let y = tape.conv2d_transpose(x, k, 2).unwrap();
    assert_eq!(tape.shape(y), &[1, 8, 8, 2]);
    assert!(tape.value(y).iter().all(|&v| v == 0.0));

    let z = tape.constant([1, 5, 5, 5, 2], vec![0.0; 250]).unwrap();
    let k3 = tape.leaf(&tensor(&[3, 3, 3, 2, 4], 2));
    let b = tape.constant([4], vec![0.0; 4]).unwrap();
    let y = tape.conv3d(z, k3, Some(b)).unwrap();
    assert_eq!(tape.shape(y), &[1, 3, 3, 3, 4]);
    assert!(tape.value(y).iter().all(|&v| v == 0.0));
}

#[test]
fn op_sequences_are_bit_reproducible() {
    let run = || {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(&tensor(&[4, 6, 6, 1], 5).with_requires_grad());
        let k = tape.leaf(&tensor(&[5, 5, 1, 4], 6).with_requires_grad());
        let y = tape.conv2d(x, k, None, 2, slicegan_tensor::Padding::Same).unwrap();
        let y = tape.dropout(y, 0.3, true, 9).unwrap();
        let l = tape.sum(y);
        tape.backward(l).unwrap();
        (tape.value(y).to_vec(), tape.grad(k).unwrap().to_vec())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
}
