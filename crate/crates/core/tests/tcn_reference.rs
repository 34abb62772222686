//! Compares the engine against a direct, unoptimized evaluation of the same
//! network written from the layer definitions.

use std::collections::BTreeMap;

use imo_core::tcn::{Normalization, TcnMeta, TcnModel, Tensor};
use nalgebra::{DMatrix, Vector3};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Uniform};

fn conv(x: &[Vec<f64>], w: &Tensor, bias: Option<&Tensor>, dilation: usize) -> Vec<Vec<f64>> {
    let (out, inp, k) = (w.shape[0], w.shape[1], w.shape[2]);
    let len = x[0].len();
    let pad = (k - 1) * dilation;
    // explicit zero-padded copy of the input
    let padded: Vec<Vec<f64>> = x
        .iter()
        .map(|row| std::iter::repeat_n(0.0, pad).chain(row.iter().cloned()).collect())
        .collect();
    (0..out)
        .map(|o| {
            (0..len)
                .map(|t| {
                    let mut acc = bias.map_or(0.0, |b| b.data[o]);
                    for (i, row) in padded.iter().enumerate() {
                        for j in 0..k {
                            acc += w.data[o * inp * k + i * k + j] * row[t + j * dilation];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn reference_forward(
    meta: &TcnMeta,
    norm: &Normalization,
    t: &BTreeMap<String, Tensor>,
    input: &DMatrix<f64>,
) -> Vector3<f64> {
    let mut x: Vec<Vec<f64>> = (0..meta.channels)
        .map(|c| (0..meta.window).map(|s| (input[(c, s)] - norm.mean[c]) / norm.std[c]).collect())
        .collect();
    let relu = |v: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        v.into_iter().map(|r| r.into_iter().map(|a| a.max(0.0)).collect()).collect()
    };
    for (b, &d) in meta.dilations.iter().enumerate() {
        let g = |n: &str| &t[&format!("block{b}.{n}")];
        let y = relu(conv(&x, g("conv1.weight"), Some(g("conv1.bias")), d));
        let y = relu(conv(&y, g("conv2.weight"), Some(g("conv2.bias")), d));
        let skip = match t.get(&format!("block{b}.skip.weight")) {
            Some(w) => conv(&x, w, None, 1),
            None => x.clone(),
        };
        x = y
            .iter()
            .zip(&skip)
            .map(|(a, s)| a.iter().zip(s).map(|(p, q)| p + q).collect())
            .collect();
    }
    let last: Vec<f64> = x.iter().map(|r| r[r.len() - 1]).collect();
    let (hw, hb) = (&t["head.weight"], &t["head.bias"]);
    Vector3::from_fn(|o, _| hb.data[o] + (0..last.len()).map(|c| hw.data[o * last.len() + c] * last[c]).sum::<f64>())
}

#[test]
fn engine_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let metas = [
        TcnMeta { dilations: vec![8, 16], hidden_channels: 8, ..TcnMeta::default() },
        TcnMeta { kernel: 2, dilations: vec![1, 4, 16, 32], hidden_channels: 6, ..TcnMeta::default() },
        TcnMeta { hidden_channels: 16, ..TcnMeta::default() },
    ];
    for case in 0..100 {
        let meta = metas[case % metas.len()].clone();
        let u = Uniform::new(-0.4, 0.4).unwrap();
        let tensors: BTreeMap<String, Tensor> = meta
            .tensor_shapes()
            .into_iter()
            .map(|(n, s)| {
                let len = s.iter().product();
                (n, Tensor::new(s, (0..len).map(|_| u.sample(&mut rng)).collect()))
            })
            .collect();
        let norm = Normalization {
            mean: (0..6).map(|_| u.sample(&mut rng)).collect(),
            std: (0..6).map(|_| 0.5 + u.sample(&mut rng).abs()).collect(),
        };
        let model = TcnModel::from_tensors(meta.clone(), norm.clone(), &tensors).unwrap();
        let x = DMatrix::from_fn(6, 50, |_, _| 5.0 * u.sample(&mut rng));
        let got = model.forward(&x).unwrap();
        let want = reference_forward(&meta, &norm, &tensors, &x);
        assert!((got - want).amax() < 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn tensors_round_trip() {
    let meta = TcnMeta { dilations: vec![8, 16], hidden_channels: 8, ..TcnMeta::default() };
    let tensors: BTreeMap<String, Tensor> = meta
        .tensor_shapes()
        .into_iter()
        .enumerate()
        .map(|(k, (n, s))| {
            let len = s.iter().product();
            (n, Tensor::new(s, (0..len).map(|i| ((i + k) % 7) as f64 * 0.01).collect()))
        })
        .collect();
    let model = TcnModel::from_tensors(meta, Normalization::identity(6), &tensors).unwrap();
    assert_eq!(model.tensors(), tensors);
    assert_eq!(model.parameter_count(), tensors.values().map(|t| t.data.len()).sum::<usize>());
}
