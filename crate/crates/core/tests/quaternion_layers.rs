mod common;

use proptest::prelude::*;
use qlottery::models::{
    build_network, count_parameters, Architecture, DatasetKind, Field, ModelSpec, ParamFilter, QuatConvLayer,
    QuatLinearLayer,
};
use qlottery::quat::{as_matrix, hamilton};
use qlottery::{Quaternion, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quat() -> impl Strategy<Value = Quaternion<f64>> {
    prop::array::uniform4(-3.0f64..3.0).prop_map(Quaternion::from_array)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_layer_equals_hamilton_sums(in_q in 1usize..6, out_q in 1usize..5, batch in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = QuatLinearLayer::<f64>::random(in_q, out_q, &mut rng);
        let xs: Vec<Vec<Quaternion<f64>>> = (0..batch)
            .map(|b| (0..in_q).map(|i| Quaternion::new(i as f64 * 0.3 - 0.5, b as f64 - 0.2, 0.7, -(i as f64) * 0.1)).collect())
            .collect();
        let flat: Vec<f64> = xs.iter().flat_map(|x| common::planar(x)).collect();
        let got = layer.forward(&Tensor::new(vec![batch, 4 * in_q], flat).unwrap()).unwrap();
        let w: Vec<Vec<Quaternion<f64>>> = (0..out_q)
            .map(|j| (0..in_q).map(|i| Quaternion::from_array(layer.weights.each_ref().map(|t| t.data()[j * in_q + i]))).collect())
            .collect();
        let b = common::unplanar(layer.bias.data());
        for (bi, x) in xs.iter().enumerate() {
            let want = common::planar(&common::quat_dense(&w, x, &b));
            let row = &got.data()[bi * 4 * out_q..(bi + 1) * 4 * out_q];
            prop_assert!(common::max_rel(row, &want) < 1e-9);
        }
    }

    #[test]
    fn matrix_form_is_left_multiplication(a in quat(), b in quat()) {
        let p = hamilton(a, b).to_array();
        let m = as_matrix(a).mul_vec(b.to_array());
        prop_assert!(common::max_abs(&p, &m) < 1e-12);
    }

    #[test]
    fn unit_relations(s in -2.0f64..2.0) {
        let (i, j, k) = (Quaternion::<f64>::i(), Quaternion::j(), Quaternion::k());
        let neg1 = Quaternion::new(-1.0, 0.0, 0.0, 0.0);
        prop_assert_eq!(i * i, neg1);
        prop_assert_eq!(j * j, neg1);
        prop_assert_eq!(k * k, neg1);
        prop_assert_eq!(i * j * k, neg1);
        let sq = Quaternion::new(s, 0.0, 0.0, 0.0);
        prop_assert_eq!(sq * i, i * sq);
    }
}

#[test]
fn conv_layer_equals_hamilton_sums() {
    for seed in 0..5 {
        let gap = qlottery::verify::quat_conv_gap(seed).unwrap();
        assert!(gap < 1e-9, "seed {seed}: {gap}");
    }
}

#[test]
fn conv_layer_matches_real_conv_with_block_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (in_q, out_q) = (2, 2);
    let layer = QuatConvLayer::<f64>::random(in_q, out_q, &mut rng);
    let (h, w) = (4, 5);
    let x: Vec<f64> = (0..4 * in_q * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
    let got = layer
        .forward(&Tensor::new(vec![1, 4 * in_q, h, w], x.clone()).unwrap())
        .unwrap();
    // Block kernel from the left-multiplication matrix of every tap.
    let mut k = vec![0.0; 4 * out_q * 4 * in_q * 9];
    for o in 0..out_q {
        for i in 0..in_q {
            for tap in 0..9 {
                let at = (o * in_q + i) * 9 + tap;
                let q = Quaternion::from_array(layer.weights.each_ref().map(|t| t.data()[at]));
                let m = as_matrix(q).m;
                for (a, row) in m.iter().enumerate() {
                    for (b, &v) in row.iter().enumerate() {
                        k[((a * out_q + o) * 4 * in_q + b * in_q + i) * 9 + tap] = v;
                    }
                }
            }
        }
    }
    let mut want = common::conv3x3(&x, [1, 4 * in_q, h, w], &k, 4 * out_q);
    for (c, plane) in want.chunks_mut(h * w).enumerate() {
        for v in plane {
            *v += layer.bias.data()[c];
        }
    }
    assert!(common::max_rel(got.data(), &want) < 1e-9);
}

#[test]
fn quaternion_models_use_a_quarter_of_the_parameters() {
    for arch in Architecture::ALL {
        let real = ModelSpec::preset(arch, arch.default_dataset(), Field::Real).unwrap();
        let quat = ModelSpec::preset(arch, arch.default_dataset(), Field::Quaternion).unwrap();
        let r = build_network::<f32>(&real, 0).unwrap();
        let q = build_network::<f32>(&quat, 0).unwrap();
        let ratio = count_parameters(&q, true) as f64 / count_parameters(&r, true) as f64;
        assert!((0.2..0.3).contains(&ratio), "{arch}: {ratio}");
        assert!(q.count(ParamFilter::Prunable) < r.count(ParamFilter::Prunable));
    }
}

#[test]
fn cifar100_heads() {
    for arch in [Architecture::Conv4, Architecture::Conv6] {
        for field in [Field::Real, Field::Quaternion] {
            let spec = ModelSpec::preset(arch, DatasetKind::Cifar100, field).unwrap();
            let net = build_network::<f32>(&spec, 1).unwrap();
            let x = Tensor::zeros(&[2, net.input_shape()[0], 32, 32]);
            assert_eq!(net.predict(&x).unwrap().shape(), &[2, 100]);
        }
    }
}
