//! Quaternion layers.
//!
//! Quaternion activations travel as real tensors in component-planar
//! layout: a vector of `n` quaternions is `[r_1..r_n, x_1..x_n, y_1..y_n,
//! z_1..z_n]`, and a quaternion feature map with `c` channels is a real map
//! with `4c` channels grouped the same way. Weights multiply activations
//! from the left, `o_j = Σ_i w_ji ⊗ x_i + b_j`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

/// `Σ_i w_ji ⊗ x_i + b_j` on a tape. `x` is `[batch, 4*in_q]` planar.
pub fn quat_linear(tape: &mut Tape<impl Scalar>, x: Var, parts: [Var; 4], bias: Var) -> Result<Var> {
    let w = tape.hamilton_block(parts)?;
    let y = tape.linear(x, w)?;
    tape.bias_add(y, bias)
}

/// Quaternion 3x3 same-padded convolution on a tape.
pub fn quat_conv(tape: &mut Tape<impl Scalar>, x: Var, parts: [Var; 4], bias: Var) -> Result<Var> {
    let k = tape.hamilton_block(parts)?;
    let y = tape.conv2d(x, k)?;
    tape.bias_add(y, bias)
}

fn uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Uniform(−1/√fan_in, 1/√fan_in) tensor.
pub fn init_uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    uniform(rng, shape, 1.0 / (fan_in as f64).sqrt())
}

/// Fully connected quaternion layer with `in_q` inputs and `out_q` outputs.
#[derive(Clone, Debug)]
pub struct QuatLinearLayer<T> {
    pub in_q: usize,
    pub out_q: usize,
    /// (r, x, y, z) component matrices, each `[out_q, in_q]`.
    pub weights: [Tensor<T>; 4],
    /// Per-component real bias, `[4*out_q]`.
    pub bias: Tensor<T>,
}

impl<T: Scalar> QuatLinearLayer<T> {
    pub fn new(in_q: usize, out_q: usize, weights: [Tensor<T>; 4], bias: Tensor<T>) -> Result<Self> {
        for w in &weights {
            if w.shape() != [out_q, in_q] {
                return Err(Error::dim(format!(
                    "quaternion weight component {:?}, expected [{out_q}, {in_q}]",
                    w.shape()
                )));
            }
        }
        if bias.shape() != [4 * out_q] {
            return Err(Error::dim(format!(
                "quaternion bias {:?}, expected [{}]",
                bias.shape(),
                4 * out_q
            )));
        }
        Ok(QuatLinearLayer {
            in_q,
            out_q,
            weights,
            bias,
        })
    }

    pub fn random(in_q: usize, out_q: usize, rng: &mut impl Rng) -> Self {
        let fan_in = 4 * in_q;
        let weights = std::array::from_fn(|_| init_uniform(rng, &[out_q, in_q], fan_in));
        let bias = init_uniform(rng, &[4 * out_q], fan_in);
        QuatLinearLayer {
            in_q,
            out_q,
            weights,
            bias,
        }
    }

    pub fn weight_count(&self) -> usize {
        4 * self.in_q * self.out_q
    }

    /// Forward pass for planar input `[batch, 4*in_q]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape().len() != 2 || x.shape()[1] != 4 * self.in_q {
            return Err(Error::dim(format!(
                "quaternion linear layer takes [batch, {}], got {:?}",
                4 * self.in_q,
                x.shape()
            )));
        }
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let parts = self.weights.clone().map(|w| tape.constant(w));
        let b = tape.constant(self.bias.clone());
        let y = quat_linear(&mut tape, xv, parts, b)?;
        Ok(tape.value(y)?.clone())
    }
}

/// 3x3 quaternion convolution layer.
#[derive(Clone, Debug)]
pub struct QuatConvLayer<T> {
    pub in_q: usize,
    pub out_q: usize,
    /// (r, x, y, z) kernel banks, each `[out_q, in_q, 3, 3]`.
    pub weights: [Tensor<T>; 4],
    pub bias: Tensor<T>,
}

impl<T: Scalar> QuatConvLayer<T> {
    pub fn new(in_q: usize, out_q: usize, weights: [Tensor<T>; 4], bias: Tensor<T>) -> Result<Self> {
        for w in &weights {
            if w.shape() != [out_q, in_q, 3, 3] {
                return Err(Error::dim(format!(
                    "quaternion kernel bank {:?}, expected [{out_q}, {in_q}, 3, 3]",
                    w.shape()
                )));
            }
        }
        if bias.shape() != [4 * out_q] {
            return Err(Error::dim(format!(
                "quaternion bias {:?}, expected [{}]",
                bias.shape(),
                4 * out_q
            )));
        }
        Ok(QuatConvLayer {
            in_q,
            out_q,
            weights,
            bias,
        })
    }

    pub fn random(in_q: usize, out_q: usize, rng: &mut impl Rng) -> Self {
        let fan_in = 4 * in_q * 9;
        let weights = std::array::from_fn(|_| init_uniform(rng, &[out_q, in_q, 3, 3], fan_in));
        let bias = init_uniform(rng, &[4 * out_q], fan_in);
        QuatConvLayer {
            in_q,
            out_q,
            weights,
            bias,
        }
    }

    pub fn weight_count(&self) -> usize {
        4 * self.in_q * self.out_q * 9
    }

    /// Forward pass for a planar feature map `[batch, 4*in_q, h, w]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape().len() != 4 || x.shape()[1] != 4 * self.in_q {
            return Err(Error::dim(format!(
                "quaternion conv layer takes [batch, {}, h, w], got {:?}",
                4 * self.in_q,
                x.shape()
            )));
        }
        let mut tape = Tape::inference();
        let xv = tape.constant(x.clone());
        let parts = self.weights.clone().map(|w| tape.constant(w));
        let b = tape.constant(self.bias.clone());
        let y = quat_conv(&mut tape, xv, parts, b)?;
        Ok(tape.value(y)?.clone())
    }
}

/// ReLU applied to every real component independently.
pub fn split_relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::Quaternion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q_to_planar(qs: &[Quaternion<f64>]) -> Vec<f64> {
        let mut v = vec![0.0; 4 * qs.len()];
        for (i, q) in qs.iter().enumerate() {
            for (c, val) in q.to_array().into_iter().enumerate() {
                v[c * qs.len() + i] = val;
            }
        }
        v
    }

    fn single(w: Quaternion<f64>) -> QuatLinearLayer<f64> {
        let weights = w.to_array().map(|c| Tensor::from_f64(&[1, 1], &[c]).unwrap());
        QuatLinearLayer::new(1, 1, weights, Tensor::zeros(&[4])).unwrap()
    }

    #[test]
    fn identity_weight_passes_input_through() {
        let layer = single(Quaternion::one());
        let x = Tensor::from_f64(&[1, 4], &[0.5, -1.0, 2.0, 3.5]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn i_times_j_is_k() {
        let layer = single(Quaternion::i());
        let x = Tensor::from_f64(&[1, 4], &q_to_planar(&[Quaternion::j()])).unwrap();
        assert_eq!(layer.forward(&x).unwrap().data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn fan_in_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = QuatLinearLayer::<f64>::random(3, 2, &mut rng);
        assert!(matches!(
            layer.forward(&Tensor::zeros(&[2, 8])),
            Err(Error::Dimension(_))
        ));
        let conv = QuatConvLayer::<f64>::random(2, 1, &mut rng);
        assert!(matches!(
            conv.forward(&Tensor::zeros(&[1, 4, 4, 4])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn conv_identity_and_zero() {
        let (in_q, hw) = (2, 4);
        let mut banks: [Tensor<f64>; 4] = std::array::from_fn(|_| Tensor::zeros(&[in_q, in_q, 3, 3]));
        for c in 0..in_q {
            banks[0].data_mut()[(c * in_q + c) * 9 + 4] = 1.0;
        }
        let layer = QuatConvLayer::new(in_q, in_q, banks, Tensor::zeros(&[4 * in_q])).unwrap();
        let x: Vec<f64> = (0..2 * 4 * in_q * hw * hw).map(|i| (i as f64 * 0.37).cos()).collect();
        let x = Tensor::from_f64(&[2, 4 * in_q, hw, hw], &x).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);

        let zero = QuatConvLayer::new(
            in_q,
            3,
            std::array::from_fn(|_| Tensor::zeros(&[3, in_q, 3, 3])),
            Tensor::zeros(&[12]),
        )
        .unwrap();
        assert!(zero.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn split_relu_components() {
        let x = Tensor::<f64>::from_f64(&[4], &[-1.0, 2.0, -3.0, 4.0]).unwrap();
        assert_eq!(split_relu(&x).data(), &[0.0, 2.0, 0.0, 4.0]);
        let neg = Tensor::<f64>::from_f64(&[4], &[-1.0, -2.0, -3.0, -4.0]).unwrap();
        assert!(split_relu(&neg).data().iter().all(|&v| v == 0.0));
        let pos = Tensor::<f64>::from_f64(&[4], &[0.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(split_relu(&pos), pos);
    }
}
