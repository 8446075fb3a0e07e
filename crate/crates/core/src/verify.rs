//! Self checks behind the `verify` subcommand: Hamilton product against
//! its matrix form, quaternion layers against per-element sums, gradients
//! against central differences, parameter counts and pruning arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::{build_network, Architecture, DatasetKind, Field, ModelSpec, ParamFilter, QuatConvLayer, QuatLinearLayer};
use crate::pruning::{global_magnitude_prune, Mask};
use crate::quat::{as_matrix, hamilton, Quaternion};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<(bool, String)>) -> Check {
    match r {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn rand_quat(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("extents")
}

/// Largest componentwise gap between the product formula and the matrix
/// form over `pairs` random pairs.
pub fn hamilton_matrix_gap(pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (a, b) = (rand_quat(&mut rng), rand_quat(&mut rng));
        let p = hamilton(a, b).to_array();
        let m = as_matrix(a).mul_vec(b.to_array());
        for c in 0..4 {
            worst = worst.max((p[c] - m[c]).abs());
        }
    }
    worst
}

fn planar_get(v: &[f64], n: usize, i: usize) -> Quaternion<f64> {
    Quaternion::new(v[i], v[n + i], v[2 * n + i], v[3 * n + i])
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Relative gap between a random quaternion dense layer and explicit
/// `Σ_i w_ji ⊗ x_i + b_j`.
pub fn quat_linear_gap(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, in_q, out_q) = (3, 5, 4);
    let layer = QuatLinearLayer::<f64>::random(in_q, out_q, &mut rng);
    let x = rand_tensor(&mut rng, &[batch, 4 * in_q]);
    let got = layer.forward(&x)?;
    let mut want = vec![0.0; batch * 4 * out_q];
    for b in 0..batch {
        let xb = &x.data()[b * 4 * in_q..(b + 1) * 4 * in_q];
        for j in 0..out_q {
            let mut acc = planar_get(layer.bias.data(), out_q, j);
            for i in 0..in_q {
                let w = Quaternion::from_array(layer.weights.each_ref().map(|t| t.data()[j * in_q + i]));
                acc = acc + hamilton(w, planar_get(xb, in_q, i));
            }
            for (c, v) in acc.to_array().into_iter().enumerate() {
                want[b * 4 * out_q + c * out_q + j] = v;
            }
        }
    }
    Ok(rel_gap(got.data(), &want))
}

/// Relative gap between a random quaternion 3x3 convolution and explicit
/// per-pixel Hamilton sums with zero padding.
pub fn quat_conv_gap(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, in_q, out_q, h, w) = (2, 2, 3, 5, 4);
    let layer = QuatConvLayer::<f64>::random(in_q, out_q, &mut rng);
    let x = rand_tensor(&mut rng, &[batch, 4 * in_q, h, w]);
    let got = layer.forward(&x)?;
    let plane = h * w;
    let xq = |b: usize, i: usize, r: usize, c: usize| {
        let base = b * 4 * in_q * plane;
        let comp = |k: usize| x.data()[base + (k * in_q + i) * plane + r * w + c];
        Quaternion::new(comp(0), comp(1), comp(2), comp(3))
    };
    let mut want = vec![0.0; batch * 4 * out_q * plane];
    for b in 0..batch {
        for j in 0..out_q {
            for r in 0..h {
                for c in 0..w {
                    let mut acc = planar_get(layer.bias.data(), out_q, j);
                    for i in 0..in_q {
                        for dr in 0..3 {
                            for dc in 0..3 {
                                let (rr, cc) = (r as isize + dr as isize - 1, c as isize + dc as isize - 1);
                                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                                    continue;
                                }
                                let tap = ((j * in_q + i) * 3 + dr) * 3 + dc;
                                let wq = Quaternion::from_array(layer.weights.each_ref().map(|t| t.data()[tap]));
                                acc = acc + hamilton(wq, xq(b, i, rr as usize, cc as usize));
                            }
                        }
                    }
                    for (k, v) in acc.to_array().into_iter().enumerate() {
                        want[b * 4 * out_q * plane + (k * out_q + j) * plane + r * w + c] = v;
                    }
                }
            }
        }
    }
    Ok(rel_gap(got.data(), &want))
}

/// Largest relative gap between tape gradients and central differences for
/// the scalar function `f` of `inputs`. The denominator is floored at 1e-3.
pub fn gradient_gap(
    inputs: &[Tensor<f64>],
    h: f64,
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::inference();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.value(l)?.item())
    };
    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let orig = input.data()[j];
            work[k].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
    }
    Ok(worst)
}

/// Weighted sum `Σ y ⊙ r` with fixed random `r`, so every output element
/// contributes a distinct gradient.
pub fn probe(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y)?.shape().to_vec();
    let r = tape.constant(rand_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &shape));
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

/// Values bounded away from zero, so ReLU kinks sit outside the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let t = rand_tensor(rng, shape);
    t.map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

/// Gradient checks for every layer kind; `(name, worst relative gap)`.
pub fn gradient_suite(h: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    let x = rand_tensor(&mut rng, &[3, 6]);
    let w = rand_tensor(&mut rng, &[4, 6]);
    let b = rand_tensor(&mut rng, &[4]);
    out.push((
        "linear",
        gradient_gap(&[x, w, b], h, |t, v| {
            let y = t.linear(v[0], v[1])?;
            let y = t.bias_add(y, v[2])?;
            probe(t, y, 1)
        })?,
    ));
    let x = rand_tensor(&mut rng, &[2, 3, 5, 4]);
    let k = rand_tensor(&mut rng, &[2, 3, 3, 3]);
    let b = rand_tensor(&mut rng, &[2]);
    out.push((
        "conv3x3",
        gradient_gap(&[x, k, b], h, |t, v| {
            let y = t.conv2d(v[0], v[1])?;
            let y = t.bias_add(y, v[2])?;
            probe(t, y, 2)
        })?,
    ));
    let (in_q, out_q) = (3, 2);
    let mut qin = vec![rand_tensor(&mut rng, &[2, 4 * in_q])];
    qin.extend((0..4).map(|_| rand_tensor(&mut rng, &[out_q, in_q])));
    qin.push(rand_tensor(&mut rng, &[4 * out_q]));
    out.push((
        "quaternion linear",
        gradient_gap(&qin, h, |t, v| {
            let y = crate::models::quat_linear(t, v[0], [v[1], v[2], v[3], v[4]], v[5])?;
            probe(t, y, 3)
        })?,
    ));
    let (in_q, out_q) = (1, 2);
    let mut qin = vec![rand_tensor(&mut rng, &[2, 4 * in_q, 4, 3])];
    qin.extend((0..4).map(|_| rand_tensor(&mut rng, &[out_q, in_q, 3, 3])));
    qin.push(rand_tensor(&mut rng, &[4 * out_q]));
    out.push((
        "quaternion conv3x3",
        gradient_gap(&qin, h, |t, v| {
            let y = crate::models::quat_conv(t, v[0], [v[1], v[2], v[3], v[4]], v[5])?;
            probe(t, y, 4)
        })?,
    ));
    let x = away_from_zero(&mut rng, &[3, 8]);
    out.push(("split relu", gradient_gap(&[x], h, |t, v| {
        let y = t.relu(v[0])?;
        probe(t, y, 5)
    })?));
    // Distinct values keep the argmax stable under the stencil.
    let mut x = rand_tensor(&mut rng, &[2, 2, 4, 4]);
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        *v += i as f64 * 0.01;
    }
    out.push(("maxpool 2x2", gradient_gap(&[x], h, |t, v| {
        let y = t.maxpool2d(v[0])?;
        probe(t, y, 6)
    })?));
    let z = rand_tensor(&mut rng, &[4, 5]);
    out.push((
        "softmax cross-entropy",
        gradient_gap(&[z], h, |t, v| t.softmax_cross_entropy(v[0], &[0, 4, 2, 2]))?,
    ));
    Ok(out)
}

/// `(entry, total, expected total, conv weights, expected conv weights)`
/// with the published rounded values.
pub type CountRow = (String, usize, f64, usize, Option<f64>);

pub fn table_counts() -> Result<Vec<CountRow>> {
    let rows = [
        (Architecture::Lenet300, Field::Real, 266.6e3, None),
        (Architecture::Lenet300, Field::Quaternion, 67.7e3, None),
        (Architecture::Conv2, Field::Real, 4.30e6, Some(38e3)),
        (Architecture::Conv2, Field::Quaternion, 1.08e6, Some(9.9e3)),
        (Architecture::Conv4, Field::Real, 2.42e6, Some(260e3)),
        (Architecture::Conv4, Field::Quaternion, 609e3, Some(65e3)),
        (Architecture::Conv6, Field::Real, 2.26e6, Some(1.14e6)),
        (Architecture::Conv6, Field::Quaternion, 569e3, Some(287e3)),
    ];
    rows.iter()
        .map(|&(arch, field, total, conv)| {
            let spec = ModelSpec::preset(arch, arch.default_dataset(), field)?;
            let net = build_network::<f32>(&spec, 0)?;
            Ok((
                format!("{arch} {field}"),
                net.count(ParamFilter::All),
                total,
                net.count(ParamFilter::ConvWeights),
                conv,
            ))
        })
        .collect()
}

/// Kept counts after `rounds` global prunes of a `weights`-entry network.
pub fn pruning_ladder(weights: usize, rounds: usize, rate: f64) -> Result<Vec<usize>> {
    let spec = ModelSpec::preset(Architecture::Lenet12, DatasetKind::Mnist, Field::Real)?;
    let mut net = crate::models::Network::<f32>::new(spec, vec![weights]);
    net.push_linear("fc1", weights, 1, &mut ChaCha8Rng::seed_from_u64(7));
    let mut mask = Mask::full(&net);
    let mut kept = Vec::new();
    for _ in 0..rounds {
        mask = global_magnitude_prune(&net, &mask, rate)?;
        kept.push(mask.kept());
    }
    Ok(kept)
}

/// Runs every check.
pub fn run_all() -> Vec<Check> {
    let mut out = vec![check("hamilton product equals matrix form", {
        let gap = hamilton_matrix_gap(10_000, 1);
        Ok((gap < 1e-6, format!("10000 pairs, max abs gap {gap:.2e}")))
    })];
    out.push(check(
        "quaternion layers equal Hamilton sums",
        (|| {
            let (l, c) = (quat_linear_gap(2)?, quat_conv_gap(3)?);
            Ok((l < 1e-5 && c < 1e-5, format!("linear {l:.2e}, conv {c:.2e}")))
        })(),
    ));
    out.push(check(
        "gradients match central differences",
        gradient_suite(1e-4).map(|rows| {
            let ok = rows.iter().all(|r| r.1 < 1e-5);
            let detail = rows
                .iter()
                .map(|(n, g)| format!("{n} {g:.1e}"))
                .collect::<Vec<_>>()
                .join("; ");
            (ok, detail)
        }),
    ));
    out.push(check(
        "parameter counts",
        table_counts().map(|rows| {
            let near = |got: usize, want: f64| ((got as f64 - want) / want).abs() <= 0.02;
            let ok = rows
                .iter()
                .all(|r| near(r.1, r.2) && r.4.is_none_or(|c| near(r.3, c)));
            let detail = rows
                .iter()
                .map(|r| format!("{} {}", r.0, r.1))
                .collect::<Vec<_>>()
                .join("; ");
            (ok, detail)
        }),
    ));
    out.push(check(
        "pruning arithmetic",
        pruning_ladder(100_000, 5, 0.2).map(|k| (k == [80000, 64000, 51200, 40960, 32768], format!("{k:?}"))),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
