//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use qlottery::Quaternion;

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

/// Same-padded 3x3 cross-correlation, `x: [n, c, h, w]`, `k: [f, c, 3, 3]`.
pub fn conv3x3(x: &[f64], dims: [usize; 4], k: &[f64], f: usize) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let mut out = vec![0.0; n * f * h * w];
    for b in 0..n {
        for o in 0..f {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for ch in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = y as isize + ky as isize - 1;
                                let ix = xx as isize + kx as isize - 1;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((b * c + ch) * h + iy as usize) * w + ix as usize]
                                    * k[((o * c + ch) * 3 + ky) * 3 + kx];
                            }
                        }
                    }
                    out[((b * f + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

pub fn maxpool2(x: &[f64], dims: [usize; 4]) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for p in 0..n * c {
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| x[(p * h + 2 * y + dy) * w + 2 * xx + dx];
                out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
            }
        }
    }
    out
}

/// Mean softmax cross-entropy with a max shift.
pub fn cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for (row, &l) in logits.chunks(classes).zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[l];
    }
    total / labels.len() as f64
}

pub fn planar(qs: &[Quaternion<f64>]) -> Vec<f64> {
    let n = qs.len();
    let mut v = vec![0.0; 4 * n];
    for (i, q) in qs.iter().enumerate() {
        for (c, x) in q.to_array().into_iter().enumerate() {
            v[c * n + i] = x;
        }
    }
    v
}

pub fn unplanar(v: &[f64]) -> Vec<Quaternion<f64>> {
    let n = v.len() / 4;
    (0..n)
        .map(|i| Quaternion::new(v[i], v[n + i], v[2 * n + i], v[3 * n + i]))
        .collect()
}

/// `o_j = Σ_i w[j][i] ⊗ x_i + b_j`, written out per component.
pub fn quat_dense(w: &[Vec<Quaternion<f64>>], x: &[Quaternion<f64>], b: &[Quaternion<f64>]) -> Vec<Quaternion<f64>> {
    w.iter()
        .zip(b)
        .map(|(row, bj)| {
            let mut acc = [bj.r, bj.x, bj.y, bj.z];
            for (wi, xi) in row.iter().zip(x) {
                let (a, q) = (wi, xi);
                acc[0] += a.r * q.r - a.x * q.x - a.y * q.y - a.z * q.z;
                acc[1] += a.r * q.x + a.x * q.r + a.y * q.z - a.z * q.y;
                acc[2] += a.r * q.y - a.x * q.z + a.y * q.r + a.z * q.x;
                acc[3] += a.r * q.z + a.x * q.y - a.y * q.x + a.z * q.r;
            }
            Quaternion::new(acc[0], acc[1], acc[2], acc[3])
        })
        .collect()
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dataset root: `$QLOTTERY_DATA`, else `<workspace>/data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("QLOTTERY_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn has_mnist(root: &Path) -> bool {
    qlottery::data::load_mnist(root).is_ok()
}

/// IDX image file bytes.
pub fn idx_images(images: &[Vec<u8>], rows: u32, cols: u32) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [2051u32, images.len() as u32, rows, cols] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        b.extend_from_slice(im);
    }
    b
}

pub fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [2049u32, labels.len() as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(labels);
    b
}

/// Writes a learnable MNIST-shaped dataset: each class lights up its own
/// horizontal band of the 28x28 image, plus deterministic noise.
pub fn write_synthetic_mnist(dir: &Path, train: usize, test: usize) {
    let make = |n: usize, salt: usize| {
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i * 7 + salt) % 10;
            let mut im = vec![0u8; 784];
            for (p, v) in im.iter_mut().enumerate() {
                let noise = ((p * 31 + i * 17 + salt) % 97) as u8;
                let band = p / 28 / 3 == label;
                *v = if band { 200u8.saturating_add(noise / 2) } else { noise };
            }
            images.push(im);
            labels.push(label as u8);
        }
        (images, labels)
    };
    let (ti, tl) = make(train, 0);
    let (vi, vl) = make(test, 3);
    std::fs::write(dir.join("train-images-idx3-ubyte"), idx_images(&ti, 28, 28)).unwrap();
    std::fs::write(dir.join("train-labels-idx1-ubyte"), idx_labels(&tl)).unwrap();
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), idx_images(&vi, 28, 28)).unwrap();
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), idx_labels(&vl)).unwrap();
}
