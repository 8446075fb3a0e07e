//! Dataset readers, normalization and model-input encoding.

mod cifar;
mod idx;

pub use cifar::{load_cifar, parse_cifar_records};
pub use idx::{load_mnist, parse_idx_images, parse_idx_labels};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{input_shape, DatasetKind, Field, ModelSpec};
use crate::quat::Quaternion;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Labelled examples stored contiguously, each with extents `shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<f32>,
    shape: Vec<usize>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<f32>, shape: Vec<usize>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let per: usize = shape.iter().product();
        if images.len() != per * labels.len() {
            return Err(Error::dim(format!(
                "{} labels of shape {:?} need {} values, got {}",
                labels.len(),
                shape,
                per * labels.len(),
                images.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Validation(format!("label {bad} out of range for {classes} classes")));
        }
        if let Some(bad) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Dataset {
            images,
            shape,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Extents of one example.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn example_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.example_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.example_len();
        let mut images = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            images,
            shape: self.shape.clone(),
            labels,
            classes: self.classes,
        }
    }

    /// First `n` examples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Batch tensor `[indices.len(), shape...]` and its labels.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let n = self.example_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64_lossy(v as f64)));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.shape);
        (Tensor::new(shape, data).expect("batch extents"), labels)
    }

    fn map_examples(&self, shape: Vec<usize>, f: impl Fn(&[f32], &mut Vec<f32>) -> Result<()>) -> Result<Dataset> {
        let mut images = Vec::with_capacity(self.len() * shape.iter().product::<usize>());
        for i in 0..self.len() {
            f(self.image(i), &mut images)?;
        }
        Ok(Dataset {
            images,
            shape,
            labels: self.labels.clone(),
            classes: self.classes,
        })
    }
}

/// Validation carve-out settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub validation: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            validation: 5000,
            seed: 0,
        }
    }
}

/// Index form of [`split_train_validation`]: `(train, validation)`
/// positions into a dataset of `n` examples.
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.validation == 0 {
        return Ok(((0..n).collect(), Vec::new()));
    }
    if spec.validation >= n {
        return Err(Error::Validation(format!(
            "validation size {} must be below the {n} training examples",
            spec.validation
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let validation = order.split_off(n - spec.validation);
    Ok((order, validation))
}

/// Seeded shuffle, then the last `spec.validation` examples become the
/// validation set. Size zero returns the training set untouched.
pub fn split_train_validation(train: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if spec.validation == 0 {
        return Ok((train.clone(), train.subset(&[])));
    }
    let (t, v) = split_indices(train.len(), spec)?;
    Ok((train.subset(&t), train.subset(&v)))
}

/// Appends `0.299 R + 0.587 G + 0.114 B` as a fourth channel to a `[3, h, w]` image.
pub fn add_grayscale_channel(img: &[f32], shape: &[usize]) -> Result<Vec<f32>> {
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::dim(format!("grayscale channel needs a [3, h, w] image, got {shape:?}")));
    }
    let plane = shape[1] * shape[2];
    if img.len() != 3 * plane {
        return Err(Error::dim(format!("image holds {} values, shape {shape:?}", img.len())));
    }
    let mut out = Vec::with_capacity(4 * plane);
    out.extend_from_slice(img);
    for p in 0..plane {
        let g = LUMA[0] * img[p] + LUMA[1] * img[plane + p] + LUMA[2] * img[2 * plane + p];
        out.push(g.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Groups of four consecutive values become `(r, x, y, z)`.
pub fn pack_quaternions_flat<T: Copy>(v: &[T]) -> Result<Vec<Quaternion<T>>> {
    if !v.len().is_multiple_of(4) {
        return Err(Error::Validation(format!(
            "cannot pack {} values into quaternions",
            v.len()
        )));
    }
    Ok(v.chunks_exact(4)
        .map(|c| Quaternion {
            r: c[0],
            x: c[1],
            y: c[2],
            z: c[3],
        })
        .collect())
}

/// Quaternions to the component-planar layout `[r.., x.., y.., z..]`.
pub fn to_planar<T: Copy + Default>(qs: &[Quaternion<T>]) -> Vec<T> {
    let n = qs.len();
    let mut out = vec![T::default(); 4 * n];
    for (i, q) in qs.iter().enumerate() {
        out[i] = q.r;
        out[n + i] = q.x;
        out[2 * n + i] = q.y;
        out[3 * n + i] = q.z;
    }
    out
}

/// Re-encodes raw images into the input layout `spec`'s network expects.
pub fn encode_for(spec: &ModelSpec, ds: &Dataset) -> Result<Dataset> {
    let target = input_shape(spec);
    let [c, h, w] = spec.dataset.image_dims();
    if ds.shape() != [c, h, w] {
        return Err(Error::dim(format!(
            "{} images must be {:?}, got {:?}",
            spec.dataset.as_str(),
            [c, h, w],
            ds.shape()
        )));
    }
    match (spec.is_convolutional(), spec.field) {
        (true, Field::Real) => Ok(ds.clone()),
        (true, Field::Quaternion) => {
            let shape = ds.shape().to_vec();
            ds.map_examples(target, |img, out| {
                out.extend(add_grayscale_channel(img, &shape)?);
                Ok(())
            })
        }
        (false, Field::Real) => ds.map_examples(target, |img, out| {
            out.extend_from_slice(img);
            Ok(())
        }),
        (false, Field::Quaternion) => ds.map_examples(target, |img, out| {
            out.extend(to_planar(&pack_quaternions_flat(img)?));
            Ok(())
        }),
    }
}

/// Train and test sets for `kind` from `dir`.
pub fn load(kind: DatasetKind, dir: &Path) -> Result<(Dataset, Dataset)> {
    match kind {
        DatasetKind::Mnist => load_mnist(dir),
        DatasetKind::Cifar10 | DatasetKind::Cifar100 => load_cifar(dir, kind),
    }
}
