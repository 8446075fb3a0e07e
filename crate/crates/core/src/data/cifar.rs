//! CIFAR binary batches.

use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::models::DatasetKind;

const PIXELS: usize = 3 * 32 * 32;

/// Decodes fixed-length records. `label_bytes` is 1 for CIFAR-10 and 2 for
/// CIFAR-100, where the second (fine) label is used.
pub fn parse_cifar_records(bytes: &[u8], label_bytes: usize, classes: usize, path: &Path) -> Result<(Vec<f32>, Vec<usize>)> {
    let rec = label_bytes + PIXELS;
    if !bytes.len().is_multiple_of(rec) {
        let whole = bytes.len() / rec;
        return Err(Error::format(
            path,
            (whole * rec) as u64,
            format!(
                "length {} is not a multiple of the {rec}-byte record; expected {} or {}",
                bytes.len(),
                whole * rec,
                (whole + 1) * rec
            ),
        ));
    }
    let n = bytes.len() / rec;
    let mut images = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, r) in bytes.chunks_exact(rec).enumerate() {
        let label = r[label_bytes - 1] as usize;
        if label >= classes {
            return Err(Error::format(
                path,
                (i * rec + label_bytes - 1) as u64,
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        labels.push(label);
        images.extend(r[label_bytes..].iter().map(|&p| p as f32 / 255.0));
    }
    Ok((images, labels))
}

fn read_files(dir: &Path, files: &[&str], label_bytes: usize, classes: usize) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let p = dir.join(f);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let (im, lb) = parse_cifar_records(&bytes, label_bytes, classes, &p)?;
        images.extend(im);
        labels.extend(lb);
    }
    Dataset::new(images, vec![3, 32, 32], labels, classes)
}

fn locate(dir: &Path, nested: &str, probe: &str) -> PathBuf {
    let sub = dir.join(nested);
    if !dir.join(probe).exists() && sub.join(probe).exists() {
        sub
    } else {
        dir.to_path_buf()
    }
}

/// Reads CIFAR-10 (`data_batch_1..5.bin`, `test_batch.bin`) or CIFAR-100
/// (`train.bin`, `test.bin`) from `dir` or its standard extraction subdirectory.
pub fn load_cifar(dir: &Path, kind: DatasetKind) -> Result<(Dataset, Dataset)> {
    match kind {
        DatasetKind::Cifar10 => {
            let d = locate(dir, "cifar-10-batches-bin", "test_batch.bin");
            let train = [
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ];
            Ok((read_files(&d, &train, 1, 10)?, read_files(&d, &["test_batch.bin"], 1, 10)?))
        }
        DatasetKind::Cifar100 => {
            let d = locate(dir, "cifar-100-binary", "test.bin");
            Ok((read_files(&d, &["train.bin"], 2, 100)?, read_files(&d, &["test.bin"], 2, 100)?))
        }
        DatasetKind::Mnist => Err(Error::Config("MNIST is not a CIFAR variant".into())),
    }
}
