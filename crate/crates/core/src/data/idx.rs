//! MNIST IDX files.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(path, at as u64, format!("truncated header: file has {} bytes", bytes.len())))
}

fn header(bytes: &[u8], magic: u32, rank: usize, path: &Path) -> Result<Vec<usize>> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::format(path, 0, format!("magic {found}, expected {magic}")));
    }
    let dims = (0..rank)
        .map(|d| be_u32(bytes, 4 + 4 * d, path).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * rank;
    let need: usize = dims.iter().product();
    let have = bytes.len() - start;
    if have != need {
        return Err(Error::format(
            path,
            (start + have.min(need)) as u64,
            format!("payload is {have} bytes, header {dims:?} needs {need}"),
        ));
    }
    Ok(dims)
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let d = header(bytes, IMAGES_MAGIC, 3, path)?;
    Ok((d[0], d[1], d[2], bytes[16..].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    header(bytes, LABELS_MAGIC, 1, path)?;
    Ok(bytes[8..].to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_pair(dir: &Path, images: &str, labels: &str) -> Result<Dataset> {
    let ip = dir.join(images);
    let lp = dir.join(labels);
    let (n, rows, cols, pixels) = parse_idx_images(&read(&ip)?, &ip)?;
    let raw_labels = parse_idx_labels(&read(&lp)?, &lp)?;
    if raw_labels.len() != n {
        return Err(Error::format(
            &lp,
            4,
            format!("{} labels but {} has {n} images", raw_labels.len(), ip.display()),
        ));
    }
    if let Some(pos) = raw_labels.iter().position(|&l| l > 9) {
        return Err(Error::format(&lp, (8 + pos) as u64, format!("label {} is not a digit", raw_labels[pos])));
    }
    let images = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let labels = raw_labels.iter().map(|&l| l as usize).collect();
    Dataset::new(images, vec![1, rows, cols], labels, 10)
}

/// Reads the four standard IDX files from `dir` (or `dir/mnist`).
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let nested = dir.join("mnist");
    let dir = if !dir.join("t10k-labels-idx1-ubyte").exists() && nested.join("t10k-labels-idx1-ubyte").exists() {
        &nested
    } else {
        dir
    };
    Ok((
        load_pair(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
        load_pair(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
    ))
}
