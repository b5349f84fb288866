//! IDX image and label files, normalization, and seeded batching.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::scalar::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Length(format!("{what}: header ends after {} bytes", bytes.len())))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let actual = be_u32(bytes, 0, what)?;
    if actual != expected {
        return Err(Error::Magic { expected, actual });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let available = bytes.len() - header;
    if available != len {
        let issue = if available < len { "truncated" } else { "trailing bytes" };
        return Err(Error::Length(format!(
            "{what}: {issue}, header declares {len} payload bytes, found {available}"
        )));
    }
    Ok(&bytes[header..])
}

/// Decode an image file into `N x 1 x rows x cols` with pixels scaled to
/// `[0, 1]`.
pub fn parse_idx_images<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let pixels = payload(bytes, 16, n * rows * cols, "images")?;
    let scale = 1.0 / 255.0;
    let data = pixels
        .iter()
        .map(|&p| T::from_f64_lossy(f64::from(p) * scale))
        .collect();
    Tensor::new(&[n, 1, rows, cols], data)
}

/// Decode a label file; every label must be below `num_classes`.
pub fn parse_idx_labels(bytes: &[u8], num_classes: usize) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let n = be_u32(bytes, 4, "labels")? as usize;
    let raw = payload(bytes, 8, n, "labels")?;
    if let Some((i, &bad)) = raw.iter().enumerate().find(|(_, &l)| l as usize >= num_classes) {
        return Err(Error::Range(format!(
            "label {bad} at index {i} outside [0, {num_classes})"
        )));
    }
    Ok(raw.iter().map(|&l| l as usize).collect())
}

/// Encode `N x 1 x rows x cols` pixels in `[0, 1]` as an image file.
pub fn write_idx_images<T: Scalar>(images: &Tensor<T>) -> Result<Vec<u8>> {
    let (n, c, rows, cols) = images.dims4()?;
    if c != 1 {
        return Err(Error::shape(format!("expected one channel, got {c}")));
    }
    let mut out = Vec::with_capacity(16 + images.numel());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(
        images
            .data()
            .iter()
            .map(|v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Range(format!("label {l} exceeds a byte")))?;
        out.push(b);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Affine pixel normalization `(x - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { mean: 0.0, std: 1.0 };

    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "normalization needs finite mean and positive std, got ({mean}, {std})"
            )));
        }
        Ok(Self { mean, std })
    }
}

/// Raw file locations of one dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DatasetPaths {
    /// The distribution file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            train_images: d.join("train-images-idx3-ubyte"),
            train_labels: d.join("train-labels-idx1-ubyte"),
            test_images: d.join("t10k-images-idx3-ubyte"),
            test_labels: d.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
    }
}

/// Images `N x 1 x H x W` with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    images: Tensor<T>,
    labels: Vec<usize>,
    split: Split,
    normalization: Option<Normalization>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>, split: Split) -> Result<Self> {
        let (n, c, _, _) = images.dims4()?;
        if c != 1 {
            return Err(Error::shape(format!("expected one channel, got {c}")));
        }
        if n != labels.len() {
            return Err(Error::Length(format!(
                "{n} images but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::Range(format!("label {bad} outside [0, {NUM_CLASSES})")));
        }
        Ok(Self {
            images,
            labels,
            split,
            normalization: None,
        })
    }

    pub fn from_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Self> {
        Self::new(parse_idx_images(images)?, parse_idx_labels(labels, NUM_CLASSES)?, split)
    }

    pub fn load(images: &Path, labels: &Path, split: Split) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
            })
        };
        Self::from_idx(&read(images)?, &read(labels)?, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn normalization(&self) -> Option<Normalization> {
        self.normalization
    }

    pub fn image_size(&self) -> (usize, usize) {
        let s = self.images.shape();
        (s[2], s[3])
    }

    /// Mean and population standard deviation of all pixels.
    pub fn pixel_statistics(&self) -> Result<Normalization> {
        let n = self.images.numel() as f64;
        let mean = self.images.data().iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = self
            .images
            .data()
            .iter()
            .map(|v| (v.as_f64() - mean).powi(2))
            .sum::<f64>()
            / n;
        Normalization::new(mean, var.sqrt())
    }

    /// Apply `(x - mean) / std` and record the constants.
    pub fn normalize(mut self, norm: Normalization) -> Result<Self> {
        let norm = Normalization::new(norm.mean, norm.std)?;
        if self.normalization.is_some() {
            return Err(Error::InvalidParameter("dataset is already normalized".into()));
        }
        let (m, s) = (norm.mean, norm.std);
        for v in self.images.data_mut() {
            *v = T::from_f64_lossy((v.as_f64() - m) / s);
        }
        self.normalization = Some(norm);
        Ok(self)
    }

    /// Undo [`normalize`](Self::normalize).
    pub fn denormalize(mut self) -> Self {
        if let Some(Normalization { mean, std }) = self.normalization.take() {
            for v in self.images.data_mut() {
                *v = T::from_f64_lossy(v.as_f64() * std + mean);
            }
        }
        self
    }

    /// The first `n` examples (all of them when `n >= len`).
    pub fn subset(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let (_, c, h, w) = self.images.dims4().expect("rank 4");
        let item = c * h * w;
        Self {
            images: Tensor::new(&[n, c, h, w], self.images.data()[..n * item].to_vec())
                .expect("consistent shape"),
            labels: self.labels[..n].to_vec(),
            split: self.split,
            normalization: self.normalization,
        }
    }

    /// Images and labels at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let (_, c, h, w) = self.images.dims4().expect("rank 4");
        let item = c * h * w;
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * item);
        for &i in indices {
            data.extend_from_slice(&src[i * item..(i + 1) * item]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (
            Tensor::new(&[indices.len(), c, h, w], data).expect("consistent shape"),
            labels,
        )
    }

    /// Consecutive batches without shuffling.
    pub fn sequential_batches(&self, batch_size: usize) -> impl Iterator<Item = (Tensor<T>, Vec<usize>)> + '_ {
        let n = self.len();
        let step = batch_size.max(1);
        (0..n).step_by(step).map(move |start| {
            let idx: Vec<usize> = (start..(start + step).min(n)).collect();
            self.gather(&idx)
        })
    }
}

/// One epoch's visiting order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub epoch_seed: u64,
    pub batch_size: usize,
    pub permutation: Vec<usize>,
}

impl BatchPlan {
    /// Shuffle `0..n` with a seed derived from `(data_seed, epoch)`.
    pub fn new(n: usize, batch_size: usize, data_seed: u64, epoch: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        let epoch_seed = derive_seed(data_seed, epoch as u64);
        Ok(Self {
            epoch_seed,
            batch_size,
            permutation: Rng::new(epoch_seed).permutation(n),
        })
    }

    pub fn batch_count(&self) -> usize {
        self.permutation.len().div_ceil(self.batch_size)
    }

    /// Index slices of every batch; only the last may be short.
    pub fn batches(&self) -> impl Iterator<Item = &[usize]> {
        self.permutation.chunks(self.batch_size)
    }
}
