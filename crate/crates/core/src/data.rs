//! IDX ingestion, normalization, nearest-neighbour resizing and splits.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// Unnormalized images `[n, h, w, 1]` with byte values 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

/// Images paired with labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.batch() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.batch(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset("selection is empty".into()));
        }
        Ok(LabeledDataset {
            images: self.images.gather(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        })
    }

    /// The first `n` samples of a seeded shuffle (all of them if `n >= len`).
    pub fn shuffled_subset(&self, n: usize, seed: u64) -> Result<Self> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.truncate(n.min(self.len()));
        self.gather(&order)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Truncated(format!("IDX header ends before {what}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0, "magic")?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, n: usize, what: &str) -> Result<&'a [u8]> {
    bytes
        .get(header..header + n)
        .ok_or_else(|| Error::Truncated(format!("{what}: expected {n} bytes of data")))
}

/// Parses an IDX image file body (magic 2051): `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4, "image count")? as usize;
    let h = be_u32(bytes, 8, "row count")? as usize;
    let w = be_u32(bytes, 12, "column count")? as usize;
    if h == 0 || w == 0 {
        return Err(Error::Malformed(format!("image dimensions {h}x{w}")));
    }
    Ok((n, h, w, payload(bytes, 16, n * h * w, "images")?))
}

/// Parses an IDX label file body (magic 2049).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = be_u32(bytes, 4, "label count")? as usize;
    payload(bytes, 8, n, "labels")
}

/// Loads an IDX image/label pair; gzip-compressed files are detected by their
/// magic bytes and decompressed transparently.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<RawDataset> {
    let images = load_idx_images(images_path)?;
    let label_bytes = read_maybe_gz(labels_path.as_ref())?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != images.batch() {
        return Err(Error::CountMismatch {
            images: images.batch(),
            labels: labels.len(),
        });
    }
    Ok(RawDataset {
        images,
        labels: labels.iter().map(|&l| l as usize).collect(),
    })
}

/// Loads an IDX image file on its own as `[n, h, w, 1]` byte values.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = read_maybe_gz(path.as_ref())?;
    let (n, h, w, pixels) = parse_idx_images(&bytes)?;
    if n == 0 {
        return Err(Error::EmptyDataset("IDX file holds no samples".into()));
    }
    Tensor::new([n, h, w, 1], pixels.iter().map(|&p| p as f32).collect())
}

/// Divides by 255.
pub fn normalize01(raw: &Tensor) -> Tensor {
    raw.map(|v| v / 255.0)
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Normalized to [0,1]. `num_classes` defaults to `max label + 1`.
    pub fn normalized(&self, num_classes: Option<usize>) -> Result<LabeledDataset> {
        let k = num_classes.unwrap_or_else(|| self.labels.iter().max().map_or(0, |m| m + 1));
        LabeledDataset::new(normalize01(&self.images), self.labels.clone(), k)
    }
}

/// Nearest-neighbour resize of one `[h, w]` image: `out[i,j] = in[i*h/H, j*w/W]`.
pub fn nn_resize(image: &Tensor, target: [usize; 2]) -> Result<Tensor> {
    let &[h, w] = image.shape() else {
        return Err(Error::shape(format!(
            "expected [h, w], got {:?}",
            image.shape()
        )));
    };
    let [th, tw] = target;
    if th == 0 || tw == 0 {
        return Err(Error::invalid("resize target dimensions must be positive"));
    }
    let src = image.data();
    let mut out = Vec::with_capacity(th * tw);
    for i in 0..th {
        let si = i * h / th;
        out.extend((0..tw).map(|j| src[si * w + j * w / tw]));
    }
    Tensor::new([th, tw], out)
}

/// Resizes every `[h, w, 1]` image of a batch to `side x side`.
pub fn resize_images(images: &Tensor, side: usize) -> Result<Tensor> {
    let &[n, h, w, 1] = images.shape() else {
        return Err(Error::shape(format!(
            "expected [n, h, w, 1], got {:?}",
            images.shape()
        )));
    };
    if h == side && w == side {
        return Ok(images.clone());
    }
    let mut data = Vec::with_capacity(n * side * side);
    for s in 0..n {
        let one = Tensor::new([h, w], images.row(s).to_vec())?;
        data.extend(nn_resize(&one, [side, side])?.into_data());
    }
    Tensor::new([n, side, side, 1], data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub val_fraction: f64,
    /// Only for datasets that ship without a test split.
    pub test_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_fraction: 0.10,
            test_fraction: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn check_fraction(f: f64, what: &str) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} must lie in (0, 1), got {f}"
        )))
    }
}

/// Partitions `0..n` with a seeded permutation. Validation and test parts get
/// `floor(n * fraction)` indices; the remainder goes to training.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Split> {
    check_fraction(spec.val_fraction, "val_fraction")?;
    let n_val = (n as f64 * spec.val_fraction).floor() as usize;
    let n_test = match spec.test_fraction {
        Some(f) => {
            check_fraction(f, "test_fraction")?;
            let t = (n as f64 * f).floor() as usize;
            if t == 0 {
                return Err(Error::EmptyDataset(format!("test part of {n} samples")));
            }
            t
        }
        None => 0,
    };
    if n_val == 0 {
        return Err(Error::EmptyDataset(format!(
            "validation part of {n} samples"
        )));
    }
    if n_val + n_test >= n {
        return Err(Error::EmptyDataset(format!("training part of {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test = order.split_off(n - n_test);
    let val = order.split_off(n - n_test - n_val);
    Ok(Split {
        train: order,
        val,
        test,
    })
}

/// Splits a dataset into `(train, val, test)`; `test` is `None` unless the
/// spec asks for one.
pub fn split(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, Option<LabeledDataset>)> {
    let parts = split_indices(dataset.len(), spec)?;
    let test = if parts.test.is_empty() {
        None
    } else {
        Some(dataset.gather(&parts.test)?)
    };
    Ok((
        dataset.gather(&parts.train)?,
        dataset.gather(&parts.val)?,
        test,
    ))
}
