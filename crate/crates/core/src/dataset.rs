//! Data ingestion and generation: bit-exact IDX container parsing, seeded
//! deterministic subsetting, and synthetic Gaussian-blob classification
//! data for desk-scale runs.

use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::matrix::Mat;
use crate::rng::Rng;

/// IDX magic for a 1-D unsigned-byte tensor (label files).
pub const IDX_MAGIC_LABELS: u32 = 0x0000_0801;
/// IDX magic for a 3-D unsigned-byte tensor (image files).
pub const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;

#[derive(Debug, Error, PartialEq)]
pub enum IdxError {
    #[error("bad IDX magic 0x{found:08x}; expected 0x{IDX_MAGIC_LABELS:08x} or 0x{IDX_MAGIC_IMAGES:08x}")]
    BadMagic { found: u32 },
    #[error("truncated IDX stream: need {expected} bytes, have {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes in IDX stream: expected {expected} bytes total, found {found}")]
    TrailingBytes { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image file holds {images} samples but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("subset of size {requested} exceeds dataset size {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("invalid synthetic config: {0}")]
    SyntheticConfig(String),
}

/// Parsed IDX tensor: big-endian magic, big-endian u32 dimension sizes,
/// then the row-major u8 payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub magic: u32,
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

impl IdxTensor {
    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Serialize back to the exact byte stream `parse_idx` accepts.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.payload.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, total_needed: usize) -> Result<u32, IdxError> {
    if bytes.len() < offset + 4 {
        return Err(IdxError::Truncated {
            expected: total_needed.max(offset + 4),
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parse an IDX byte stream. Accepts exactly the two u8 tensor layouts used
/// by the MNIST distribution (1-D labels, 3-D images); rejects anything
/// else as a bad magic, and checks the payload length exactly.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, IdxError> {
    let magic = read_u32_be(bytes, 0, 4)?;
    let ndim = match magic {
        IDX_MAGIC_LABELS => 1,
        IDX_MAGIC_IMAGES => 3,
        other => return Err(IdxError::BadMagic { found: other }),
    };
    let header = 4 + 4 * ndim;
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        dims.push(read_u32_be(bytes, 4 + 4 * i, header)?);
    }
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let expected = header + count;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IdxError::TrailingBytes {
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxTensor {
        magic,
        dims,
        payload: bytes[header..].to_vec(),
    })
}

/// Where a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    IdxFile,
    Synthetic,
}

/// In-memory dataset: features scaled to [0, 1], integer class labels.
#[derive(Clone, Debug)]
pub struct ImageDataset {
    features: Mat,
    labels: Vec<u8>,
    num_classes: usize,
    pub source: DataSource,
    pub seed_used: Option<u64>,
}

impl ImageDataset {
    /// Build from parsed IDX image and label tensors; pixels are scaled by
    /// 1/255 and no further normalization is applied.
    pub fn from_idx(images: &IdxTensor, labels: &IdxTensor) -> Result<Self, DatasetError> {
        let n = images.dims[0] as usize;
        let d: usize = images.dims[1] as usize * images.dims[2] as usize;
        let label_count = labels.dims[0] as usize;
        if n != label_count {
            return Err(DatasetError::CountMismatch {
                images: n,
                labels: label_count,
            });
        }
        let features: Vec<f64> = images.payload.iter().map(|&b| b as f64 / 255.0).collect();
        let num_classes = labels.payload.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
        Ok(ImageDataset {
            features: Mat::from_vec(features, n, d),
            labels: labels.payload.clone(),
            num_classes,
            source: DataSource::IdxFile,
            seed_used: None,
        })
    }

    pub fn from_idx_files(
        image_path: &Path,
        label_path: &Path,
    ) -> Result<Self, DatasetError> {
        let images = parse_idx(&fs::read(image_path)?)?;
        let labels = parse_idx(&fs::read(label_path)?)?;
        ImageDataset::from_idx(&images, &labels)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Deterministic subset of size n, sampled without replacement by
    /// partial Fisher-Yates over indices under the crate PRNG. The same
    /// (dataset, n, seed) yields the same subset on every platform. The
    /// class count is inherited from the parent so model shapes stay fixed
    /// across subsets.
    pub fn sample_subset(&self, n: usize, seed: u64) -> Result<ImageDataset, DatasetError> {
        if n > self.len() {
            return Err(DatasetError::SubsetTooLarge {
                requested: n,
                available: self.len(),
            });
        }
        let mut rng = Rng::stream(seed, &[0x737562736574]); // "subset"
        let idx = rng.sample_indices(self.len(), n);
        Ok(ImageDataset {
            features: self.features.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            source: self.source,
            seed_used: Some(seed),
        })
    }

    /// Quantize features to u8 (round(x * 255)) and pack as IDX image +
    /// label tensors with the given image geometry.
    pub fn to_idx(&self, rows: u32, cols: u32) -> (IdxTensor, IdxTensor) {
        assert_eq!(
            (rows * cols) as usize,
            self.feature_dim(),
            "geometry does not match feature dimension"
        );
        let payload: Vec<u8> = self
            .features
            .data()
            .iter()
            .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let images = IdxTensor {
            magic: IDX_MAGIC_IMAGES,
            dims: vec![self.len() as u32, rows, cols],
            payload,
        };
        let labels = IdxTensor {
            magic: IDX_MAGIC_LABELS,
            dims: vec![self.len() as u32],
            payload: self.labels.clone(),
        };
        (images, labels)
    }
}

/// Synthetic Gaussian blobs: class c has mean e_c (the c-th coordinate
/// axis, so means are unit-separated), isotropic standard deviation
/// `spread`, and sample i belongs to class i mod C. The feature matrix is
/// affinely rescaled to [0, 1] as a whole, preserving the geometry up to
/// one global affine map.
pub fn synthetic_blobs(
    d: usize,
    classes: usize,
    n: usize,
    spread: f64,
    seed: u64,
) -> Result<ImageDataset, DatasetError> {
    if d == 0 || classes == 0 || n == 0 {
        return Err(DatasetError::SyntheticConfig(
            "d, classes, and n must be positive".into(),
        ));
    }
    if spread.is_nan() || spread <= 0.0 {
        return Err(DatasetError::SyntheticConfig("spread must be > 0".into()));
    }
    if classes > d {
        return Err(DatasetError::SyntheticConfig(format!(
            "{classes} classes need {classes} axis means but d = {d}; means would collide"
        )));
    }
    let mut rng = Rng::stream(seed, &[0x626c6f6273]); // "blobs"
    let mut features = Mat::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        labels.push(class as u8);
        let row = features.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let mean = if j == class { 1.0 } else { 0.0 };
            *v = mean + spread * rng.next_normal();
        }
    }
    // global affine rescale to [0, 1]
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in features.data().iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    let mut rescaled = Mat::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let v = features.get(i, j);
            let scaled = if range > 0.0 { (v - lo) / range } else { 0.5 };
            rescaled.set(i, j, scaled);
        }
    }
    Ok(ImageDataset {
        features: rescaled,
        labels,
        num_classes: classes,
        source: DataSource::Synthetic,
        seed_used: Some(seed),
    })
}
