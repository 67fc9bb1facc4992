//! Datasets: in-memory feature/label storage, a synthetic Gaussian-blob
//! generator for fast end-to-end runs, and an IDX reader for MNIST-style
//! image files.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

/// Dense classification dataset: `len x feature_dim` row-major features with
/// one class label per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        feature_dim: usize,
        classes: usize,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::CountTooSmall {
                what: "feature dimension",
                got: 0,
            });
        }
        if classes < 2 {
            return Err(Error::CountTooSmall {
                what: "class count",
                got: classes,
            });
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values do not tile {} rows of dimension {}",
                features.len(),
                labels.len(),
                feature_dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            feature_dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.features[index * self.feature_dim..(index + 1) * self.feature_dim]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// New dataset holding the given rows (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidConfig(format!(
                    "row index {i} out of bounds for dataset of {} rows",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.feature_dim, self.classes)
    }
}

/// Standard normal draw via Box-Muller; one uniform pair per value.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1], keeps ln finite
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Synthetic Gaussian-blob classification task.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlobConfig {
    pub train_samples: usize,
    pub test_samples: usize,
    pub feature_dim: usize,
    pub classes: usize,
    /// Scale of the random class centers relative to the unit within-class
    /// noise; larger means easier.
    pub center_scale: f64,
}

impl BlobConfig {
    fn validate(&self) -> Result<()> {
        if self.train_samples == 0 {
            return Err(Error::CountTooSmall {
                what: "train sample count",
                got: 0,
            });
        }
        if self.test_samples == 0 {
            return Err(Error::CountTooSmall {
                what: "test sample count",
                got: 0,
            });
        }
        if self.feature_dim == 0 {
            return Err(Error::CountTooSmall {
                what: "feature dimension",
                got: 0,
            });
        }
        if self.classes < 2 {
            return Err(Error::CountTooSmall {
                what: "class count",
                got: self.classes,
            });
        }
        if !self.center_scale.is_finite() || self.center_scale <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "blob center scale must be positive and finite, got {}",
                self.center_scale
            )));
        }
        Ok(())
    }
}

/// Balanced class sizes: the first `total % classes` classes get one extra.
fn balanced_counts(total: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|c| total / classes + usize::from(c < total % classes))
        .collect()
}

fn sample_split(
    counts: &[usize],
    centers: &[Vec<f64>],
    dim: usize,
    classes: usize,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let total: usize = counts.iter().sum();
    let mut features = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for &c in &centers[class] {
                features.push(c + standard_normal(rng));
            }
            labels.push(class);
        }
    }
    // Shuffle rows so shards dealt from a prefix are not class-sorted.
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(rng);
    Dataset::new(features, labels, dim, classes)?.subset(&order)
}

/// Train/test pair drawn around one shared set of class centers.
pub fn synthetic_blobs(config: &BlobConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let mut rng = seeds::rng_for(seed, Stream::Dataset, 0, 0);
    let centers: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| {
            (0..config.feature_dim)
                .map(|_| config.center_scale * standard_normal(&mut rng))
                .collect()
        })
        .collect();
    let train = sample_split(
        &balanced_counts(config.train_samples, config.classes),
        &centers,
        config.feature_dim,
        config.classes,
        &mut rng,
    )?;
    let test = sample_split(
        &balanced_counts(config.test_samples, config.classes),
        &centers,
        config.feature_dim,
        config.classes,
        &mut rng,
    )?;
    Ok((train, test))
}

/// Subset with per-class counts as equal as possible (first classes get the
/// remainder), rows chosen uniformly within each class.
pub fn stratified_subset(data: &Dataset, total: usize, rng: &mut impl Rng) -> Result<Dataset> {
    if total == 0 {
        return Err(Error::CountTooSmall {
            what: "subset size",
            got: 0,
        });
    }
    let targets = balanced_counts(total, data.classes());
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes()];
    for i in 0..data.len() {
        by_class[data.label(i)].push(i);
    }
    let mut chosen = Vec::with_capacity(total);
    for (class, target) in targets.iter().enumerate() {
        let pool = &mut by_class[class];
        if pool.len() < *target {
            return Err(Error::InvalidConfig(format!(
                "class {class} has only {} samples, need {target} for a stratified subset",
                pool.len()
            )));
        }
        pool.shuffle(rng);
        chosen.extend_from_slice(&pool[..*target]);
    }
    chosen.sort_unstable();
    data.subset(&chosen)
}

// --- IDX (MNIST-style) binary format ---------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw contents of an images IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, row-major per image.
    pub pixels: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxFormat {
            offset: bytes.len(),
            message: format!("truncated while reading {what} (need bytes {offset}..{end})"),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses an images file: magic 0x00000803, three big-endian u32 dimensions,
/// then one unsigned byte per pixel.
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_be_u32(bytes, 0, "magic number")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxFormat {
            offset: 0,
            message: format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_be_u32(bytes, 4, "image count")? as usize;
    let rows = read_be_u32(bytes, 8, "row count")? as usize;
    let cols = read_be_u32(bytes, 12, "column count")? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::IdxFormat {
            offset: 4,
            message: "image dimensions overflow".into(),
        })?;
    let data = &bytes[16..];
    if data.len() != expected {
        return Err(Error::IdxFormat {
            offset: 16 + data.len().min(expected),
            message: format!("expected {expected} pixel bytes after header, found {}", data.len()),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: data.to_vec(),
    })
}

/// Parses a labels file: magic 0x00000801, one big-endian u32 count, then one
/// byte per label.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0, "magic number")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxFormat {
            offset: 0,
            message: format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let count = read_be_u32(bytes, 4, "label count")? as usize;
    let data = &bytes[8..];
    if data.len() != count {
        return Err(Error::IdxFormat {
            offset: 8 + data.len().min(count),
            message: format!("expected {count} label bytes after header, found {}", data.len()),
        });
    }
    Ok(data.to_vec())
}

const MNIST_CLASSES: usize = 10;

fn idx_pair_to_dataset(images: IdxImages, labels: Vec<u8>) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    if let Some(pos) = labels.iter().position(|&l| l as usize >= MNIST_CLASSES) {
        return Err(Error::IdxFormat {
            offset: 8 + pos,
            message: format!("label value {} exceeds 9", labels[pos]),
        });
    }
    let features = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Dataset::new(
        features,
        labels.into_iter().map(|l| l as usize).collect(),
        images.rows * images.cols,
        MNIST_CLASSES,
    )
}

/// Loads the four standard MNIST files from `dir`. With `subset`, each split
/// is reduced to at most that many rows by stratified sampling (seeded, so
/// repeat loads see identical data).
pub fn load_mnist(dir: &Path, subset: Option<usize>, seed: u64) -> Result<(Dataset, Dataset)> {
    let load_split = |images_name: &str, labels_name: &str| -> Result<Dataset> {
        let images = parse_idx_images(&std::fs::read(dir.join(images_name))?)?;
        let labels = parse_idx_labels(&std::fs::read(dir.join(labels_name))?)?;
        idx_pair_to_dataset(images, labels)
    };
    let mut train = load_split("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let mut test = load_split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    if let Some(cap) = subset {
        let mut rng = seeds::rng_for(seed, Stream::Dataset, 1, 0);
        if cap < train.len() {
            train = stratified_subset(&train, cap, &mut rng)?;
        }
        if cap < test.len() {
            test = stratified_subset(&test, cap, &mut rng)?;
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blob_config() -> BlobConfig {
        BlobConfig {
            train_samples: 403,
            test_samples: 101,
            feature_dim: 6,
            classes: 5,
            center_scale: 2.0,
        }
    }

    #[test]
    fn blobs_are_balanced_and_shaped() {
        let (train, test) = synthetic_blobs(&blob_config(), 7).unwrap();
        assert_eq!(train.len(), 403);
        assert_eq!(test.len(), 101);
        assert_eq!(train.feature_dim(), 6);
        let mut counts = vec![0usize; 5];
        for &l in train.labels() {
            counts[l] += 1;
        }
        assert_eq!(counts, vec![81, 81, 81, 80, 80]);
    }

    #[test]
    fn blobs_are_deterministic_per_seed() {
        let (a, _) = synthetic_blobs(&blob_config(), 7).unwrap();
        let (b, _) = synthetic_blobs(&blob_config(), 7).unwrap();
        let (c, _) = synthetic_blobs(&blob_config(), 8).unwrap();
        assert_eq!(a.row(11), b.row(11));
        assert_eq!(a.label(11), b.label(11));
        assert_ne!(a.row(11), c.row(11));
    }

    #[test]
    fn blob_train_and_test_share_centers() {
        // Per-class feature means of the two splits must agree within a few
        // standard errors; they are draws around the same centers.
        let cfg = BlobConfig {
            train_samples: 2000,
            test_samples: 2000,
            ..blob_config()
        };
        let (train, test) = synthetic_blobs(&cfg, 3).unwrap();
        let class_mean = |d: &Dataset, class: usize| -> Vec<f64> {
            let mut sum = vec![0.0; d.feature_dim()];
            let mut n = 0.0;
            for i in 0..d.len() {
                if d.label(i) == class {
                    for (s, v) in sum.iter_mut().zip(d.row(i)) {
                        *s += v;
                    }
                    n += 1.0;
                }
            }
            sum.iter().map(|s| s / n).collect()
        };
        for class in 0..cfg.classes {
            let a = class_mean(&train, class);
            let b = class_mean(&test, class);
            for (x, y) in a.iter().zip(&b) {
                // se of each mean ~ 1/sqrt(400) = 0.05
                assert!((x - y).abs() < 0.3, "class {class} centers disagree");
            }
        }
    }

    #[test]
    fn dataset_validation_catches_mismatches() {
        assert!(Dataset::new(vec![0.0; 10], vec![0, 1], 4, 2).is_err());
        assert!(Dataset::new(vec![0.0; 8], vec![0, 2], 4, 2).is_err());
        assert!(Dataset::new(vec![0.0; 8], vec![0, 1], 4, 2).is_ok());
    }

    #[test]
    fn stratified_subset_balances_classes() {
        let (train, _) = synthetic_blobs(&blob_config(), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sub = stratified_subset(&train, 52, &mut rng).unwrap();
        assert_eq!(sub.len(), 52);
        let mut counts = vec![0usize; 5];
        for &l in sub.labels() {
            counts[l] += 1;
        }
        assert_eq!(counts, vec![11, 11, 10, 10, 10]);
    }

    #[test]
    fn stratified_subset_fails_when_a_class_is_short() {
        let data = Dataset::new(vec![0.0; 6], vec![0, 0, 1], 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(stratified_subset(&data, 4, &mut rng).is_err());
    }

    // -- IDX ----------------------------------------------------------------

    fn images_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        v.extend_from_slice(&count.to_be_bytes());
        v.extend_from_slice(&rows.to_be_bytes());
        v.extend_from_slice(&cols.to_be_bytes());
        v.extend_from_slice(pixels);
        v
    }

    fn labels_bytes(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn idx_images_round_trip() {
        let pixels: Vec<u8> = (0..24).collect();
        let parsed = parse_idx_images(&images_bytes(2, 3, 4, &pixels)).unwrap();
        assert_eq!(parsed.count, 2);
        assert_eq!(parsed.rows, 3);
        assert_eq!(parsed.cols, 4);
        assert_eq!(parsed.pixels, pixels);
    }

    #[test]
    fn idx_rejects_bad_magic() {
        let mut bytes = images_bytes(1, 1, 1, &[0]);
        bytes[2] = 0x07;
        match parse_idx_images(&bytes).unwrap_err() {
            Error::IdxFormat { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn idx_rejects_truncated_pixels() {
        let bytes = images_bytes(2, 3, 4, &[0; 20]); // 4 bytes short
        match parse_idx_images(&bytes).unwrap_err() {
            Error::IdxFormat { offset, message } => {
                assert_eq!(offset, 36, "offset should mark where data ran out");
                assert!(message.contains("24"), "message should name the expectation: {message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn idx_rejects_truncated_header() {
        match parse_idx_images(&[0, 0]).unwrap_err() {
            Error::IdxFormat { offset, .. } => assert_eq!(offset, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn idx_labels_round_trip_and_magic() {
        let parsed = parse_idx_labels(&labels_bytes(&[0, 1, 9])).unwrap();
        assert_eq!(parsed, vec![0, 1, 9]);
        let mut bad = labels_bytes(&[0]);
        bad[3] = 0x03; // images magic in a labels file
        assert!(matches!(
            parse_idx_labels(&bad).unwrap_err(),
            Error::IdxFormat { offset: 0, .. }
        ));
    }

    #[test]
    fn mnist_loader_reads_and_subsets() {
        let dir = tempfile::tempdir().unwrap();
        // 20 train "images" of 2x2, labels 0..9 twice; 10 test images.
        let train_pixels: Vec<u8> = (0..80).collect();
        let train_labels: Vec<u8> = (0..10).chain(0..10).collect();
        let test_pixels: Vec<u8> = (0..40).collect();
        let test_labels: Vec<u8> = (0..10).collect();
        std::fs::write(
            dir.path().join("train-images-idx3-ubyte"),
            images_bytes(20, 2, 2, &train_pixels),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("train-labels-idx1-ubyte"),
            labels_bytes(&train_labels),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t10k-images-idx3-ubyte"),
            images_bytes(10, 2, 2, &test_pixels),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t10k-labels-idx1-ubyte"),
            labels_bytes(&test_labels),
        )
        .unwrap();

        let (train, test) = load_mnist(dir.path(), None, 0).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(test.len(), 10);
        assert_eq!(train.feature_dim(), 4);
        assert_eq!(train.row(0), &[0.0, 1.0 / 255.0, 2.0 / 255.0, 3.0 / 255.0]);

        let (train_sub, test_sub) = load_mnist(dir.path(), Some(10), 0).unwrap();
        assert_eq!(train_sub.len(), 10);
        assert_eq!(test_sub.len(), 10);
        let mut counts = vec![0usize; 10];
        for &l in train_sub.labels() {
            counts[l] += 1;
        }
        assert_eq!(counts, vec![1; 10]);
    }

    #[test]
    fn mnist_loader_rejects_label_above_nine() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("train-images-idx3-ubyte"),
            images_bytes(2, 1, 1, &[5, 6]),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("train-labels-idx1-ubyte"),
            labels_bytes(&[3, 12]),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t10k-images-idx3-ubyte"),
            images_bytes(1, 1, 1, &[0]),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("t10k-labels-idx1-ubyte"),
            labels_bytes(&[0]),
        )
        .unwrap();
        match load_mnist(dir.path(), None, 0).unwrap_err() {
            Error::IdxFormat { offset, message } => {
                assert_eq!(offset, 9, "second label byte");
                assert!(message.contains("12"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_mnist_file_maps_to_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_mnist(dir.path(), None, 0).unwrap_err(),
            Error::Io(_)
        ));
    }
}
