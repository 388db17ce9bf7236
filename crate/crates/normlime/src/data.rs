//! Dataset container and loaders for IDX image files and numeric CSV.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Which split a dataset came from. Purely descriptive; carried into digests
/// and manifests so artifacts can be traced back to their inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Train => write!(f, "train"),
            SplitTag::Test => write!(f, "test"),
        }
    }
}

/// A labelled dataset held densely in memory, one instance per row.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Instance matrix, n x d.
    pub instances: Array2<f64>,
    /// Integer class labels, one per row, each in `[0, num_classes)`.
    pub labels: Vec<usize>,
    /// Number of distinct classes the labels are drawn from.
    pub num_classes: usize,
    pub split: SplitTag,
    /// Hex SHA-256 of the source bytes, or a caller-chosen tag for synthetic data.
    pub source_digest: String,
}

impl Dataset {
    /// Builds a dataset after validating the shape and label invariants.
    pub fn new(
        instances: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        split: SplitTag,
        source_digest: impl Into<String>,
    ) -> Result<Self> {
        if instances.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if instances.nrows() != labels.len() {
            return Err(Error::ShapeMismatch {
                what: "dataset labels",
                expected: instances.nrows(),
                got: labels.len(),
            });
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be at least 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !instances.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "dataset instances must be finite".into(),
            ));
        }
        Ok(Dataset {
            instances,
            labels,
            num_classes,
            split,
            source_digest: source_digest.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.instances.nrows()
    }

    pub fn dim(&self) -> usize {
        self.instances.ncols()
    }

    pub fn into_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    /// Row indices of every instance labelled `class`.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-feature mean over all instances.
    pub fn feature_means(&self) -> Array1<f64> {
        self.instances.mean_axis(Axis(0)).expect("dataset is nonempty")
    }

    /// Draws up to `per_class` instances from every class with a seeded
    /// shuffle, keeping classes in label order. Classes with fewer instances
    /// contribute what they have.
    pub fn sample_stratified(&self, per_class: usize, seed: u64) -> Result<Dataset> {
        if per_class == 0 {
            return Err(Error::InvalidConfig("per_class must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = Vec::new();
        for class in 0..self.num_classes {
            let mut idx = self.class_indices(class);
            idx.shuffle(&mut rng);
            idx.truncate(per_class);
            idx.sort_unstable(); // stable row order within a class
            picked.extend(idx);
        }
        if picked.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let instances = self.instances.select(Axis(0), &picked);
        let labels = picked.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(
            instances,
            labels,
            self.num_classes,
            self.split,
            self.source_digest.clone(),
        )
    }
}

/// Loads an IDX image/label file pair (the classic MNIST container format).
///
/// Pixels are scaled from bytes to `[0, 1]`. The returned dataset is tagged
/// [`SplitTag::Train`]; use [`Dataset::into_split`] to retag.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;

    let img_name = images_path.display();
    let lab_name = labels_path.display();

    let magic = read_be_u32(&images, 0, &img_name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{img_name}: bad magic {magic:#010x} (expected {IDX_IMAGES_MAGIC:#010x} for IDX images)"
        )));
    }
    let n = read_be_u32(&images, 4, &img_name)? as usize;
    let rows = read_be_u32(&images, 8, &img_name)? as usize;
    let cols = read_be_u32(&images, 12, &img_name)? as usize;
    let want = 16 + n * rows * cols;
    if images.len() < want {
        return Err(Error::Format(format!(
            "{img_name}: truncated IDX payload at byte {} (expected {want} bytes)",
            images.len()
        )));
    }

    let magic = read_be_u32(&labels, 0, &lab_name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{lab_name}: bad magic {magic:#010x} (expected {IDX_LABELS_MAGIC:#010x} for IDX labels)"
        )));
    }
    let n_labels = read_be_u32(&labels, 4, &lab_name)? as usize;
    let want_labels = 8 + n_labels;
    if labels.len() < want_labels {
        return Err(Error::Format(format!(
            "{lab_name}: truncated IDX payload at byte {} (expected {want_labels} bytes)",
            labels.len()
        )));
    }
    if n != n_labels {
        return Err(Error::Format(format!(
            "{img_name} has {n} images but {lab_name} has {n_labels} labels"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let d = rows * cols;
    let pixels: Vec<f64> = images[16..16 + n * d]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let instances = Array2::from_shape_vec((n, d), pixels).expect("length checked above");
    let label_vec: Vec<usize> = labels[8..8 + n].iter().map(|&b| b as usize).collect();
    let num_classes = label_vec.iter().max().map_or(0, |&m| m + 1);

    let mut hasher_input = Vec::with_capacity(images.len() + labels.len());
    hasher_input.extend_from_slice(&images);
    hasher_input.extend_from_slice(&labels);
    Dataset::new(
        instances,
        label_vec,
        num_classes,
        SplitTag::Train,
        sha256_hex(&hasher_input),
    )
}

fn read_be_u32(bytes: &[u8], offset: usize, name: &impl fmt::Display) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "{name}: truncated IDX header at byte {} (expected at least {end} bytes)",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Loads a labelled CSV with header `label,f0,f1,...`: one integer label and
/// d real-valued features per row.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let name = path.display();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::EmptyDataset)?;
    let header_fields: Vec<&str> = header.split(',').collect();
    if header_fields[0].trim() != "label" {
        return Err(Error::Format(format!(
            "{name}: line 1: header must start with `label`, got `{}`",
            header_fields[0]
        )));
    }
    let d = header_fields.len() - 1;
    if d == 0 {
        return Err(Error::Format(format!(
            "{name}: line 1: header declares no feature columns"
        )));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Format(format!(
                "{name}: line {line_no}: expected {} fields, got {}",
                d + 1,
                fields.len()
            )));
        }
        let label: usize = fields[0].trim().parse().map_err(|_| {
            Error::Format(format!(
                "{name}: line {line_no}, column 1: invalid label `{}`",
                fields[0]
            ))
        })?;
        labels.push(label);
        for (col, field) in fields[1..].iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{name}: line {line_no}, column {}: invalid number `{field}`",
                    col + 2
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "{name}: line {line_no}, column {}: non-finite value `{field}`",
                    col + 2
                )));
            }
            values.push(v);
        }
    }

    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = labels.len();
    let instances = Array2::from_shape_vec((n, d), values).expect("row lengths checked above");
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(
        instances,
        labels,
        num_classes,
        SplitTag::Train,
        sha256_hex(text.as_bytes()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn idx_pair(images: &[u8], labels: &[u8]) -> (tempfile::NamedTempFile, tempfile::NamedTempFile) {
        let mut img = tempfile::NamedTempFile::new().unwrap();
        img.write_all(images).unwrap();
        let mut lab = tempfile::NamedTempFile::new().unwrap();
        lab.write_all(labels).unwrap();
        (img, lab)
    }

    fn tiny_idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        out.extend_from_slice(&n.to_be_bytes());
        out.extend_from_slice(&rows.to_be_bytes());
        out.extend_from_slice(&cols.to_be_bytes());
        out.extend_from_slice(pixels);
        out
    }

    fn tiny_idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn idx_roundtrip_scales_pixels() {
        let images = tiny_idx_images(2, 2, 2, &[0, 255, 128, 51, 255, 0, 0, 102]);
        let labels = tiny_idx_labels(&[3, 1]);
        let (img, lab) = idx_pair(&images, &labels);
        let ds = load_idx(img.path(), lab.path()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.labels, vec![3, 1]);
        assert_eq!(ds.num_classes, 4);
        assert_eq!(ds.instances[[0, 0]], 0.0);
        assert_eq!(ds.instances[[0, 1]], 1.0);
        assert_eq!(ds.instances[[0, 3]], 51.0 / 255.0);
        assert_eq!(ds.instances[[1, 0]], 1.0);
    }

    #[test]
    fn idx_bad_magic_is_rejected() {
        let mut images = tiny_idx_images(1, 1, 1, &[7]);
        images[3] = 0x99;
        let labels = tiny_idx_labels(&[0]);
        let (img, lab) = idx_pair(&images, &labels);
        let err = load_idx(img.path(), lab.path()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err:?}");
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn idx_truncation_reports_byte_offset() {
        let images = tiny_idx_images(2, 2, 2, &[1, 2, 3]); // 5 bytes short
        let labels = tiny_idx_labels(&[0, 1]);
        let (img, lab) = idx_pair(&images, &labels);
        let err = load_idx(img.path(), lab.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("truncated IDX payload at byte 19"), "got: {msg}");
        assert!(msg.contains("expected 24 bytes"), "got: {msg}");
    }

    #[test]
    fn idx_count_mismatch_is_rejected() {
        let images = tiny_idx_images(2, 1, 1, &[1, 2]);
        let labels = tiny_idx_labels(&[0]);
        let (img, lab) = idx_pair(&images, &labels);
        let msg = load_idx(img.path(), lab.path()).unwrap_err().to_string();
        assert!(msg.contains("2 images") && msg.contains("1 labels"), "got: {msg}");
    }

    fn csv_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_happy_path() {
        let f = csv_file("label,f0,f1\n1,0.5,0.25\n0,1.0,0.0\n");
        let ds = load_csv(f.path()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.instances[[0, 1]], 0.25);
    }

    #[test]
    fn csv_ragged_row_names_line() {
        let f = csv_file("label,f0,f1\n1,0.5\n");
        let msg = load_csv(f.path()).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "got: {msg}");
        assert!(msg.contains("expected 3 fields, got 2"), "got: {msg}");
    }

    #[test]
    fn csv_bad_cell_names_line_and_column() {
        let f = csv_file("label,f0,f1\n0,0.5,oops\n");
        let msg = load_csv(f.path()).unwrap_err().to_string();
        assert!(msg.contains("line 2, column 3"), "got: {msg}");
    }

    #[test]
    fn csv_empty_file_is_a_data_error() {
        let f = csv_file("");
        assert!(matches!(load_csv(f.path()).unwrap_err(), Error::EmptyDataset));
        let f = csv_file("label,f0\n");
        assert!(matches!(load_csv(f.path()).unwrap_err(), Error::EmptyDataset));
    }

    #[test]
    fn dataset_validation_rejects_bad_labels() {
        let x = Array2::zeros((2, 3));
        let err = Dataset::new(x, vec![0, 5], 3, SplitTag::Train, "test").unwrap_err();
        assert!(err.to_string().contains("label 5 out of range"));
    }

    #[test]
    fn stratified_sample_is_deterministic_and_balanced() {
        let n = 30;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ds = Dataset::new(x, labels, 3, SplitTag::Train, "test").unwrap();

        let a = ds.sample_stratified(4, 7).unwrap();
        let b = ds.sample_stratified(4, 7).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.instances, b.instances);
        assert_eq!(a.n(), 12);
        for class in 0..3 {
            assert_eq!(a.class_indices(class).len(), 4);
        }

        let c = ds.sample_stratified(4, 8).unwrap();
        assert!(a.instances != c.instances, "different seeds should differ");
    }

    #[test]
    fn feature_means_are_columnwise() {
        let x = ndarray::array![[0.0, 1.0], [1.0, 3.0]];
        let ds = Dataset::new(x, vec![0, 1], 2, SplitTag::Train, "test").unwrap();
        let m = ds.feature_means();
        assert_eq!(m[0], 0.5);
        assert_eq!(m[1], 2.0);
    }
}
