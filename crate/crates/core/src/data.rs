//! Labeled datasets: MNIST IDX loading, synthetic Gaussian blobs, class
//! removal with order-preserving relabeling, and per-class subsampling.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidParam("dataset needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidClass {
                class: bad,
                outputs: num_classes,
            });
        }
        if inputs.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParam("inputs must lie in [0, 1]".into()));
        }
        Ok(Dataset {
            name: name.into(),
            num_classes,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices grouped by class, ascending within each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Rows at `indices`, in the given order, with labels unchanged.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            num_classes: self.num_classes,
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Dataset> {
        let ds: Dataset = serde_json::from_str(&fs::read_to_string(path)?)?;
        Dataset::new(ds.name, ds.inputs, ds.labels, ds.num_classes)
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{what}: header ends at byte {offset}")))
}

/// Reads an IDX image/label file pair. Pixels are scaled by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = fs::read(images_path.as_ref())?;
    let labels = fs::read(labels_path.as_ref())?;
    parse_idx(&images, &labels, 10)
}

/// Parses in-memory IDX buffers; `num_classes` bounds the label values.
pub fn parse_idx(images: &[u8], labels: &[u8], num_classes: usize) -> Result<Dataset> {
    let magic = read_u32_be(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let magic = read_u32_be(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(images, 4, "images")? as usize;
    let rows = read_u32_be(images, 8, "images")? as usize;
    let cols = read_u32_be(images, 12, "images")? as usize;
    let label_count = read_u32_be(labels, 4, "labels")? as usize;
    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let dim = rows * cols;
    let pixels = images.get(16..16 + count * dim).ok_or_else(|| {
        Error::TruncatedFile(format!(
            "images: expected {} pixel bytes, found {}",
            count * dim,
            images.len().saturating_sub(16)
        ))
    })?;
    let raw_labels = labels.get(8..8 + count).ok_or_else(|| {
        Error::TruncatedFile(format!(
            "labels: expected {count} label bytes, found {}",
            labels.len().saturating_sub(8)
        ))
    })?;

    let inputs = Matrix::new(
        count,
        dim,
        pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    let labels = raw_labels.iter().map(|&b| usize::from(b)).collect();
    Dataset::new("mnist", inputs, labels, num_classes)
}

/// Serializes a dataset as an IDX pair with the given image geometry.
/// Inputs are quantized to `round(255 * v)`.
pub fn write_idx(
    ds: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = encode_idx(ds, rows, cols)?;
    fs::write(images_path, images)?;
    fs::write(labels_path, labels)?;
    Ok(())
}

pub fn encode_idx(ds: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.dim() {
        return Err(Error::shape(format!(
            "{rows}x{cols} images cannot hold {} features",
            ds.dim()
        )));
    }
    let n = u32::try_from(ds.len()).map_err(|_| Error::InvalidParam("too many rows".into()))?;
    let mut images = Vec::with_capacity(16 + ds.len() * ds.dim());
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&n.to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    images.extend(ds.inputs.as_slice().iter().map(|v| (v * 255.0).round() as u8));

    let mut labels = Vec::with_capacity(8 + ds.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    for &l in &ds.labels {
        labels.push(
            u8::try_from(l).map_err(|_| Error::InvalidParam(format!("label {l} exceeds a byte")))?,
        );
    }
    Ok((images, labels))
}

/// Gaussian blobs around `k` centers drawn uniformly from `[0.2, 0.8]^d`,
/// clamped to the unit cube. Rows are grouped by class.
pub fn synth_blobs(k: usize, d: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if k < 3 {
        return Err(Error::InvalidParam(format!("need at least 3 classes, got {k}")));
    }
    if per_class == 0 || d == 0 {
        return Err(Error::InvalidParam("per_class and d must be positive".into()));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidParam(format!("spread must be positive, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).expect("spread validated above");

    let mut data = Vec::with_capacity(k * per_class * d);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(center.iter().map(|c| (c + noise.sample(&mut rng)).clamp(0.0, 1.0)));
            labels.push(class);
        }
    }
    Dataset::new(
        format!("blobs-k{k}-d{d}"),
        Matrix::new(k * per_class, d, data)?,
        labels,
        k,
    )
}

/// Draws `train + test` points per class from one blob problem and splits
/// each class's points, the first `train` going to the training set.
pub fn synth_blobs_split(
    k: usize,
    d: usize,
    train_per_class: usize,
    test_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if train_per_class == 0 || test_per_class == 0 {
        return Err(Error::InvalidParam("both splits need at least one point per class".into()));
    }
    let all = synth_blobs(k, d, train_per_class + test_per_class, spread, seed)?;
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for rows in all.class_indices() {
        let (tr, te) = rows.split_at(train_per_class);
        train_idx.extend_from_slice(tr);
        test_idx.extend_from_slice(te);
    }
    let mut train = all.subset(&train_idx);
    let mut test = all.subset(&test_idx);
    train.name = format!("{}-train", all.name);
    test.name = format!("{}-test", all.name);
    Ok((train, test))
}

/// Validates a deletion set against `k` classes and returns it sorted and
/// deduplicated.
pub fn normalize_class_set(classes: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut set = classes.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(&bad) = set.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidClassSet(format!("class {bad} out of range for {k} classes")));
    }
    if set.len() >= k {
        return Err(Error::InvalidClassSet("cannot delete every class".into()));
    }
    Ok(set)
}

/// Maps each original class to its index after deleting `deleted`, or
/// `None` for deleted classes.
pub fn class_remap(k: usize, deleted: &[usize]) -> Vec<Option<usize>> {
    let mut next = 0;
    (0..k)
        .map(|c| {
            if deleted.contains(&c) {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect()
}

/// Drops rows whose label is in `classes` and relabels the rest to
/// `0..k-|C|` preserving the original order of class indices.
pub fn remove_classes(ds: &Dataset, classes: &[usize]) -> Result<Dataset> {
    let deleted = normalize_class_set(classes, ds.num_classes)?;
    let remap = class_remap(ds.num_classes, &deleted);
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| remap[ds.labels[i]].is_some())
        .collect();
    let mut out = ds.subset(&keep);
    for l in &mut out.labels {
        *l = remap[*l].expect("kept rows have retained labels");
    }
    out.num_classes = ds.num_classes - deleted.len();
    Ok(out)
}

/// Uniformly samples up to `s` rows per class without replacement. The
/// result keeps the original row order.
pub fn sample_per_class(ds: &Dataset, s: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for rows in ds.class_indices() {
        if s >= rows.len() {
            chosen.extend_from_slice(&rows);
        } else {
            chosen.extend(index::sample(&mut rng, rows.len(), s).into_iter().map(|i| rows[i]));
        }
    }
    chosen.sort_unstable();
    ds.subset(&chosen)
}

/// Where a train/test pair comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Synth {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        spread: f64,
        seed: u64,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synth {
            classes: 10,
            dim: 8,
            train_per_class: 300,
            test_per_class: 200,
            spread: 0.12,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let mut train = load_idx(train_images, train_labels)?;
                let mut test = load_idx(test_images, test_labels)?;
                train.name = "mnist-train".into();
                test.name = "mnist-test".into();
                Ok((train, test))
            }
            DatasetSpec::Synth {
                classes,
                dim,
                train_per_class,
                test_per_class,
                spread,
                seed,
            } => synth_blobs_split(*classes, *dim, *train_per_class, *test_per_class, *spread, *seed),
        }
    }

    /// Image geometry for PGM export, when the inputs are images.
    pub fn image_shape(&self) -> Option<(usize, usize)> {
        match self {
            DatasetSpec::Mnist { .. } => Some((28, 28)),
            DatasetSpec::Synth { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(labels: Vec<usize>, k: usize) -> Dataset {
        let n = labels.len();
        let inputs = Matrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64 / (2 * n) as f64);
        Dataset::new("tiny", inputs, labels, k).unwrap()
    }

    #[test]
    fn parses_constructed_idx_fixture() {
        let mut images = Vec::new();
        images.extend_from_slice(&2051u32.to_be_bytes());
        images.extend_from_slice(&1u32.to_be_bytes());
        images.extend_from_slice(&28u32.to_be_bytes());
        images.extend_from_slice(&28u32.to_be_bytes());
        images.extend(std::iter::repeat_n(0u8, 784));
        let mut labels = Vec::new();
        labels.extend_from_slice(&2049u32.to_be_bytes());
        labels.extend_from_slice(&1u32.to_be_bytes());
        labels.push(7);

        let ds = parse_idx(&images, &labels, 10).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 784);
        assert_eq!(ds.num_classes, 10);
        assert!(ds.input(0).iter().all(|&v| v == 0.0));
        assert_eq!(ds.labels, vec![7]);

        let (re_images, re_labels) = encode_idx(&ds, 28, 28).unwrap();
        assert_eq!(re_images, images);
        assert_eq!(re_labels, labels);
    }

    #[test]
    fn idx_errors() {
        let mut images = Vec::new();
        images.extend_from_slice(&2051u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&2049u32.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[0, 1]);
        assert!(parse_idx(&images, &labels, 10).is_ok());

        let mut bad = images.clone();
        bad[3] = 0x01;
        assert!(matches!(
            parse_idx(&bad, &labels, 10),
            Err(Error::BadMagic { found: 0x801, .. })
        ));
        assert!(matches!(
            parse_idx(&images, &images, 10),
            Err(Error::BadMagic { expected: 0x801, .. })
        ));

        let mut three = labels.clone();
        three[7] = 3;
        three.push(2);
        assert!(matches!(
            parse_idx(&images, &three, 10),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));

        assert!(matches!(
            parse_idx(&images[..images.len() - 1], &labels, 10),
            Err(Error::TruncatedFile(_))
        ));
        assert!(matches!(
            parse_idx(&images, &labels[..9], 10),
            Err(Error::TruncatedFile(_))
        ));
        assert!(matches!(parse_idx(&images[..6], &labels, 10), Err(Error::TruncatedFile(_))));
    }

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let ds = synth_blobs(3, 2, 10, 0.01, 1).unwrap();
        assert_eq!(ds.len(), 30);
        assert_eq!(ds.class_counts(), vec![10, 10, 10]);
        assert_eq!(ds, synth_blobs(3, 2, 10, 0.01, 1).unwrap());
        assert_ne!(ds, synth_blobs(3, 2, 10, 0.01, 2).unwrap());
        assert!(ds.inputs.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn blobs_reject_bad_params() {
        assert!(matches!(synth_blobs(2, 2, 10, 0.1, 0), Err(Error::InvalidParam(_))));
        assert!(matches!(synth_blobs(3, 2, 10, 0.0, 0), Err(Error::InvalidParam(_))));
        assert!(matches!(synth_blobs(3, 2, 10, -1.0, 0), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn tight_blobs_are_nearest_neighbor_separable() {
        let (train, test) = synth_blobs_split(10, 8, 50, 50, 0.01, 11).unwrap();
        let correct = (0..test.len())
            .filter(|&i| {
                let x = test.input(i);
                let nearest = (0..train.len())
                    .min_by(|&a, &b| {
                        let da: f64 = train.input(a).iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
                        let db: f64 = train.input(b).iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                train.labels[nearest] == test.labels[i]
            })
            .count();
        assert!(correct as f64 / test.len() as f64 > 0.99);
    }

    #[test]
    fn remove_classes_remaps_by_order() {
        let ds = tiny(vec![0, 1, 2, 1], 3);
        let out = remove_classes(&ds, &[0]).unwrap();
        assert_eq!(out.labels, vec![0, 1, 0]);
        assert_eq!(out.num_classes, 2);
        assert_eq!(out.inputs.row(0), ds.inputs.row(1));

        assert_eq!(remove_classes(&ds, &[]).unwrap(), ds);
        assert!(matches!(
            remove_classes(&ds, &[0, 1, 2]),
            Err(Error::InvalidClassSet(_))
        ));
        assert!(matches!(remove_classes(&ds, &[3]), Err(Error::InvalidClassSet(_))));
    }

    #[test]
    fn sampling_per_class() {
        let ds = synth_blobs(10, 3, 20, 0.05, 4).unwrap();
        assert_eq!(sample_per_class(&ds, 50, 0), ds);
        let one = sample_per_class(&ds, 1, 0);
        assert_eq!(one.len(), 10);
        assert_eq!(one.class_counts(), vec![1; 10]);

        let a = sample_per_class(&ds, 10, 1);
        let b = sample_per_class(&ds, 10, 2);
        assert_eq!(a.class_counts(), b.class_counts());
        assert_ne!(a.inputs, b.inputs);
        assert_eq!(a, sample_per_class(&ds, 10, 1));
    }

    #[test]
    fn dataset_validation() {
        let m = Matrix::from_rows(&[vec![0.5, 1.5]]).unwrap();
        assert!(Dataset::new("x", m, vec![0], 2).is_err());
        let m = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            Dataset::new("x", m.clone(), vec![2], 2),
            Err(Error::InvalidClass { .. })
        ));
        assert!(Dataset::new("x", m, vec![0, 1], 2).is_err());
    }

    proptest! {
        #[test]
        fn removal_keeps_retained_counts(labels in prop::collection::vec(0usize..6, 1..80), deleted in prop::collection::btree_set(0usize..6, 0..5)) {
            let ds = tiny(labels, 6);
            let deleted: Vec<usize> = deleted.into_iter().collect();
            let out = remove_classes(&ds, &deleted).unwrap();
            let before = ds.class_counts();
            let after = out.class_counts();
            let retained: Vec<usize> = (0..6).filter(|c| !deleted.contains(c)).collect();
            prop_assert_eq!(after.len(), retained.len());
            for (new, &old) in retained.iter().enumerate() {
                prop_assert_eq!(after[new], before[old]);
            }
            // order-preserving bijection
            let remap = class_remap(6, &deleted);
            let kept: Vec<usize> = ds.labels.iter().filter_map(|&l| remap[l]).collect();
            prop_assert_eq!(kept, out.labels);
        }
    }
}
