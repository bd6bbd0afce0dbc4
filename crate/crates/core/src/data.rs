//! Dataset ingestion (Iris CSV, MNIST IDX), PCA reduction, angle scaling,
//! triplet mining and the processed-dataset cache.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::FeatureVector;
use crate::error::{Error, Result};

/// A labeled feature matrix. Rows are samples; the feature dimension is
/// uniform and every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels: Vec<u32>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: features.len(),
                labels: labels.len(),
            });
        }
        if features.len() < 2 {
            return Err(Error::DatasetTooSmall {
                reason: format!("{} rows, need at least 2", features.len()),
            });
        }
        let dim = features[0].len();
        for (row_index, row) in features.iter().enumerate() {
            if row.len() != dim || dim == 0 {
                return Err(Error::DimensionMismatch {
                    context: "dataset row",
                    expected: dim.max(1),
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateData {
                    reason: format!("non-finite feature in row {row_index}"),
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Rows whose label appears in `keep`, in original order.
    pub fn filter_labels(&self, keep: &[u32]) -> Result<Dataset> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row, &label) in self.features.iter().zip(&self.labels) {
            if keep.contains(&label) {
                features.push(row.clone());
                labels.push(label);
            }
        }
        Dataset::new(self.name.clone(), features, labels)
    }

    /// The first `n` rows.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::DatasetTooSmall {
                reason: format!("requested {n} rows from {}", self.len()),
            });
        }
        Dataset::new(
            self.name.clone(),
            self.features[..n].to_vec(),
            self.labels[..n].to_vec(),
        )
    }

    /// Shuffled split into `train_count` training rows and the remainder.
    /// Both sides must keep at least 2 rows.
    pub fn split(&self, train_count: usize, rng: &mut impl Rng) -> Result<(Dataset, Dataset)> {
        if train_count < 2 || self.len() < train_count + 2 {
            return Err(Error::DatasetTooSmall {
                reason: format!(
                    "cannot split {} rows into {train_count} train + >=2 held-out",
                    self.len()
                ),
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let pick = |indices: &[usize]| {
            Dataset::new(
                self.name.clone(),
                indices.iter().map(|&i| self.features[i].clone()).collect(),
                indices.iter().map(|&i| self.labels[i]).collect(),
            )
        };
        Ok((pick(&order[..train_count])?, pick(&order[train_count..])?))
    }

    /// Same labels and name with a replaced feature matrix (after PCA or
    /// scaling).
    pub fn with_features(&self, features: Vec<Vec<f64>>) -> Result<Dataset> {
        Dataset::new(self.name.clone(), features, self.labels.clone())
    }
}

/// One mined triplet: anchor and positive share a class, the negative comes
/// from another one. Feature vectors hold post-scaling angles.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletSet {
    pub anchor: FeatureVector,
    pub positive: FeatureVector,
    pub negative: FeatureVector,
    pub anchor_label: u32,
    pub negative_label: u32,
}

/// Parses the classic Iris CSV layout: four decimals and a class name per
/// row, blank lines skipped. Class names map setosa -> 0, versicolor -> 1,
/// virginica -> 2, with or without the `Iris-` prefix.
pub fn load_iris_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 5 comma-separated fields, got {}", fields.len()),
            });
        }
        let mut values = Vec::with_capacity(4);
        for field in &fields[..4] {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("not a decimal number: {field:?}"),
            })?;
            values.push(value);
        }
        let class = fields[4].trim();
        let label = match class.strip_prefix("Iris-").unwrap_or(class) {
            "setosa" => 0,
            "versicolor" => 1,
            "virginica" => 2,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("unknown class name {other:?}"),
                })
            }
        };
        features.push(values);
        labels.push(label);
    }
    Dataset::new("iris", features, labels)
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("truncated header: need {end} bytes, have {}", bytes.len()),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

/// Loads an MNIST-style IDX image/label file pair: big-endian magics 2051 and
/// 2049, unsigned byte payloads, pixels scaled to [0, 1] by 1/255.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_file(images_path)?;
    let magic = read_u32_be(&image_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxMagic {
            path: images_path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&image_bytes, 4, images_path)? as usize;
    let rows = read_u32_be(&image_bytes, 8, images_path)? as usize;
    let cols = read_u32_be(&image_bytes, 12, images_path)? as usize;
    let pixels = rows * cols;
    if image_bytes.len() != 16 + count * pixels {
        return Err(Error::Parse {
            path: images_path.to_path_buf(),
            line: 0,
            message: format!(
                "payload is {} bytes, header promises {}",
                image_bytes.len() - 16.min(image_bytes.len()),
                count * pixels
            ),
        });
    }

    let label_bytes = read_file(labels_path)?;
    let magic = read_u32_be(&label_bytes, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxMagic {
            path: labels_path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let label_count = read_u32_be(&label_bytes, 4, labels_path)? as usize;
    if label_bytes.len() != 8 + label_count {
        return Err(Error::Parse {
            path: labels_path.to_path_buf(),
            line: 0,
            message: format!(
                "payload is {} bytes, header promises {label_count}",
                label_bytes.len() - 8.min(label_bytes.len())
            ),
        });
    }
    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let features = (0..count)
        .map(|i| {
            image_bytes[16 + i * pixels..16 + (i + 1) * pixels]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect();
    let labels = label_bytes[8..].iter().map(|&b| b as u32).collect();
    Dataset::new("mnist", features, labels)
}

/// A fitted PCA basis: per-feature mean, orthonormal component rows sorted by
/// explained variance (descending, sample covariance with divisor N-1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    #[serde(rename = "variance")]
    pub explained_variance: Vec<f64>,
}

/// Fits PCA by symmetric eigendecomposition of the sample covariance. Each
/// component is sign-normalized so its largest-magnitude entry is positive.
pub fn fit_pca(features: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let n = features.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall {
            reason: format!("PCA needs at least 2 rows, got {n}"),
        });
    }
    let d0 = features[0].len();
    if k == 0 || k > d0.min(n - 1) {
        return Err(Error::InvalidValue {
            what: "pca target dimension",
            why: format!("k = {k} not in 1..={}", d0.min(n - 1)),
        });
    }
    let mut mean = vec![0.0; d0];
    for row in features {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d0, |i, j| features[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    if cov.trace() < 1e-12 {
        return Err(Error::DegenerateData {
            reason: "zero total variance (all rows identical)".into(),
        });
    }
    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d0).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let mut component: Vec<f64> = eigen.eigenvectors.column(col).iter().copied().collect();
        let top = component
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
            .map(|(i, _)| i)
            .expect("components are nonempty");
        if component[top] < 0.0 {
            for v in &mut component {
                *v = -*v;
            }
        }
        components.push(component);
        explained_variance.push(eigen.eigenvalues[col].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// Projects rows onto the fitted basis: `(x - mean) . components^T`.
pub fn pca_transform(model: &PcaModel, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d0 = model.mean.len();
    features
        .iter()
        .map(|row| {
            if row.len() != d0 {
                return Err(Error::DimensionMismatch {
                    context: "pca input row",
                    expected: d0,
                    actual: row.len(),
                });
            }
            Ok(model
                .components
                .iter()
                .map(|component| {
                    row.iter()
                        .zip(component)
                        .zip(&model.mean)
                        .map(|((x, c), m)| (x - m) * c)
                        .sum()
                })
                .collect())
        })
        .collect()
}

/// Per-feature min/max fitted on the training split, driving the affine map
/// onto `[0, pi]` encoding angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingModel {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaling(features: &[Vec<f64>]) -> Result<ScalingModel> {
    if features.is_empty() {
        return Err(Error::DatasetTooSmall {
            reason: "cannot fit scaling on an empty matrix".into(),
        });
    }
    let dim = features[0].len();
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for row in features {
        for j in 0..dim {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    for j in 0..dim {
        if max[j] - min[j] < 1e-12 {
            return Err(Error::DegenerateData {
                reason: format!("column {j} is constant, cannot scale to angles"),
            });
        }
    }
    Ok(ScalingModel { min, max })
}

/// `x -> pi (x - min) / (max - min)`, clamped to `[0, pi]` so rows outside
/// the training range stay valid angles.
pub fn scale_to_angles(model: &ScalingModel, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = model.min.len();
    features
        .iter()
        .map(|row| {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "scaling input row",
                    expected: dim,
                    actual: row.len(),
                });
            }
            Ok(row
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    (std::f64::consts::PI * (x - model.min[j]) / (model.max[j] - model.min[j]))
                        .clamp(0.0, std::f64::consts::PI)
                })
                .collect())
        })
        .collect()
}

/// Draws `count` uniform triplets: anchor uniform over rows whose class has a
/// second member, positive uniform over that class minus the anchor row,
/// negative uniform over all other-class rows. Per-triplet draw order is
/// anchor, positive, negative, so results are seed-deterministic.
pub fn mine_triplets(
    ds: &Dataset,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<TripletSet>> {
    let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &label) in ds.labels.iter().enumerate() {
        by_label.entry(label).or_default().push(row);
    }
    if by_label.len() < 2 {
        return Err(Error::Mining {
            reason: format!("need at least 2 distinct labels, got {}", by_label.len()),
        });
    }
    let valid_anchors: Vec<usize> = by_label
        .values()
        .filter(|rows| rows.len() >= 2)
        .flat_map(|rows| rows.iter().copied())
        .collect();
    if valid_anchors.is_empty() {
        return Err(Error::Mining {
            reason: "no class has two samples, so no positive pair exists".into(),
        });
    }
    let others: BTreeMap<u32, Vec<usize>> = by_label
        .keys()
        .map(|&label| {
            let rows = (0..ds.len()).filter(|&r| ds.labels[r] != label).collect();
            (label, rows)
        })
        .collect();

    let mut triplets = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor_row = valid_anchors[rng.random_range(0..valid_anchors.len())];
        let label = ds.labels[anchor_row];
        let class = &by_label[&label];
        let anchor_pos = class
            .iter()
            .position(|&r| r == anchor_row)
            .expect("anchor row is in its own class");
        let mut pick = rng.random_range(0..class.len() - 1);
        if pick >= anchor_pos {
            pick += 1;
        }
        let positive_row = class[pick];
        let other = &others[&label];
        let negative_row = other[rng.random_range(0..other.len())];
        triplets.push(TripletSet {
            anchor: FeatureVector::new(ds.features[anchor_row].clone())?,
            positive: FeatureVector::new(ds.features[positive_row].clone())?,
            negative: FeatureVector::new(ds.features[negative_row].clone())?,
            anchor_label: label,
            negative_label: ds.labels[negative_row],
        });
    }
    Ok(triplets)
}

/// Processed-dataset cache: the fitted reduction plus the ready-to-train
/// angle features of one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetCache {
    pub name: String,
    pub k: usize,
    pub pca: PcaModel,
    pub scaling: ScalingModel,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

impl DatasetCache {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The cached split as a Dataset of angle features.
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(self.name.clone(), self.features.clone(), self.labels.clone())
    }
}
