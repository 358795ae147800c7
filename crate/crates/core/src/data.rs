//! Core data types and their on-disk formats.
//!
//! A dataset split is a comma separated text file with the header
//! `sample_id,label,f0,…,f{Q-1}` plus a JSON manifest describing its shape.
//! Spatial feature maps, when present, live in a separate little-endian
//! binary file of 64-bit floats in row-major `N×Q×h×w` order.
//!
//! **Sample order is meaningful.** The file order is preserved everywhere and
//! [`split_calibration`] takes the *first* samples of each class.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Calibration,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Calibration => "calibration",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pooled feature activations of one dataset split.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    values: Array2<T>,
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
    spatial_maps: Option<Array4<T>>,
    sample_ids: Vec<String>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Builds a validated matrix. At least one sample and one feature are required.
    pub fn new(
        values: Array2<T>,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
        spatial_maps: Option<Array4<T>>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("feature matrix needs at least one sample"));
        }
        Self::new_allow_empty(values, labels, n_classes, split, spatial_maps, sample_ids)
    }

    fn new_allow_empty(
        values: Array2<T>,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
        spatial_maps: Option<Array4<T>>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, q) = values.dim();
        if q == 0 {
            return Err(Error::invalid("feature matrix needs at least one feature"));
        }
        if n_classes == 0 {
            return Err(Error::invalid("at least one class is required"));
        }
        check_dim("labels", n, labels.len())?;
        check_dim("sample ids", n, sample_ids.len())?;
        if let Some((sample, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                sample,
                label,
                n_classes,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        if let Some(maps) = &spatial_maps {
            let (mn, mq, h, w) = maps.dim();
            check_dim("map samples", n, mn)?;
            check_dim("map features", q, mq)?;
            if h == 0 || w == 0 {
                return Err(Error::invalid("map dimensions must be positive"));
            }
            let cells = T::from_usize_lossy(h * w);
            for i in 0..n {
                for j in 0..q {
                    let pooled = values[[i, j]];
                    let mean = maps
                        .slice(ndarray::s![i, j, .., ..])
                        .iter()
                        .copied()
                        .sum::<T>()
                        / cells;
                    let tol = T::pooling_tolerance() * pooled.abs().max(mean.abs()).max(T::one());
                    if (pooled - mean).abs() > tol {
                        return Err(Error::Invariant(format!(
                            "pooled value of sample {i}, feature {j} is {pooled} but its map mean is {mean}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            values,
            labels,
            n_classes,
            split,
            spatial_maps,
            sample_ids,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn spatial_maps(&self) -> Option<&Array4<T>> {
        self.spatial_maps.as_ref()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Indices of samples per class, in stored order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Rows `indices` (in the given order) as a new matrix tagged `split`.
    pub fn subset(&self, indices: &[usize], split: Split) -> Self {
        let values = self.values.select(Axis(0), indices);
        let maps = self.spatial_maps.as_ref().map(|m| m.select(Axis(0), indices));
        Self {
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            split,
            spatial_maps: maps,
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Concatenates two matrices over the same feature space; `self` first.
    pub fn concat(&self, other: &Self, split: Split) -> Result<Self> {
        check_dim("features", self.n_features(), other.n_features())?;
        check_dim("classes", self.n_classes, other.n_classes)?;
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .map_err(|e| Error::invalid(e.to_string()))?;
        let maps = match (&self.spatial_maps, &other.spatial_maps) {
            (Some(a), Some(b)) => Some(
                ndarray::concatenate(Axis(0), &[a.view(), b.view()])
                    .map_err(|e| Error::invalid(e.to_string()))?,
            ),
            (None, None) => None,
            _ => return Err(Error::invalid("cannot concatenate matrices with and without maps")),
        };
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut ids = self.sample_ids.clone();
        ids.extend(other.sample_ids.iter().cloned());
        Self::new_allow_empty(values, labels, self.n_classes, split, maps, ids)
    }
}

fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what: what.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// JSON manifest accompanying a feature file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub split: Split,
    #[serde(default)]
    pub map_height: Option<usize>,
    #[serde(default)]
    pub map_width: Option<usize>,
    pub data_file: String,
    #[serde(default)]
    pub maps_file: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    read_json(path)
}

/// Loads a dataset from its manifest; the data file is resolved relative to it.
pub fn load_dataset<T: Scalar>(manifest_path: &Path) -> Result<FeatureMatrix<T>> {
    let manifest = read_manifest(manifest_path)?;
    let data_path = sibling(manifest_path, &manifest.data_file);
    load_with_manifest(&data_path, manifest_path, &manifest)
}

/// Loads `data_path` and validates it against the manifest at `manifest_path`.
pub fn load_feature_matrix<T: Scalar>(
    data_path: &Path,
    manifest_path: &Path,
) -> Result<FeatureMatrix<T>> {
    let manifest = read_manifest(manifest_path)?;
    load_with_manifest(data_path, manifest_path, &manifest)
}

fn load_with_manifest<T: Scalar>(
    data_path: &Path,
    manifest_path: &Path,
    manifest: &Manifest,
) -> Result<FeatureMatrix<T>> {
    let text = fs::read_to_string(data_path).map_err(|e| Error::io(data_path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::MissingHeader(data_path.to_path_buf())),
    };
    if header.get(0) != Some("sample_id") || header.get(1) != Some("label") {
        return Err(Error::MissingHeader(data_path.to_path_buf()));
    }
    let q = header.len().saturating_sub(2);
    check_dim("feature columns", manifest.n_features, q)?;
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("header column {} should be f{j}, found {name:?}", j + 2),
            });
        }
    }

    let mut flat = Vec::with_capacity(manifest.n_samples * q);
    let mut labels = Vec::with_capacity(manifest.n_samples);
    let mut ids = Vec::with_capacity(manifest.n_samples);
    for (row, record) in records.enumerate() {
        let record = record?;
        let line = row + 2;
        if record.len() != q + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} cells, found {}", q + 2, record.len()),
            });
        }
        ids.push(record[0].to_string());
        let label: usize = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("label {:?} is not a non-negative integer", &record[1]),
        })?;
        labels.push(label);
        for cell in record.iter().skip(2) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            flat.push(T::lit(v));
        }
    }
    let n = labels.len();
    check_dim("samples", manifest.n_samples, n)?;
    let values = Array2::from_shape_vec((n, q), flat).map_err(|e| Error::invalid(e.to_string()))?;

    let maps = match (&manifest.maps_file, manifest.map_height, manifest.map_width) {
        (Some(file), Some(h), Some(w)) => {
            let path = sibling(manifest_path, file);
            Some(read_maps(&path, n, q, h, w)?)
        }
        (None, _, _) => None,
        _ => return Err(Error::invalid("maps_file requires map_height and map_width")),
    };
    FeatureMatrix::new(values, labels, manifest.n_classes, manifest.split, maps, ids)
}

fn read_maps<T: Scalar>(path: &Path, n: usize, q: usize, h: usize, w: usize) -> Result<Array4<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = n * q * h * w;
    check_dim("map cells", expected, bytes.len() / 8)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid("map file length is not a multiple of 8 bytes"));
    }
    let data: Vec<T> = bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    Array4::from_shape_vec((n, q, h, w), data).map_err(|e| Error::invalid(e.to_string()))
}

/// Writes `<dir>/<stem>.csv`, `<dir>/<stem>.json` and, with maps, `<dir>/<stem>.maps.bin`.
/// Returns the manifest path.
pub fn save_feature_matrix<T: Scalar>(fm: &FeatureMatrix<T>, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_file = format!("{stem}.csv");
    let mut out = String::new();
    out.push_str("sample_id,label");
    for j in 0..fm.n_features() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for i in 0..fm.n_samples() {
        out.push_str(&fm.sample_ids[i]);
        out.push(',');
        out.push_str(&fm.labels[i].to_string());
        for j in 0..fm.n_features() {
            out.push(',');
            out.push_str(&format_real(fm.values[[i, j]]));
        }
        out.push('\n');
    }
    write_text(&dir.join(&data_file), &out)?;

    let (maps_file, map_height, map_width) = match &fm.spatial_maps {
        Some(maps) => {
            let file = format!("{stem}.maps.bin");
            let mut bytes = Vec::with_capacity(maps.len() * 8);
            for v in maps.iter() {
                bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            let (_, _, h, w) = maps.dim();
            (Some(file), Some(h), Some(w))
        }
        None => (None, None, None),
    };
    let manifest = Manifest {
        n_samples: fm.n_samples(),
        n_features: fm.n_features(),
        n_classes: fm.n_classes,
        split: fm.split,
        map_height,
        map_width,
        data_file,
        maps_file,
    };
    let manifest_path = dir.join(format!("{stem}.json"));
    write_json(&manifest_path, &manifest)?;
    Ok(manifest_path)
}

/// Decimal text with 17 significant digits, which round-trips every `f64`.
pub fn format_real<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

/// First `per_class` samples of every class (in stored order) become the
/// calibration split; the remainder stays test.
pub fn split_calibration<T: Scalar>(
    fm: &FeatureMatrix<T>,
    per_class: usize,
) -> Result<(FeatureMatrix<T>, FeatureMatrix<T>)> {
    if fm.split != Split::Test {
        return Err(Error::WrongSplit {
            expected: Split::Test.to_string(),
            found: fm.split.to_string(),
        });
    }
    let by_class = fm.class_indices();
    if let Some((class, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < per_class) {
        return Err(Error::InsufficientSamples {
            class,
            found: members.len(),
            needed: per_class,
        });
    }
    let mut taken = vec![0usize; fm.n_classes];
    let mut cal = Vec::new();
    let mut rest = Vec::new();
    for (i, &l) in fm.labels.iter().enumerate() {
        if taken[l] < per_class {
            taken[l] += 1;
            cal.push(i);
        } else {
            rest.push(i);
        }
    }
    Ok((fm.subset(&cal, Split::Calibration), fm.subset(&rest, Split::Test)))
}

/// Per-sample binary attribute annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeTable {
    per_sample: Array2<bool>,
    attribute_names: Vec<String>,
    sample_ids: Vec<String>,
}

impl AttributeTable {
    pub fn new(per_sample: Array2<bool>, attribute_names: Vec<String>, sample_ids: Vec<String>) -> Result<Self> {
        if per_sample.ncols() == 0 {
            return Err(Error::invalid("attribute table needs at least one attribute"));
        }
        check_dim("attribute names", per_sample.ncols(), attribute_names.len())?;
        check_dim("attribute rows", per_sample.nrows(), sample_ids.len())?;
        Ok(Self {
            per_sample,
            attribute_names,
            sample_ids,
        })
    }

    pub fn per_sample(&self) -> ArrayView2<'_, bool> {
        self.per_sample.view()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn n_attributes(&self) -> usize {
        self.per_sample.ncols()
    }

    /// Reorders rows to follow `sample_ids`; every id must be present.
    pub fn aligned_to(&self, sample_ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = sample_ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("sample {id:?} missing from attribute table")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            per_sample: self.per_sample.select(Axis(0), &rows),
            attribute_names: self.attribute_names.clone(),
            sample_ids: sample_ids.to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("sample_id");
        for name in &self.attribute_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, id) in self.sample_ids.iter().enumerate() {
            out.push_str(id);
            for a in 0..self.n_attributes() {
                out.push_str(if self.per_sample[[i, a]] { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        write_text(path, &out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let header = match records.next() {
            Some(r) => r?,
            None => return Err(Error::MissingHeader(path.to_path_buf())),
        };
        if header.get(0) != Some("sample_id") {
            return Err(Error::MissingHeader(path.to_path_buf()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut flat = Vec::new();
        let mut ids = Vec::new();
        for (row, record) in records.enumerate() {
            let record = record?;
            if record.len() != names.len() + 1 {
                return Err(Error::Parse {
                    line: row + 2,
                    message: format!("expected {} cells, found {}", names.len() + 1, record.len()),
                });
            }
            ids.push(record[0].to_string());
            for cell in record.iter().skip(1) {
                flat.push(match cell {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse {
                            line: row + 2,
                            message: format!("attribute cell {other:?} is not 0 or 1"),
                        })
                    }
                });
            }
        }
        let per_sample = Array2::from_shape_vec((ids.len(), names.len()), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(per_sample, names, ids)
    }
}

/// Fraction of each class's samples carrying each attribute (`C×A`, entries in `[0,1]`).
pub fn class_attribute_means<T: Scalar>(
    table: &AttributeTable,
    labels: &[usize],
    n_classes: usize,
) -> Result<Array2<T>> {
    check_dim("attribute rows", table.per_sample.nrows(), labels.len())?;
    let a = table.n_attributes();
    let mut counts = vec![0usize; n_classes];
    let mut present = Array2::<usize>::zeros((n_classes, a));
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::LabelOutOfRange {
                sample: i,
                label: l,
                n_classes,
            });
        }
        counts[l] += 1;
        for j in 0..a {
            if table.per_sample[[i, j]] {
                present[[l, j]] += 1;
            }
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    Ok(Array2::from_shape_fn((n_classes, a), |(c, j)| {
        T::from_usize_lossy(present[[c, j]]) / T::from_usize_lossy(counts[c])
    }))
}

pub(crate) fn sibling(manifest_path: &Path, file: &str) -> PathBuf {
    match manifest_path.parent() {
        Some(dir) => dir.join(file),
        None => PathBuf::from(file),
    }
}

pub fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn explicit_two_row_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("d.csv"),
            "sample_id,label,f0,f1,f2\na,0,1.5,2,3\nb,1,-1,0,0.25\n",
        )
        .unwrap();
        let manifest = Manifest {
            n_samples: 2,
            n_features: 3,
            n_classes: 2,
            split: Split::Train,
            map_height: None,
            map_width: None,
            data_file: "d.csv".into(),
            maps_file: None,
        };
        write_json(&dir.path().join("d.json"), &manifest).unwrap();
        let fm: FeatureMatrix<f64> = load_dataset(&dir.path().join("d.json")).unwrap();
        assert_eq!(fm.n_samples(), 2);
        assert_eq!(fm.labels(), &[0, 1]);
        assert_eq!(fm.values()[[0, 0]], 1.5);
        assert_eq!(fm.values()[[1, 2]], 0.25);
        assert_eq!(fm.sample_ids(), &["a".to_string(), "b".to_string()]);
    }

    fn write_case(dir: &Path, body: &str, n: usize, q: usize, c: usize) -> PathBuf {
        fs::write(dir.join("d.csv"), body).unwrap();
        let manifest = Manifest {
            n_samples: n,
            n_features: q,
            n_classes: c,
            split: Split::Test,
            map_height: None,
            map_width: None,
            data_file: "d.csv".into(),
            maps_file: None,
        };
        let p = dir.join("d.json");
        write_json(&p, &manifest).unwrap();
        p
    }

    #[test]
    fn label_out_of_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_case(dir.path(), "sample_id,label,f0\na,5,1\n", 1, 1, 3);
        let err = load_dataset::<f64>(&p).unwrap_err();
        assert!(err.to_string().contains("label out of range"), "{err}");
    }

    #[test]
    fn malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_case(dir.path(), "a,0,1\n", 1, 1, 3);
        assert!(matches!(load_dataset::<f64>(&p), Err(Error::MissingHeader(_))));
        let p = write_case(dir.path(), "sample_id,label,f0\na,0,x\n", 1, 1, 3);
        assert!(matches!(load_dataset::<f64>(&p), Err(Error::Parse { line: 2, .. })));
        let p = write_case(dir.path(), "sample_id,label,f0,f1\na,0,1,2\n", 1, 1, 3);
        assert!(matches!(load_dataset::<f64>(&p), Err(Error::DimensionMismatch { .. })));
        let p = write_case(dir.path(), "sample_id,label,f0\na,0,1\n", 2, 1, 3);
        assert!(matches!(load_dataset::<f64>(&p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn maps_must_pool_to_values() {
        let values = array![[1.0f64]];
        let maps = Array4::from_shape_vec((1, 1, 1, 2), vec![0.0, 2.0]).unwrap();
        assert!(FeatureMatrix::new(values.clone(), vec![0], 1, Split::Train, Some(maps), ids(1)).is_ok());
        let bad = Array4::from_shape_vec((1, 1, 1, 2), vec![0.0, 3.0]).unwrap();
        assert!(FeatureMatrix::new(values, vec![0], 1, Split::Train, Some(bad), ids(1)).is_err());
    }

    fn grouped(classes: usize, per: usize) -> FeatureMatrix<f64> {
        let n = classes * per;
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let values = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        FeatureMatrix::new(values, labels, classes, Split::Test, None, ids(n)).unwrap()
    }

    #[test]
    fn calibration_split_takes_first_per_class() {
        let fm = grouped(3, 5);
        let (cal, test) = split_calibration(&fm, 2).unwrap();
        assert_eq!(cal.n_samples(), 6);
        assert_eq!(test.n_samples(), 9);
        let cal_ids: std::collections::BTreeSet<_> = cal.sample_ids().iter().collect();
        assert!(test.sample_ids().iter().all(|id| !cal_ids.contains(id)));
        // labels cycle 0,1,2 so the first two of each class are s0..s5
        assert_eq!(cal.sample_ids(), &ids(6)[..]);
    }

    #[test]
    fn zero_per_class_is_identity() {
        let fm = grouped(3, 5);
        let (cal, test) = split_calibration(&fm, 0).unwrap();
        assert!(cal.is_empty());
        assert_eq!(test, fm);
    }

    #[test]
    fn ten_per_class_calibration_split_size() {
        let fm = grouped(200, 12);
        let (cal, test) = split_calibration(&fm, 10).unwrap();
        assert_eq!(cal.n_samples(), 2000);
        assert_eq!(test.n_samples(), 400);
    }

    #[test]
    fn short_class_rejected() {
        let fm = grouped(3, 2);
        assert!(matches!(
            split_calibration(&fm, 3),
            Err(Error::InsufficientSamples { needed: 3, .. })
        ));
        assert!(split_calibration(&fm.clone().with_split(Split::Train), 1).is_err());
    }

    #[test]
    fn attribute_means() {
        let per_sample = array![
            [false, false, true],
            [true, false, true],
            [false, false, false],
            [true, false, false],
            [true, false, false]
        ];
        let table = AttributeTable::new(per_sample, vec!["a".into(), "b".into(), "c".into()], ids(5)).unwrap();
        let labels = [0, 0, 1, 1, 1];
        let lambda: Array2<f64> = class_attribute_means(&table, &labels, 2).unwrap();
        assert_eq!(lambda[[0, 2]], 1.0);
        assert_eq!(lambda.column(1).iter().sum::<f64>(), 0.0);
        assert!((lambda[[1, 0]] - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            class_attribute_means::<f64>(&table, &labels, 3),
            Err(Error::EmptyClass(2))
        ));
    }
}
