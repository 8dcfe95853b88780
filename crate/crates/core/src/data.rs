//! Dataset ingestion, synthetic generators, and open-set scenario splits.
//!
//! CSV schema: header row, first column the (string) label, remaining
//! columns features. Reals are written with 17 significant digits so a
//! save/load round trip is exact. The OSRF binary alternative stores the
//! feature matrix as row-major little-endian f64 with a plain-text label
//! sidecar.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const OSRF_MAGIC: &[u8; 4] = b"OSRF";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    /// Distinct labels in order of first appearance; position is the
    /// contiguous class index.
    pub class_labels: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() || features.is_empty() {
            return Err(Error::Data("features/labels length mismatch or empty".into()));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::Data("zero-dimensional features".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::Data(format!("row {i}: ragged feature row")));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i}: non-finite feature")));
            }
        }
        let mut class_labels = Vec::new();
        let mut seen = HashMap::new();
        for l in &labels {
            if !seen.contains_key(l) {
                seen.insert(l.clone(), class_labels.len());
                class_labels.push(l.clone());
            }
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_labels,
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

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_labels.iter().position(|l| l == label)
    }

    /// Row indices belonging to `label`.
    pub fn indices_of(&self, label: &str) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_str() == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = indices.iter().map(|&i| self.features[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        LabeledDataset::new(features, labels)
    }
}

#[derive(Debug, Clone)]
pub struct OpenSetSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub known_labels: Vec<String>,
    pub unknown_labels: Vec<String>,
    pub seed: u64,
}

pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut expected_cols: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "expected label plus at least one feature".into(),
            });
        }
        match expected_cols {
            None => expected_cols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("ragged row: {} fields, expected {c}", fields.len()),
                })
            }
            _ => {}
        }
        labels.push(fields[0].to_string());
        let mut row = Vec::with_capacity(fields.len() - 1);
        for f in &fields[1..] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("non-numeric feature cell '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("non-finite feature {v}"),
                });
            }
            row.push(v);
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    LabeledDataset::new(features, labels)
}

pub fn save_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "label")?;
    for i in 0..data.dim() {
        write!(w, ",f{i}")?;
    }
    writeln!(w)?;
    for (row, label) in data.features.iter().zip(&data.labels) {
        write!(w, "{label}")?;
        for v in row {
            // 17 significant digits round-trips f64 exactly.
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels.csv");
    std::path::PathBuf::from(s)
}

pub fn save_osrf(data: &LabeledDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(OSRF_MAGIC)?;
    w.write_all(&(data.len() as u32).to_le_bytes())?;
    w.write_all(&(data.dim() as u32).to_le_bytes())?;
    for row in &data.features {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    drop(w);
    let mut lw = BufWriter::new(std::fs::File::create(sidecar_path(path))?);
    for label in &data.labels {
        writeln!(lw, "{label}")?;
    }
    Ok(())
}

pub fn load_osrf(path: &Path) -> Result<LabeledDataset> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != OSRF_MAGIC {
        return Err(Error::Data(format!("{}: bad OSRF magic", path.display())));
    }
    let mut u = [0u8; 4];
    r.read_exact(&mut u)?;
    let rows = u32::from_le_bytes(u) as usize;
    r.read_exact(&mut u)?;
    let dims = u32::from_le_bytes(u) as usize;
    let mut features = Vec::with_capacity(rows);
    let mut buf = [0u8; 8];
    for _ in 0..rows {
        let mut row = Vec::with_capacity(dims);
        for _ in 0..dims {
            r.read_exact(&mut buf)?;
            row.push(f64::from_le_bytes(buf));
        }
        features.push(row);
    }
    let labels: Vec<String> = BufReader::new(std::fs::File::open(sidecar_path(path))?)
        .lines()
        .collect::<std::io::Result<_>>()?;
    if labels.len() != rows {
        return Err(Error::Data("label sidecar length mismatch".into()));
    }
    LabeledDataset::new(features, labels)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, one value per call.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Perceptron separability check on a binary subset.
fn linearly_separable(points: &[(Vec<f64>, f64)], epochs: usize) -> bool {
    let dim = points[0].0.len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..epochs {
        let mut errors = 0;
        for (x, y) in points {
            let s: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            if y * s <= 0.0 {
                errors += 1;
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += y * xi;
                }
                b += y;
            }
        }
        if errors == 0 {
            return true;
        }
    }
    false
}

/// Three 2D Gaussian clusters, resampled (up to 100 retries) until every
/// pair of classes is linearly separable by a perceptron.
pub fn gen_supplementary_2d(seed: u64, n_per_class: usize) -> Result<LabeledDataset> {
    if n_per_class < 10 {
        return Err(Error::Config("n_per_class must be at least 10".into()));
    }
    let centers = [[0.0, 0.0], [8.0, 0.0], [4.0, 6.928]];
    let labels = ["o", "x", "t"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..100 {
        let mut features = Vec::with_capacity(3 * n_per_class);
        let mut labs = Vec::with_capacity(3 * n_per_class);
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..n_per_class {
                features.push(vec![center[0] + gauss(&mut rng), center[1] + gauss(&mut rng)]);
                labs.push(labels[c].to_string());
            }
        }
        let mut ok = true;
        'pairs: for a in 0..3 {
            for b in (a + 1)..3 {
                let pts: Vec<(Vec<f64>, f64)> = features
                    .iter()
                    .zip(&labs)
                    .filter(|(_, l)| l.as_str() == labels[a] || l.as_str() == labels[b])
                    .map(|(f, l)| (f.clone(), if l.as_str() == labels[a] { 1.0 } else { -1.0 }))
                    .collect();
                if !linearly_separable(&pts, 500) {
                    ok = false;
                    break 'pairs;
                }
            }
        }
        if ok {
            return LabeledDataset::new(features, labs);
        }
    }
    Err(Error::Data(
        "could not draw a linearly separable sample in 100 retries".into(),
    ))
}

/// Centroid for class `c` on an axis-aligned lattice with `separation`
/// spacing; nearest-neighbor centroid distance equals `separation`.
pub fn blob_centroid(c: usize, classes: usize, dim: usize, separation: f64) -> Vec<f64> {
    let side = (classes as f64).powf(1.0 / dim as f64).ceil() as usize;
    let side = side.max(1);
    let mut coords = Vec::with_capacity(dim);
    let mut rest = c;
    for _ in 0..dim {
        coords.push((rest % side) as f64 * separation);
        rest /= side;
    }
    coords
}

/// Unit-variance Gaussian blobs with lattice-placed centroids.
pub fn gen_blobs(
    seed: u64,
    classes: usize,
    dim: usize,
    separation: f64,
    n_per_class: usize,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if dim == 0 {
        return Err(Error::Config("dim must be at least 1".into()));
    }
    if separation < 0.0 {
        return Err(Error::Config("separation must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(classes * n_per_class);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    for c in 0..classes {
        let center = blob_centroid(c, classes, dim, separation);
        for _ in 0..n_per_class {
            features.push(center.iter().map(|&m| m + gauss(&mut rng)).collect());
            labels.push(format!("c{c}"));
        }
    }
    LabeledDataset::new(features, labels)
}

/// Holds out `n_unknown` seeded classes as unknown; splits the known
/// classes train/test per class by `train_fraction`. Unknown samples appear
/// only in the test set.
pub fn open_split(
    data: &LabeledDataset,
    n_unknown: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<OpenSetSplit> {
    if n_unknown >= data.n_classes() {
        return Err(Error::Config(format!(
            "n_unknown {} must be below class count {}",
            n_unknown,
            data.n_classes()
        )));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must be in (0,1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut class_order: Vec<usize> = (0..data.n_classes()).collect();
    for i in (1..class_order.len()).rev() {
        let j = rng.random_range(0..=i);
        class_order.swap(i, j);
    }
    let unknown_set: Vec<usize> = class_order[..n_unknown].to_vec();
    let mut known_labels: Vec<String> = Vec::new();
    let mut unknown_labels: Vec<String> = Vec::new();
    for (c, label) in data.class_labels.iter().enumerate() {
        if unknown_set.contains(&c) {
            unknown_labels.push(label.clone());
        } else {
            known_labels.push(label.clone());
        }
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for label in &data.class_labels {
        let mut idx = data.indices_of(label);
        if unknown_labels.contains(label) {
            test_idx.extend(idx);
            continue;
        }
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let n_train = ((idx.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.clamp(1, idx.len().saturating_sub(1).max(1));
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(OpenSetSplit {
        train: data.subset(&train_idx)?,
        test: data.subset(&test_idx)?,
        known_labels,
        unknown_labels,
        seed,
    })
}
