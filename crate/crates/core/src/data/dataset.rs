use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Purpose, Streams};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic { seed: u64, stream: u64, per_class: usize, spread: f64 },
    Csv { path: PathBuf, sha256: String },
    InMemory,
}

/// Labelled feature rows, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_in: usize,
    n_cls: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_in: usize,
        n_cls: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::config("dataset must hold at least one example"));
        }
        if n_in == 0 || features.len() != labels.len() * n_in {
            return Err(Error::config(format!(
                "feature buffer of {} values does not match {} rows of width {n_in}",
                features.len(),
                labels.len()
            )));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_cls) {
            return Err(Error::Schema {
                line: i as u64 + 1,
                message: format!("label {l} out of range for {n_cls} classes"),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("dataset features contain NaN or Inf"));
        }
        Ok(Self { features, labels, n_in, n_cls, provenance })
    }

    /// Small in-memory dataset, mostly for tests.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_cls: usize) -> Result<Self> {
        let n_in = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_in) {
            return Err(Error::config("ragged feature rows"));
        }
        Self::new(rows.concat(), labels, n_in, n_cls, Provenance::InMemory)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_cls(&self) -> usize {
        self.n_cls
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_in..(i + 1) * self.n_in]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn batch(&self, indices: Vec<usize>) -> Batch<'_> {
        debug_assert!(indices.iter().all(|&i| i < self.len()));
        Batch { dataset: self, indices }
    }

    pub fn full_batch(&self) -> Batch<'_> {
        self.batch((0..self.len()).collect())
    }
}

/// A view of selected rows of a dataset.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    dataset: &'a Dataset,
    indices: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Class centres on the unit sphere: basis vectors when there is room for
/// them, otherwise evenly spaced on the circle spanned by the first two axes.
fn cluster_centre(class: usize, n_cls: usize, n_in: usize) -> Result<Vec<f64>> {
    let mut mu = vec![0.0; n_in];
    if n_cls <= n_in {
        mu[class] = 1.0;
    } else if n_in >= 2 {
        let theta = 2.0 * std::f64::consts::PI * class as f64 / n_cls as f64;
        mu[0] = theta.cos();
        mu[1] = theta.sin();
    } else {
        return Err(Error::config(format!("cannot place {n_cls} classes in {n_in} dimension(s)")));
    }
    Ok(mu)
}

/// Gaussian clusters, one per class, with balanced interleaved labels
/// (example `i` has label `i % n_cls`).
pub fn synth_clusters(n_cls: usize, n_in: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    synth_clusters_stream(n_cls, n_in, per_class, spread, seed, 0)
}

/// As [`synth_clusters`], drawing from sub-stream `stream` of the seed; used
/// to produce a train/test pair from one seed.
pub fn synth_clusters_stream(
    n_cls: usize,
    n_in: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    if n_cls < 2 || per_class < 1 || n_in < 1 {
        return Err(Error::config(format!(
            "synthetic data needs n_cls >= 2, n_in >= 1, per_class >= 1 (got {n_cls}, {n_in}, {per_class})"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::config(format!("spread must be finite and >= 0 (got {spread})")));
    }
    let centres = (0..n_cls).map(|c| cluster_centre(c, n_cls, n_in)).collect::<Result<Vec<_>>>()?;
    let n = n_cls * per_class;
    let mut rng = Streams::new(seed).stream(Purpose::Synthesis, stream, 0);
    let mut features = Vec::with_capacity(n * n_in);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_cls;
        let noise = crate::numerics::gaussian_vector::<f64, _>(n_in, spread, &mut rng);
        features.extend(centres[c].iter().zip(noise.iter()).map(|(m, z)| m + z));
        labels.push(c);
    }
    Dataset::new(features, labels, n_in, n_cls, Provenance::Synthetic { seed, stream, per_class, spread })
}

/// Expected shape of an ingested CSV file: rows are `label,f1,...,f_n_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub n_in: usize,
    pub n_cls: usize,
    #[serde(default)]
    pub header: bool,
}

pub fn ingest_csv(path: &Path, schema: CsvSchema) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect::<String>();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != schema.n_in + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", schema.n_in + 1, record.len()),
            });
        }
        let label: usize =
            record[0].parse().map_err(|_| Error::Parse { line, message: format!("invalid label {:?}", &record[0]) })?;
        if label >= schema.n_cls {
            return Err(Error::Schema {
                line,
                message: format!("label {label} out of range for {} classes", schema.n_cls),
            });
        }
        for field in record.iter().skip(1) {
            let v: f64 =
                field.parse().map_err(|_| Error::Parse { line, message: format!("invalid feature {field:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite feature {field:?}") });
            }
            features.push(v);
        }
        labels.push(label);
    }
    Dataset::new(features, labels, schema.n_in, schema.n_cls, Provenance::Csv { path: path.to_path_buf(), sha256 })
}
