use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HdoError, Result};
use crate::rng;

/// A labeled sample set with a fixed feature dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(rows: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = match rows.first() {
            Some((f, _)) => f.len(),
            None => return Err(HdoError::invalid("dataset must be non-empty")),
        };
        let mut features = Vec::with_capacity(rows.len() * dim);
        let mut labels = Vec::with_capacity(rows.len());
        for (i, (f, y)) in rows.into_iter().enumerate() {
            if f.len() != dim {
                return Err(HdoError::invalid(format!(
                    "sample {i} has {} features, expected {dim}",
                    f.len()
                )));
            }
            features.extend(f);
            labels.push(y);
        }
        Self::from_flat(dim, features, labels)
    }

    pub fn from_flat(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(HdoError::invalid("feature dimension must be positive"));
        }
        if labels.is_empty() {
            return Err(HdoError::invalid("dataset must be non-empty"));
        }
        if features.len() != labels.len() * dim {
            return Err(HdoError::invalid(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().chain(&labels).any(|v| !v.is_finite()) {
            return Err(HdoError::invalid("dataset contains non-finite values"));
        }
        Ok(Self {
            dim,
            features,
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
        self.dim
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Relabel as a binary problem: `class` becomes +1, everything else -1.
    pub fn one_vs_rest(&self, class: f64) -> Dataset {
        Dataset {
            dim: self.dim,
            features: self.features.clone(),
            labels: self
                .labels
                .iter()
                .map(|&y| if y == class { 1.0 } else { -1.0 })
                .collect(),
        }
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        self.features
            .chunks_exact(self.dim)
            .map(crate::vector::norm_sq)
            .fold(0.0, f64::max)
    }
}

/// How a CSV dataset file is laid out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvFormat {
    pub has_header: bool,
}

pub fn load_csv_dataset(path: impl AsRef<Path>, format: CsvFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| HdoError::io(path, e))?;
    parse_csv_dataset(file, format)
}

/// Parse rows of `d_in` floats followed by a label. Row numbers in errors are
/// 1-based file line numbers.
pub fn parse_csv_dataset<R: Read>(reader: R, format: CsvFormat) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(format.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut width: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| HdoError::Format {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(HdoError::Format {
                row,
                message: "expected at least one feature and a label".into(),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(HdoError::Format {
                    row,
                    message: format!("ragged row: {} fields, expected {w}", record.len()),
                })
            }
            _ => {}
        }
        let values = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| HdoError::Format {
                    row,
                    message: format!("cannot parse `{field}` as a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let (features, label) = values.split_at(values.len() - 1);
        rows.push((features.to_vec(), label[0]));
    }
    if rows.is_empty() {
        return Err(HdoError::Format {
            row: 0,
            message: "no data rows".into(),
        });
    }
    Dataset::new(rows)
}

/// Write `dataset` as CSV with a `x0,..,x{d-1},label` header.
pub fn write_csv_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| HdoError::io(path, e.into()))?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| HdoError::io(path, e.into()))?;
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.features(i).iter().map(f64::to_string).collect();
        row.push(dataset.label(i).to_string());
        w.write_record(&row).map_err(|e| HdoError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| HdoError::io(path, e))
}

/// Gaussian features labeled by a random hyperplane, with each label flipped
/// independently with probability `flip`. Labels are ±1.
pub fn synthetic_classification(samples: usize, dim: usize, flip: f64, seed: u64) -> Result<Dataset> {
    if samples == 0 || dim == 0 {
        return Err(HdoError::invalid("samples and dim must be positive"));
    }
    if !(0.0..=0.5).contains(&flip) {
        return Err(HdoError::invalid("flip probability must lie in [0, 0.5]"));
    }
    let mut r = rng::stream(seed, &[rng::purpose::DATA]);
    let w: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
    let mut features = Vec::with_capacity(samples * dim);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let a: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let margin = crate::vector::dot(&w, &a);
        let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
        if r.random::<f64>() < flip {
            y = -y;
        }
        features.extend(a);
        labels.push(y);
    }
    Dataset::from_flat(dim, features, labels)
}
