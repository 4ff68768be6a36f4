//! One-pixel attack sweep: flip each pixel of each sample in turn and count
//! the flips that change the model's prediction on the clean sample.

use serde::{Deserialize, Serialize};

use crate::classifier::{CentroidModel, Tables};
use crate::error::{Error, Result};
use crate::generators::LabelledDataset;
use crate::io::sha256_hex;
use crate::par::Exec;
use crate::tensor::BinaryTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub samples: usize,
    pub pixels_per_sample: usize,
    pub total_vulnerabilities: u64,
    pub per_sample_mean: f64,
    pub pct_pixels: f64,
    /// Samples with at least one vulnerable pixel.
    pub vulnerable_samples: usize,
    pub dataset_sha256: String,
}

fn dataset_checksum(ds: &LabelledDataset) -> String {
    sha256_hex(ds.to_text().as_bytes())
}

/// Sweep with an arbitrary predictor returning a class index.
pub fn one_pixel_sweep_with<F>(ds: &LabelledDataset, predict: F, exec: Exec) -> Result<SweepReport>
where
    F: Fn(&BinaryTensor) -> Result<usize> + Sync + Send,
{
    let shape = ds.shape().ok_or_else(|| Error::Empty("dataset has no samples".into()))?;
    if ds.samples.iter().any(|s| s.tensor.shape() != shape) {
        return Err(Error::ShapeMismatch("samples differ in shape".into()));
    }
    let before = dataset_checksum(ds);
    let counts = exec.map(&ds.samples, |s| -> Result<u64> {
        let clean = predict(&s.tensor)?;
        let mut x = s.tensor.clone();
        let mut hits = 0;
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                x.flip(r, c);
                hits += (predict(&x)? != clean) as u64;
                x.flip(r, c);
            }
        }
        debug_assert_eq!(x, s.tensor);
        Ok(hits)
    });
    let counts: Vec<u64> = counts.into_iter().collect::<Result<_>>()?;
    let after = dataset_checksum(ds);
    if before != after {
        return Err(Error::InvalidArgument("dataset changed during the sweep".into()));
    }
    let samples = ds.len();
    let pixels = shape.0 * shape.1;
    let total: u64 = counts.iter().sum();
    Ok(SweepReport {
        samples,
        pixels_per_sample: pixels,
        total_vulnerabilities: total,
        per_sample_mean: total as f64 / samples as f64,
        pct_pixels: total as f64 / (samples * pixels) as f64,
        vulnerable_samples: counts.iter().filter(|&&c| c > 0).count(),
        dataset_sha256: after,
    })
}

pub fn one_pixel_sweep(model: &CentroidModel, tables: Tables<'_>, ds: &LabelledDataset, exec: Exec) -> Result<SweepReport> {
    if let (Some(shape), Some(c)) = (ds.shape(), model.centroids.first()) {
        if shape != c.shape() {
            return Err(Error::ShapeMismatch(format!("samples are {shape:?}, centroids {:?}", c.shape())));
        }
    }
    let p = model.predictor(tables)?;
    one_pixel_sweep_with(ds, |x| p.predict_index(x), exec)
}
