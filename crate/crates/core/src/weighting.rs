//! Per-sample weights from where a sample's BDM falls within its class.
//!
//! Tiers are checked from the highest percentile down; the first tier whose
//! class percentile the sample reaches assigns its weight. Percentiles use the
//! nearest-rank rule.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bdm::{bdm, PartitionStrategy};
use crate::ctm::CtmTable;
use crate::error::{Error, Result};
use crate::generators::LabelledDataset;
use crate::io::atomic_write;
use crate::par::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub phi: f64,
    pub gamma: f64,
}

/// Ordered tiers; `phi` strictly decreasing and the last one at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tier>", into = "Vec<Tier>")]
pub struct WeightSpec {
    tiers: Vec<Tier>,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::new(vec![
            Tier { phi: 75.0, gamma: 0.01 },
            Tier { phi: 50.0, gamma: 0.5 },
            Tier { phi: 0.0, gamma: 2.0 },
        ])
        .expect("valid default")
    }
}

impl WeightSpec {
    pub fn new(tiers: Vec<Tier>) -> Result<Self> {
        if tiers.is_empty() {
            return Err(Error::Empty("weight spec has no tiers".into()));
        }
        for t in &tiers {
            if !(0.0..=100.0).contains(&t.phi) {
                return Err(Error::InvalidArgument(format!("percentile {} outside [0, 100]", t.phi)));
            }
            if !(t.gamma > 0.0 && t.gamma.is_finite()) {
                return Err(Error::InvalidArgument(format!("weight {} must be positive", t.gamma)));
            }
        }
        if tiers.windows(2).any(|w| w[1].phi >= w[0].phi) {
            return Err(Error::InvalidArgument("percentiles must strictly decrease".into()));
        }
        if tiers.last().map(|t| t.phi) != Some(0.0) {
            return Err(Error::InvalidArgument("last tier must be the catch-all at percentile 0".into()));
        }
        Ok(WeightSpec { tiers })
    }

    pub fn tiers(&self) -> &[Tier] {
        &self.tiers
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Every γ multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        WeightSpec::new(self.tiers.iter().map(|t| Tier { phi: t.phi, gamma: t.gamma * factor }).collect())
    }
}

impl TryFrom<Vec<Tier>> for WeightSpec {
    type Error = Error;

    fn try_from(tiers: Vec<Tier>) -> Result<Self> {
        WeightSpec::new(tiers)
    }
}

impl From<WeightSpec> for Vec<Tier> {
    fn from(s: WeightSpec) -> Self {
        s.tiers
    }
}

/// Sorted per-class BDM values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassQuantiles {
    classes: BTreeMap<String, Vec<f64>>,
}

impl ClassQuantiles {
    pub fn from_values<'a>(values: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut classes: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (c, v) in values {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value in class `{c}`")));
            }
            classes.entry(c.to_string()).or_default().push(v);
        }
        for v in classes.values_mut() {
            v.sort_by(f64::total_cmp);
        }
        Ok(ClassQuantiles { classes })
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    /// Nearest-rank percentile: the value at rank `ceil(phi/100 * n)`, with
    /// rank 0 mapped to the minimum.
    pub fn percentile(&self, class: &str, phi: f64) -> Result<f64> {
        let v = self
            .classes
            .get(class)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::Empty(format!("class `{class}` has no samples")))?;
        let rank = (phi / 100.0 * v.len() as f64).ceil() as usize;
        Ok(v[rank.clamp(1, v.len()) - 1])
    }
}

/// Per-sample BDM values and their class quantiles.
pub fn class_quantiles(
    ds: &LabelledDataset,
    table: &CtmTable,
    s: &PartitionStrategy,
    exec: Exec,
) -> Result<(Vec<f64>, ClassQuantiles)> {
    let values: Vec<f64> = exec
        .map(&ds.samples, |x| bdm(&x.tensor, table, s))
        .into_iter()
        .collect::<Result<_>>()?;
    let q = ClassQuantiles::from_values(ds.samples.iter().map(|x| x.label.as_str()).zip(values.iter().copied()))?;
    Ok((values, q))
}

/// Weight of a sample with BDM `k` in `class`.
///
/// A class whose samples all share one value puts every sample in the top
/// tier, since each sample reaches every percentile.
pub fn weight(k: f64, class: &str, spec: &WeightSpec, q: &ClassQuantiles) -> Result<f64> {
    for t in spec.tiers() {
        if k >= q.percentile(class, t.phi)? {
            return Ok(t.gamma);
        }
    }
    Ok(spec.tiers().last().expect("non-empty").gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub index: usize,
    pub class: String,
    pub bdm: f64,
    pub weight: f64,
}

pub fn compute_weights(
    ds: &LabelledDataset,
    spec: &WeightSpec,
    table: &CtmTable,
    s: &PartitionStrategy,
    exec: Exec,
) -> Result<Vec<WeightRow>> {
    let (values, q) = class_quantiles(ds, table, s, exec)?;
    ds.samples
        .iter()
        .zip(values)
        .enumerate()
        .map(|(index, (x, k))| {
            Ok(WeightRow { index, class: x.label.clone(), bdm: k, weight: weight(k, &x.label, spec, &q)? })
        })
        .collect()
}

/// CSV `index,class,bdm,weight`, preceded by `# key=value` comment lines.
pub fn weights_csv(rows: &[WeightRow], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("index,class,bdm,weight\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.index, r.class, r.bdm, r.weight);
    }
    out
}

pub fn export_weights(rows: &[WeightRow], path: impl AsRef<Path>, meta: &[(&str, String)]) -> Result<()> {
    atomic_write(path.as_ref(), weights_csv(rows, meta).as_bytes())
}
