//! The seven summary statistics used as ML features.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signatures::{m2_to_dbsm_floored, RcsSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScale {
    Linear,
    #[default]
    Dbsm,
}

impl fmt::Display for FeatureScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureScale::Linear => "linear",
            FeatureScale::Dbsm => "dbsm",
        })
    }
}

impl FromStr for FeatureScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(FeatureScale::Linear),
            "dbsm" | "db" => Ok(FeatureScale::Dbsm),
            other => Err(Error::Validation(format!(
                "unknown feature scale `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub peak: f64,
    pub rms: f64,
    pub mean: f64,
    /// Sample standard deviation (N − 1 normalization).
    pub std: f64,
    /// Population variance (N normalization).
    pub variance: f64,
    pub median: f64,
    pub mode: f64,
    /// The true minimum; only part of [`FeatureVector::to_vec`] on request.
    pub minimum: f64,
}

pub const FEATURE_NAMES: [&str; 7] = ["peak", "rms", "mean", "std", "variance", "median", "mode"];

impl FeatureVector {
    pub fn to_vec(&self, include_minimum: bool) -> Vec<f64> {
        let mut v = vec![
            self.peak,
            self.rms,
            self.mean,
            self.std,
            self.variance,
            self.median,
            self.mode,
        ];
        if include_minimum {
            v.push(self.minimum);
        }
        v
    }
}

/// Width of the dBsm bins the mode is taken over.
pub const MODE_BIN_DB: f64 = 0.1;

fn mode_of(values: &[f64], db: &[f64]) -> f64 {
    let mut keyed: Vec<(i64, f64)> = db
        .iter()
        .zip(values)
        .map(|(&d, &v)| ((d / MODE_BIN_DB).floor() as i64, v))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // Runs of equal bins; the first maximal run is the lowest bin, and its
    // first entry is that bin's smallest sample.
    let mut best = (0usize, keyed[0].1);
    let mut i = 0;
    while i < keyed.len() {
        let mut j = i;
        while j < keyed.len() && keyed[j].0 == keyed[i].0 {
            j += 1;
        }
        if j - i > best.0 {
            best = (j - i, keyed[i].1);
        }
        i = j;
    }
    best.1
}

/// Features of linear-RCS samples on the requested scale.
pub fn extract_from_samples(samples_m2: &[f64], scale: FeatureScale) -> Result<FeatureVector> {
    if samples_m2.is_empty() {
        return Err(Error::Validation(
            "feature extraction on an empty signature".into(),
        ));
    }
    let db: Vec<f64> = samples_m2.iter().map(|&s| m2_to_dbsm_floored(s)).collect();
    let values: &[f64] = match scale {
        FeatureScale::Linear => samples_m2,
        FeatureScale::Dbsm => &db,
    };
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // A summed constant is not exactly n·c; keep constant signatures exact.
    let constant = sorted[0] == sorted[sorted.len() - 1];
    let mean = if constant {
        sorted[0]
    } else {
        values.iter().sum::<f64>() / n
    };
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    Ok(FeatureVector {
        peak: sorted[sorted.len() - 1],
        rms: if constant {
            sorted[0].abs()
        } else {
            (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
        },
        mean,
        std: if values.len() > 1 {
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        },
        variance: ss / n,
        median,
        mode: mode_of(values, &db),
        minimum: sorted[0],
    })
}

pub fn extract_features(sig: &RcsSignature, scale: FeatureScale) -> Result<FeatureVector> {
    extract_from_samples(sig.rcs_m2(), scale)
}

/// `target_id,peak,rms,mean,std,variance,median,mode` rows.
pub fn write_features_csv<W: Write>(rows: &[(String, FeatureVector)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["target_id"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (id, fv) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(fv.to_vec(false).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
