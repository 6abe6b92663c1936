//! Bayes classifier over per-class RCS densities.
//!
//! Azimuth samples are treated as i.i.d., so a signature's class
//! log-likelihood is the sum of per-sample log densities. Priors are uniform.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax_first, Prediction};
use crate::densities::{
    fit_chi_square, fit_gamma_mle, fit_gpd_mle, ChiSquareParams, Density, GammaParams, GpdParams,
};
use crate::error::{Error, Result};
use crate::gmm::{gmm_ln_pdf, select_k, AicPenalty, GmmParams};
use crate::seed;
use crate::signatures::{m2_to_dbsm_floored, Dataset, RcsSignature, RCS_FLOOR_M2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlFamily {
    Swerling12,
    Swerling34,
    Gamma,
    Gpd,
    Gmm,
}

impl SlFamily {
    pub const ALL: [SlFamily; 5] = [
        SlFamily::Swerling12,
        SlFamily::Swerling34,
        SlFamily::Gamma,
        SlFamily::Gpd,
        SlFamily::Gmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SlFamily::Swerling12 => "swerling12",
            SlFamily::Swerling34 => "swerling34",
            SlFamily::Gamma => "gamma",
            SlFamily::Gpd => "gpd",
            SlFamily::Gmm => "gmm",
        }
    }
}

impl fmt::Display for SlFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SlFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "swerling12" | "cs2" | "chi2" => Ok(SlFamily::Swerling12),
            "swerling34" | "cs4" | "chi4" => Ok(SlFamily::Swerling34),
            "gamma" => Ok(SlFamily::Gamma),
            "gpd" | "lomax" => Ok(SlFamily::Gpd),
            "gmm" => Ok(SlFamily::Gmm),
            other => Err(Error::Validation(format!("unknown SL family `{other}`"))),
        }
    }
}

/// A fitted class-conditional density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityModel {
    ChiSquare(ChiSquareParams),
    Gamma(GammaParams),
    Gpd(GpdParams),
    /// Mixture over dBsm values (linear RCS floored at 1e-12 m²).
    GmmDbsm(GmmParams),
}

impl DensityModel {
    /// Log density of one linear-RCS sample. Mixtures are evaluated on the
    /// dBsm value; the change-of-variables term is common to all classes of
    /// a mixture model and is omitted.
    pub fn ln_pdf(&self, sigma_m2: f64) -> f64 {
        match self {
            DensityModel::ChiSquare(p) => p.ln_pdf(sigma_m2),
            DensityModel::Gamma(p) => p.ln_pdf(sigma_m2.max(RCS_FLOOR_M2)),
            DensityModel::Gpd(p) => p.ln_pdf(sigma_m2),
            DensityModel::GmmDbsm(p) => gmm_ln_pdf(p, m2_to_dbsm_floored(sigma_m2)),
        }
    }

    pub fn log_likelihood(&self, samples_m2: &[f64]) -> f64 {
        samples_m2.iter().map(|&s| self.ln_pdf(s)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlOptions {
    pub gmm_k_max: usize,
    pub aic_penalty: AicPenalty,
    pub seed: u64,
}

impl Default for SlOptions {
    fn default() -> Self {
        Self {
            gmm_k_max: 5,
            aic_penalty: AicPenalty::FreeParameters,
            seed: 0,
        }
    }
}

pub const MIN_TRAINING_SAMPLES: usize = 10;

/// Fits one family to linear-RCS samples.
pub fn fit_density(family: SlFamily, samples_m2: &[f64], opts: &SlOptions) -> Result<DensityModel> {
    Ok(match family {
        SlFamily::Swerling12 => DensityModel::ChiSquare(fit_chi_square(samples_m2, 1)?),
        SlFamily::Swerling34 => DensityModel::ChiSquare(fit_chi_square(samples_m2, 2)?),
        SlFamily::Gamma => DensityModel::Gamma(fit_gamma_mle(samples_m2)?),
        SlFamily::Gpd => DensityModel::Gpd(fit_gpd_mle(samples_m2)?),
        SlFamily::Gmm => {
            let db: Vec<f64> = samples_m2.iter().map(|&s| m2_to_dbsm_floored(s)).collect();
            let sel = select_k(&db, opts.gmm_k_max, opts.seed, opts.aic_penalty)?;
            DensityModel::GmmDbsm(sel.params)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDensity {
    pub class: String,
    pub density: DensityModel,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlModel {
    pub family: SlFamily,
    /// Sorted by class name.
    pub per_class: Vec<ClassDensity>,
    pub options: SlOptions,
}

impl SlModel {
    pub fn class_names(&self) -> Vec<&str> {
        self.per_class.iter().map(|c| c.class.as_str()).collect()
    }
}

/// Fits the family to each class's pooled samples of `dataset`.
pub fn train_sl(dataset: &Dataset, family: SlFamily, opts: &SlOptions) -> Result<SlModel> {
    let classes: Vec<(String, Vec<f64>)> = dataset
        .class_names()
        .iter()
        .map(|c| (c.clone(), dataset.pooled_samples(c)))
        .collect();
    train_sl_samples(&classes, family, opts)
}

/// Fits the family to explicit per-class linear-RCS samples.
pub fn train_sl_samples(
    classes: &[(String, Vec<f64>)],
    family: SlFamily,
    opts: &SlOptions,
) -> Result<SlModel> {
    if classes.is_empty() {
        return Err(Error::Validation("no classes to train on".into()));
    }
    let mut sorted: Vec<&(String, Vec<f64>)> = classes.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Validation("duplicate class names".into()));
    }
    let prior = 1.0 / sorted.len() as f64;
    let per_class = sorted
        .iter()
        .enumerate()
        .map(|(j, (class, samples))| {
            if samples.len() < MIN_TRAINING_SAMPLES {
                return Err(Error::Validation(format!(
                    "class `{class}` has {} samples; at least {MIN_TRAINING_SAMPLES} are needed",
                    samples.len()
                )));
            }
            let class_opts = SlOptions {
                seed: seed::derive(opts.seed, &[j as u64]),
                ..*opts
            };
            let density =
                fit_density(family, samples, &class_opts).map_err(|e| e.for_class(class))?;
            Ok(ClassDensity {
                class: class.clone(),
                density,
                prior,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SlModel {
        family,
        per_class,
        options: *opts,
    })
}

/// MAP decision on the raw samples of a signature.
pub fn classify_samples(model: &SlModel, samples_m2: &[f64]) -> Result<Prediction> {
    if samples_m2.is_empty() {
        return Err(Error::Validation(
            "cannot classify an empty signature".into(),
        ));
    }
    let scores: Vec<f64> = model
        .per_class
        .iter()
        .map(|c| c.density.log_likelihood(samples_m2) + c.prior.ln())
        .collect();
    let best = argmax_first(&scores)
        .filter(|&i| scores[i] > f64::NEG_INFINITY)
        .ok_or(Error::Indeterminate)?;
    Ok(Prediction {
        class: model.per_class[best].class.clone(),
        scores: model
            .per_class
            .iter()
            .zip(scores)
            .map(|(c, s)| (c.class.clone(), s))
            .collect(),
    })
}

pub fn classify_sl(model: &SlModel, sig: &RcsSignature) -> Result<Prediction> {
    classify_samples(model, sig.rcs_m2())
}
