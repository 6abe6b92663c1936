//! One interface over statistical and feature-based classifiers: training
//! from a [`Dataset`], classification of raw signatures, and versioned JSON
//! persistence.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureScale};
use crate::ml_classifiers::{self, MlClassifier, MlFamily, MlHyperparams};
use crate::noise::{add_noise, NoiseSpec};
use crate::seed;
use crate::signatures::{Dataset, RcsSignature};
use crate::sl_classifier::{classify_samples, train_sl_samples, SlFamily, SlModel, SlOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: String,
    /// (class, unnormalized score) in class-name order.
    pub scores: Vec<(String, f64)>,
}

/// Index of the largest score; the first (lexicographically smallest class)
/// wins ties. NaN scores never win.
pub(crate) fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// What a classifier is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TrainingData {
    /// The dataset's signatures as given.
    Clean,
    /// `copies_per_class` noisy copies of each class's signatures, the SNR
    /// cycling through `snr_grid_db`.
    Noisy {
        copies_per_class: usize,
        snr_grid_db: Vec<f64>,
    },
}

pub const DEFAULT_SNR_GRID_DB: [f64; 7] = [-5.0, -3.0, 0.0, 3.0, 5.0, 8.0, 10.0];

impl TrainingData {
    pub fn noisy_default() -> Self {
        TrainingData::Noisy {
            copies_per_class: 100,
            snr_grid_db: DEFAULT_SNR_GRID_DB.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Sl {
        family: SlFamily,
        options: SlOptions,
        training: TrainingData,
    },
    Ml {
        family: MlFamily,
        hyperparams: MlHyperparams,
        scale: FeatureScale,
        include_minimum: bool,
        training: TrainingData,
    },
}

impl ClassifierSpec {
    /// Defaults: SL families train on clean data, ML families on 100 noisy
    /// copies per class (one clean signature per class yields a single
    /// feature vector, too few to train on).
    pub fn sl(family: SlFamily) -> Self {
        ClassifierSpec::Sl {
            family,
            options: SlOptions::default(),
            training: TrainingData::Clean,
        }
    }

    pub fn ml(family: MlFamily) -> Self {
        ClassifierSpec::Ml {
            family,
            hyperparams: MlHyperparams::default(),
            scale: FeatureScale::default(),
            include_minimum: false,
            training: TrainingData::noisy_default(),
        }
    }

    /// Accepts any SL or ML family name.
    pub fn parse(name: &str) -> Result<Self> {
        if let Ok(f) = name.parse::<SlFamily>() {
            return Ok(Self::sl(f));
        }
        if let Ok(f) = name.parse::<MlFamily>() {
            return Ok(Self::ml(f));
        }
        Err(Error::Validation(format!("unknown classifier `{name}`")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Sl { family, .. } => family.name(),
            ClassifierSpec::Ml { family, .. } => family.name(),
        }
    }

    pub fn is_sl(&self) -> bool {
        matches!(self, ClassifierSpec::Sl { .. })
    }

    pub fn training(&self) -> &TrainingData {
        match self {
            ClassifierSpec::Sl { training, .. } | ClassifierSpec::Ml { training, .. } => training,
        }
    }

    pub fn training_mut(&mut self) -> &mut TrainingData {
        match self {
            ClassifierSpec::Sl { training, .. } | ClassifierSpec::Ml { training, .. } => training,
        }
    }

    pub fn all_default() -> Vec<Self> {
        SlFamily::ALL
            .into_iter()
            .map(Self::sl)
            .chain(MlFamily::ALL.into_iter().map(Self::ml))
            .collect()
    }
}

/// Training signatures per class (sorted by class name).
pub fn training_signatures(
    dataset: &Dataset,
    training: &TrainingData,
    seed_: u64,
) -> Result<Vec<(String, Vec<RcsSignature>)>> {
    dataset
        .class_names()
        .iter()
        .enumerate()
        .map(|(ci, class)| {
            let clean: Vec<&RcsSignature> = dataset.signatures_of(class).collect();
            let sigs = match training {
                TrainingData::Clean => clean.into_iter().cloned().collect(),
                TrainingData::Noisy {
                    copies_per_class,
                    snr_grid_db,
                } => {
                    if snr_grid_db.is_empty() || *copies_per_class == 0 {
                        return Err(Error::Validation(
                            "noisy training needs copies and an SNR grid".into(),
                        ));
                    }
                    (0..*copies_per_class)
                        .map(|j| {
                            let spec = NoiseSpec::new(
                                snr_grid_db[j % snr_grid_db.len()],
                                seed::derive(seed_, &[ci as u64, j as u64]),
                            )?;
                            add_noise(clean[j % clean.len()], &spec)
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            Ok((class.clone(), sigs))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Sl(SlModel),
    Ml(MlClassifier),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub format_version: u32,
    pub spec: ClassifierSpec,
    pub classes: Vec<String>,
    pub model: TrainedModel,
}

pub fn train_classifier(
    dataset: &Dataset,
    spec: &ClassifierSpec,
    seed_: u64,
) -> Result<TrainedClassifier> {
    let data_seed = seed::derive_label(seed_, "training-noise");
    let fit_seed = seed::derive_label(seed_, "fit");
    let per_class = training_signatures(dataset, spec.training(), data_seed)?;
    let model = match spec {
        ClassifierSpec::Sl {
            family, options, ..
        } => {
            let samples: Vec<(String, Vec<f64>)> = per_class
                .iter()
                .map(|(c, sigs)| {
                    (
                        c.clone(),
                        sigs.iter()
                            .flat_map(|s| s.rcs_m2().iter().copied())
                            .collect(),
                    )
                })
                .collect();
            let opts = SlOptions {
                seed: fit_seed,
                ..*options
            };
            TrainedModel::Sl(train_sl_samples(&samples, *family, &opts)?)
        }
        ClassifierSpec::Ml {
            family,
            hyperparams,
            scale,
            include_minimum,
            ..
        } => {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (c, sigs) in &per_class {
                for s in sigs {
                    x.push(extract_features(s, *scale)?.to_vec(*include_minimum));
                    y.push(c.clone());
                }
            }
            TrainedModel::Ml(ml_classifiers::train(
                *family,
                &x,
                &y,
                hyperparams,
                fit_seed,
            )?)
        }
    };
    Ok(TrainedClassifier {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        classes: dataset.class_names().to_vec(),
        model,
    })
}

/// Wall-clock split of one classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyTiming {
    pub extraction: Duration,
    pub prediction: Duration,
}

impl TrainedClassifier {
    pub fn classify(&self, sig: &RcsSignature) -> Result<Prediction> {
        self.classify_timed(sig).map(|(p, _)| p)
    }

    /// Feature extraction (ML only) and prediction timed separately.
    pub fn classify_timed(&self, sig: &RcsSignature) -> Result<(Prediction, ClassifyTiming)> {
        match (&self.model, &self.spec) {
            (TrainedModel::Sl(m), _) => {
                let t = Instant::now();
                let p = classify_samples(m, sig.rcs_m2())?;
                Ok((
                    p,
                    ClassifyTiming {
                        extraction: Duration::ZERO,
                        prediction: t.elapsed(),
                    },
                ))
            }
            (
                TrainedModel::Ml(m),
                ClassifierSpec::Ml {
                    scale,
                    include_minimum,
                    ..
                },
            ) => {
                let t0 = Instant::now();
                let fv = extract_features(sig, *scale)?.to_vec(*include_minimum);
                let t1 = Instant::now();
                let p = m.predict(&fv)?;
                Ok((
                    p,
                    ClassifyTiming {
                        extraction: t1 - t0,
                        prediction: t1.elapsed(),
                    },
                ))
            }
            _ => Err(Error::InvalidModel(
                "model kind does not match its spec".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("not JSON: {e}")))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(MODEL_FORMAT_VERSION as u64) {
            return Err(Error::InvalidModel(format!(
                "unsupported model format version {version:?} (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidModel(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
