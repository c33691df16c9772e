//! Fitting and applying the whole chain on one training set: missing-data
//! treatment, normalization, augmentation, libraries, embedding, classifier.

use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentConfig};
use crate::classifier::{channels_to_array, train, ClassifierConfig, ClassifierModel, TrainHistory};
use crate::embed::{baseline_channels, embed_sequence, EmbeddingChannels, Mode};
use crate::error::{Error, Result};
use crate::library::ModelBundle;
use crate::pose::Sample;
use crate::preprocess::preprocess;
use crate::records::LabeledSequence;
use crate::som::SomConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub augment: AugmentConfig,
    pub som: SomConfig,
    /// `channels` and `classes` are filled in from the data.
    pub classifier: ClassifierConfig,
    /// Share of each training fold held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Advanced,
            augment: AugmentConfig::default(),
            som: SomConfig::default(),
            classifier: ClassifierConfig::default(),
            validation_fraction: 0.15,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        self.som.validate()?;
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

pub fn to_labeled(sample: &Sample) -> Result<LabeledSequence> {
    Ok(LabeledSequence {
        seq: preprocess(sample)?,
        action: sample.action.clone(),
        viewpoint: sample.viewpoint,
        actor: sample.actor.clone(),
        dataset: sample.dataset.clone(),
    })
}

fn label_of(action: &str, actions: &[String]) -> Result<usize> {
    actions
        .iter()
        .position(|a| a == action)
        .ok_or_else(|| Error::UnknownLabel {
            kind: "action",
            label: action.to_string(),
        })
}

/// Fitted stages needed to classify a raw sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub mode: Mode,
    pub bundle: Option<ModelBundle>,
    pub classifier: ClassifierModel,
}

impl FittedPipeline {
    pub fn actions(&self) -> &[String] {
        &self.classifier.class_names
    }

    pub fn channels(&self, sample: &Sample) -> Result<EmbeddingChannels> {
        channels_for(sample, self.mode, self.bundle.as_ref())
    }

    pub fn predict(&self, sample: &Sample) -> Result<(usize, Vec<f64>)> {
        let ch = self.channels(sample)?;
        self.classifier.predict(&channels_to_array(&ch))
    }

    /// `bundle.json` (advanced mode) and `classifier.bin` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(b) = &self.bundle {
            b.save(&dir.join("bundle.json"))?;
        }
        self.classifier.save(&dir.join("classifier.bin"))
    }
}

/// Classifier input channels of one raw sample.
pub fn channels_for(sample: &Sample, mode: Mode, bundle: Option<&ModelBundle>) -> Result<EmbeddingChannels> {
    match mode {
        Mode::Baseline => {
            if sample.poses.is_empty() {
                return Err(Error::EmptySequence);
            }
            Ok(baseline_channels(sample))
        }
        _ => embed_sequence(&to_labeled(sample)?.seq, bundle, mode),
    }
}

fn embed_all(
    recs: &[LabeledSequence],
    mode: Mode,
    bundle: Option<&ModelBundle>,
    actions: &[String],
) -> Result<(Vec<(Array2<f64>, usize)>, Vec<String>)> {
    let mut names = Vec::new();
    let data = recs
        .iter()
        .map(|r| {
            let ch = embed_sequence(&r.seq, bundle, mode)?;
            if names.is_empty() {
                names = ch.names.clone();
            }
            Ok((channels_to_array(&ch), label_of(&r.action, actions)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((data, names))
}

/// Preprocess, dropping (with a warning) samples that do not survive.
pub fn labeled_or_skip(samples: &[&Sample]) -> Vec<LabeledSequence> {
    samples
        .iter()
        .filter_map(|s| match to_labeled(s) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("skipping {} clip of actor {}: {e}", s.action, s.actor);
                None
            }
        })
        .collect()
}

/// Fit every stage on `train` only; `val` drives early stopping. Baseline
/// mode uses raw coordinates and no augmentation.
pub fn fit_pipeline(
    train_set: &[&Sample],
    val_set: &[&Sample],
    actions: &[String],
    cfg: &PipelineConfig,
) -> Result<(FittedPipeline, TrainHistory)> {
    cfg.validate()?;
    let clf_cfg = ClassifierConfig {
        channels: cfg.mode.channel_count(actions.len()),
        classes: actions.len(),
        ..cfg.classifier.clone()
    };
    let (train_data, val_data, bundle, names) = match cfg.mode {
        Mode::Baseline => {
            let prep = |set: &[&Sample]| -> Result<Vec<(Array2<f64>, usize)>> {
                set.iter()
                    .filter(|s| !s.poses.is_empty())
                    .map(|s| Ok((channels_to_array(&baseline_channels(s)), label_of(&s.action, actions)?)))
                    .collect()
            };
            let names = train_set
                .first()
                .map(|s| baseline_channels(s).names)
                .unwrap_or_default();
            (prep(train_set)?, prep(val_set)?, None, names)
        }
        mode => {
            let train_recs = augment(&labeled_or_skip(train_set), &cfg.augment)?;
            let val_recs = labeled_or_skip(val_set);
            let bundle = match mode {
                Mode::Advanced => Some(ModelBundle::fit(&train_recs, actions, &cfg.som)?),
                _ => None,
            };
            let (train_data, names) = embed_all(&train_recs, mode, bundle.as_ref(), actions)?;
            let (val_data, _) = embed_all(&val_recs, mode, bundle.as_ref(), actions)?;
            (train_data, val_data, bundle, names)
        }
    };
    let (mut classifier, history) = train(&clf_cfg, &train_data, &val_data)?;
    classifier.class_names = actions.to_vec();
    classifier.channel_names = names;
    Ok((
        FittedPipeline {
            mode: cfg.mode,
            bundle,
            classifier,
        },
        history,
    ))
}
