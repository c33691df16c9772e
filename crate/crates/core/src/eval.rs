//! Cross-validation protocols, the experiment loop and accuracy metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::sample_seed;
use crate::error::{Error, Result};
use crate::pipeline::{fit_pipeline, PipelineConfig};
use crate::pose::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Split,
    Loao,
    KfoldPerAction,
}

/// Which sample label the `split` lists refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKey {
    #[default]
    Actor,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub folds: usize,
    pub split_key: SplitKey,
    pub train: Vec<String>,
    /// Empty: carve validation out of the training group.
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            kind: ProtocolKind::KfoldPerAction,
            folds: 10,
            split_key: SplitKey::Actor,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }
}

impl Protocol {
    pub fn kfold(folds: usize) -> Self {
        Protocol {
            folds,
            ..Default::default()
        }
    }

    pub fn loao() -> Self {
        Protocol {
            kind: ProtocolKind::Loao,
            ..Default::default()
        }
    }

    pub fn split(train: &[&str], validation: &[&str], test: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Protocol {
            kind: ProtocolKind::Split,
            train: own(train),
            validation: own(validation),
            test: own(test),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProtocolKind::KfoldPerAction if self.folds < 2 => Err(Error::Config(format!(
                "kfold needs at least 2 folds, got {}",
                self.folds
            ))),
            ProtocolKind::Split => {
                if self.train.is_empty() || self.test.is_empty() {
                    return Err(Error::Config("split protocol needs train and test lists".into()));
                }
                let mut seen = BTreeSet::new();
                for id in self.train.iter().chain(&self.validation).chain(&self.test) {
                    if !seen.insert(id) {
                        return Err(Error::Config(format!("`{id}` appears in more than one split list")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Sample indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Distinct action labels in order of first appearance.
pub fn action_list(samples: &[Sample]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.action) {
            out.push(s.action.clone());
        }
    }
    out
}

fn by_action(samples: &[Sample], ids: &[usize]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in ids {
        groups.entry(samples[i].action.clone()).or_default().push(i);
    }
    groups
}

/// Hold out `fraction` of each label group (rounded, at least one when the
/// group has two or more members) for validation. `labels[i]` is the class
/// of item `i`; only `ids` take part.
pub fn stratified_split(labels: &[&str], ids: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in ids {
        groups.entry(labels[i]).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (k, (_, mut group)) in groups.into_iter().enumerate() {
        group.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(seed, k)));
        let n = group.len();
        let take = if n < 2 {
            0
        } else {
            ((fraction * n as f64).round() as usize).clamp(1, n - 1)
        };
        val.extend_from_slice(&group[..take]);
        train.extend_from_slice(&group[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn stratified_validation(samples: &[Sample], ids: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let labels: Vec<&str> = samples.iter().map(|s| s.action.as_str()).collect();
    stratified_split(&labels, ids, fraction, seed)
}

fn key(s: &Sample, k: SplitKey) -> &str {
    match k {
        SplitKey::Actor => &s.actor,
        SplitKey::Dataset => &s.dataset,
    }
}

/// Train/validation/test indices per fold.
pub fn make_folds(samples: &[Sample], protocol: &Protocol, val_fraction: f64, seed: u64) -> Result<Vec<Fold>> {
    protocol.validate()?;
    let all: Vec<usize> = (0..samples.len()).collect();
    let carve = |test: Vec<usize>, f: usize| {
        let rest: Vec<usize> = all.iter().copied().filter(|i| test.binary_search(i).is_err()).collect();
        let (train, validation) = stratified_validation(samples, &rest, val_fraction, sample_seed(seed, 7919 + f));
        Fold {
            train,
            validation,
            test,
        }
    };
    match protocol.kind {
        ProtocolKind::KfoldPerAction => {
            let k = protocol.folds;
            let mut parts = vec![Vec::new(); k];
            for (a, (action, mut group)) in by_action(samples, &all).into_iter().enumerate() {
                if group.len() < k {
                    return Err(Error::TooFewSamples(format!(
                        "action `{action}` has {} samples for {k} folds",
                        group.len()
                    )));
                }
                group.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(seed, a)));
                let n = group.len();
                for (f, part) in parts.iter_mut().enumerate() {
                    part.extend_from_slice(&group[f * n / k..(f + 1) * n / k]);
                }
            }
            Ok(parts
                .into_iter()
                .enumerate()
                .map(|(f, mut test)| {
                    test.sort_unstable();
                    carve(test, f)
                })
                .collect())
        }
        ProtocolKind::Loao => {
            let actors: BTreeSet<&str> = samples.iter().map(|s| s.actor.as_str()).collect();
            if actors.len() < 2 {
                return Err(Error::TooFewSamples(
                    "leave-one-actor-out needs at least 2 actors".into(),
                ));
            }
            Ok(actors
                .into_iter()
                .enumerate()
                .map(|(f, actor)| {
                    let test = all.iter().copied().filter(|&i| samples[i].actor == actor).collect();
                    carve(test, f)
                })
                .collect())
        }
        ProtocolKind::Split => {
            let pick = |list: &[String]| -> Vec<usize> {
                all.iter()
                    .copied()
                    .filter(|&i| list.iter().any(|l| l == key(&samples[i], protocol.split_key)))
                    .collect()
            };
            let test = pick(&protocol.test);
            let train = pick(&protocol.train);
            if train.is_empty() || test.is_empty() {
                return Err(Error::TooFewSamples(
                    "split lists select no training or no test samples".into(),
                ));
            }
            let fold = if protocol.validation.is_empty() {
                let (train, validation) = stratified_validation(samples, &train, val_fraction, seed);
                Fold {
                    train,
                    validation,
                    test,
                }
            } else {
                Fold {
                    train,
                    validation: pick(&protocol.validation),
                    test,
                }
            };
            Ok(vec![fold])
        }
    }
}

/// `(absolute, relative)`: trace over total, and mean recall over the
/// classes that occur in the truth.
pub fn accuracies(confusion: &[Vec<usize>]) -> (f64, f64) {
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    let recalls: Vec<f64> = confusion
        .iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[i] as f64 / n as f64)
        })
        .collect();
    let abs = if total == 0 { 0.0 } else { trace as f64 / total as f64 };
    let rel = if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    };
    (abs, rel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Test samples left out: class unseen in training, or unusable clip.
    pub dropped: usize,
    pub correct: usize,
    pub absolute_accuracy: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub actions: Vec<String>,
    /// Rows are the true class.
    pub confusion: Vec<Vec<usize>>,
    pub absolute_accuracy: f64,
    pub relative_accuracy: f64,
    pub folds: Vec<FoldReport>,
    pub protocol: Protocol,
    pub seed: u64,
    pub config: PipelineConfig,
}

impl EvalReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    /// Confusion matrix as an aligned text table.
    pub fn render_confusion(&self) -> String {
        let w = self
            .actions
            .iter()
            .map(|a| a.len())
            .chain(self.confusion.iter().flatten().map(|n| n.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(5);
        let mut out = format!("{:>w$}", "truth");
        for a in &self.actions {
            write!(out, " {a:>w$}").unwrap();
        }
        out.push('\n');
        for (a, row) in self.actions.iter().zip(&self.confusion) {
            write!(out, "{a:>w$}").unwrap();
            for n in row {
                write!(out, " {n:>w$}").unwrap();
            }
            out.push('\n');
        }
        writeln!(
            out,
            "absolute accuracy {:.4}  relative accuracy {:.4}",
            self.absolute_accuracy, self.relative_accuracy
        )
        .unwrap();
        out
    }
}

fn run_fold(
    samples: &[Sample],
    actions: &[String],
    fold: &Fold,
    f: usize,
    cfg: &PipelineConfig,
    seed: u64,
    keep: Option<&Path>,
) -> Result<(FoldReport, Vec<Vec<usize>>)> {
    let pick = |ids: &[usize]| ids.iter().map(|&i| &samples[i]).collect::<Vec<_>>();
    let train_set = pick(&fold.train);
    let val_set = pick(&fold.validation);
    let seen: Vec<String> = actions
        .iter()
        .filter(|a| train_set.iter().any(|s| &s.action == *a))
        .cloned()
        .collect();
    let val_set: Vec<&Sample> = val_set.into_iter().filter(|s| seen.contains(&s.action)).collect();
    if val_set.is_empty() {
        return Err(Error::TooFewSamples("validation set is empty".into()));
    }
    let fold_seed = sample_seed(seed, f);
    let mut fold_cfg = cfg.clone();
    fold_cfg.augment.rng_seed = sample_seed(fold_seed, 1);
    fold_cfg.som.rng_seed = sample_seed(fold_seed, 2);
    fold_cfg.classifier.rng_seed = sample_seed(fold_seed, 3);
    let (fitted, history) = fit_pipeline(&train_set, &val_set, &seen, &fold_cfg)?;
    if let Some(dir) = keep {
        fitted.save(&dir.join(format!("fold-{f:02}")))?;
    }

    let mut confusion = vec![vec![0usize; actions.len()]; actions.len()];
    let mut dropped = 0;
    for &i in &fold.test {
        let s = &samples[i];
        let Some(truth) = actions.iter().position(|a| a == &s.action) else {
            dropped += 1;
            continue;
        };
        if !seen.contains(&s.action) {
            warn!(
                "fold {f}: dropping test clip of `{}`, class absent from training",
                s.action
            );
            dropped += 1;
            continue;
        }
        match fitted.predict(s) {
            Ok((k, _)) => {
                let pred = actions.iter().position(|a| a == &seen[k]).unwrap();
                confusion[truth][pred] += 1;
            }
            Err(e) if e.category() == crate::error::ErrorCategory::Data => {
                warn!("fold {f}: dropping unusable test clip of actor {}: {e}", s.actor);
                dropped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let test: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..actions.len()).map(|k| confusion[k][k]).sum();
    let report = FoldReport {
        fold: f,
        train: fold.train.len(),
        validation: val_set.len(),
        test,
        dropped,
        correct,
        absolute_accuracy: if test == 0 { 0.0 } else { correct as f64 / test as f64 },
        epochs: history.epochs.len(),
    };
    info!(
        "fold {f}: {correct}/{test} correct after {} epochs",
        history.epochs.len()
    );
    Ok((report, confusion))
}

/// Run every fold (in parallel when cores allow) and pool the confusion
/// matrices. Fitted models are written to `keep/fold-NN/` when given.
pub fn run_experiment_with(
    samples: &[Sample],
    protocol: &Protocol,
    cfg: &PipelineConfig,
    seed: u64,
    keep: Option<&Path>,
) -> Result<EvalReport> {
    cfg.validate()?;
    let actions = action_list(samples);
    if actions.len() < 2 {
        return Err(Error::TooFewSamples("need at least two action classes".into()));
    }
    let folds = make_folds(samples, protocol, cfg.validation_fraction, seed)?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(folds.len());
    let mut results: Vec<Option<Result<(FoldReport, Vec<Vec<usize>>)>>> = (0..folds.len()).map(|_| None).collect();
    for chunk_start in (0..folds.len()).step_by(workers.max(1)) {
        let end = (chunk_start + workers).min(folds.len());
        std::thread::scope(|scope| {
            let handles: Vec<_> = (chunk_start..end)
                .map(|f| {
                    let (actions, fold) = (&actions, &folds[f]);
                    scope.spawn(move || run_fold(samples, actions, fold, f, cfg, seed, keep))
                })
                .collect();
            for (f, h) in (chunk_start..end).zip(handles) {
                results[f] = Some(h.join().expect("fold worker panicked"));
            }
        });
    }
    let mut confusion = vec![vec![0usize; actions.len()]; actions.len()];
    let mut reports = Vec::with_capacity(folds.len());
    for (f, r) in results.into_iter().enumerate() {
        let (report, c) = r.expect("fold ran").map_err(|e| Error::Fold {
            fold: f,
            source: Box::new(e),
        })?;
        for (row, crow) in confusion.iter_mut().zip(&c) {
            for (x, y) in row.iter_mut().zip(crow) {
                *x += y;
            }
        }
        reports.push(report);
    }
    let (absolute_accuracy, relative_accuracy) = accuracies(&confusion);
    Ok(EvalReport {
        actions,
        confusion,
        absolute_accuracy,
        relative_accuracy,
        folds: reports,
        protocol: protocol.clone(),
        seed,
        config: cfg.clone(),
    })
}

pub fn run_experiment(samples: &[Sample], protocol: &Protocol, cfg: &PipelineConfig, seed: u64) -> Result<EvalReport> {
    run_experiment_with(samples, protocol, cfg, seed, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{Pose, Viewpoint};

    fn sample(action: &str, actor: &str) -> Sample {
        Sample {
            poses: vec![Pose::empty()],
            action: action.into(),
            viewpoint: Viewpoint::Front,
            actor: actor.into(),
            dataset: "d".into(),
        }
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        let c = vec![vec![5, 0], vec![5, 0]];
        assert_eq!(accuracies(&c), (0.5, 0.5));
    }

    #[test]
    fn majority_predictor_on_imbalanced_classes() {
        let c = vec![vec![149, 0], vec![8, 0]];
        let (abs, rel) = accuracies(&c);
        assert!((abs - 149.0 / 157.0).abs() < 1e-12);
        assert_eq!(rel, 0.5);
    }

    #[test]
    fn kfold_partitions_every_action_evenly() {
        let samples: Vec<Sample> = (0..40)
            .map(|i| sample(if i % 2 == 0 { "a" } else { "b" }, &(i % 7).to_string()))
            .collect();
        let folds = make_folds(&samples, &Protocol::kfold(10), 0.15, 1).unwrap();
        assert_eq!(folds.len(), 10);
        let mut tested = vec![0; 40];
        for f in &folds {
            assert_eq!(f.test.iter().filter(|&&i| samples[i].action == "a").count(), 2);
            for &i in &f.test {
                tested[i] += 1;
            }
            let mut all: Vec<usize> = f.train.iter().chain(&f.validation).chain(&f.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..40).collect::<Vec<_>>());
            assert!(!f.validation.is_empty());
        }
        assert!(tested.iter().all(|&n| n == 1));
        assert_eq!(folds, make_folds(&samples, &Protocol::kfold(10), 0.15, 1).unwrap());
    }

    #[test]
    fn kfold_needs_enough_samples() {
        let samples: Vec<Sample> = (0..9).map(|i| sample("a", &i.to_string())).collect();
        assert!(matches!(
            make_folds(&samples, &Protocol::kfold(10), 0.15, 0),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn loao_has_one_fold_per_actor() {
        let samples: Vec<Sample> = (0..75).map(|i| sample("a", &format!("{}", i % 25))).collect();
        let folds = make_folds(&samples, &Protocol::loao(), 0.15, 0).unwrap();
        assert_eq!(folds.len(), 25);
        for f in &folds {
            let actor = &samples[f.test[0]].actor;
            assert!(f.test.iter().all(|&i| &samples[i].actor == actor));
            assert!(f.train.iter().chain(&f.validation).all(|&i| &samples[i].actor != actor));
        }
    }

    #[test]
    fn fixed_split_lists() {
        let samples: Vec<Sample> = (1..=10).map(|a| sample("a", &a.to_string())).collect();
        let p = Protocol::split(&["1", "2", "3", "4"], &["5", "6"], &["7", "8", "9", "10"]);
        let folds = make_folds(&samples, &p, 0.15, 0).unwrap();
        assert_eq!(folds[0].train, vec![0, 1, 2, 3]);
        assert_eq!(folds[0].validation, vec![4, 5]);
        assert_eq!(folds[0].test, vec![6, 7, 8, 9]);
        let overlapping = Protocol::split(&["1"], &[], &["1"]);
        assert!(matches!(overlapping.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn confusion_table_renders() {
        let report = EvalReport {
            actions: vec!["a".into(), "bb".into()],
            confusion: vec![vec![3, 1], vec![0, 4]],
            absolute_accuracy: 0.875,
            relative_accuracy: 0.875,
            folds: Vec::new(),
            protocol: Protocol::default(),
            seed: 0,
            config: PipelineConfig::default(),
        };
        let table = report.render_confusion();
        assert!(table.contains("    a     3     1"));
        let parsed: EvalReport = toml::from_str(&report.to_toml()).unwrap();
        assert_eq!(parsed, report);
    }
}
