use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use posehar::augment::{augment, sample_seed, AugmentConfig};
use posehar::classifier::{channels_to_array, train, ClassifierConfig, ClassifierModel};
use posehar::embed::{embed_sequence, Mode};
use posehar::error::{Error, ErrorCategory, Result};
use posehar::eval::{run_experiment_with, stratified_split, Protocol, ProtocolKind};
use posehar::ingest::{load_dataset, DatasetManifest, ManifestEntry};
use posehar::library::ModelBundle;
use posehar::pipeline::{channels_for, FittedPipeline, PipelineConfig};
use posehar::pose::{Sample, Viewpoint};
use posehar::preprocess::{normalize, treat_missing_with_report, TreatmentReport};
use posehar::records::{self, LabeledSequence, LabeledSeries};
use posehar::som::SomConfig;
use posehar::synth::{generate_corpus_with, save_corpus, Archetype, CorpusConfig};

/// Shared run configuration (TOML). Every section is optional; command-line
/// flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    mode: Mode,
    seed: u64,
    validation_fraction: f64,
    augment: AugmentConfig,
    som: SomConfig,
    classifier: ClassifierConfig,
    protocol: Protocol,
    synth: CorpusConfig,
    paths: Paths,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Paths {
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        RunConfig {
            mode: p.mode,
            seed: 0,
            validation_fraction: p.validation_fraction,
            augment: p.augment,
            som: p.som,
            classifier: p.classifier,
            protocol: Protocol::default(),
            synth: CorpusConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Stage seeds derive from the run seed unless set in their section.
    fn pipeline(&self) -> PipelineConfig {
        let mut augment = self.augment.clone();
        let mut som = self.som.clone();
        let mut classifier = self.classifier.clone();
        if augment.rng_seed == 0 {
            augment.rng_seed = sample_seed(self.seed, 1);
        }
        if som.rng_seed == 0 {
            som.rng_seed = sample_seed(self.seed, 2);
        }
        if classifier.rng_seed == 0 {
            classifier.rng_seed = sample_seed(self.seed, 3);
        }
        PipelineConfig {
            mode: self.mode,
            augment,
            som,
            classifier,
            validation_fraction: self.validation_fraction,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "posehar", version, about = "Pose-sequence action recognition")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct InOut {
    /// Input directory of records.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a dataset manifest (detector frames or records) into sequence records.
    Ingest {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labelled corpus.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        per_class: Option<usize>,
        /// Comma-separated archetype names.
        #[arg(long, value_delimiter = ',')]
        archetypes: Option<Vec<String>>,
        /// Comma-separated viewpoint names.
        #[arg(long, value_delimiter = ',')]
        viewpoints: Option<Vec<String>>,
    },
    /// Missing-data treatment and normalization of every manifest entry.
    Preprocess {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flip and noise normalized records.
    Augment {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        z: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        flip: Option<bool>,
    },
    /// Fit PCA and SOM pose libraries on normalized records.
    BuildLibraries {
        #[arg(long)]
        input: PathBuf,
        /// Bundle file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn normalized records into classifier input series.
    Embed {
        #[command(flatten)]
        io: InOut,
        /// Required in advanced mode.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Train the classifier on series records.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify sequence records with a model directory.
    Predict {
        /// Directory holding classifier.bin (and bundle.json in advanced mode).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Sequence records (.phs).
        #[arg(required = true)]
        clips: Vec<PathBuf>,
    },
    /// Cross-validated experiment on a manifest.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        /// split, loao or kfold
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<ProtocolKind>,
        #[arg(long)]
        folds: Option<usize>,
        /// Keep the fitted model of every fold under <out>/models.
        #[arg(long)]
        keep_models: bool,
    },
    /// Embedding and inference latency on a manifest.
    Bench {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn parse_protocol(s: &str) -> std::result::Result<ProtocolKind, String> {
    match s {
        "split" => Ok(ProtocolKind::Split),
        "loao" => Ok(ProtocolKind::Loao),
        "kfold" | "kfold-per-action" => Ok(ProtocolKind::KfoldPerAction),
        other => Err(format!("unknown protocol `{other}` (split, loao, kfold)")),
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required (or set paths.{name} in the config)")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Files in `dir` with extension `ext`, sorted by name.
fn list_records(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let io = |e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no .{ext} records in {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Distinct actions in order of first appearance.
fn actions_of<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in labels {
        if !out.iter().any(|x| x == a) {
            out.push(a.to_string());
        }
    }
    out
}

fn cmd_ingest(cfg: &RunConfig, manifest: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let manifest_path = required(manifest, &cfg.paths.manifest, "manifest")?;
    let out = required(out, &cfg.paths.out, "out")?;
    let manifest = DatasetManifest::from_path(&manifest_path)?;
    let samples = load_dataset(&manifest)?;
    let mut written = DatasetManifest {
        entries: Vec::new(),
        base_dir: PathBuf::new(),
        ..manifest.clone()
    };
    create_dir(&out.join("clips"))?;
    for (i, (s, e)) in samples.iter().zip(&manifest.entries).enumerate() {
        let rel = PathBuf::from(format!("clips/{i:05}.phs"));
        records::write_sample(&out.join(&rel), s)?;
        written.entries.push(ManifestEntry { path: rel, ..e.clone() });
    }
    written.save(&out.join("manifest.toml"))?;
    println!("ingested {} clips into {}", samples.len(), out.display());
    Ok(())
}

fn cmd_synth(
    cfg: &RunConfig,
    out: Option<PathBuf>,
    per_class: Option<usize>,
    archetypes: Option<Vec<String>>,
    viewpoints: Option<Vec<String>>,
) -> Result<()> {
    let out = required(out, &cfg.paths.out, "out")?;
    let mut corpus = cfg.synth.clone();
    corpus.seed = cfg.seed;
    if let Some(n) = per_class {
        corpus.n_per_class = n;
    }
    if let Some(names) = archetypes {
        corpus.archetypes = names.iter().map(|n| n.parse::<Archetype>()).collect::<Result<_>>()?;
    }
    if let Some(names) = viewpoints {
        corpus.viewpoints = names.iter().map(|n| n.parse::<Viewpoint>()).collect::<Result<_>>()?;
    }
    let (samples, manifest) = generate_corpus_with(&corpus)?;
    let path = save_corpus(&out, &samples, &manifest)?;
    println!("wrote {} clips, manifest {}", samples.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct PreprocessEntry {
    clip: String,
    output: Option<String>,
    kept_frames: usize,
    #[serde(flatten)]
    report: TreatmentReport,
    error: Option<String>,
}

#[derive(Serialize)]
struct PreprocessReport {
    entry: Vec<PreprocessEntry>,
}

fn cmd_preprocess(cfg: &RunConfig, manifest: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let manifest_path = required(manifest, &cfg.paths.manifest, "manifest")?;
    let out = required(out, &cfg.paths.out, "out")?;
    let manifest = DatasetManifest::from_path(&manifest_path)?;
    let samples = load_dataset(&manifest)?;
    create_dir(&out)?;
    let mut report = PreprocessReport { entry: Vec::new() };
    let mut kept = 0;
    for (i, (s, e)) in samples.iter().zip(&manifest.entries).enumerate() {
        let name = format!("{i:05}-{}.phn", stem(&e.path));
        let outcome = treat_missing_with_report(s).and_then(|(clean, rep)| Ok((normalize(&clean)?, rep)));
        let entry = match outcome {
            Ok((seq, rep)) => {
                let rec = LabeledSequence {
                    seq,
                    action: s.action.clone(),
                    viewpoint: s.viewpoint,
                    actor: s.actor.clone(),
                    dataset: s.dataset.clone(),
                };
                records::write_labeled(&out.join(&name), &rec)?;
                kept += 1;
                PreprocessEntry {
                    clip: e.path.display().to_string(),
                    output: Some(name),
                    kept_frames: rec.seq.len(),
                    report: rep,
                    error: None,
                }
            }
            Err(err) if err.category() == ErrorCategory::Data => {
                warn!("{}: {err}", e.path.display());
                PreprocessEntry {
                    clip: e.path.display().to_string(),
                    output: None,
                    kept_frames: 0,
                    report: TreatmentReport {
                        input_frames: s.len(),
                        ..Default::default()
                    },
                    error: Some(err.to_string()),
                }
            }
            Err(err) => return Err(err),
        };
        report.entry.push(entry);
    }
    let text = toml::to_string(&report).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&out.join("report.toml"), &text)?;
    println!("normalized {kept} of {} clips into {}", samples.len(), out.display());
    if kept == 0 {
        return Err(Error::InsufficientData("no clip survived preprocessing".into()));
    }
    Ok(())
}

fn read_normalized(dir: &Path) -> Result<Vec<(String, LabeledSequence)>> {
    list_records(dir, "phn")?
        .into_iter()
        .map(|p| Ok((stem(&p), records::read_labeled(&p)?)))
        .collect()
}

fn cmd_augment(cfg: &RunConfig, io: InOut, z: Option<usize>, sigma: Option<f64>, flip: Option<bool>) -> Result<()> {
    let mut acfg = cfg.pipeline().augment;
    if let Some(z) = z {
        acfg.z = z;
    }
    if let Some(s) = sigma {
        acfg.sigma = s;
    }
    if let Some(f) = flip {
        acfg.flip = f;
    }
    let inputs = read_normalized(&io.input)?;
    let recs: Vec<LabeledSequence> = inputs.iter().map(|(_, r)| r.clone()).collect();
    let out = augment(&recs, &acfg)?;
    create_dir(&io.out)?;
    for (i, r) in out.iter().enumerate() {
        records::write_labeled(&io.out.join(format!("{i:06}.phn")), r)?;
    }
    println!(
        "{} records -> {} records in {}",
        recs.len(),
        out.len(),
        io.out.display()
    );
    Ok(())
}

fn cmd_build_libraries(cfg: &RunConfig, input: PathBuf, out: PathBuf) -> Result<()> {
    let recs: Vec<LabeledSequence> = read_normalized(&input)?.into_iter().map(|(_, r)| r).collect();
    let actions = actions_of(recs.iter().map(|r| r.action.as_str()));
    let bundle = ModelBundle::fit(&recs, &actions, &cfg.pipeline().som)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    bundle.save(&out)?;
    let protos: usize = bundle
        .spatial
        .iter()
        .chain(&bundle.temporal)
        .map(|l| l.prototypes.len())
        .sum();
    println!(
        "{} actions, {protos} prototypes, bundle {}",
        actions.len(),
        out.display()
    );
    Ok(())
}

fn cmd_embed(cfg: &RunConfig, io: InOut, bundle: Option<PathBuf>, mode: Option<Mode>) -> Result<()> {
    let mode = mode.unwrap_or(cfg.mode);
    if mode == Mode::Baseline {
        return Err(Error::Config(
            "baseline channels come from raw clips; embed works on normalized records".into(),
        ));
    }
    let bundle = match (mode, bundle) {
        (Mode::Advanced, Some(p)) => Some(ModelBundle::load(&p)?),
        (Mode::Advanced, None) => return Err(Error::Config("advanced mode needs --bundle".into())),
        _ => None,
    };
    let inputs = read_normalized(&io.input)?;
    create_dir(&io.out)?;
    for (name, r) in &inputs {
        let channels = embed_sequence(&r.seq, bundle.as_ref(), mode)?;
        let rec = LabeledSeries {
            channels,
            action: r.action.clone(),
            viewpoint: r.viewpoint,
            actor: r.actor.clone(),
            dataset: r.dataset.clone(),
        };
        records::write_series(&io.out.join(format!("{name}.phe")), &rec)?;
    }
    println!(
        "embedded {} records ({mode} mode) into {}",
        inputs.len(),
        io.out.display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, input: PathBuf, out: PathBuf) -> Result<()> {
    let series: Vec<LabeledSeries> = list_records(&input, "phe")?
        .iter()
        .map(|p| records::read_series(p))
        .collect::<Result<_>>()?;
    let actions = actions_of(series.iter().map(|s| s.action.as_str()));
    if actions.len() < 2 {
        return Err(Error::TooFewSamples("need at least two action classes".into()));
    }
    let names = series[0].channels.names.clone();
    if let Some(bad) = series.iter().find(|s| s.channels.names != names) {
        return Err(Error::ShapeMismatch(format!(
            "clip of actor {} has different channels from the first record",
            bad.actor
        )));
    }
    let labels: Vec<&str> = series.iter().map(|s| s.action.as_str()).collect();
    let all: Vec<usize> = (0..series.len()).collect();
    let (train_ids, val_ids) = stratified_split(&labels, &all, cfg.validation_fraction, sample_seed(cfg.seed, 4));
    let data = |ids: &[usize]| -> Vec<_> {
        ids.iter()
            .map(|&i| {
                let y = actions.iter().position(|a| a == labels[i]).unwrap();
                (channels_to_array(&series[i].channels), y)
            })
            .collect()
    };
    let ccfg = ClassifierConfig {
        channels: names.len(),
        classes: actions.len(),
        ..cfg.pipeline().classifier
    };
    let (mut model, history) = train(&ccfg, &data(&train_ids), &data(&val_ids))?;
    model.class_names = actions;
    model.channel_names = names;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    model.save(&out)?;
    let best = &history.epochs[history.best_epoch];
    println!(
        "trained {} epochs (best {}: val accuracy {:.3}, val loss {:.4}), model {}",
        history.epochs.len(),
        history.best_epoch,
        best.val_accuracy,
        best.val_loss,
        out.display()
    );
    Ok(())
}

/// Mode follows from the classifier's channel count.
fn load_pipeline(dir: &Path) -> Result<FittedPipeline> {
    let classifier = ClassifierModel::load(&dir.join("classifier.bin"))?;
    let actions = classifier.class_names.len();
    let channels = classifier.config.channels;
    let mode = [Mode::Baseline, Mode::Basic, Mode::Advanced]
        .into_iter()
        .find(|m| m.channel_count(actions) == channels)
        .ok_or_else(|| Error::Format(format!("classifier with {channels} channels matches no mode")))?;
    let bundle = match mode {
        Mode::Advanced => Some(ModelBundle::load(&dir.join("bundle.json"))?),
        _ => None,
    };
    Ok(FittedPipeline {
        mode,
        bundle,
        classifier,
    })
}

fn cmd_predict(cfg: &RunConfig, model: Option<PathBuf>, clips: Vec<PathBuf>) -> Result<()> {
    let dir = required(model, &cfg.paths.model, "model")?;
    let pipeline = load_pipeline(&dir)?;
    for clip in &clips {
        let sample = records::read_sample(clip)?;
        let (k, probs) = pipeline.predict(&sample)?;
        let probs: Vec<String> = pipeline
            .actions()
            .iter()
            .zip(&probs)
            .map(|(a, p)| format!("{a}={p:.4}"))
            .collect();
        println!("{}\t{}\t{}", clip.display(), pipeline.actions()[k], probs.join(" "));
    }
    Ok(())
}

fn load_manifest(cfg: &RunConfig, manifest: Option<PathBuf>) -> Result<Vec<Sample>> {
    let path = required(manifest, &cfg.paths.manifest, "manifest")?;
    load_dataset(&DatasetManifest::from_path(&path)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    cfg: &RunConfig,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    mode: Option<Mode>,
    protocol: Option<ProtocolKind>,
    folds: Option<usize>,
    keep_models: bool,
) -> Result<()> {
    let samples = load_manifest(cfg, manifest)?;
    let out = required(out, &cfg.paths.out, "out")?;
    let mut pcfg = cfg.pipeline();
    if let Some(m) = mode {
        pcfg.mode = m;
    }
    let mut proto = cfg.protocol.clone();
    if let Some(k) = protocol {
        proto.kind = k;
    }
    if let Some(f) = folds {
        proto.folds = f;
    }
    create_dir(&out)?;
    let keep = keep_models.then(|| out.join("models"));
    let report = run_experiment_with(&samples, &proto, &pcfg, cfg.seed, keep.as_deref())?;
    write_text(&out.join("report.toml"), &report.to_toml())?;
    let table = report.render_confusion();
    write_text(&out.join("confusion.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, manifest: Option<PathBuf>, model: Option<PathBuf>) -> Result<()> {
    let samples = load_manifest(cfg, manifest)?;
    let dir = required(model, &cfg.paths.model, "model")?;
    let pipeline = load_pipeline(&dir)?;
    let start = Instant::now();
    let mut inputs = Vec::new();
    let mut frames = 0;
    for s in &samples {
        match channels_for(s, pipeline.mode, pipeline.bundle.as_ref()) {
            Ok(ch) => {
                frames += ch.len;
                inputs.push(channels_to_array(&ch));
            }
            Err(e) if e.category() == ErrorCategory::Data => warn!("skipping clip of actor {}: {e}", s.actor),
            Err(e) => return Err(e),
        }
    }
    let embed_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    for x in &inputs {
        pipeline.classifier.predict(x)?;
    }
    let infer_secs = start.elapsed().as_secs_f64();
    if inputs.is_empty() {
        return Err(Error::InsufficientData("no usable clip to benchmark".into()));
    }
    println!("mode            {}", pipeline.mode);
    println!("clips           {}", inputs.len());
    println!("frames          {frames}");
    println!(
        "embedding       {:.0} frames/s ({:.1} us/frame)",
        frames as f64 / embed_secs,
        1e6 * embed_secs / frames as f64
    );
    println!("inference       {:.2} ms/clip", 1e3 * infer_secs / inputs.len() as f64);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    info!("seed {}", cfg.seed);
    match cli.command {
        Command::Ingest { manifest, out } => cmd_ingest(&cfg, manifest, out),
        Command::Synth {
            out,
            per_class,
            archetypes,
            viewpoints,
        } => cmd_synth(&cfg, out, per_class, archetypes, viewpoints),
        Command::Preprocess { manifest, out } => cmd_preprocess(&cfg, manifest, out),
        Command::Augment { io, z, sigma, flip } => cmd_augment(&cfg, io, z, sigma, flip),
        Command::BuildLibraries { input, out } => cmd_build_libraries(&cfg, input, out),
        Command::Embed { io, bundle, mode } => cmd_embed(&cfg, io, bundle, mode),
        Command::Train { input, out } => cmd_train(&cfg, input, out),
        Command::Predict { model, clips } => cmd_predict(&cfg, model, clips),
        Command::Evaluate {
            manifest,
            out,
            mode,
            protocol,
            folds,
            keep_models,
        } => cmd_evaluate(&cfg, manifest, out, mode, protocol, folds, keep_models),
        Command::Bench { manifest, model } => cmd_bench(&cfg, manifest, model),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
