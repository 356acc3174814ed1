//! Command-line driver: corpus synthesis, training, evaluation and the
//! comparison experiments, with a JSON registry archive in between.

pub mod archive;
pub mod config;
pub mod experiments;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use emocascade::cascade::{complete_registry, train_registry, write_trials, CascadeError, CascadeMode, ScoringOptions};
use emocascade::corpus::{generate_synthetic, load_manifest, CorpusError, CorpusManifest, EmotionCues, Split};
use emocascade::eval::{det_curve, export_det, EvalError, ScoreSet};
use emocascade::features::{extract_corpus, FeatureError, FeatureTable, FrontEnd};
use emocascade::sphmm::FusionWeight;
use thiserror::Error;

pub use archive::{RegistryArchive, ARCHIVE_FORMAT_VERSION};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("registry archive: {0}")]
    Archive(String),
    #[error("feature configuration does not match the one the registry was trained with")]
    ConfigMismatch,
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "emocascade", version, about = "Speaker verification in emotional speech via a gender/emotion/speaker cascade")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic emotional-speech corpus.
    Synth(SynthArgs),
    /// Train the model registry on the Train split.
    Train(Common),
    /// Run one cascade mode over the Test split.
    Evaluate(Common),
    /// Run every cascade mode and compare them.
    Ablate(Common),
    /// Mean EER of the three-stage cascade across fusion weights.
    AlphaSweep(SweepArgs),
}

#[derive(Debug, Args, Default)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mode: Option<CascadeMode>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub claimants_per_gender: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub speakers_per_gender: Option<usize>,
    #[arg(long)]
    pub sentences: Option<u8>,
    #[arg(long)]
    pub reps: Option<u8>,
    /// Utterance length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    /// Emotions differ in prosody only.
    #[arg(long)]
    pub prosody_only: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated fusion weights.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
    pub alphas: Vec<f64>,
}

impl Common {
    fn apply(&self, config: &mut RunConfig) {
        if self.seed.is_some() {
            config.seed = self.seed;
        }
        if let Some(a) = self.alpha {
            config.alpha = a;
        }
        if let Some(m) = self.mode {
            config.mode = m;
        }
        for (flag, slot) in [(&self.corpus, &mut config.corpus), (&self.registry, &mut config.registry), (&self.out, &mut config.out)] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if let Some(c) = self.claimants_per_gender {
            config.claimants_per_gender = c;
        }
    }
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth(a) => &a.common,
            Command::Train(c) | Command::Evaluate(c) | Command::Ablate(c) => c,
            Command::AlphaSweep(a) => &a.common,
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.command.common().apply(&mut config);
    if let Command::Synth(a) = &cli.command {
        let s = &mut config.synth;
        s.speakers_per_gender = a.speakers_per_gender.unwrap_or(s.speakers_per_gender);
        s.sentences = a.sentences.unwrap_or(s.sentences);
        s.reps_per_sentence = a.reps.unwrap_or(s.reps_per_sentence);
        s.utterance_duration_s = a.duration.unwrap_or(s.utterance_duration_s);
        s.class_separation = a.separation.unwrap_or(s.class_separation);
        if a.prosody_only {
            s.emotion_cues = EmotionCues::ProsodyOnly;
        }
    }
    config.fusion_weight()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Synth(_) => cmd_synth(&config).map(|_| ()),
        Command::Train(_) => cmd_train(&config).map(|_| ()),
        Command::Evaluate(_) => cmd_evaluate(&config),
        Command::Ablate(_) => cmd_ablate(&config),
        Command::AlphaSweep(a) => cmd_alpha_sweep(&config, &a.alphas),
    })
}

pub fn cmd_synth(config: &RunConfig) -> Result<CorpusManifest, CliError> {
    let out = RunConfig::require(&config.out, "out")?;
    let spec = config.synthetic_spec()?;
    let manifest = generate_synthetic(&spec, out)?;
    log::info!("wrote {} utterances to {}", manifest.len(), out.display());
    Ok(manifest)
}

fn load_corpus(config: &RunConfig, split: Option<Split>) -> Result<(CorpusManifest, FeatureTable<f64>), CliError> {
    let dir = RunConfig::require(&config.corpus, "corpus")?;
    let manifest = load_manifest(&dir.join("manifest.tsv"))?;
    let subset = match split {
        Some(s) => manifest.filter_by(|r| r.split == s),
        None => manifest.clone(),
    };
    let front = FrontEnd::new(&config.features)?;
    let features = extract_corpus(&subset, &front)?;
    log::info!("extracted features for {} utterances", features.len());
    Ok((manifest, features))
}

pub fn cmd_train(config: &RunConfig) -> Result<RegistryArchive, CliError> {
    let registry_dir = RunConfig::require(&config.registry, "registry")?;
    let training = config.registry_config()?;
    let (manifest, features) = load_corpus(config, Some(Split::Train))?;
    if training.claimants_per_gender > manifest.speakers_per_gender {
        return Err(CliError::Usage(format!(
            "claimants_per_gender {} exceeds the corpus's {} speakers per gender",
            training.claimants_per_gender, manifest.speakers_per_gender
        )));
    }
    let registry = train_registry(&manifest, &features, &training)?;
    for fit in &registry.fits {
        println!("{}\t{}\t{}", fit.key, fit.iterations, fit.log_likelihood);
    }
    let archive = RegistryArchive::new(training.seed, config.features.clone(), training, registry);
    let path = archive.save(registry_dir)?;
    log::info!("saved {} models to {}", archive.registry.model_count(), path.display());
    Ok(archive)
}

fn load_archive(config: &RunConfig) -> Result<RegistryArchive, CliError> {
    let archive = RegistryArchive::load(RunConfig::require(&config.registry, "registry")?)?;
    archive.check_features(&config.features)?;
    Ok(archive)
}

fn scoring_options(config: &RunConfig) -> Result<ScoringOptions, CliError> {
    Ok(ScoringOptions { alpha: config.fusion_weight()?, seed: config.resolved_seed()?, ..ScoringOptions::default() })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn output_dir(config: &RunConfig) -> Result<&Path, CliError> {
    let out = RunConfig::require(&config.out, "out")?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    Ok(out)
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<(), CliError> {
    let out = output_dir(config)?;
    let archive = load_archive(config)?;
    if !archive.registry.supports(config.mode) {
        return Err(CascadeError::IncompleteRegistry(config.mode).into());
    }
    let (manifest, features) = load_corpus(config, Some(Split::Test))?;
    let options = scoring_options(config)?;
    let (run, summary) = experiments::evaluate(&archive.registry, &manifest, &features, config.mode, &options)?;

    let report = experiments::render_evaluation(&summary, &run, config.alpha, options.seed);
    print!("{report}");
    write(&out.join("report.txt"), &report)?;
    write(&out.join("eer.csv"), &experiments::eer_csv(&summary))?;
    for (gender, matrix) in &summary.emotion_confusion {
        write(&out.join(format!("confusion_{}.csv", gender.as_str().to_ascii_lowercase())), &experiments::confusion_csv(matrix))?;
    }
    write(&out.join("trials.tsv"), &write_trials(&run.trials))?;

    let det_dir = out.join("det");
    fs::create_dir_all(&det_dir).map_err(|e| CliError::io(&det_dir, e))?;
    let set = |emotion: Option<emocascade::corpus::Emotion>| {
        let (t, n): (Vec<_>, Vec<_>) =
            run.trials.iter().filter(|t| emotion.is_none_or(|e| t.true_emotion == e)).partition(|t| t.is_target_trial);
        ScoreSet::new(t.iter().map(|t| t.score).collect(), n.iter().map(|t| t.score).collect())
    };
    export_det(&det_curve(&set(None)?), &det_dir.join("all.csv"))?;
    for p in &summary.per_emotion {
        let name = format!("{}.csv", p.emotion.as_str().to_ascii_lowercase());
        export_det(&det_curve(&set(Some(p.emotion))?), &det_dir.join(name))?;
    }
    Ok(())
}

fn completed_registry(config: &RunConfig) -> Result<(RegistryArchive, CorpusManifest, FeatureTable<f64>), CliError> {
    let mut archive = load_archive(config)?;
    let needs_training = CascadeMode::ALL.iter().any(|&m| !archive.registry.supports(m));
    let (manifest, features) = load_corpus(config, (!needs_training).then_some(Split::Test))?;
    if needs_training {
        log::info!("training the pooled models the reduced modes need");
        complete_registry(&mut archive.registry, &manifest, &features, &archive.training)?;
    }
    Ok((archive, manifest, features))
}

pub fn cmd_ablate(config: &RunConfig) -> Result<(), CliError> {
    let out = output_dir(config)?;
    let (archive, manifest, features) = completed_registry(config)?;
    let options = scoring_options(config)?;
    let ablation = experiments::ablate(&archive.registry, &manifest, &features, &options)?;
    let report = experiments::render_ablation(&ablation, config.alpha, options.seed);
    print!("{report}");
    write(&out.join("ablation.txt"), &report)?;
    write(&out.join("ablation.csv"), &experiments::ablation_csv(&ablation))?;
    write(&out.join("ablation_t.csv"), &experiments::t_csv(&ablation))?;
    Ok(())
}

pub fn cmd_alpha_sweep(config: &RunConfig, alphas: &[f64]) -> Result<(), CliError> {
    let out = output_dir(config)?;
    let weights = alphas
        .iter()
        .map(|&a| FusionWeight::new(a).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let archive = load_archive(config)?;
    let (manifest, features) = load_corpus(config, Some(Split::Test))?;
    let points = experiments::alpha_sweep(&archive.registry, &manifest, &features, &weights, &scoring_options(config)?)?;
    let csv = experiments::sweep_csv(&points);
    print!("{csv}");
    write(&out.join("alpha_sweep.csv"), &csv)?;
    Ok(())
}
