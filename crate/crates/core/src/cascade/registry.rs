use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gender_index, slot, CascadeError, CascadeMode};
use crate::corpus::{CorpusManifest, Emotion, Gender, Split, UtteranceRecord};
use crate::features::{FeatureTable, ObservationSequence, ProsodicSequence, UtteranceFeatures};
use crate::hmm::{baum_welch, Hmm, TrainingConfig};
use crate::rng::substream;
use crate::sphmm::{train_suprasegmental, FusionWeight, SupraConfig, SuprasegmentalModel};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EmotionModel<S: Scalar> {
    pub acoustic: Hmm<S>,
    pub supra: SuprasegmentalModel<S>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claimant {
    pub speaker_id: String,
    pub gender: Gender,
}

/// Final training log-likelihood of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub key: String,
    pub iterations: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ModelRegistry<S: Scalar> {
    /// Indexed male, female.
    pub gender_models: Vec<Hmm<S>>,
    /// Gender-major, emotion-minor.
    pub emotion_models: Vec<EmotionModel<S>>,
    pub claimants: Vec<Claimant>,
    /// `speaker_models[c][e]` for claimant `c`, emotion index `e`.
    pub speaker_models: Vec<Vec<Hmm<S>>>,
    /// Gender-independent emotion models, by emotion index.
    pub pooled_emotion_models: Option<Vec<EmotionModel<S>>>,
    /// One emotion-independent model per claimant.
    pub pooled_speaker_models: Option<Vec<Hmm<S>>>,
    pub alpha: FusionWeight,
    pub threshold: Option<f64>,
    pub fits: Vec<ModelFit>,
}

impl<S: Scalar> ModelRegistry<S> {
    pub fn validate(&self) -> Result<(), CascadeError> {
        let bad = |m: String| Err(CascadeError::MissingModel(m));
        let m = Emotion::ALL.len();
        if self.gender_models.len() != 2 {
            return bad(format!("expected 2 gender models, found {}", self.gender_models.len()));
        }
        if self.emotion_models.len() != 2 * m {
            return bad(format!("expected {} emotion models, found {}", 2 * m, self.emotion_models.len()));
        }
        if self.speaker_models.len() != self.claimants.len() {
            return bad("speaker model table does not match the claimant list".into());
        }
        for (c, models) in self.claimants.iter().zip(&self.speaker_models) {
            if models.len() != m {
                return bad(format!("claimant {} has {} emotion models", c.speaker_id, models.len()));
            }
        }
        if let Some(p) = &self.pooled_emotion_models {
            if p.len() != m {
                return bad("pooled emotion models incomplete".into());
            }
        }
        if let Some(p) = &self.pooled_speaker_models {
            if p.len() != self.claimants.len() {
                return bad("pooled speaker models incomplete".into());
            }
        }
        Ok(())
    }

    pub fn supports(&self, mode: CascadeMode) -> bool {
        (!mode.needs_pooled_speakers() || self.pooled_speaker_models.is_some())
            && (!mode.needs_pooled_emotions() || self.pooled_emotion_models.is_some())
    }

    pub fn gender_model(&self, g: Gender) -> &Hmm<S> {
        &self.gender_models[gender_index(g)]
    }

    pub fn emotion_model(&self, g: Gender, e: Emotion) -> &EmotionModel<S> {
        &self.emotion_models[slot(g, e)]
    }

    pub fn claimant_index(&self, speaker_id: &str) -> Option<usize> {
        self.claimants.iter().position(|c| c.speaker_id == speaker_id)
    }

    pub fn speaker_model(&self, claimant: usize, e: Emotion) -> &Hmm<S> {
        &self.speaker_models[claimant][e.index()]
    }

    /// Number of persisted HMMs (suprasegmental models not counted).
    pub fn model_count(&self) -> usize {
        self.gender_models.len()
            + self.emotion_models.len()
            + self.speaker_models.iter().map(Vec::len).sum::<usize>()
            + self.pooled_emotion_models.as_ref().map_or(0, Vec::len)
            + self.pooled_speaker_models.as_ref().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub gender: TrainingConfig,
    pub emotion: TrainingConfig,
    pub speaker: TrainingConfig,
    pub supra: SupraConfig,
    pub claimants_per_gender: usize,
    pub alpha: FusionWeight,
    /// Also train the emotion-pooled and gender-pooled models the reduced
    /// modes need.
    pub pooled_models: bool,
    pub seed: u64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            gender: TrainingConfig::default(),
            emotion: TrainingConfig::default(),
            speaker: TrainingConfig::default(),
            supra: SupraConfig::default(),
            claimants_per_gender: 17,
            alpha: FusionWeight::default(),
            pooled_models: true,
            seed: 0,
        }
    }
}

impl RegistryConfig {
    /// Smaller models suited to desk-scale corpora.
    pub fn compact() -> Self {
        let small = |n_states, n_mixtures| TrainingConfig { n_states, n_mixtures, max_iters: 10, ..TrainingConfig::default() };
        RegistryConfig { gender: small(2, 16), emotion: small(3, 8), speaker: small(2, 8), ..RegistryConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    Gender(Gender),
    Emotion(Gender, Emotion),
    PooledEmotion(Emotion),
    Speaker(usize, Emotion),
    PooledSpeaker(usize),
}

enum Trained<S: Scalar> {
    Hmm(Hmm<S>),
    Emotion(EmotionModel<S>),
}

fn job_key(job: Job, claimants: &[Claimant]) -> String {
    match job {
        Job::Gender(g) => format!("gender {g}"),
        Job::Emotion(g, e) => format!("({g}, {e})"),
        Job::PooledEmotion(e) => format!("(any gender, {e})"),
        Job::Speaker(c, e) => format!("({}, {e})", claimants[c].speaker_id),
        Job::PooledSpeaker(c) => format!("({}, any emotion)", claimants[c].speaker_id),
    }
}

fn derived_seed(seed: u64, key: &str) -> u64 {
    substream(seed, key).random()
}

fn pooled_jobs(n_claimants: usize) -> impl Iterator<Item = Job> {
    Emotion::ALL.into_iter().map(Job::PooledEmotion).chain((0..n_claimants).map(Job::PooledSpeaker))
}

fn run_jobs<S: Scalar>(
    jobs: &[Job],
    claimants: &[Claimant],
    manifest: &CorpusManifest,
    features: &FeatureTable<S>,
    config: &RegistryConfig,
) -> Result<Vec<(Trained<S>, ModelFit)>, CascadeError> {
    let train: Vec<&UtteranceRecord> = manifest.records.iter().filter(|r| r.split == Split::Train).collect();

    let select = |job: Job| -> Vec<&UtteranceRecord> {
        train
            .iter()
            .copied()
            .filter(|r| match job {
                Job::Gender(g) => r.gender == g,
                Job::Emotion(g, e) => r.gender == g && r.emotion == e,
                Job::PooledEmotion(e) => r.emotion == e,
                Job::Speaker(c, e) => r.speaker_id == claimants[c].speaker_id && r.emotion == e,
                Job::PooledSpeaker(c) => r.speaker_id == claimants[c].speaker_id,
            })
            .collect()
    };

    jobs
        .par_iter()
        .map(|&job| {
            let key = job_key(job, claimants);
            let records = select(job);
            if records.is_empty() {
                return Err(CascadeError::InsufficientData(key));
            }
            let feats = records
                .iter()
                .map(|r| features.get(&r.utterance_id).ok_or_else(|| CascadeError::MissingFeatures(r.utterance_id.clone())))
                .collect::<Result<Vec<&UtteranceFeatures<S>>, _>>()?;
            let base = match job {
                Job::Gender(_) => &config.gender,
                Job::Emotion(..) | Job::PooledEmotion(_) => &config.emotion,
                Job::Speaker(..) | Job::PooledSpeaker(_) => &config.speaker,
            };
            let training = base.with_seed(derived_seed(config.seed, &key));
            let acoustic: Vec<&ObservationSequence<S>> = feats.iter().map(|f| &f.acoustic).collect();
            let fitted = baum_welch(&acoustic, &training)?;
            let fit = ModelFit {
                key: key.clone(),
                iterations: fitted.log_likelihoods.len(),
                log_likelihood: *fitted.log_likelihoods.last().unwrap(),
            };
            log::info!("trained {key}: log-likelihood {:.3} after {} passes", fit.log_likelihood, fit.iterations);
            let model = match job {
                Job::Emotion(..) | Job::PooledEmotion(_) => {
                    let pairs: Vec<(&ObservationSequence<S>, &ProsodicSequence<S>)> =
                        feats.iter().map(|f| (&f.acoustic, &f.prosodic)).collect();
                    let supra = train_suprasegmental(&fitted.model, &pairs, &config.supra, &training)?;
                    Trained::Emotion(EmotionModel { acoustic: fitted.model, supra })
                }
                _ => Trained::Hmm(fitted.model),
            };
            Ok((model, fit))
        })
        .collect()

}

/// Trains the emotion-pooled and gender-pooled models of a registry that was
/// built without them.
pub fn complete_registry<S: Scalar>(
    registry: &mut ModelRegistry<S>,
    manifest: &CorpusManifest,
    features: &FeatureTable<S>,
    config: &RegistryConfig,
) -> Result<(), CascadeError> {
    if registry.pooled_emotion_models.is_some() && registry.pooled_speaker_models.is_some() {
        return Ok(());
    }
    let jobs: Vec<Job> = pooled_jobs(registry.claimants.len()).collect();
    let results = run_jobs(&jobs, &registry.claimants, manifest, features, config)?;
    let mut emotions = Vec::new();
    let mut speakers = Vec::new();
    for (model, fit) in results {
        registry.fits.push(fit);
        match model {
            Trained::Emotion(m) => emotions.push(m),
            Trained::Hmm(m) => speakers.push(m),
        }
    }
    registry.pooled_emotion_models = Some(emotions);
    registry.pooled_speaker_models = Some(speakers);
    registry.validate()
}

/// Trains every model of the registry from the Train split of `manifest`.
///
/// Claimants are the first `claimants_per_gender` speakers of each gender in
/// manifest order; the remaining speakers only contribute to the gender and
/// emotion models and act as imposters at test time.
pub fn train_registry<S: Scalar>(
    manifest: &CorpusManifest,
    features: &FeatureTable<S>,
    config: &RegistryConfig,
) -> Result<ModelRegistry<S>, CascadeError> {
    let mut claimants = Vec::new();
    for g in Gender::ALL {
        let speakers = manifest.speakers(g);
        if speakers.len() < config.claimants_per_gender {
            return Err(CascadeError::InvalidConfig(format!(
                "{} claimants per gender requested, corpus has {} {g} speakers",
                config.claimants_per_gender,
                speakers.len()
            )));
        }
        claimants.extend(speakers.into_iter().take(config.claimants_per_gender).map(|speaker_id| Claimant { speaker_id, gender: g }));
    }
    let mut jobs: Vec<Job> = Gender::ALL.iter().map(|&g| Job::Gender(g)).collect();
    for g in Gender::ALL {
        jobs.extend(Emotion::ALL.iter().map(|&e| Job::Emotion(g, e)));
    }
    for c in 0..claimants.len() {
        jobs.extend(Emotion::ALL.iter().map(|&e| Job::Speaker(c, e)));
    }
    if config.pooled_models {
        jobs.extend(pooled_jobs(claimants.len()));
    }
    let results = run_jobs(&jobs, &claimants, manifest, features, config)?;

    let mut gender_models = Vec::new();
    let mut emotion_models = Vec::new();
    let mut speaker_models: Vec<Vec<Hmm<S>>> = vec![Vec::new(); claimants.len()];
    let mut pooled_emotions = Vec::new();
    let mut pooled_speakers = Vec::new();
    let mut fits = Vec::with_capacity(results.len());
    for (&job, (model, fit)) in jobs.iter().zip(results) {
        fits.push(fit);
        match (job, model) {
            (Job::Gender(_), Trained::Hmm(m)) => gender_models.push(m),
            (Job::Emotion(..), Trained::Emotion(m)) => emotion_models.push(m),
            (Job::PooledEmotion(_), Trained::Emotion(m)) => pooled_emotions.push(m),
            (Job::Speaker(c, _), Trained::Hmm(m)) => speaker_models[c].push(m),
            (Job::PooledSpeaker(_), Trained::Hmm(m)) => pooled_speakers.push(m),
            _ => unreachable!("job and model kinds always agree"),
        }
    }
    let registry = ModelRegistry {
        gender_models,
        emotion_models,
        claimants,
        speaker_models,
        pooled_emotion_models: config.pooled_models.then_some(pooled_emotions),
        pooled_speaker_models: config.pooled_models.then_some(pooled_speakers),
        alpha: config.alpha,
        threshold: None,
        fits,
    };
    registry.validate()?;
    Ok(registry)
}
