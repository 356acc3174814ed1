//! Gender identification, gender-dependent emotion identification and
//! emotion-dependent speaker verification, plus the reduced variants used
//! for comparison.

mod registry;
mod report;
mod scoring;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Emotion, Gender};
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::hmm::HmmError;
use crate::sphmm::SphmmError;

pub use registry::{complete_registry, train_registry, Claimant, EmotionModel, ModelRegistry, RegistryConfig};
pub use report::{read_trials, summarize, write_trials, CascadeSummary, EmotionEer};
pub use scoring::{
    adapt_threshold, decide, identify_emotion, identify_gender, imposter_average, lambda, run_cascade,
    score_utterances, trials_from_scores, verify_score, CascadeRun, Decision, ImposterAverage, ScoringOptions,
    StageOutcome, ThresholdPolicy, TrialResult, UtteranceScores, DEFAULT_ADAPT_WINDOW,
    GENDER_MISMATCH_SCORE,
};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("missing model: {0}")]
    MissingModel(String),
    #[error("unknown claimant {0}")]
    UnknownClaimant(String),
    #[error("insufficient training data for {0}")]
    InsufficientData(String),
    #[error("registry lacks the models needed for mode {0}")]
    IncompleteRegistry(CascadeMode),
    #[error("threshold window is empty")]
    EmptyWindow,
    #[error("no features for utterance {0}")]
    MissingFeatures(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Sphmm(#[from] SphmmError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Which stages run before verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CascadeMode {
    /// Gender, then gender-dependent emotion with fused scores, then verification.
    ThreeStage,
    /// Verification only, with emotion-pooled speaker models.
    OneStage,
    /// Gender identification, then verification with emotion-pooled models.
    TwoStageGender,
    /// Gender-independent emotion identification, then verification.
    TwoStageEmotion,
    /// As `ThreeStage` with acoustic-only emotion scores.
    ThreeStageAllHmm,
    /// As `ThreeStage`, but verification is fed the wrong gender and a wrong emotion.
    WorstCase,
}

impl CascadeMode {
    pub const ALL: [CascadeMode; 6] = [
        CascadeMode::ThreeStage,
        CascadeMode::OneStage,
        CascadeMode::TwoStageGender,
        CascadeMode::TwoStageEmotion,
        CascadeMode::ThreeStageAllHmm,
        CascadeMode::WorstCase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CascadeMode::ThreeStage => "ThreeStage",
            CascadeMode::OneStage => "OneStage",
            CascadeMode::TwoStageGender => "TwoStageGender",
            CascadeMode::TwoStageEmotion => "TwoStageEmotion",
            CascadeMode::ThreeStageAllHmm => "ThreeStageAllHmm",
            CascadeMode::WorstCase => "WorstCase",
        }
    }

    /// Uses emotion-pooled per-claimant models.
    pub fn needs_pooled_speakers(self) -> bool {
        matches!(self, CascadeMode::OneStage | CascadeMode::TwoStageGender)
    }

    /// Uses gender-independent emotion models.
    pub fn needs_pooled_emotions(self) -> bool {
        self == CascadeMode::TwoStageEmotion
    }
}

impl fmt::Display for CascadeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CascadeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        CascadeMode::ALL
            .into_iter()
            .find(|m| m.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

/// Slot of `(gender, emotion)` in gender-major, emotion-minor order.
pub(crate) fn slot(gender: Gender, emotion: Emotion) -> usize {
    gender_index(gender) * Emotion::ALL.len() + emotion.index()
}

pub(crate) fn gender_index(g: Gender) -> usize {
    match g {
        Gender::Male => 0,
        Gender::Female => 1,
    }
}
