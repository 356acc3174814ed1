use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{slot, CascadeError, CascadeMode, ModelRegistry};
use crate::corpus::{CorpusManifest, Emotion, Gender, Split, UtteranceRecord};
use crate::eval::{eer_threshold, ScoreSet};
use crate::features::{FeatureTable, ObservationSequence, ProsodicSequence, UtteranceFeatures};
use crate::hmm::Hmm;
use crate::rng::substream;
use crate::sphmm::{fuse, log_prob_supra, FusionWeight};
use crate::Scalar;

pub const DEFAULT_ADAPT_WINDOW: usize = 50;

/// Score of a claim whose gender contradicts the gender fed to verification.
/// The claimed speaker has no models under that gender, so the claim is
/// rejected at any threshold above this floor.
pub const GENDER_MISMATCH_SCORE: f64 = -1.0e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "Accept",
            Decision::Reject => "Reject",
        }
    }
}

/// How a set of imposter-model log scores is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ImposterAverage {
    /// Arithmetic mean of the log scores.
    #[default]
    MeanLog,
    /// Log of the mean likelihood.
    LogMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// Equal-error threshold of the development trials (first repetition of
    /// every test sentence).
    #[default]
    DevEer,
    /// Mean of the most recent `window` scores, starting from `initial`.
    Adaptive { window: usize, initial: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringOptions {
    pub alpha: FusionWeight,
    pub imposter_average: ImposterAverage,
    pub threshold: ThresholdPolicy,
    /// Reject claims whose gender contradicts the gender fed to verification.
    pub gender_gate: bool,
    /// Seeds the wrong-emotion draw of the worst-case mode.
    pub seed: u64,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            alpha: FusionWeight::default(),
            imposter_average: ImposterAverage::MeanLog,
            threshold: ThresholdPolicy::DevEer,
            gender_gate: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub utterance_id: String,
    pub claimed_speaker: String,
    pub true_speaker: String,
    pub identified_gender: Option<Gender>,
    pub identified_emotion: Option<Emotion>,
    pub true_gender: Gender,
    pub true_emotion: Emotion,
    pub score: f64,
    pub decision: Decision,
    pub is_target_trial: bool,
}

/// Stage 1 and 2 outputs for one utterance, before any forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub utterance_id: String,
    pub true_gender: Gender,
    pub true_emotion: Emotion,
    pub identified_gender: Option<Gender>,
    pub identified_emotion: Option<Emotion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRun {
    pub mode: CascadeMode,
    pub threshold: f64,
    pub trials: Vec<TrialResult>,
    pub outcomes: Vec<StageOutcome>,
}

/// Per-frame log-likelihoods of one test utterance against every model a
/// set of modes needs. Unneeded tables are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScores {
    pub utterance_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub emotion: Emotion,
    pub rep_idx: u8,
    /// Male, female.
    pub gender_scores: Vec<f64>,
    /// Gender-major, emotion-minor.
    pub emotion_acoustic: Vec<f64>,
    pub emotion_supra: Vec<f64>,
    /// By emotion index.
    pub pooled_emotion_acoustic: Vec<f64>,
    pub pooled_emotion_supra: Vec<f64>,
    /// `speaker[c][e]`.
    pub speaker: Vec<Vec<f64>>,
    pub pooled_speaker: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Needs {
    gender: bool,
    emotion: bool,
    pooled_emotion: bool,
    speaker: bool,
    pooled_speaker: bool,
}

impl Needs {
    fn of(modes: &[CascadeMode]) -> Self {
        let mut n = Needs::default();
        for &m in modes {
            match m {
                CascadeMode::ThreeStage | CascadeMode::ThreeStageAllHmm | CascadeMode::WorstCase => {
                    n.gender = true;
                    n.emotion = true;
                    n.speaker = true;
                }
                CascadeMode::TwoStageEmotion => {
                    n.pooled_emotion = true;
                    n.speaker = true;
                }
                CascadeMode::TwoStageGender => {
                    n.gender = true;
                    n.pooled_speaker = true;
                }
                CascadeMode::OneStage => n.pooled_speaker = true,
            }
        }
        n
    }
}

fn per_frame<S: Scalar>(model: &Hmm<S>, obs: &ObservationSequence<S>) -> Result<f64, CascadeError> {
    Ok((model.log_forward(obs)? / S::from_usize_lossy(obs.len())).to_f64_lossy())
}

/// Index of the largest value; the earliest wins ties.
fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn gender_from_scores(scores: &[f64]) -> Gender {
    if scores[1] > scores[0] {
        Gender::Female
    } else {
        Gender::Male
    }
}

fn fused(alpha: FusionWeight, acoustic: &[f64], supra: &[f64]) -> Result<Vec<f64>, CascadeError> {
    acoustic.iter().zip(supra).map(|(&a, &p)| fuse(alpha, a, p).map_err(Into::into)).collect()
}

/// Argmax over the two gender models; a tie goes to male.
pub fn identify_gender<S: Scalar>(
    registry: &ModelRegistry<S>,
    obs: &ObservationSequence<S>,
) -> Result<(Gender, [f64; 2]), CascadeError> {
    let scores = [per_frame(registry.gender_model(Gender::Male), obs)?, per_frame(registry.gender_model(Gender::Female), obs)?];
    Ok((gender_from_scores(&scores), scores))
}

/// Argmax of the fused acoustic/prosodic scores over the emotion models of
/// `gender`; ties go to the earliest emotion.
pub fn identify_emotion<S: Scalar>(
    registry: &ModelRegistry<S>,
    gender: Gender,
    obs: &ObservationSequence<S>,
    prosodic: &ProsodicSequence<S>,
) -> Result<(Emotion, Vec<f64>), CascadeError> {
    let mut acoustic = Vec::with_capacity(Emotion::ALL.len());
    let mut supra = Vec::with_capacity(Emotion::ALL.len());
    for e in Emotion::ALL {
        let m = registry.emotion_model(gender, e);
        acoustic.push(per_frame(&m.acoustic, obs)?);
        supra.push(log_prob_supra(&m.supra, prosodic)?.to_f64_lossy());
    }
    let scores = fused(registry.alpha, &acoustic, &supra)?;
    Ok((Emotion::ALL[argmax_first(&scores)], scores))
}

pub fn lambda(term1: f64, term2: f64, term3: f64) -> f64 {
    term1 - term2 - term3
}

/// Averages imposter log scores; an empty set contributes nothing.
pub fn imposter_average(scores: &[f64], how: ImposterAverage) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let n = scores.len() as f64;
    match how {
        ImposterAverage::MeanLog => scores.iter().sum::<f64>() / n,
        ImposterAverage::LogMean => crate::log_sum_exp(scores) - n.ln(),
    }
}

/// Verification score of `claimed` given the identified gender and emotion.
pub fn verify_score<S: Scalar>(
    registry: &ModelRegistry<S>,
    gender: Gender,
    emotion: Emotion,
    claimed: &str,
    obs: &ObservationSequence<S>,
) -> Result<f64, CascadeError> {
    let c = registry.claimant_index(claimed).ok_or_else(|| CascadeError::UnknownClaimant(claimed.to_string()))?;
    if registry.claimants[c].gender != gender {
        return Ok(GENDER_MISMATCH_SCORE);
    }
    let speaker = registry
        .speaker_models
        .iter()
        .map(|models| models.iter().map(|m| per_frame(m, obs)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(emotion_dependent_lambda(registry, &speaker, c, emotion, cohort(registry, c, Some(gender.opposite())), ImposterAverage::MeanLog))
}

/// Claimants other than `c`, optionally restricted to one gender.
fn cohort<S: Scalar>(registry: &ModelRegistry<S>, c: usize, gender: Option<Gender>) -> Vec<usize> {
    (0..registry.claimants.len())
        .filter(|&k| k != c && gender.is_none_or(|g| registry.claimants[k].gender == g))
        .collect()
}

fn emotion_dependent_lambda<S: Scalar>(
    _registry: &ModelRegistry<S>,
    speaker: &[Vec<f64>],
    c: usize,
    emotion: Emotion,
    cohort: Vec<usize>,
    how: ImposterAverage,
) -> f64 {
    let e = emotion.index();
    let others = |k: usize| speaker[k].iter().enumerate().filter(move |&(b, _)| b != e).map(|(_, &s)| s);
    let term1 = speaker[c][e];
    let term2 = imposter_average(&others(c).collect::<Vec<_>>(), how);
    let pool: Vec<f64> = cohort.iter().flat_map(|&k| others(k)).collect();
    lambda(term1, term2, imposter_average(&pool, how))
}

pub fn decide(score: f64, threshold: f64) -> Decision {
    if score >= threshold {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// Mean of the last `window` scores.
pub fn adapt_threshold(recent: &[f64], window: usize) -> Result<f64, CascadeError> {
    let tail = &recent[recent.len().saturating_sub(window.max(1))..];
    if tail.is_empty() {
        return Err(CascadeError::EmptyWindow);
    }
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

fn score_one<S: Scalar>(
    registry: &ModelRegistry<S>,
    record: &UtteranceRecord,
    f: &UtteranceFeatures<S>,
    needs: Needs,
) -> Result<UtteranceScores, CascadeError> {
    let obs = &f.acoustic;
    let mut s = UtteranceScores {
        utterance_id: record.utterance_id.clone(),
        speaker_id: record.speaker_id.clone(),
        gender: record.gender,
        emotion: record.emotion,
        rep_idx: record.rep_idx,
        gender_scores: Vec::new(),
        emotion_acoustic: Vec::new(),
        emotion_supra: Vec::new(),
        pooled_emotion_acoustic: Vec::new(),
        pooled_emotion_supra: Vec::new(),
        speaker: Vec::new(),
        pooled_speaker: Vec::new(),
    };
    if needs.gender {
        s.gender_scores = registry.gender_models.iter().map(|m| per_frame(m, obs)).collect::<Result<_, _>>()?;
    }
    if needs.emotion {
        for m in &registry.emotion_models {
            s.emotion_acoustic.push(per_frame(&m.acoustic, obs)?);
            s.emotion_supra.push(log_prob_supra(&m.supra, &f.prosodic)?.to_f64_lossy());
        }
    }
    if needs.pooled_emotion {
        let pooled = registry.pooled_emotion_models.as_ref().ok_or(CascadeError::IncompleteRegistry(CascadeMode::TwoStageEmotion))?;
        for m in pooled {
            s.pooled_emotion_acoustic.push(per_frame(&m.acoustic, obs)?);
            s.pooled_emotion_supra.push(log_prob_supra(&m.supra, &f.prosodic)?.to_f64_lossy());
        }
    }
    if needs.speaker {
        s.speaker = registry
            .speaker_models
            .iter()
            .map(|models| models.iter().map(|m| per_frame(m, obs)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()?;
    }
    if needs.pooled_speaker {
        let pooled = registry.pooled_speaker_models.as_ref().ok_or(CascadeError::IncompleteRegistry(CascadeMode::OneStage))?;
        s.pooled_speaker = pooled.iter().map(|m| per_frame(m, obs)).collect::<Result<_, _>>()?;
    }
    Ok(s)
}

/// Scores every record against the models `modes` use, in record order.
pub fn score_utterances<S: Scalar>(
    registry: &ModelRegistry<S>,
    records: &[UtteranceRecord],
    features: &FeatureTable<S>,
    modes: &[CascadeMode],
) -> Result<Vec<UtteranceScores>, CascadeError> {
    for &m in modes {
        if !registry.supports(m) {
            return Err(CascadeError::IncompleteRegistry(m));
        }
    }
    let needs = Needs::of(modes);
    records
        .par_iter()
        .map(|r| {
            let f = features.get(&r.utterance_id).ok_or_else(|| CascadeError::MissingFeatures(r.utterance_id.clone()))?;
            score_one(registry, r, f, needs)
        })
        .collect()
}

fn wrong_emotion(seed: u64, utterance_id: &str, truth: Emotion) -> Emotion {
    let offset = substream(seed, &format!("worst-case/{utterance_id}")).random_range(1..Emotion::ALL.len());
    Emotion::ALL[(truth.index() + offset) % Emotion::ALL.len()]
}

fn emotion_scores(u: &UtteranceScores, gender: Gender, alpha: FusionWeight) -> Result<Vec<f64>, CascadeError> {
    let lo = slot(gender, Emotion::ALL[0]);
    let hi = lo + Emotion::ALL.len();
    fused(alpha, &u.emotion_acoustic[lo..hi], &u.emotion_supra[lo..hi])
}

/// Builds the trials of `mode` from precomputed scores: every utterance is
/// paired with every claimant, in utterance-then-claimant order.
pub fn trials_from_scores<S: Scalar>(
    registry: &ModelRegistry<S>,
    scores: &[UtteranceScores],
    mode: CascadeMode,
    options: &ScoringOptions,
) -> Result<CascadeRun, CascadeError> {
    let how = options.imposter_average;
    let n_claimants = registry.claimants.len();
    let mut trials = Vec::with_capacity(scores.len() * n_claimants);
    let mut outcomes = Vec::with_capacity(scores.len());
    let missing = || CascadeError::IncompleteRegistry(mode);
    for u in scores {
        let needs_gender = !matches!(mode, CascadeMode::OneStage | CascadeMode::TwoStageEmotion);
        let g_star = if needs_gender {
            if u.gender_scores.len() != 2 {
                return Err(missing());
            }
            Some(gender_from_scores(&u.gender_scores))
        } else {
            None
        };
        let e_star = match mode {
            CascadeMode::ThreeStage | CascadeMode::WorstCase | CascadeMode::ThreeStageAllHmm => {
                if u.emotion_acoustic.len() != 2 * Emotion::ALL.len() {
                    return Err(missing());
                }
                let alpha = if mode == CascadeMode::ThreeStageAllHmm { FusionWeight::ACOUSTIC_ONLY } else { options.alpha };
                let s = emotion_scores(u, g_star.unwrap(), alpha)?;
                Some(Emotion::ALL[argmax_first(&s)])
            }
            CascadeMode::TwoStageEmotion => {
                if u.pooled_emotion_acoustic.len() != Emotion::ALL.len() {
                    return Err(missing());
                }
                let s = fused(options.alpha, &u.pooled_emotion_acoustic, &u.pooled_emotion_supra)?;
                Some(Emotion::ALL[argmax_first(&s)])
            }
            CascadeMode::OneStage | CascadeMode::TwoStageGender => None,
        };
        outcomes.push(StageOutcome {
            utterance_id: u.utterance_id.clone(),
            true_gender: u.gender,
            true_emotion: u.emotion,
            identified_gender: g_star,
            identified_emotion: e_star,
        });
        let (fed_gender, fed_emotion) = if mode == CascadeMode::WorstCase {
            (Some(u.gender.opposite()), Some(wrong_emotion(options.seed, &u.utterance_id, u.emotion)))
        } else {
            (g_star, e_star)
        };
        if mode.needs_pooled_speakers() && u.pooled_speaker.len() != n_claimants
            || !mode.needs_pooled_speakers() && u.speaker.len() != n_claimants
        {
            return Err(missing());
        }
        for (c, claimant) in registry.claimants.iter().enumerate() {
            let score = match mode {
                _ if options.gender_gate && fed_gender.is_some_and(|g| g != claimant.gender) => GENDER_MISMATCH_SCORE,
                CascadeMode::OneStage => {
                    let others: Vec<f64> = cohort(registry, c, None).iter().map(|&k| u.pooled_speaker[k]).collect();
                    let avg = imposter_average(&others, how);
                    lambda(u.pooled_speaker[c], avg, avg)
                }
                CascadeMode::TwoStageGender => {
                    let g = fed_gender.unwrap();
                    let pick = |gender| cohort(registry, c, Some(gender)).iter().map(|&k| u.pooled_speaker[k]).collect::<Vec<_>>();
                    lambda(u.pooled_speaker[c], imposter_average(&pick(g), how), imposter_average(&pick(g.opposite()), how))
                }
                CascadeMode::TwoStageEmotion => {
                    emotion_dependent_lambda(registry, &u.speaker, c, fed_emotion.unwrap(), cohort(registry, c, None), how)
                }
                CascadeMode::ThreeStage | CascadeMode::ThreeStageAllHmm | CascadeMode::WorstCase => {
                    let opposite = fed_gender.unwrap().opposite();
                    emotion_dependent_lambda(registry, &u.speaker, c, fed_emotion.unwrap(), cohort(registry, c, Some(opposite)), how)
                }
            };
            trials.push(TrialResult {
                utterance_id: u.utterance_id.clone(),
                claimed_speaker: claimant.speaker_id.clone(),
                true_speaker: u.speaker_id.clone(),
                identified_gender: fed_gender,
                identified_emotion: fed_emotion,
                true_gender: u.gender,
                true_emotion: u.emotion,
                score,
                decision: Decision::Reject,
                is_target_trial: claimant.speaker_id == u.speaker_id,
            });
        }
    }

    let threshold = match options.threshold {
        ThresholdPolicy::Fixed(t) => t,
        ThresholdPolicy::DevEer => dev_threshold(&trials, scores, n_claimants),
        ThresholdPolicy::Adaptive { initial, .. } => initial,
    };
    match options.threshold {
        ThresholdPolicy::Adaptive { window, initial } => {
            let mut history = Vec::with_capacity(trials.len());
            for t in &mut trials {
                let th = adapt_threshold(&history, window).unwrap_or(initial);
                t.decision = decide(t.score, th);
                history.push(t.score);
            }
        }
        _ => {
            for t in &mut trials {
                t.decision = decide(t.score, threshold);
            }
        }
    }
    Ok(CascadeRun { mode, threshold, trials, outcomes })
}

/// Equal-error threshold over trials of first-repetition utterances, or over
/// all trials when that subset lacks targets or non-targets.
fn dev_threshold(trials: &[TrialResult], scores: &[UtteranceScores], n_claimants: usize) -> f64 {
    let split = |dev_only: bool| {
        let mut tgt = Vec::new();
        let mut non = Vec::new();
        for (i, t) in trials.iter().enumerate() {
            if dev_only && scores[i / n_claimants.max(1)].rep_idx != 1 {
                continue;
            }
            if t.is_target_trial {
                tgt.push(t.score);
            } else {
                non.push(t.score);
            }
        }
        ScoreSet::new(tgt, non).ok()
    };
    split(true).or_else(|| split(false)).map_or(0.0, |s| eer_threshold(&s))
}

/// Runs `mode` over the Test split of `manifest`.
pub fn run_cascade<S: Scalar>(
    registry: &ModelRegistry<S>,
    manifest: &CorpusManifest,
    features: &FeatureTable<S>,
    mode: CascadeMode,
    options: &ScoringOptions,
) -> Result<CascadeRun, CascadeError> {
    let test: Vec<UtteranceRecord> = manifest.records.iter().filter(|r| r.split == Split::Test).cloned().collect();
    let scores = score_utterances(registry, &test, features, &[mode])?;
    trials_from_scores(registry, &scores, mode, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_arithmetic() {
        assert_eq!(lambda(-5.0, -7.0, -9.0), 11.0);
        assert_eq!(imposter_average(&[-4.0, -5.0, -6.0, -7.0, -8.0], ImposterAverage::MeanLog), -6.0);
        let lm = imposter_average(&[-1.0, -3.0], ImposterAverage::LogMean);
        assert!((lm - (((-1.0f64).exp() + (-3.0f64).exp()) / 2.0).ln()).abs() < 1e-12);
        assert_eq!(imposter_average(&[], ImposterAverage::MeanLog), 0.0);
    }

    #[test]
    fn decisions() {
        assert_eq!(decide(1.5, 1.5), Decision::Accept);
        assert_eq!(decide(1.5 - 1e-12, 1.5), Decision::Reject);
        assert_eq!(decide(-1e300, -f64::MAX), Decision::Accept);
    }

    #[test]
    fn threshold_adaptation() {
        assert_eq!(adapt_threshold(&[1.0, 2.0, 3.0], DEFAULT_ADAPT_WINDOW).unwrap(), 2.0);
        assert_eq!(adapt_threshold(&[4.5], DEFAULT_ADAPT_WINDOW).unwrap(), 4.5);
        assert_eq!(adapt_threshold(&[0.25; 50], DEFAULT_ADAPT_WINDOW).unwrap(), 0.25);
        assert_eq!(adapt_threshold(&[100.0, 1.0, 3.0], 2).unwrap(), 2.0);
        assert!(matches!(adapt_threshold(&[], 50), Err(CascadeError::EmptyWindow)));
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(gender_from_scores(&[-100.0, -90.0]), Gender::Female);
        assert_eq!(gender_from_scores(&[-5.0, -5.0]), Gender::Male);
    }

    #[test]
    fn wrong_emotion_is_wrong() {
        for e in Emotion::ALL {
            for k in 0..20 {
                assert_ne!(wrong_emotion(k, "u", e), e);
            }
        }
    }
}
