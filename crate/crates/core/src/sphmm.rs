//! Suprasegmental models layered over trained acoustic HMMs, and the
//! acoustic/prosodic score fusion.
//!
//! A [`SuprasegmentalModel`] has two frame-level prosodic states, each
//! covering a contiguous group of the acoustic model's states, chained
//! left-to-right, plus one utterance-level state scored on summary statistics
//! of the whole prosodic contour.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ObservationSequence, ProsodicSequence};
use crate::hmm::{fit_mixture, GaussianMixture, Hmm, HmmError, TrainingConfig};
use crate::Scalar;

pub const N_SUPRA_STATES: usize = 2;
/// Dimension of [`utterance_statistics`].
pub const UTTERANCE_STATS_DIM: usize = 6;

#[derive(Debug, Error)]
pub enum SphmmError {
    #[error("non-finite fusion input")]
    NonFiniteInput,
    #[error("fusion weight {0} outside [0, 1]")]
    InvalidWeight(f64),
    #[error("acoustic sequence has {acoustic} frames, prosodic has {prosodic}")]
    LengthMismatch { acoustic: usize, prosodic: usize },
    #[error("no training utterances")]
    EmptyTrainingSet,
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub const ACOUSTIC_ONLY: FusionWeight = FusionWeight(0.0);
    pub const PROSODIC_ONLY: FusionWeight = FusionWeight(1.0);

    pub fn new(alpha: f64) -> Result<Self, SphmmError> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(FusionWeight(alpha))
        } else {
            Err(SphmmError::InvalidWeight(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for FusionWeight {
    fn default() -> Self {
        FusionWeight(0.5)
    }
}

impl TryFrom<f64> for FusionWeight {
    type Error = SphmmError;

    fn try_from(v: f64) -> Result<Self, SphmmError> {
        FusionWeight::new(v)
    }
}

impl From<FusionWeight> for f64 {
    fn from(w: FusionWeight) -> f64 {
        w.0
    }
}

/// `(1 - α)·acoustic + α·prosodic`, exact at both ends and for equal inputs.
pub fn fuse<S: Scalar>(alpha: FusionWeight, log_acoustic: S, log_prosodic: S) -> Result<S, SphmmError> {
    if !log_acoustic.is_finite() || !log_prosodic.is_finite() {
        return Err(SphmmError::NonFiniteInput);
    }
    let a = alpha.value();
    Ok(if a == 0.0 || log_acoustic == log_prosodic {
        log_acoustic
    } else if a == 1.0 {
        log_prosodic
    } else {
        log_acoustic + S::lit(a) * (log_prosodic - log_acoustic)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupraConfig {
    /// Components per frame-level suprasegmental state.
    pub n_mixtures: usize,
    /// Components of the utterance-level mixture.
    pub utterance_mixtures: usize,
}

impl Default for SupraConfig {
    fn default() -> Self {
        SupraConfig { n_mixtures: 3, utterance_mixtures: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SuprasegmentalModel<S: Scalar> {
    /// Two-state left-to-right chain over prosodic frames.
    chain: Hmm<S>,
    utterance_state: GaussianMixture<S>,
    /// Acoustic state index → suprasegmental state index.
    state_grouping: Vec<usize>,
    /// Suprasegmental states that fell back to the global prosodic pool.
    fallback_states: Vec<usize>,
}

/// Acoustic state `j` of `n` belongs to suprasegmental state `j·2/n`.
pub fn state_grouping(n_states: usize) -> Vec<usize> {
    (0..n_states).map(|j| j * N_SUPRA_STATES / n_states).collect()
}

/// Pitch mean and variance over voiced frames (all frames when none are
/// voiced), energy mean and variance, voiced fraction, duration in seconds.
pub fn utterance_statistics<S: Scalar>(prosodic: &ProsodicSequence<S>) -> Vec<S> {
    let frames = prosodic.frames();
    let col = |c: usize| frames.frames().map(move |f| f[c]);
    let voiced: Vec<S> = frames
        .frames()
        .filter(|f| f[ProsodicSequence::<S>::VOICING] > S::lit(0.5))
        .map(|f| f[ProsodicSequence::<S>::LOG_PITCH])
        .collect();
    let pitch: Vec<S> = if voiced.is_empty() { col(ProsodicSequence::<S>::LOG_PITCH).collect() } else { voiced.clone() };
    let energy: Vec<S> = col(ProsodicSequence::<S>::LOG_ENERGY).collect();
    let (pm, pv) = mean_var(&pitch);
    let (em, ev) = mean_var(&energy);
    let t = S::from_usize_lossy(frames.len());
    let hop_s = S::lit(frames.frame_hop_ms / 1000.0);
    vec![pm, pv, em, ev, S::from_usize_lossy(voiced.len()) / t, t * hop_s]
}

fn mean_var<S: Scalar>(v: &[S]) -> (S, S) {
    let n = S::from_usize_lossy(v.len());
    let mean = v.iter().copied().sum::<S>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    (mean, var)
}

impl<S: Scalar> SuprasegmentalModel<S> {
    pub fn chain(&self) -> &Hmm<S> {
        &self.chain
    }

    /// Matrix `[[b11, b12], [0, b22]]`.
    pub fn supra_transitions(&self) -> &[Vec<S>] {
        self.chain.transitions()
    }

    pub fn supra_emissions(&self) -> &[GaussianMixture<S>] {
        self.chain.emissions()
    }

    pub fn utterance_state(&self) -> &GaussianMixture<S> {
        &self.utterance_state
    }

    pub fn state_grouping(&self) -> &[usize] {
        &self.state_grouping
    }

    pub fn fallback_states(&self) -> &[usize] {
        &self.fallback_states
    }

    pub fn prosodic_dim(&self) -> usize {
        self.chain.dim()
    }

    pub fn from_parts(
        transitions: [[S; 2]; 2],
        emissions: [GaussianMixture<S>; 2],
        utterance_state: GaussianMixture<S>,
        state_grouping: Vec<usize>,
    ) -> Result<Self, SphmmError> {
        if utterance_state.dim() != UTTERANCE_STATS_DIM {
            return Err(HmmError::DimensionMismatch { expected: UTTERANCE_STATS_DIM, got: utterance_state.dim() }.into());
        }
        let chain = Hmm::new(
            vec![S::one(), S::zero()],
            transitions.iter().map(|r| r.to_vec()).collect(),
            emissions.to_vec(),
        )?;
        Ok(SuprasegmentalModel { chain, utterance_state, state_grouping, fallback_states: Vec::new() })
    }
}

/// Trains a suprasegmental model on top of `acoustic`.
///
/// Each acoustic sequence is Viterbi-aligned to `acoustic`; prosodic frames
/// are pooled by the suprasegmental state their aligned acoustic state maps
/// to. A state with an empty pool falls back to a mixture over all prosodic
/// frames and is listed in [`SuprasegmentalModel::fallback_states`].
pub fn train_suprasegmental<S: Scalar>(
    acoustic: &Hmm<S>,
    pairs: &[(&ObservationSequence<S>, &ProsodicSequence<S>)],
    config: &SupraConfig,
    training: &TrainingConfig,
) -> Result<SuprasegmentalModel<S>, SphmmError> {
    if pairs.is_empty() {
        return Err(SphmmError::EmptyTrainingSet);
    }
    let grouping = state_grouping(acoustic.n_states());
    let mut pools: [Vec<&[S]>; N_SUPRA_STATES] = Default::default();
    let mut counts = [0usize; 2];
    let mut stats = Vec::with_capacity(pairs.len());
    for (obs, pros) in pairs {
        if obs.len() != pros.len() {
            return Err(SphmmError::LengthMismatch { acoustic: obs.len(), prosodic: pros.len() });
        }
        let (path, _) = acoustic.viterbi(obs)?;
        let groups: Vec<usize> = path.iter().map(|&j| grouping[j]).collect();
        for (t, &g) in groups.iter().enumerate() {
            pools[g].push(pros.frames().frame(t));
        }
        for w in groups.windows(2) {
            if w[0] == 0 {
                counts[usize::from(w[1] == 1)] += 1;
            }
        }
        stats.push(utterance_statistics(pros));
    }

    let everything: Vec<&[S]> = pools.iter().flatten().copied().collect();
    let dim = everything[0].len();
    let mut fallback_states = Vec::new();
    let mut emissions = Vec::with_capacity(N_SUPRA_STATES);
    let mut global: Option<GaussianMixture<S>> = None;
    for (g, pool) in pools.iter().enumerate() {
        let mix = if pool.is_empty() {
            log::warn!("suprasegmental state {} received no frames; using the global prosodic pool", g + 1);
            fallback_states.push(g);
            match &global {
                Some(m) => m.clone(),
                None => {
                    let m = fit_mixture(&everything, config.n_mixtures, &training.with_seed(training.seed ^ 0x5eed))?.0;
                    global = Some(m.clone());
                    m
                }
            }
        } else {
            fit_mixture(pool, config.n_mixtures, &training.with_seed(training.seed.wrapping_add(g as u64)))?.0
        };
        if mix.dim() != dim {
            return Err(HmmError::DimensionMismatch { expected: dim, got: mix.dim() }.into());
        }
        emissions.push(mix);
    }

    let stay_total = counts[0] + counts[1];
    let b11 = if stay_total == 0 { S::one() } else { S::from_usize_lossy(counts[0]) / S::from_usize_lossy(stay_total) };
    let transitions = vec![vec![b11, S::one() - b11], vec![S::zero(), S::one()]];
    let chain = Hmm::new(vec![S::one(), S::zero()], transitions, emissions)?;

    let stat_refs: Vec<&[S]> = stats.iter().map(Vec::as_slice).collect();
    let utterance_state =
        fit_mixture(&stat_refs, config.utterance_mixtures, &training.with_seed(training.seed.wrapping_add(7)))?.0;
    Ok(SuprasegmentalModel { chain, utterance_state, state_grouping: grouping, fallback_states })
}

/// Per-frame chain log-likelihood plus the utterance-level log-density.
pub fn log_prob_supra<S: Scalar>(model: &SuprasegmentalModel<S>, prosodic: &ProsodicSequence<S>) -> Result<S, SphmmError> {
    let frames = prosodic.frames();
    let per_frame = model.chain.log_forward(frames)? / S::from_usize_lossy(frames.len());
    let stats = utterance_statistics(prosodic);
    Ok(per_frame + model.utterance_state.log_density(&stats))
}
