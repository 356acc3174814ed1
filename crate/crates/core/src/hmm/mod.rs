//! Left-to-right continuous-density HMMs with diagonal Gaussian mixture
//! emissions.
//!
//! All likelihood computations run in the log domain. Models are always
//! left-to-right: the chain starts in state 0 and each state may only stay or
//! advance to the next one.

mod kmeans;
mod mixture;
mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::ObservationSequence;
use crate::Scalar;

pub use kmeans::{kmeans, Clustering};
pub use mixture::{gmm_logpdf, GaussianMixture, MixtureParams};
pub use train::{baum_welch, fit_mixture, TrainedHmm, TrainingConfig};

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("dimension mismatch: model expects {expected}, observation has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty observation sequence")]
    EmptySequence,
    #[error("no training sequences")]
    EmptyTrainingSet,
    #[error("sequence of {len} frames is shorter than the {needed} states")]
    SequenceTooShort { len: usize, needed: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "HmmParams<S>", into = "HmmParams<S>", bound = "S: Scalar")]
pub struct Hmm<S: Scalar> {
    params: HmmParams<S>,
    log_initial: Vec<S>,
    log_trans: Vec<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct HmmParams<S: Scalar> {
    pub initial: Vec<S>,
    pub transitions: Vec<Vec<S>>,
    pub emissions: Vec<GaussianMixture<S>>,
}

impl<S: Scalar> PartialEq for Hmm<S> {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl<S: Scalar> TryFrom<HmmParams<S>> for Hmm<S> {
    type Error = HmmError;

    fn try_from(p: HmmParams<S>) -> Result<Self, HmmError> {
        Hmm::new(p.initial, p.transitions, p.emissions)
    }
}

impl<S: Scalar> From<Hmm<S>> for HmmParams<S> {
    fn from(h: Hmm<S>) -> Self {
        h.params
    }
}

impl<S: Scalar> Hmm<S> {
    pub fn new(initial: Vec<S>, transitions: Vec<Vec<S>>, emissions: Vec<GaussianMixture<S>>) -> Result<Self, HmmError> {
        let n = emissions.len();
        let bad = |m: &str| Err(HmmError::InvalidModel(m.to_string()));
        if n == 0 {
            return bad("no states");
        }
        if initial.len() != n || transitions.len() != n || transitions.iter().any(|r| r.len() != n) {
            return bad("state counts disagree");
        }
        let dim = emissions[0].dim();
        if emissions.iter().any(|e| e.dim() != dim) {
            return bad("emission dimensions disagree");
        }
        if initial[0] != S::one() || initial[1..].iter().any(|&p| p != S::zero()) {
            return bad("initial distribution must start in the first state");
        }
        let tol = mixture::weight_tolerance::<S>();
        for (i, row) in transitions.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if !(a >= S::zero()) || !a.is_finite() {
                    return bad("negative or non-finite transition probability");
                }
                if a > S::zero() && j != i && j != i + 1 {
                    return bad("transition is not left-to-right");
                }
            }
            let total: S = row.iter().copied().sum();
            if (total - S::one()).abs() > tol {
                return Err(HmmError::InvalidModel(format!("transition row {i} sums to {total}")));
            }
        }
        let log_initial = initial.iter().map(|p| p.ln()).collect();
        let log_trans = transitions.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
        Ok(Hmm { params: HmmParams { initial, transitions, emissions }, log_initial, log_trans })
    }

    pub fn n_states(&self) -> usize {
        self.params.emissions.len()
    }

    pub fn dim(&self) -> usize {
        self.params.emissions[0].dim()
    }

    pub fn initial(&self) -> &[S] {
        &self.params.initial
    }

    pub fn transitions(&self) -> &[Vec<S>] {
        &self.params.transitions
    }

    pub fn emissions(&self) -> &[GaussianMixture<S>] {
        &self.params.emissions
    }

    fn check(&self, obs: &ObservationSequence<S>) -> Result<(), HmmError> {
        if obs.is_empty() {
            return Err(HmmError::EmptySequence);
        }
        if obs.dim() != self.dim() {
            return Err(HmmError::DimensionMismatch { expected: self.dim(), got: obs.dim() });
        }
        Ok(())
    }

    /// `T x N` emission log-likelihoods, row-major.
    fn emission_table(&self, obs: &ObservationSequence<S>) -> Vec<S> {
        let n = self.n_states();
        let mut b = Vec::with_capacity(obs.len() * n);
        for x in obs.frames() {
            b.extend(self.params.emissions.iter().map(|e| e.log_density(x)));
        }
        b
    }

    /// Forward recursion over a precomputed emission table; returns the
    /// `T x N` alpha matrix.
    fn forward_table(&self, b: &[S], t_len: usize) -> Vec<S> {
        let n = self.n_states();
        let mut alpha = vec![S::neg_infinity(); t_len * n];
        for j in 0..n {
            alpha[j] = self.log_initial[j] + b[j];
        }
        for t in 1..t_len {
            let (prev, cur) = alpha.split_at_mut(t * n);
            let prev = &prev[(t - 1) * n..];
            for j in 0..n {
                let mut acc = prev[j] + self.log_trans[j][j];
                if j > 0 {
                    acc = crate::log_add(acc, prev[j - 1] + self.log_trans[j - 1][j]);
                }
                cur[j] = acc + b[t * n + j];
            }
        }
        alpha
    }

    fn backward_table(&self, b: &[S], t_len: usize) -> Vec<S> {
        let n = self.n_states();
        let mut beta = vec![S::neg_infinity(); t_len * n];
        for j in 0..n {
            beta[(t_len - 1) * n + j] = S::zero();
        }
        for t in (0..t_len - 1).rev() {
            for i in 0..n {
                let mut acc = self.log_trans[i][i] + b[(t + 1) * n + i] + beta[(t + 1) * n + i];
                if i + 1 < n {
                    acc = crate::log_add(
                        acc,
                        self.log_trans[i][i + 1] + b[(t + 1) * n + i + 1] + beta[(t + 1) * n + i + 1],
                    );
                }
                beta[t * n + i] = acc;
            }
        }
        beta
    }

    pub fn log_forward(&self, obs: &ObservationSequence<S>) -> Result<S, HmmError> {
        self.check(obs)?;
        let n = self.n_states();
        let t_len = obs.len();
        let b = self.emission_table(obs);
        let alpha = self.forward_table(&b, t_len);
        Ok(crate::log_sum_exp(&alpha[(t_len - 1) * n..]))
    }

    /// Most likely state path (0-based) and its joint log-probability.
    pub fn viterbi(&self, obs: &ObservationSequence<S>) -> Result<(Vec<usize>, S), HmmError> {
        self.check(obs)?;
        let n = self.n_states();
        let t_len = obs.len();
        let b = self.emission_table(obs);
        let mut delta: Vec<S> = (0..n).map(|j| self.log_initial[j] + b[j]).collect();
        let mut back = vec![0usize; t_len * n];
        for t in 1..t_len {
            let mut next = vec![S::neg_infinity(); n];
            for j in 0..n {
                let mut best = delta[j] + self.log_trans[j][j];
                let mut arg = j;
                if j > 0 {
                    let cand = delta[j - 1] + self.log_trans[j - 1][j];
                    if cand > best {
                        best = cand;
                        arg = j - 1;
                    }
                }
                next[j] = best + b[t * n + j];
                back[t * n + j] = arg;
            }
            delta = next;
        }
        let mut last = 0;
        for j in 1..n {
            if delta[j] > delta[last] {
                last = j;
            }
        }
        let score = delta[last];
        let mut path = vec![0usize; t_len];
        path[t_len - 1] = last;
        for t in (1..t_len).rev() {
            path[t - 1] = back[t * n + path[t]];
        }
        Ok((path, score))
    }

    /// Draws a state path and observation sequence of length `t_len`.
    pub fn sample(&self, t_len: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, ObservationSequence<S>) {
        assert!(t_len > 0, "sample length must be positive");
        let n = self.n_states();
        let dim = self.dim();
        let mut states = Vec::with_capacity(t_len);
        let mut data = Vec::with_capacity(t_len * dim);
        let mut state = 0usize;
        for t in 0..t_len {
            if t > 0 {
                let stay = self.params.transitions[state][state].to_f64_lossy();
                if state + 1 < n && rng.random::<f64>() >= stay {
                    state += 1;
                }
            }
            states.push(state);
            let mix = &self.params.emissions[state];
            let m = pick(mix.weights(), rng);
            for d in 0..dim {
                let z: f64 = StandardNormal.sample(rng);
                let mu = mix.means()[m][d].to_f64_lossy();
                let sd = mix.variances()[m][d].to_f64_lossy().sqrt();
                data.push(S::lit(mu + sd * z));
            }
        }
        let obs = ObservationSequence::new(data, dim).expect("sampled frames are finite");
        (states, obs)
    }
}

fn pick<S: Scalar>(weights: &[S], rng: &mut ChaCha8Rng) -> usize {
    let mut r = rng.random::<f64>();
    for (k, w) in weights.iter().enumerate() {
        r -= w.to_f64_lossy();
        if r < 0.0 {
            return k;
        }
    }
    weights.iter().rposition(|w| *w > S::zero()).unwrap_or(0)
}

/// `log P(O | λ)` by the forward recursion.
pub fn log_forward<S: Scalar>(model: &Hmm<S>, obs: &ObservationSequence<S>) -> Result<S, HmmError> {
    model.log_forward(obs)
}

pub fn viterbi<S: Scalar>(model: &Hmm<S>, obs: &ObservationSequence<S>) -> Result<(Vec<usize>, S), HmmError> {
    model.viterbi(obs)
}
