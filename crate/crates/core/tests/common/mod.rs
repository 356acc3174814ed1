#![allow(dead_code)]

use emocascade::features::ObservationSequence;
use emocascade::hmm::{GaussianMixture, Hmm};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random left-to-right model with `n` states, `m` components and dimension `d`.
pub fn random_hmm(rng: &mut ChaCha8Rng, n: usize, m: usize, d: usize) -> Hmm<f64> {
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let transitions = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if i + 1 < n {
                let stay = rng.random_range(0.05..0.95);
                row[i] = stay;
                row[i + 1] = 1.0 - stay;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    let emissions = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let weights = raw.iter().map(|w| w / total).collect();
            let means = (0..m).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let variances = (0..m).map(|_| (0..d).map(|_| rng.random_range(0.2..3.0)).collect()).collect();
            GaussianMixture::new(weights, means, variances).unwrap()
        })
        .collect();
    Hmm::new(initial, transitions, emissions).unwrap()
}

pub fn random_sequence(rng: &mut ChaCha8Rng, t: usize, d: usize) -> ObservationSequence<f64> {
    ObservationSequence::new((0..t * d).map(|_| rng.random_range(-4.0..4.0)).collect(), d).unwrap()
}

/// Every legal left-to-right path of length `t` over `n` states, starting in state 0.
pub fn legal_paths(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![0usize]];
    for _ in 1..t {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().unwrap();
                let mut out = vec![];
                for next in [last, last + 1] {
                    if next < n {
                        let mut q = p.clone();
                        q.push(next);
                        out.push(q);
                    }
                }
                out
            })
            .collect();
    }
    paths
}

/// Joint log-probability of one state path and the observations.
pub fn path_log_prob(model: &Hmm<f64>, obs: &ObservationSequence<f64>, path: &[usize]) -> f64 {
    let mut lp = model.initial()[path[0]].ln() + model.emissions()[path[0]].log_density(obs.frame(0));
    for t in 1..path.len() {
        lp += model.transitions()[path[t - 1]][path[t]].ln() + model.emissions()[path[t]].log_density(obs.frame(t));
    }
    lp
}

/// Likelihood by explicit summation over all legal paths.
pub fn brute_force_forward(model: &Hmm<f64>, obs: &ObservationSequence<f64>) -> f64 {
    let lps: Vec<f64> = legal_paths(model.n_states(), obs.len()).iter().map(|p| path_log_prob(model, obs, p)).collect();
    let max = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + lps.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}
