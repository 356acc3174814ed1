use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::{GaussianMixture, Hmm, HmmError};
use crate::features::ObservationSequence;
use crate::rng::substream;
use crate::Scalar;

/// Smallest variance floor used when the training data has no spread at all.
const ABSOLUTE_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub n_states: usize,
    pub n_mixtures: usize,
    pub max_iters: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub ll_rel_tol: f64,
    /// Per-dimension variance floor as a fraction of the global data variance.
    pub variance_floor_scale: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_states: 6,
            n_mixtures: 10,
            max_iters: 20,
            ll_rel_tol: 1e-4,
            variance_floor_scale: 1e-3,
            kmeans_iters: 20,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), HmmError> {
        if self.n_states == 0 || self.n_mixtures == 0 {
            return Err(HmmError::InvalidModel("need at least one state and one mixture".into()));
        }
        if self.max_iters == 0 {
            return Err(HmmError::InvalidModel("max_iters must be at least 1".into()));
        }
        if !(self.variance_floor_scale > 0.0) || !(self.ll_rel_tol > 0.0) {
            return Err(HmmError::InvalidModel("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainingConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedHmm<S: Scalar> {
    pub model: Hmm<S>,
    /// Total training log-likelihood of each evaluated model, in order.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

/// Per-dimension variance over all frames, scaled into a floor.
fn variance_floor<'a, S: Scalar>(frames: impl Iterator<Item = &'a [S]>, dim: usize, scale: f64) -> Vec<f64> {
    let mut n = 0usize;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for x in frames {
        n += 1;
        for d in 0..dim {
            let v = x[d].to_f64_lossy();
            let delta = v - mean[d];
            mean[d] += delta / n as f64;
            m2[d] += delta * (v - mean[d]);
        }
    }
    m2.iter().map(|&s| (scale * s / n.max(1) as f64).max(ABSOLUTE_VARIANCE_FLOOR)).collect()
}

/// Mixture from a k-means clustering of `points`.
fn init_mixture<S: Scalar>(
    points: &[&[S]],
    n_mix: usize,
    floor: &[f64],
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GaussianMixture<S>, HmmError> {
    let dim = floor.len();
    let clustering = kmeans(points, n_mix, iters, rng);
    let k = clustering.centroids.len();
    let pooled = moments(points.iter().copied(), dim);
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for c in 0..k {
        let members = points.iter().zip(&clustering.assignments).filter(|(_, &a)| a == c).map(|(p, _)| *p);
        let (count, mean, var) = moments(members, dim);
        let var = if count >= 2 { var } else { pooled.2.clone() };
        weights.push(count as f64 / points.len() as f64);
        means.push(mean.iter().map(|&v| S::lit(v)).collect());
        vars.push(var.iter().zip(floor).map(|(&v, &f)| S::lit(v.max(f))).collect());
    }
    GaussianMixture::new(normalized(&weights), means, vars)
}

fn moments<'a, S: Scalar>(points: impl Iterator<Item = &'a [S]>, dim: usize) -> (usize, Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for p in points {
        n += 1;
        for d in 0..dim {
            let v = p[d].to_f64_lossy();
            sum[d] += v;
            sq[d] += v * v;
        }
    }
    let nf = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let var = sq.iter().zip(&mean).map(|(s, m)| (s / nf - m * m).max(0.0)).collect();
    (n, mean, var)
}

fn normalized<S: Scalar>(w: &[f64]) -> Vec<S> {
    let total: f64 = w.iter().sum();
    let mut out: Vec<S> = w.iter().map(|&x| S::lit(x / total)).collect();
    // push rounding residue into the largest entry
    let residue = S::one() - out.iter().copied().sum::<S>();
    if let Some(big) = (0..out.len()).max_by(|&a, &b| out[a].partial_cmp(&out[b]).unwrap().then(b.cmp(&a))) {
        out[big] = (out[big] + residue).max(S::zero());
    }
    out
}

/// Sufficient statistics for one mixture.
#[derive(Debug, Clone)]
struct MixtureStats {
    occ: Vec<f64>,
    sx: Vec<Vec<f64>>,
    sxx: Vec<Vec<f64>>,
}

impl MixtureStats {
    fn new(m: usize, dim: usize) -> Self {
        MixtureStats { occ: vec![0.0; m], sx: vec![vec![0.0; dim]; m], sxx: vec![vec![0.0; dim]; m] }
    }

    fn add<S: Scalar>(&mut self, m: usize, w: f64, x: &[S]) {
        self.occ[m] += w;
        for ((s, q), &v) in self.sx[m].iter_mut().zip(self.sxx[m].iter_mut()).zip(x) {
            let v = v.to_f64_lossy();
            *s += w * v;
            *q += w * v * v;
        }
    }

    fn merge(&mut self, other: &MixtureStats) {
        for m in 0..self.occ.len() {
            self.occ[m] += other.occ[m];
            for d in 0..self.sx[m].len() {
                self.sx[m][d] += other.sx[m][d];
                self.sxx[m][d] += other.sxx[m][d];
            }
        }
    }

    /// Re-estimated mixture; starved components keep their old parameters.
    fn update<S: Scalar>(&self, old: &GaussianMixture<S>, floor: &[f64]) -> Result<GaussianMixture<S>, HmmError> {
        let total: f64 = self.occ.iter().sum();
        if !(total > 0.0) {
            return Ok(old.clone());
        }
        let mut means = Vec::with_capacity(self.occ.len());
        let mut vars = Vec::with_capacity(self.occ.len());
        for m in 0..self.occ.len() {
            let occ = self.occ[m];
            if !(occ > 0.0) {
                means.push(old.means()[m].clone());
                vars.push(old.variances()[m].clone());
                continue;
            }
            let mu: Vec<f64> = self.sx[m].iter().map(|s| s / occ).collect();
            let var = self.sxx[m].iter().zip(&mu).zip(floor).map(|((q, u), &f)| (q / occ - u * u).max(f));
            vars.push(var.map(S::lit).collect());
            means.push(mu.into_iter().map(S::lit).collect());
        }
        GaussianMixture::new(normalized(&self.occ), means, vars)
    }
}

#[derive(Debug, Clone)]
struct SequenceStats {
    mix: Vec<MixtureStats>,
    /// `[stay, advance]` expected transition counts per state.
    trans: Vec<[f64; 2]>,
    ll: f64,
}

impl<S: Scalar> Hmm<S> {
    fn accumulate(&self, obs: &ObservationSequence<S>) -> SequenceStats {
        let n = self.n_states();
        let t_len = obs.len();
        let m_max = self.params.emissions.iter().map(|e| e.n_components()).max().unwrap_or(1);
        let mut comp = vec![S::neg_infinity(); t_len * n * m_max];
        let mut b = vec![S::zero(); t_len * n];
        for (t, x) in obs.frames().enumerate() {
            for (j, e) in self.params.emissions.iter().enumerate() {
                let base = (t * n + j) * m_max;
                b[t * n + j] = e.component_terms(x, &mut comp[base..base + e.n_components()]);
            }
        }
        let alpha = self.forward_table(&b, t_len);
        let beta = self.backward_table(&b, t_len);
        let ll = crate::log_sum_exp(&alpha[(t_len - 1) * n..]);

        let dim = self.dim();
        let mut mix: Vec<MixtureStats> =
            self.params.emissions.iter().map(|e| MixtureStats::new(e.n_components(), dim)).collect();
        let mut trans = vec![[0.0f64; 2]; n];
        for (t, x) in obs.frames().enumerate() {
            for j in 0..n {
                let g = (alpha[t * n + j] + beta[t * n + j] - ll).to_f64_lossy().exp();
                if g <= 0.0 {
                    continue;
                }
                let bj = b[t * n + j];
                let base = (t * n + j) * m_max;
                for m in 0..self.params.emissions[j].n_components() {
                    let post = g * (comp[base + m] - bj).to_f64_lossy().exp();
                    if post > 0.0 {
                        mix[j].add(m, post, x);
                    }
                }
            }
            if t + 1 < t_len {
                for i in 0..n {
                    let a = alpha[t * n + i];
                    let stay = a + self.log_trans[i][i] + b[(t + 1) * n + i] + beta[(t + 1) * n + i] - ll;
                    trans[i][0] += stay.to_f64_lossy().exp();
                    if i + 1 < n {
                        let adv = a + self.log_trans[i][i + 1] + b[(t + 1) * n + i + 1] + beta[(t + 1) * n + i + 1] - ll;
                        trans[i][1] += adv.to_f64_lossy().exp();
                    }
                }
            }
        }
        SequenceStats { mix, trans, ll: ll.to_f64_lossy() }
    }

    fn reestimate(&self, stats: &[SequenceStats], floor: &[f64]) -> Result<Hmm<S>, HmmError> {
        let n = self.n_states();
        let mut total = stats[0].clone();
        for s in &stats[1..] {
            for j in 0..n {
                total.mix[j].merge(&s.mix[j]);
                total.trans[j][0] += s.trans[j][0];
                total.trans[j][1] += s.trans[j][1];
            }
        }
        let mut transitions = self.params.transitions.clone();
        for i in 0..n.saturating_sub(1) {
            let [stay, adv] = total.trans[i];
            if stay + adv > 0.0 {
                let p = S::lit(stay / (stay + adv));
                transitions[i][i] = p;
                transitions[i][i + 1] = S::one() - p;
            }
        }
        let emissions = self
            .params
            .emissions
            .iter()
            .zip(&total.mix)
            .map(|(e, s)| s.update(e, floor))
            .collect::<Result<Vec<_>, _>>()?;
        Hmm::new(self.params.initial.clone(), transitions, emissions)
    }
}

/// Trains a left-to-right HMM by Baum-Welch.
///
/// Initialization splits every sequence uniformly across the states and
/// clusters each state's frames with seeded k-means.
pub fn baum_welch<S: Scalar>(
    sequences: &[&ObservationSequence<S>],
    config: &TrainingConfig,
) -> Result<TrainedHmm<S>, HmmError> {
    config.validate()?;
    let first = sequences.first().ok_or(HmmError::EmptyTrainingSet)?;
    let dim = first.dim();
    let n = config.n_states;
    for s in sequences {
        if s.dim() != dim {
            return Err(HmmError::DimensionMismatch { expected: dim, got: s.dim() });
        }
        if s.len() < n {
            return Err(HmmError::SequenceTooShort { len: s.len(), needed: n });
        }
    }
    let floor = variance_floor(sequences.iter().flat_map(|s| s.frames()), dim, config.variance_floor_scale);

    let mut rng = substream(config.seed, "baum-welch-init");
    let mut emissions = Vec::with_capacity(n);
    let mut transitions = vec![vec![S::zero(); n]; n];
    for j in 0..n {
        let mut pool: Vec<&[S]> = Vec::new();
        let mut seg_total = 0usize;
        for s in sequences {
            let (lo, hi) = (j * s.len() / n, (j + 1) * s.len() / n);
            seg_total += hi - lo;
            pool.extend((lo..hi).map(|t| s.frame(t)));
        }
        emissions.push(init_mixture(&pool, config.n_mixtures, &floor, config.kmeans_iters, &mut rng)?);
        if j + 1 < n {
            let mean_len = seg_total as f64 / sequences.len() as f64;
            let stay = mean_len / (mean_len + 1.0);
            transitions[j][j] = S::lit(stay);
            transitions[j][j + 1] = S::one() - S::lit(stay);
        } else {
            transitions[j][j] = S::one();
        }
    }
    let mut initial = vec![S::zero(); n];
    initial[0] = S::one();
    let mut model = Hmm::new(initial, transitions, emissions)?;

    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    for iter in 0..=config.max_iters {
        let stats: Vec<SequenceStats> = sequences.par_iter().map(|s| model.accumulate(s)).collect();
        let ll: f64 = stats.iter().map(|s| s.ll).sum();
        if let Some(&prev) = history.last() {
            if ll - prev < config.ll_rel_tol * prev.abs() {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        if iter == config.max_iters {
            break;
        }
        model = model.reestimate(&stats, &floor)?;
    }
    log::debug!("baum-welch: {} evaluations, final log-likelihood {:.3}", history.len(), history.last().unwrap());
    Ok(TrainedHmm { model, log_likelihoods: history, converged })
}

/// Fits a diagonal Gaussian mixture to a pool of vectors by EM.
///
/// Returns the mixture and the log-likelihood history.
pub fn fit_mixture<S: Scalar>(
    points: &[&[S]],
    n_mix: usize,
    config: &TrainingConfig,
) -> Result<(GaussianMixture<S>, Vec<f64>), HmmError> {
    let first = points.first().ok_or(HmmError::EmptyTrainingSet)?;
    let dim = first.len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(HmmError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let floor = variance_floor(points.iter().copied(), dim, config.variance_floor_scale);
    let mut rng = substream(config.seed, "mixture-init");
    let mut gmm = init_mixture(points, n_mix.max(1), &floor, config.kmeans_iters, &mut rng)?;
    let mut history = Vec::new();
    for iter in 0..=config.max_iters {
        let k = gmm.n_components();
        let chunks: Vec<(MixtureStats, f64)> = points
            .par_chunks(512)
            .map(|chunk| {
                let mut st = MixtureStats::new(k, dim);
                let mut ll = 0.0;
                let mut terms = vec![S::zero(); k];
                for x in chunk {
                    let lp = gmm.component_terms(x, &mut terms);
                    ll += lp.to_f64_lossy();
                    for (m, &c) in terms.iter().enumerate() {
                        let post = (c - lp).to_f64_lossy().exp();
                        if post > 0.0 {
                            st.add(m, post, x);
                        }
                    }
                }
                (st, ll)
            })
            .collect();
        let ll: f64 = chunks.iter().map(|c| c.1).sum();
        let done = history.last().is_some_and(|&prev: &f64| ll - prev < config.ll_rel_tol * prev.abs());
        history.push(ll);
        if done || iter == config.max_iters {
            break;
        }
        let mut total = MixtureStats::new(k, dim);
        for (st, _) in &chunks {
            total.merge(st);
        }
        gmm = total.update(&gmm, &floor)?;
    }
    Ok((gmm, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn generator() -> Hmm<f64> {
        let e = |mu: f64| GaussianMixture::new(vec![0.6, 0.4], vec![vec![mu, -mu], vec![mu + 1.0, 0.5]], vec![vec![0.3, 0.5], vec![0.2, 0.4]]).unwrap();
        Hmm::new(
            vec![1.0, 0.0, 0.0],
            vec![vec![0.8, 0.2, 0.0], vec![0.0, 0.85, 0.15], vec![0.0, 0.0, 1.0]],
            vec![e(-3.0), e(0.0), e(3.0)],
        )
        .unwrap()
    }

    fn samples(n: usize, t_len: usize, seed: u64) -> Vec<ObservationSequence<f64>> {
        let g = generator();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| g.sample(t_len, &mut rng).1).collect()
    }

    fn config() -> TrainingConfig {
        TrainingConfig { n_states: 3, n_mixtures: 2, max_iters: 15, ll_rel_tol: 1e-12, ..Default::default() }
    }

    #[test]
    fn likelihood_is_monotone() {
        let data = samples(10, 40, 1);
        let refs: Vec<_> = data.iter().collect();
        let trained = baum_welch(&refs, &config()).unwrap();
        for w in trained.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{:?}", trained.log_likelihoods);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let data = samples(8, 30, 2);
        let refs: Vec<_> = data.iter().collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| baum_welch(&refs, &config()).unwrap());
        let b = four.install(|| baum_welch(&refs, &config()).unwrap());
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihoods, b.log_likelihoods);
    }

    #[test]
    fn recovers_generator_likelihood() {
        let train = samples(200, 60, 3);
        let held = samples(100, 60, 4);
        let refs: Vec<_> = train.iter().collect();
        let cfg = TrainingConfig { max_iters: 30, ll_rel_tol: 1e-6, ..config() };
        let trained = baum_welch(&refs, &cfg).unwrap().model;
        let g = generator();
        let per_frame = |m: &Hmm<f64>| held.iter().map(|o| m.log_forward(o).unwrap()).sum::<f64>() / (100.0 * 60.0);
        let (lt, lg) = (per_frame(&trained), per_frame(&g));
        assert!((lt - lg).abs() <= 0.05 * lg.abs(), "trained {lt} vs generator {lg}");
    }

    #[test]
    fn constant_data_pins_variance_at_floor() {
        let obs = ObservationSequence::new(vec![2.5; 40], 2).unwrap();
        let cfg = TrainingConfig { n_states: 2, n_mixtures: 3, max_iters: 3, ..Default::default() };
        let m = baum_welch(&[&obs], &cfg).unwrap().model;
        for e in m.emissions() {
            for v in e.variances().iter().flatten() {
                assert!((v - ABSOLUTE_VARIANCE_FLOOR).abs() < 1e-15);
            }
        }
        assert!(m.log_forward(&obs).unwrap().is_finite());
    }

    #[test]
    fn input_errors() {
        let cfg = TrainingConfig { n_states: 4, ..config() };
        let short = ObservationSequence::new(vec![0.0; 3], 1).unwrap();
        assert!(matches!(baum_welch::<f64>(&[], &cfg), Err(HmmError::EmptyTrainingSet)));
        assert!(matches!(baum_welch(&[&short], &cfg), Err(HmmError::SequenceTooShort { len: 3, needed: 4 })));
        let a = ObservationSequence::new(vec![0.0; 8], 1).unwrap();
        let b = ObservationSequence::new(vec![0.0; 8], 2).unwrap();
        assert!(matches!(baum_welch(&[&a, &b], &cfg), Err(HmmError::DimensionMismatch { .. })));
    }

    #[test]
    fn mixture_fit_separates_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = GaussianMixture::new(vec![0.3, 0.7], vec![vec![-4.0], vec![4.0]], vec![vec![1.0], vec![0.5]]).unwrap();
        let h = Hmm::new(vec![1.0], vec![vec![1.0]], vec![g]).unwrap();
        let (_, obs) = h.sample(4000, &mut rng);
        let pts: Vec<&[f64]> = obs.frames().collect();
        let (fit, hist) = fit_mixture(&pts, 2, &TrainingConfig::default()).unwrap();
        assert!(hist.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs()));
        let mut comps: Vec<(f64, f64)> = fit.means().iter().zip(fit.weights()).map(|(m, &w)| (m[0], w)).collect();
        comps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!((comps[0].0 + 4.0).abs() < 0.15 && (comps[1].0 - 4.0).abs() < 0.1);
        assert!((comps[0].1 - 0.3).abs() < 0.03);
    }

    #[test]
    fn trains_in_f32() {
        let data: Vec<ObservationSequence<f32>> = samples(6, 30, 5)
            .iter()
            .map(|o| ObservationSequence::new(o.as_slice().iter().map(|&v| v as f32).collect(), 2).unwrap())
            .collect();
        let refs: Vec<_> = data.iter().collect();
        let m = baum_welch(&refs, &config()).unwrap().model;
        assert!(m.log_forward(&data[0]).unwrap().is_finite());
    }
}
