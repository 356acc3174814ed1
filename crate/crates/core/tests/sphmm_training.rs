use emocascade::features::{ObservationSequence, ProsodicSequence};
use emocascade::hmm::{GaussianMixture, Hmm, TrainingConfig};
use emocascade::sphmm::{log_prob_supra, train_suprasegmental, SupraConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn ltr(n: usize, stay: f64, means: &[f64], dim: usize) -> Hmm<f64> {
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let transitions = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if i + 1 < n {
                row[i] = stay;
                row[i + 1] = 1.0 - stay;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    let emissions = means.iter().map(|&m| GaussianMixture::single(vec![m; dim], vec![1.0; dim]).unwrap()).collect();
    Hmm::new(initial, transitions, emissions).unwrap()
}

fn gaussian_frames(rng: &mut ChaCha8Rng, t: usize, centre: &[f64; 5]) -> ProsodicSequence<f64> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let data = (0..t).flat_map(|_| centre.map(|c| c + noise.sample(rng))).collect();
    ProsodicSequence(ObservationSequence::new(data, 5).unwrap().with_timing(30.0, 10.0))
}

fn acoustic_near_zero(rng: &mut ChaCha8Rng, t: usize) -> ObservationSequence<f64> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    ObservationSequence::new((0..t * 3).map(|_| noise.sample(rng)).collect(), 3).unwrap()
}

fn training() -> TrainingConfig {
    TrainingConfig { max_iters: 5, ..TrainingConfig::default() }
}

#[test]
fn unreachable_late_states_fall_back_to_global_pool() {
    // Late acoustic states emit far from the data, so the alignment never leaves the first half.
    let acoustic = ltr(6, 0.9, &[0.0, 0.0, 0.0, 500.0, 500.0, 500.0], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let obs: Vec<_> = (0..6).map(|_| acoustic_near_zero(&mut rng, 40)).collect();
    let pros: Vec<_> = (0..6).map(|_| gaussian_frames(&mut rng, 40, &[120.0, 30.0, 0.7, -2.0, 5.0])).collect();
    let pairs: Vec<_> = obs.iter().zip(&pros).collect();
    let model = train_suprasegmental(&acoustic, &pairs, &SupraConfig::default(), &training()).unwrap();
    assert_eq!(model.fallback_states(), &[1]);
    assert_eq!(model.supra_transitions()[0][0], 1.0);
    assert!(log_prob_supra(&model, &pros[0]).unwrap().is_finite());
}

#[test]
fn prosodic_classes_are_separated() {
    let acoustic = ltr(4, 0.9, &[0.0; 4], 3);
    let centres = [[120.0, 30.0, 0.7, -2.0, 5.0], [124.0, 36.0, 0.4, -1.0, 7.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let models: Vec<_> = centres
        .iter()
        .map(|c| {
            let obs: Vec<_> = (0..20).map(|_| acoustic_near_zero(&mut rng, 50)).collect();
            let pros: Vec<_> = (0..20).map(|_| gaussian_frames(&mut rng, 50, c)).collect();
            let pairs: Vec<_> = obs.iter().zip(&pros).collect();
            train_suprasegmental(&acoustic, &pairs, &SupraConfig::default(), &training()).unwrap()
        })
        .collect();
    let mut correct = 0;
    let trials = 100;
    for k in 0..trials {
        let truth = k % 2;
        let seq = gaussian_frames(&mut rng, 50, &centres[truth]);
        let s: Vec<f64> = models.iter().map(|m| log_prob_supra(m, &seq).unwrap()).collect();
        let guess = usize::from(s[1] > s[0]);
        correct += usize::from(guess == truth);
    }
    assert!(correct >= 95, "{correct}/{trials}");
}
