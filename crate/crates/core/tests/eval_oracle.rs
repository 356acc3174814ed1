use std::path::PathBuf;

use emocascade::eval::{
    det_curve, eer, eer_threshold, export_det, parse_det, summary_stats, two_sample_t, LabeledTable, ScoreSet,
};
use emocascade::rng::substream;
use rand::Rng;

/// EER by sweeping a fixed threshold grid and interpolating at the first
/// point where the miss rate reaches the false-alarm rate.
fn grid_eer(s: &ScoreSet, step: f64) -> f64 {
    let lo = s.target().iter().chain(s.nontarget()).cloned().fold(f64::INFINITY, f64::min) - step;
    let hi = s.target().iter().chain(s.nontarget()).cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * step;
    let rates = |th: f64| {
        let miss = s.target().iter().filter(|&&x| x < th).count() as f64 / s.target().len() as f64;
        let fa = s.nontarget().iter().filter(|&&x| x >= th).count() as f64 / s.nontarget().len() as f64;
        (miss, fa)
    };
    let steps = ((hi - lo) / step).ceil() as usize;
    let mut prev = rates(lo);
    for k in 1..=steps {
        let cur = rates(lo + k as f64 * step);
        if cur.0 >= cur.1 {
            let (d0, d1) = (prev.0 - prev.1, cur.0 - cur.1);
            if d1 == 0.0 {
                return 100.0 * cur.0;
            }
            let f = -d0 / (d1 - d0);
            return 100.0 * (prev.1 + f * (cur.1 - prev.1));
        }
        prev = cur;
    }
    100.0 * prev.0
}

fn random_scores(seed: u64) -> ScoreSet {
    let mut rng = substream(seed, "eer-oracle");
    let nt = rng.random_range(5..60);
    let nn = rng.random_range(5..200);
    let shift = rng.random_range(0..400);
    let tgt = (0..nt).map(|_| (rng.random_range(0..1000) + shift) as f64 * 1e-3).collect();
    let non = (0..nn).map(|_| rng.random_range(0..1000) as f64 * 1e-3).collect();
    ScoreSet::new(tgt, non).unwrap()
}

#[test]
fn eer_matches_threshold_grid_sweep() {
    for seed in 0..100 {
        let s = random_scores(seed);
        let fast = eer(&s);
        let slow = grid_eer(&s, 1e-4);
        assert!((fast - slow).abs() < 0.05, "set {seed}: {fast} vs {slow}");
    }
}

#[test]
fn eer_is_invariant_to_shift_and_monotone_maps() {
    for seed in 0..20 {
        let s = random_scores(seed);
        let base = eer(&s);
        let shifted = ScoreSet::new(s.target().iter().map(|x| x + 17.0).collect(), s.nontarget().iter().map(|x| x + 17.0).collect()).unwrap();
        let cubed = ScoreSet::new(s.target().iter().map(|x| x.powi(3) * 5.0).collect(), s.nontarget().iter().map(|x| x.powi(3) * 5.0).collect()).unwrap();
        assert!((eer(&shifted) - base).abs() < 1e-9);
        assert!((eer(&cubed) - base).abs() < 1e-9);
    }
}

#[test]
fn det_curves_are_monotone_and_anchored() {
    for seed in 0..20 {
        let curve = det_curve(&random_scores(seed));
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!((first.miss, first.false_alarm), (0.0, 1.0));
        assert_eq!((last.miss, last.false_alarm), (1.0, 0.0));
        for w in curve.points.windows(2) {
            assert!(w[1].threshold > w[0].threshold);
            assert!(w[1].miss >= w[0].miss && w[1].false_alarm <= w[0].false_alarm);
        }
    }
}

#[test]
fn threshold_splits_errors_at_the_crossing() {
    let s = ScoreSet::new(vec![0.9, 0.8, 0.3], vec![0.2, 0.1, 0.85]).unwrap();
    let th = eer_threshold(&s);
    let miss = s.target().iter().filter(|&&x| x < th).count();
    let fa = s.nontarget().iter().filter(|&&x| x >= th).count();
    assert_eq!(miss, fa);
    assert!((eer(&s) - 100.0 / 3.0).abs() < 1e-9);
}

#[test]
fn det_export_round_trips() {
    let curve = det_curve(&random_scores(4));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.csv");
    export_det(&curve, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), curve.points.len() + 1);
    let back = parse_det(&text).unwrap();
    for (a, b) in curve.points.iter().zip(&back.points) {
        for (x, y) in [(a.threshold, b.threshold), (a.miss, b.miss), (a.false_alarm, b.false_alarm)] {
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-300), "{x} vs {y}");
        }
    }
}

fn fixture(name: &str) -> LabeledTable {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", "published", "v1", name].iter().collect();
    LabeledTable::load(&path).unwrap()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[test]
fn published_tables_reproduce_reported_statistics() {
    let cases = [
        ("eer_three_stage.tsv", [(5.67, Some(2.15)), (6.33, Some(2.49))]),
        ("eer_one_stage.tsv", [(14.75, Some(4.28)), (14.58, Some(4.14))]),
        ("eer_two_stage_gender.tsv", [(11.67, Some(3.79)), (11.92, Some(3.52))]),
        ("eer_two_stage_emotion.tsv", [(7.75, None), (8.17, None)]),
        ("eer_all_hmm.tsv", [(8.83, None), (9.00, None)]),
        ("emotion_id.tsv", [(89.10, None), (88.38, None)]),
    ];
    for (file, expected) in cases {
        let table = fixture(file);
        assert_eq!(table.rows.len(), 6, "{file}");
        for (column, (mean, sd)) in ["collected", "epst"].into_iter().zip(expected) {
            let s = summary_stats(&table.column(column).unwrap()).unwrap();
            assert_eq!(round2(s.mean), mean, "{file} {column}");
            if let Some(sd) = sd {
                assert_eq!(round2(s.sd), sd, "{file} {column}");
            }
        }
    }
}

#[test]
fn published_confusion_tables_have_six_classes() {
    for name in ["male_confusion_inhouse.tsv", "female_confusion_inhouse.tsv", "male_confusion_epst.tsv", "female_confusion_epst.tsv"] {
        let t = fixture(name);
        assert_eq!(t.columns.len(), 6, "{name}");
        assert_eq!(t.rows.len(), 6, "{name}");
        for label in ["neutral", "anger", "sadness", "happiness", "disgust", "fear"] {
            assert!(t.row(label).is_some(), "{name} {label}");
        }
    }
}

#[test]
fn welch_t_sign_and_symmetry() {
    let a = [5.0, 6.0, 7.0, 8.0];
    let b = [1.0, 2.0, 2.5, 3.0];
    let t = two_sample_t(&a, &b).unwrap();
    assert!(t > 0.0);
    assert_eq!(two_sample_t(&b, &a).unwrap(), -t);
}
