//! Experiment drivers over an in-memory corpus, and their text/CSV renderings.

use std::fmt::Write as _;

use emocascade::cascade::{
    score_utterances, summarize, trials_from_scores, CascadeError, CascadeMode, CascadeRun, CascadeSummary,
    ScoringOptions,
};
use emocascade::corpus::{CorpusManifest, Split, UtteranceRecord};
use emocascade::eval::{two_sample_t, ConfusionMatrix};
use emocascade::features::FeatureTable;
use emocascade::sphmm::FusionWeight;
use emocascade::Registry;
use serde::Serialize;

pub const WORST_CASE_BANNER: &str =
    "*** FORCED-ERROR RUN: verification was fed the wrong gender and a wrong emotion for every utterance ***";

fn test_records(manifest: &CorpusManifest) -> Vec<UtteranceRecord> {
    manifest.records.iter().filter(|r| r.split == Split::Test).cloned().collect()
}

pub fn evaluate(
    registry: &Registry,
    manifest: &CorpusManifest,
    features: &FeatureTable<f64>,
    mode: CascadeMode,
    options: &ScoringOptions,
) -> Result<(CascadeRun, CascadeSummary), CascadeError> {
    let scores = score_utterances(registry, &test_records(manifest), features, &[mode])?;
    let run = trials_from_scores(registry, &scores, mode, options)?;
    let summary = summarize(mode, &run.trials, &run.outcomes)?;
    Ok((run, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairT {
    pub a: CascadeMode,
    pub b: CascadeMode,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ablation {
    /// In [`CascadeMode::ALL`] order.
    pub summaries: Vec<CascadeSummary>,
    /// Welch t over per-emotion EERs for every unordered mode pair.
    pub t_values: Vec<PairT>,
}

impl Ablation {
    pub fn summary(&self, mode: CascadeMode) -> &CascadeSummary {
        self.summaries.iter().find(|s| s.mode == mode).expect("every mode is summarized")
    }

    pub fn mean_eer(&self, mode: CascadeMode) -> f64 {
        self.summary(mode).mean_eer
    }
}

pub fn ablate(
    registry: &Registry,
    manifest: &CorpusManifest,
    features: &FeatureTable<f64>,
    options: &ScoringOptions,
) -> Result<Ablation, CascadeError> {
    let scores = score_utterances(registry, &test_records(manifest), features, &CascadeMode::ALL)?;
    let summaries = CascadeMode::ALL
        .into_iter()
        .map(|mode| {
            let run = trials_from_scores(registry, &scores, mode, options)?;
            summarize(mode, &run.trials, &run.outcomes)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let eers: Vec<Vec<f64>> = summaries.iter().map(|s| s.per_emotion.iter().map(|p| p.eer).collect()).collect();
    let mut t_values = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            t_values.push(PairT { a: summaries[i].mode, b: summaries[j].mode, t: two_sample_t(&eers[i], &eers[j])? });
        }
    }
    Ok(Ablation { summaries, t_values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub mean_eer: f64,
}

/// Stage-2 scores are computed once and re-fused at each weight.
pub fn alpha_sweep(
    registry: &Registry,
    manifest: &CorpusManifest,
    features: &FeatureTable<f64>,
    alphas: &[FusionWeight],
    options: &ScoringOptions,
) -> Result<Vec<SweepPoint>, CascadeError> {
    let mode = CascadeMode::ThreeStage;
    let scores = score_utterances(registry, &test_records(manifest), features, &[mode])?;
    alphas
        .iter()
        .map(|&alpha| {
            let run = trials_from_scores(registry, &scores, mode, &ScoringOptions { alpha, ..options.clone() })?;
            let summary = summarize(mode, &run.trials, &run.outcomes)?;
            Ok(SweepPoint { alpha: alpha.value(), mean_eer: summary.mean_eer })
        })
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}%"))
}

pub fn render_evaluation(summary: &CascadeSummary, run: &CascadeRun, alpha: f64, seed: u64) -> String {
    let mut out = String::new();
    if summary.mode == CascadeMode::WorstCase {
        let _ = writeln!(out, "{WORST_CASE_BANNER}\n");
    }
    let _ = writeln!(out, "Mode: {}  alpha: {alpha}  seed: {seed}", summary.mode);
    let _ = writeln!(out, "Trials: {}  decision threshold: {:.6}", run.trials.len(), run.threshold);
    let _ = writeln!(out, "Gender identification accuracy: {}", pct(summary.gender_accuracy));
    let _ = writeln!(out, "Emotion identification accuracy: {}", pct(summary.emotion_accuracy));
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12}{:>10}", "Emotion", "EER (%)");
    for p in &summary.per_emotion {
        let _ = writeln!(out, "{:<12}{:>10.2}", p.emotion.as_str(), p.eer);
    }
    let _ = writeln!(out, "{:<12}{:>10.2}  (SD {:.2})", "Average", summary.mean_eer, summary.sd_eer);
    let _ = writeln!(out, "{:<12}{:>10.2}", "Pooled", summary.overall_eer);
    for (gender, matrix) in &summary.emotion_confusion {
        let _ = writeln!(out, "\nEmotion confusion, {gender} speakers (%; rows true, columns identified)");
        render_confusion(&mut out, matrix);
    }
    out
}

fn render_confusion(out: &mut String, m: &ConfusionMatrix) {
    let _ = write!(out, "{:<12}", "");
    for l in &m.labels {
        let _ = write!(out, "{l:>11}");
    }
    let _ = writeln!(out);
    for (label, row) in m.labels.iter().zip(m.percentages()) {
        let _ = write!(out, "{label:<12}");
        for v in row {
            let _ = write!(out, "{v:>11.2}");
        }
        let _ = writeln!(out);
    }
}

pub fn eer_csv(summary: &CascadeSummary) -> String {
    let mut out = String::from("emotion,eer\n");
    for p in &summary.per_emotion {
        let _ = writeln!(out, "{},{}", p.emotion, p.eer);
    }
    let _ = writeln!(out, "Average,{}", summary.mean_eer);
    out
}

pub fn confusion_csv(m: &ConfusionMatrix) -> String {
    let mut out = format!("true\\identified,{}\n", m.labels.join(","));
    for (label, row) in m.labels.iter().zip(&m.counts) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{label},{}", cells.join(","));
    }
    out
}

pub fn render_ablation(a: &Ablation, alpha: f64, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Mode comparison  alpha: {alpha}  seed: {seed}\n");
    let _ = writeln!(out, "{:<18}{:>12}{:>10}{:>14}", "Mode", "Mean EER", "SD", "Pooled EER");
    for s in &a.summaries {
        let _ = writeln!(out, "{:<18}{:>12.2}{:>10.2}{:>14.2}", s.mode.as_str(), s.mean_eer, s.sd_eer, s.overall_eer);
    }
    let _ = writeln!(out, "\nWelch t over per-emotion EERs");
    for p in &a.t_values {
        let _ = writeln!(out, "{:<18}{:<18}{:>10.3}", p.a.as_str(), p.b.as_str(), p.t);
    }
    out
}

pub fn ablation_csv(a: &Ablation) -> String {
    let mut out = String::from("mode,mean_eer,sd_eer,pooled_eer\n");
    for s in &a.summaries {
        let _ = writeln!(out, "{},{},{},{}", s.mode, s.mean_eer, s.sd_eer, s.overall_eer);
    }
    out
}

pub fn t_csv(a: &Ablation) -> String {
    let mut out = String::from("mode_a,mode_b,t\n");
    for p in &a.t_values {
        let _ = writeln!(out, "{},{},{}", p.a, p.b, p.t);
    }
    out
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("alpha,mean_eer\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.alpha, p.mean_eer);
    }
    out
}
