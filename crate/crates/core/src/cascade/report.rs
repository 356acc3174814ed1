use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CascadeError, CascadeMode, Decision, StageOutcome, TrialResult};
use crate::corpus::{Emotion, Gender};
use crate::eval::{confusion_matrix, eer, summary_stats, ConfusionMatrix, EvalError, ScoreSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionEer {
    pub emotion: Emotion,
    pub eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSummary {
    pub mode: CascadeMode,
    /// By true emotion, in canonical order.
    pub per_emotion: Vec<EmotionEer>,
    pub mean_eer: f64,
    pub sd_eer: f64,
    pub overall_eer: f64,
    pub gender_accuracy: Option<f64>,
    pub emotion_accuracy: Option<f64>,
    /// Emotion confusion for each true gender, rows are the true emotion.
    pub emotion_confusion: Vec<(Gender, ConfusionMatrix)>,
}

fn score_set<'a>(trials: impl Iterator<Item = &'a TrialResult>) -> Result<ScoreSet, EvalError> {
    let (tgt, non): (Vec<&TrialResult>, Vec<&TrialResult>) = trials.partition(|t| t.is_target_trial);
    ScoreSet::new(tgt.iter().map(|t| t.score).collect(), non.iter().map(|t| t.score).collect())
}

pub fn summarize(mode: CascadeMode, trials: &[TrialResult], outcomes: &[StageOutcome]) -> Result<CascadeSummary, CascadeError> {
    let per_emotion = Emotion::ALL
        .into_iter()
        .map(|e| Ok(EmotionEer { emotion: e, eer: eer(&score_set(trials.iter().filter(|t| t.true_emotion == e))?) }))
        .collect::<Result<Vec<_>, EvalError>>()?;
    let stats = summary_stats(&per_emotion.iter().map(|p| p.eer).collect::<Vec<_>>())?;
    let overall_eer = eer(&score_set(trials.iter())?);

    let genders: Vec<(Gender, Gender)> =
        outcomes.iter().filter_map(|o| o.identified_gender.map(|g| (o.true_gender, g))).collect();
    let gender_accuracy = (!genders.is_empty())
        .then(|| 100.0 * genders.iter().filter(|(t, p)| t == p).count() as f64 / genders.len() as f64);

    let mut emotion_confusion = Vec::new();
    let mut hits = 0usize;
    let mut total = 0usize;
    for g in Gender::ALL {
        let (truth, pred): (Vec<Emotion>, Vec<Emotion>) = outcomes
            .iter()
            .filter(|o| o.true_gender == g)
            .filter_map(|o| o.identified_emotion.map(|e| (o.true_emotion, e)))
            .unzip();
        if truth.is_empty() {
            continue;
        }
        hits += truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        total += truth.len();
        emotion_confusion.push((g, confusion_matrix(&truth, &pred, &Emotion::ALL)?));
    }
    let emotion_accuracy = (total > 0).then(|| 100.0 * hits as f64 / total as f64);

    Ok(CascadeSummary {
        mode,
        per_emotion,
        mean_eer: stats.mean,
        sd_eer: stats.sd,
        overall_eer,
        gender_accuracy,
        emotion_accuracy,
        emotion_confusion,
    })
}

const TRIAL_HEADER: &str = "utterance_id\tclaimed_speaker\ttrue_speaker\tidentified_gender\tidentified_emotion\ttrue_gender\ttrue_emotion\tscore\tdecision\tis_target_trial";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// Tab-separated trial listing; absent stage outputs are written as `-`.
pub fn write_trials(trials: &[TrialResult]) -> String {
    let mut out = String::with_capacity(trials.len() * 96);
    out.push_str(TRIAL_HEADER);
    out.push('\n');
    for t in trials {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            t.utterance_id,
            t.claimed_speaker,
            t.true_speaker,
            opt(t.identified_gender),
            opt(t.identified_emotion),
            t.true_gender,
            t.true_emotion,
            t.score,
            t.decision.as_str(),
            t.is_target_trial
        );
    }
    out
}

pub fn read_trials(text: &str) -> Result<Vec<TrialResult>, EvalError> {
    let bad = |l: &str, what: &str| EvalError::MalformedTable(format!("{what}: {l}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some(TRIAL_HEADER) {
        return Err(EvalError::MalformedTable("missing trial header".into()));
    }
    fn field<T: FromStr>(s: &str) -> Option<T> {
        s.parse().ok()
    }
    fn opt_field<T: FromStr>(s: &str) -> Option<Option<T>> {
        if s == "-" {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 10 {
                return Err(bad(l, "expected 10 fields"));
            }
            let decision = match f[8] {
                "Accept" => Decision::Accept,
                "Reject" => Decision::Reject,
                _ => return Err(bad(l, "bad decision")),
            };
            Ok(TrialResult {
                utterance_id: f[0].to_string(),
                claimed_speaker: f[1].to_string(),
                true_speaker: f[2].to_string(),
                identified_gender: opt_field(f[3]).ok_or_else(|| bad(l, "bad gender"))?,
                identified_emotion: opt_field(f[4]).ok_or_else(|| bad(l, "bad emotion"))?,
                true_gender: field(f[5]).ok_or_else(|| bad(l, "bad gender"))?,
                true_emotion: field(f[6]).ok_or_else(|| bad(l, "bad emotion"))?,
                score: field(f[7]).ok_or_else(|| bad(l, "bad score"))?,
                decision,
                is_target_trial: field(f[9]).ok_or_else(|| bad(l, "bad flag"))?,
            })
        })
        .collect()
}
