//! Utterance manifests, WAV I/O and the seeded synthetic corpus generator.
//!
//! A manifest is a tab-separated text file, one utterance per line:
//!
//! ```text
//! # utterance_id  speaker_id  gender  emotion  sentence_idx  rep_idx  split  audio_path
//! M01_neutral_s1_r1  M01  Male  Neutral  1  1  Train  wav/M01_neutral_s1_r1.wav
//! ```
//!
//! Lines starting with `#` are ignored. Audio paths are resolved relative to
//! the manifest's directory unless absolute.

mod synth;
pub mod wav;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synth::{generate_synthetic, synthesize, EmotionCues, SyntheticSpec};

/// Sample rate of every corpus this crate reads or writes.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Sentences `1..=TRAIN_SENTENCES` are training material; the rest are test.
pub const TRAIN_SENTENCES: u8 = 4;
pub const MAX_SENTENCES: u8 = 8;
pub const MAX_REPS: u8 = 9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate utterance {0}")]
    DuplicateUtterance(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("wav error for {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported wav format in {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn opposite(self) -> Gender {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Male" | "M" => Ok(Gender::Male),
            "Female" | "F" => Ok(Gender::Female),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Emotion {
    Neutral,
    Anger,
    Sadness,
    Happiness,
    Disgust,
    Fear,
}

impl Emotion {
    /// Canonical label order; argmax ties resolve to the earliest entry.
    pub const ALL: [Emotion; 6] = [
        Emotion::Neutral,
        Emotion::Anger,
        Emotion::Sadness,
        Emotion::Happiness,
        Emotion::Disgust,
        Emotion::Fear,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Neutral => "Neutral",
            Emotion::Anger => "Anger",
            Emotion::Sadness => "Sadness",
            Emotion::Happiness => "Happiness",
            Emotion::Disgust => "Disgust",
            Emotion::Fear => "Fear",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .iter()
            .copied()
            .find(|e| e.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown emotion {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn for_sentence(sentence_idx: u8) -> Split {
        if sentence_idx <= TRAIN_SENTENCES {
            Split::Train
        } else {
            Split::Test
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "Train",
            Split::Test => "Test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Train" => Ok(Split::Train),
            "Test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub emotion: Emotion,
    pub sentence_idx: u8,
    pub rep_idx: u8,
    pub split: Split,
    pub audio_path: PathBuf,
}

impl UtteranceRecord {
    fn key(&self) -> (String, Emotion, u8, u8) {
        (self.speaker_id.clone(), self.emotion, self.sentence_idx, self.rep_idx)
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.utterance_id,
            self.speaker_id,
            self.gender,
            self.emotion,
            self.sentence_idx,
            self.rep_idx,
            self.split.as_str(),
            self.audio_path.display()
        )
    }
}

/// Predicate for [`CorpusManifest::filter`]; `None` fields match anything.
#[derive(Debug, Clone, Default)]
pub struct RecordFilter<'a> {
    pub gender: Option<Gender>,
    pub emotion: Option<Emotion>,
    pub split: Option<Split>,
    pub speaker: Option<&'a str>,
}

impl RecordFilter<'_> {
    pub fn matches(&self, r: &UtteranceRecord) -> bool {
        self.gender.is_none_or(|g| g == r.gender)
            && self.emotion.is_none_or(|e| e == r.emotion)
            && self.split.is_none_or(|s| s == r.split)
            && self.speaker.is_none_or(|s| s == r.speaker_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    pub sample_rate_hz: u32,
    pub emotions: Vec<Emotion>,
    pub speakers_per_gender: usize,
    /// Directory relative audio paths are resolved against.
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn new(records: Vec<UtteranceRecord>, base_dir: PathBuf) -> Self {
        let speakers_per_gender = Gender::ALL
            .iter()
            .map(|&g| {
                records
                    .iter()
                    .filter(|r| r.gender == g)
                    .map(|r| r.speaker_id.as_str())
                    .collect::<HashSet<_>>()
                    .len()
            })
            .max()
            .unwrap_or(0);
        CorpusManifest {
            records,
            sample_rate_hz: SAMPLE_RATE_HZ,
            emotions: Emotion::ALL.to_vec(),
            speakers_per_gender,
            base_dir,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records matching `pred`, original order preserved.
    pub fn filter(&self, pred: &RecordFilter<'_>) -> CorpusManifest {
        self.filter_by(|r| pred.matches(r))
    }

    pub fn filter_by(&self, mut pred: impl FnMut(&UtteranceRecord) -> bool) -> CorpusManifest {
        CorpusManifest {
            records: self.records.iter().filter(|r| pred(r)).cloned().collect(),
            sample_rate_hz: self.sample_rate_hz,
            emotions: self.emotions.clone(),
            speakers_per_gender: self.speakers_per_gender,
            base_dir: self.base_dir.clone(),
        }
    }

    pub fn resolve_audio(&self, record: &UtteranceRecord) -> PathBuf {
        if record.audio_path.is_absolute() {
            record.audio_path.clone()
        } else {
            self.base_dir.join(&record.audio_path)
        }
    }

    /// Distinct speakers of one gender, in first-appearance order.
    pub fn speakers(&self, gender: Gender) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| r.gender == gender)
            .filter(|r| seen.insert(r.speaker_id.clone()))
            .map(|r| r.speaker_id.clone())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "# utterance_id\tspeaker_id\tgender\temotion\tsentence_idx\trep_idx\tsplit\taudio_path\n",
        );
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }
}

/// Parse manifest text. `base_dir` anchors relative audio paths.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<CorpusManifest, CorpusError> {
    let mut records = Vec::new();
    let mut keys = HashSet::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| CorpusError::MalformedRecord { line: line_no, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(malformed(format!("expected 8 tab-separated fields, got {}", fields.len())));
        }
        let gender: Gender = fields[2].parse().map_err(malformed)?;
        let emotion: Emotion = fields[3].parse().map_err(malformed)?;
        let sentence_idx: u8 = fields[4]
            .parse()
            .map_err(|_| malformed(format!("bad sentence_idx {:?}", fields[4])))?;
        let rep_idx: u8 = fields[5]
            .parse()
            .map_err(|_| malformed(format!("bad rep_idx {:?}", fields[5])))?;
        if !(1..=MAX_SENTENCES).contains(&sentence_idx) {
            return Err(malformed(format!("sentence_idx {sentence_idx} outside 1..={MAX_SENTENCES}")));
        }
        if !(1..=MAX_REPS).contains(&rep_idx) {
            return Err(malformed(format!("rep_idx {rep_idx} outside 1..={MAX_REPS}")));
        }
        let split: Split = fields[6].parse().map_err(malformed)?;
        if split != Split::for_sentence(sentence_idx) {
            return Err(malformed(format!(
                "split {} inconsistent with sentence {sentence_idx}",
                split.as_str()
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() || fields[7].is_empty() {
            return Err(malformed("empty identifier or path".into()));
        }
        let record = UtteranceRecord {
            utterance_id: fields[0].to_string(),
            speaker_id: fields[1].to_string(),
            gender,
            emotion,
            sentence_idx,
            rep_idx,
            split,
            audio_path: PathBuf::from(fields[7]),
        };
        if !keys.insert(record.key()) || !ids.insert(record.utterance_id.clone()) {
            return Err(CorpusError::DuplicateUtterance(record.utterance_id));
        }
        records.push(record);
    }
    Ok(CorpusManifest::new(records, base_dir.to_path_buf()))
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CorpusError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &base)
}

/// Build the record list for a corpus shape without touching the disk.
/// Order: gender, speaker, emotion, sentence, repetition.
pub fn layout_records(speakers_per_gender: usize, sentences: u8, reps: u8) -> Vec<UtteranceRecord> {
    let mut out = Vec::new();
    for gender in Gender::ALL {
        for s in 1..=speakers_per_gender {
            let speaker_id = speaker_name(gender, s);
            for emotion in Emotion::ALL {
                for sentence_idx in 1..=sentences {
                    for rep_idx in 1..=reps {
                        let utterance_id = format!(
                            "{speaker_id}_{}_s{sentence_idx}_r{rep_idx}",
                            emotion.as_str().to_ascii_lowercase()
                        );
                        out.push(UtteranceRecord {
                            audio_path: PathBuf::from("wav").join(format!("{utterance_id}.wav")),
                            utterance_id,
                            speaker_id: speaker_id.clone(),
                            gender,
                            emotion,
                            sentence_idx,
                            rep_idx,
                            split: Split::for_sentence(sentence_idx),
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn speaker_name(gender: Gender, index: usize) -> String {
    let prefix = match gender {
        Gender::Male => 'M',
        Gender::Female => 'F',
    };
    format!("{prefix}{index:02}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_layout() -> CorpusManifest {
        CorpusManifest::new(layout_records(20, 8, 9), PathBuf::from("."))
    }

    #[test]
    fn full_layout_counts() {
        let m = full_layout();
        assert_eq!(m.len(), 17280);
        let male_train = m.filter(&RecordFilter {
            gender: Some(Gender::Male),
            split: Some(Split::Train),
            ..Default::default()
        });
        assert_eq!(male_train.len(), 4320);
        let neutral_female_train = m.filter(&RecordFilter {
            gender: Some(Gender::Female),
            emotion: Some(Emotion::Neutral),
            split: Some(Split::Train),
            ..Default::default()
        });
        assert_eq!(neutral_female_train.len(), 720);
        let test = m.filter(&RecordFilter { split: Some(Split::Test), ..Default::default() });
        assert_eq!(test.len(), 8640);
    }

    #[test]
    fn filter_preserves_order_and_handles_empty() {
        let m = CorpusManifest::new(layout_records(2, 8, 1), PathBuf::new());
        let sub = m.filter(&RecordFilter { speaker: Some("F02"), ..Default::default() });
        let positions: Vec<usize> = sub
            .records
            .iter()
            .map(|r| m.records.iter().position(|x| x == r).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let none = m.filter(&RecordFilter { speaker: Some("X99"), ..Default::default() });
        assert!(none.is_empty());
    }

    #[test]
    fn split_partition_is_exhaustive_and_disjoint() {
        let m = CorpusManifest::new(layout_records(3, 8, 2), PathBuf::new());
        let train = m.filter(&RecordFilter { split: Some(Split::Train), ..Default::default() });
        let test = m.filter(&RecordFilter { split: Some(Split::Test), ..Default::default() });
        assert_eq!(train.len() + test.len(), m.len());
        assert!(train.records.iter().all(|r| r.sentence_idx <= 4));
        assert!(test.records.iter().all(|r| r.sentence_idx >= 5));
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = CorpusManifest::new(layout_records(1, 8, 2), PathBuf::from("/base"));
        let parsed = parse_manifest(&m.to_text(), Path::new("/base")).unwrap();
        assert_eq!(parsed, m);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let text = "# header\nu1\tM01\tMale\tNeutral\t1\t1\tTrain\ta.wav\nu2\tM01\tMale\n";
        match parse_manifest(text, Path::new(".")) {
            Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_split = "u1\tM01\tMale\tNeutral\t6\t1\tTrain\ta.wav\n";
        assert!(matches!(
            parse_manifest(bad_split, Path::new(".")),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
        let bad_label = "u1\tM01\tMale\tBoredom\t1\t1\tTrain\ta.wav\n";
        assert!(matches!(
            parse_manifest(bad_label, Path::new(".")),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_keys_rejected() {
        let text = "u1\tM01\tMale\tNeutral\t1\t1\tTrain\ta.wav\nu2\tM01\tMale\tNeutral\t1\t1\tTrain\tb.wav\n";
        assert!(matches!(
            parse_manifest(text, Path::new(".")),
            Err(CorpusError::DuplicateUtterance(id)) if id == "u2"
        ));
    }

    #[test]
    fn missing_manifest() {
        assert!(matches!(
            load_manifest(Path::new("/definitely/not/here.tsv")),
            Err(CorpusError::MissingFile(_))
        ));
    }
}
