//! Seeded source-filter synthesizer standing in for recorded emotional speech.
//!
//! Each utterance is a sequence of syllables taken from one of eight fixed
//! sentence templates. A syllable is an optional noise onset followed by a
//! voiced nucleus: a pulse train at the instantaneous pitch, shaped by a
//! one-pole spectral tilt and three cascaded formant resonators.
//!
//! Class structure, all scaled by `class_separation`:
//! * gender: base pitch, vocal-tract (formant) scale, tilt, and how strongly
//!   each emotion cue is expressed;
//! * speaker: small pitch, formant-scale and tilt offsets, plus a per-emotion
//!   speaking style (formant and tilt offsets particular to that speaker);
//! * emotion: pitch level, modulation depth and rate, energy level and
//!   envelope, speaking rate and, unless [`EmotionCues::ProsodyOnly`], a
//!   spectral tilt and formant shift.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use super::wav::write_pcm16;
use super::{
    layout_records, CorpusError, CorpusManifest, Emotion, Gender, UtteranceRecord, MAX_REPS,
    MAX_SENTENCES, SAMPLE_RATE_HZ,
};

/// Which channels carry emotion class information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EmotionCues {
    /// Prosodic and spectral cues.
    #[default]
    Full,
    /// Pitch, modulation, energy envelope and rate only; no spectral changes.
    ProsodyOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub speakers_per_gender: usize,
    pub sentences: u8,
    pub reps_per_sentence: u8,
    pub utterance_duration_s: f64,
    pub class_separation: f64,
    pub emotion_cues: EmotionCues,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            speakers_per_gender: 20,
            sentences: 8,
            reps_per_sentence: 9,
            utterance_duration_s: 3.0,
            class_separation: 1.0,
            emotion_cues: EmotionCues::Full,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidSpec(m.to_string()));
        if self.speakers_per_gender == 0 {
            return bad("speakers_per_gender must be >= 1");
        }
        if self.sentences == 0 || self.sentences > MAX_SENTENCES {
            return bad("sentences must be in 1..=8");
        }
        if self.reps_per_sentence == 0 || self.reps_per_sentence > MAX_REPS {
            return bad("reps_per_sentence must be in 1..=9");
        }
        if !(self.utterance_duration_s > 0.0 && self.utterance_duration_s.is_finite()) {
            return bad("utterance_duration_s must be positive");
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return bad("class_separation must be >= 0");
        }
        Ok(())
    }
}

/// Write one WAV per record under `out_dir/wav/` plus `out_dir/manifest.tsv`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<CorpusManifest, CorpusError> {
    spec.validate()?;
    fs::create_dir_all(out_dir.join("wav"))?;
    let records = layout_records(spec.speakers_per_gender, spec.sentences, spec.reps_per_sentence);
    records.par_iter().try_for_each(|r| {
        let samples = synthesize(spec, r);
        write_pcm16(&out_dir.join(&r.audio_path), &samples)
    })?;
    let manifest = CorpusManifest::new(records, out_dir.to_path_buf());
    manifest.save(&out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

/// Render one record as 16 kHz PCM. Pure in `(spec, record)`.
pub fn synthesize(spec: &SyntheticSpec, record: &UtteranceRecord) -> Vec<i16> {
    let sep = spec.class_separation;
    let voice = speaker_voice(spec.seed, record.gender, &record.speaker_id, sep);
    let style = speaker_style(spec.seed, &record.speaker_id, record.emotion, sep);
    let emo = EmotionStyle::of(record.emotion).expressed_by(record.gender).scaled(sep, spec.emotion_cues);
    let template = sentence_template(spec.seed, record.sentence_idx);
    let mut rng = substream(spec.seed, &record.utterance_id);
    render(&template, &voice, &style, &emo, spec.utterance_duration_s, &mut rng)
}

#[derive(Debug, Clone, Copy)]
struct Voice {
    f0_hz: f64,
    formant_scale: f64,
    tilt: f64,
}

#[derive(Debug, Clone, Copy)]
struct SpeakingStyle {
    f0_mult: f64,
    formant_scale: f64,
    tilt_delta: f64,
}

#[derive(Debug, Clone, Copy)]
enum Envelope {
    Flat,
    SharpAttack,
    Decaying,
    Bouncy,
    LatePeak,
    Tremulous,
}

#[derive(Debug, Clone, Copy)]
struct EmotionStyle {
    f0_mult: f64,
    mod_depth: f64,
    mod_rate_hz: f64,
    gain_db: f64,
    rate: f64,
    tilt_delta: f64,
    formant_shift: f64,
    breath: f64,
    envelope: Envelope,
}

impl EmotionStyle {
    const NEUTRAL: EmotionStyle = EmotionStyle {
        f0_mult: 1.0,
        mod_depth: 0.04,
        mod_rate_hz: 3.0,
        gain_db: 0.0,
        rate: 1.0,
        tilt_delta: 0.0,
        formant_shift: 0.0,
        breath: 0.02,
        envelope: Envelope::Flat,
    };

    fn of(e: Emotion) -> EmotionStyle {
        let n = Self::NEUTRAL;
        match e {
            Emotion::Neutral => n,
            Emotion::Anger => EmotionStyle {
                f0_mult: 1.30,
                mod_depth: 0.18,
                mod_rate_hz: 5.0,
                gain_db: 6.0,
                rate: 1.15,
                tilt_delta: -0.12,
                formant_shift: 0.02,
                breath: 0.02,
                envelope: Envelope::SharpAttack,
            },
            Emotion::Sadness => EmotionStyle {
                f0_mult: 0.88,
                mod_depth: 0.03,
                mod_rate_hz: 2.0,
                gain_db: -6.0,
                rate: 0.75,
                tilt_delta: 0.06,
                formant_shift: -0.015,
                breath: 0.05,
                envelope: Envelope::Decaying,
            },
            Emotion::Happiness => EmotionStyle {
                f0_mult: 1.22,
                mod_depth: 0.25,
                mod_rate_hz: 4.0,
                gain_db: 3.0,
                rate: 1.10,
                tilt_delta: -0.08,
                formant_shift: 0.03,
                breath: 0.02,
                envelope: Envelope::Bouncy,
            },
            Emotion::Disgust => EmotionStyle {
                f0_mult: 0.95,
                mod_depth: 0.10,
                mod_rate_hz: 2.5,
                gain_db: 0.0,
                rate: 0.85,
                tilt_delta: 0.02,
                formant_shift: -0.03,
                breath: 0.04,
                envelope: Envelope::LatePeak,
            },
            Emotion::Fear => EmotionStyle {
                f0_mult: 1.38,
                mod_depth: 0.08,
                mod_rate_hz: 8.0,
                gain_db: -2.0,
                rate: 1.25,
                tilt_delta: -0.04,
                formant_shift: 0.01,
                breath: 0.10,
                envelope: Envelope::Tremulous,
            },
        }
    }

    /// Female speakers lean on pitch cues, male speakers on energy, rate and
    /// tilt.
    fn expressed_by(self, gender: Gender) -> EmotionStyle {
        let n = Self::NEUTRAL;
        let (pitch, other) = match gender {
            Gender::Male => (0.7, 1.3),
            Gender::Female => (1.3, 0.7),
        };
        let amp = |a: f64, b: f64, k: f64| a + k * (b - a);
        EmotionStyle {
            f0_mult: amp(n.f0_mult, self.f0_mult, pitch),
            mod_depth: amp(n.mod_depth, self.mod_depth, pitch),
            gain_db: amp(n.gain_db, self.gain_db, other),
            rate: amp(n.rate, self.rate, other),
            tilt_delta: amp(n.tilt_delta, self.tilt_delta, other),
            ..self
        }
    }

    /// Interpolate from neutral by `sep`. At `sep == 0` every emotion is neutral.
    fn scaled(self, sep: f64, cues: EmotionCues) -> EmotionStyle {
        let n = Self::NEUTRAL;
        let lerp = |a: f64, b: f64| a + sep * (b - a);
        let spectral = matches!(cues, EmotionCues::Full);
        EmotionStyle {
            f0_mult: lerp(n.f0_mult, self.f0_mult).max(0.3),
            mod_depth: lerp(n.mod_depth, self.mod_depth).clamp(0.0, 0.6),
            mod_rate_hz: lerp(n.mod_rate_hz, self.mod_rate_hz).max(0.5),
            gain_db: lerp(n.gain_db, self.gain_db),
            rate: lerp(n.rate, self.rate).max(0.3),
            tilt_delta: if spectral { lerp(n.tilt_delta, self.tilt_delta) } else { 0.0 },
            formant_shift: if spectral { lerp(n.formant_shift, self.formant_shift) } else { 0.0 },
            breath: if spectral { lerp(n.breath, self.breath).max(0.0) } else { n.breath },
            envelope: if sep > 0.0 { self.envelope } else { Envelope::Flat },
        }
    }
}

fn speaker_voice(seed: u64, gender: Gender, speaker_id: &str, sep: f64) -> Voice {
    let mut rng = substream(seed, &format!("voice/{speaker_id}"));
    let sign = match gender {
        Gender::Male => -1.0,
        Gender::Female => 1.0,
    };
    let mut u = || rng.random_range(-1.0..1.0);
    Voice {
        f0_hz: 165.0 + sep * (45.0 * sign + 15.0 * u()),
        formant_scale: 1.12 + sep * (0.12 * sign + 0.05 * u()),
        tilt: 0.85 + sep * (-0.07 * sign + 0.04 * u()),
    }
}

fn speaker_style(seed: u64, speaker_id: &str, emotion: Emotion, sep: f64) -> SpeakingStyle {
    let mut rng = substream(seed, &format!("style/{speaker_id}/{emotion}"));
    let mut u = || rng.random_range(-1.0..1.0);
    SpeakingStyle {
        f0_mult: 1.0 + sep * 0.05 * u(),
        formant_scale: 1.0 + sep * 0.05 * u(),
        tilt_delta: sep * 0.05 * u(),
    }
}

#[derive(Debug, Clone, Copy)]
struct Syllable {
    onset_s: f64,
    nucleus_s: f64,
    gap_s: f64,
    formants: [f64; 3],
    accent: f64,
}

const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
];

fn sentence_template(seed: u64, sentence_idx: u8) -> Vec<Syllable> {
    let mut rng = substream(seed, &format!("sentence/{sentence_idx}"));
    let n = rng.random_range(5..=9);
    (0..n)
        .map(|i| Syllable {
            onset_s: if rng.random_bool(0.6) { rng.random_range(0.03..0.07) } else { 0.0 },
            nucleus_s: rng.random_range(0.12..0.24),
            gap_s: if i + 1 < n && rng.random_bool(0.4) { rng.random_range(0.03..0.08) } else { 0.0 },
            formants: VOWELS[rng.random_range(0..VOWELS.len())],
            accent: rng.random_range(0.94..1.08),
        })
        .collect()
}

struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Resonator { a1: 0.0, a2: 0.0, gain: 0.0, y1: 0.0, y2: 0.0 }
    }

    fn set_poles(&mut self, freq_hz: f64, bandwidth_hz: f64) -> (f64, f64) {
        let fs = f64::from(SAMPLE_RATE_HZ);
        let f = freq_hz.clamp(50.0, 0.45 * fs);
        let r = (-PI * bandwidth_hz / fs).exp();
        let theta = 2.0 * PI * f / fs;
        self.a1 = 2.0 * r * theta.cos();
        self.a2 = -r * r;
        (r, theta)
    }

    /// Unity gain at DC, so a cascade keeps its low-frequency level.
    fn tune(&mut self, freq_hz: f64, bandwidth_hz: f64) {
        self.set_poles(freq_hz, bandwidth_hz);
        self.gain = 1.0 - self.a1 - self.a2;
    }

    /// Unity gain at the resonance peak.
    fn tune_peak(&mut self, freq_hz: f64, bandwidth_hz: f64) {
        let (r, theta) = self.set_poles(freq_hz, bandwidth_hz);
        self.gain = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
    }

    #[inline]
    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn envelope(shape: Envelope, tau: f64, t_s: f64) -> f64 {
    let edge = |d: f64| (t_s / d).min(1.0);
    match shape {
        Envelope::Flat => edge(0.02) * (1.0 - 0.2 * tau),
        Envelope::SharpAttack => edge(0.005) * (-2.5 * tau).exp(),
        Envelope::Decaying => edge(0.03) * (1.0 - 0.7 * tau),
        Envelope::Bouncy => (PI * tau).sin().max(0.0).sqrt(),
        Envelope::LatePeak => edge(0.04) * (0.3 + 0.7 * tau.powf(1.5)),
        Envelope::Tremulous => edge(0.02) * (0.75 + 0.25 * (2.0 * PI * 11.0 * t_s).sin()),
    }
}

fn render(
    template: &[Syllable],
    voice: &Voice,
    style: &SpeakingStyle,
    emo: &EmotionStyle,
    duration_s: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<i16> {
    let fs = f64::from(SAMPLE_RATE_HZ);
    let jitter = Normal::<f64>::new(1.0, 0.02).expect("valid normal");
    let white = Normal::<f64>::new(0.0, 1.0).expect("valid normal");

    let nominal: f64 = template.iter().map(|s| s.onset_s + s.nucleus_s + s.gap_s).sum();
    let rate = emo.rate * jitter.sample(rng).clamp(0.9, 1.1);
    let time_scale = duration_s / nominal / rate;
    let f0_base = voice.f0_hz * style.f0_mult * emo.f0_mult * jitter.sample(rng).clamp(0.9, 1.1);
    let formant_scale = voice.formant_scale
        * style.formant_scale
        * (1.0 + emo.formant_shift)
        * (1.0 + 0.5 * (jitter.sample(rng) - 1.0));
    let tilt = (voice.tilt + style.tilt_delta + emo.tilt_delta).clamp(0.3, 0.97);
    let mod_phase = rng.random_range(0.0..2.0 * PI);
    let gain_db = emo.gain_db + rng.random_range(-1.0..1.0);

    let total_s: f64 = nominal * time_scale;
    let n_total = (total_s * fs).ceil() as usize + 1;
    let mut out = Vec::with_capacity(n_total);

    let mut phase = 0.0f64;
    let mut tilt_state = 0.0f64;
    let mut formants = [Resonator::new(), Resonator::new(), Resonator::new()];
    let mut fricative = Resonator::new();
    fricative.tune_peak(4200.0 * formant_scale, 1800.0);
    let bandwidths = [80.0, 100.0, 140.0];
    let mut t_global = 0.0f64;

    for syl in template {
        let onset_n = (syl.onset_s * time_scale * fs).round() as usize;
        let nucleus_n = ((syl.nucleus_s * time_scale * fs).round() as usize).max(1);
        let gap_n = (syl.gap_s * time_scale * fs).round() as usize;

        for _ in 0..onset_n {
            let x = white.sample(rng) * 0.25;
            out.push(fricative.step(x));
            t_global += 1.0 / fs;
        }

        for (k, r) in formants.iter_mut().enumerate() {
            let f = syl.formants[k] * formant_scale * (1.0 + 0.01 * white.sample(rng));
            r.tune(f, bandwidths[k]);
        }
        for i in 0..nucleus_n {
            let tau = i as f64 / nucleus_n as f64;
            let t_local = i as f64 / fs;
            let declination = 1.0 - 0.12 * (t_global / total_s).min(1.0);
            let f0 = f0_base
                * syl.accent
                * declination
                * (1.0 + emo.mod_depth * (2.0 * PI * emo.mod_rate_hz * t_global + mod_phase).sin());
            phase += f0 / fs;
            let pulse = if phase >= 1.0 {
                phase -= phase.floor();
                1.0
            } else {
                0.0
            };
            let excitation = pulse + emo.breath * white.sample(rng);
            tilt_state = (1.0 - tilt) * excitation + tilt * tilt_state;
            let mut y = tilt_state * 20.0;
            for r in formants.iter_mut() {
                y = r.step(y);
            }
            out.push(y * envelope(emo.envelope, tau, t_local));
            t_global += 1.0 / fs;
        }
        for _ in 0..gap_n {
            out.push(0.0);
            t_global += 1.0 / fs;
        }
    }

    let rms = (out.iter().map(|x| x * x).sum::<f64>() / out.len().max(1) as f64).sqrt();
    let target = 0.08 * 10f64.powf(gain_db / 20.0);
    let scale = if rms > 0.0 { target / rms } else { 0.0 };
    out.iter()
        .map(|&x| {
            let v = (x * scale + 3e-4 * white.sample(rng)) * 32767.0;
            v.round().clamp(-32768.0, 32767.0) as i16
        })
        .collect()
}
