//! Acoustic (MFCC) and prosodic front-end.
//!
//! Both extractors share one framing so the acoustic and prosodic sequences
//! of an utterance always have the same number of frames.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{synthesize, wav, CorpusError, CorpusManifest, SyntheticSpec, SAMPLE_RATE_HZ};
use crate::Scalar;

/// Floor applied to filterbank outputs and frame energies before the log.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// Number of prosodic features per frame.
pub const PROSODIC_DIM: usize = 5;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("signal too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub preemphasis_coeff: f64,
    pub frame_len_ms: f64,
    pub frame_hop_ms: f64,
    pub n_mel_filters: usize,
    pub n_cepstra: usize,
    pub pitch_min_hz: f64,
    pub pitch_max_hz: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    pub sample_rate_hz: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            preemphasis_coeff: 0.97,
            frame_len_ms: 30.0,
            frame_hop_ms: 10.0,
            n_mel_filters: 24,
            n_cepstra: 12,
            pitch_min_hz: 70.0,
            pitch_max_hz: 400.0,
            voicing_threshold: 0.45,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.preemphasis_coeff) {
            return bad(format!("preemphasis_coeff {} outside [0, 1)", self.preemphasis_coeff));
        }
        if !(self.frame_hop_ms > 0.0 && self.frame_hop_ms <= self.frame_len_ms) {
            return bad("need 0 < frame_hop_ms <= frame_len_ms".into());
        }
        if !(self.pitch_min_hz > 0.0 && self.pitch_min_hz < self.pitch_max_hz) {
            return bad("need 0 < pitch_min_hz < pitch_max_hz".into());
        }
        if self.n_mel_filters == 0 || self.n_cepstra == 0 || self.n_cepstra > self.n_mel_filters {
            return bad("need 0 < n_cepstra <= n_mel_filters".into());
        }
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive".into());
        }
        if self.frame_len_samples() < 2 {
            return bad("frame shorter than two samples".into());
        }
        Ok(())
    }

    pub fn frame_len_samples(&self) -> usize {
        (self.frame_len_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        ((self.frame_hop_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize).max(1)
    }

    pub fn acoustic_dim(&self) -> usize {
        self.n_cepstra + 1
    }

    /// Frames produced for a signal of `n` samples.
    pub fn frame_count(&self, n: usize) -> usize {
        let k = self.frame_len_samples();
        if n < k {
            0
        } else {
            (n - k) / self.hop_samples() + 1
        }
    }
}

/// T×D matrix of per-frame feature vectors, row major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence<S> {
    data: Vec<S>,
    dim: usize,
    pub frame_hop_ms: f64,
    pub frame_len_ms: f64,
}

impl<S: Scalar> ObservationSequence<S> {
    /// Fails unless `data` holds at least one whole, finite frame of `dim` values.
    pub fn new(data: Vec<S>, dim: usize) -> Result<Self, FeatureError> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(FeatureError::InvalidSequence(format!(
                "{} values do not form frames of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidSequence("non-finite feature value".into()));
        }
        Ok(ObservationSequence { data, dim, frame_hop_ms: 0.0, frame_len_ms: 0.0 })
    }

    pub fn from_frames(frames: &[Vec<S>]) -> Result<Self, FeatureError> {
        let dim = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != dim) {
            return Err(FeatureError::InvalidSequence("ragged frames".into()));
        }
        Self::new(frames.concat(), dim)
    }

    pub fn with_timing(mut self, frame_len_ms: f64, frame_hop_ms: f64) -> Self {
        self.frame_len_ms = frame_len_ms;
        self.frame_hop_ms = frame_hop_ms;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[S] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[S]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }
}

/// Per-frame prosodic observations, aligned with the acoustic frames.
///
/// Columns: log pitch (Hz), voicing flag, log energy, delta log energy,
/// speaking-rate proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodicSequence<S>(pub ObservationSequence<S>);

impl<S: Scalar> ProsodicSequence<S> {
    pub const LOG_PITCH: usize = 0;
    pub const VOICING: usize = 1;
    pub const LOG_ENERGY: usize = 2;
    pub const DELTA_ENERGY: usize = 3;
    pub const RATE: usize = 4;

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn frames(&self) -> &ObservationSequence<S> {
        &self.0
    }
}

/// `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn preemphasize<S: Scalar>(samples: &[S], coeff: S) -> Vec<S> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(&first) = samples.first() {
        out.push(first);
    }
    out.extend(samples.windows(2).map(|w| w[1] - coeff * w[0]));
    out
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2πk/(K-1))`.
pub fn hamming<S: Scalar>(len: usize) -> Vec<S> {
    if len == 1 {
        return vec![S::one()];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|k| S::lit(0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / denom).cos()))
        .collect()
}

/// Slice into hop-spaced frames and apply the Hamming window. A trailing
/// partial frame is dropped.
pub fn frame_and_window<S: Scalar>(samples: &[S], config: &FeatureConfig) -> Result<Vec<Vec<S>>, FeatureError> {
    config.validate()?;
    let k = config.frame_len_samples();
    if samples.len() < k {
        return Err(FeatureError::TooShort { samples: samples.len(), needed: k });
    }
    let window = hamming::<S>(k);
    let hop = config.hop_samples();
    Ok((0..config.frame_count(samples.len()))
        .map(|i| {
            samples[i * hop..i * hop + k]
                .iter()
                .zip(&window)
                .map(|(&x, &w)| x * w)
                .collect()
        })
        .collect())
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct MelFilterbank<S> {
    /// Per filter: first FFT bin and its weights.
    filters: Vec<(usize, Vec<S>)>,
    centers_hz: Vec<f64>,
}

impl<S: Scalar> MelFilterbank<S> {
    pub fn new(n_filters: usize, fft_len: usize, sample_rate_hz: u32) -> Self {
        let fs = f64::from(sample_rate_hz);
        let nyquist = fs / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
            .collect();
        let n_bins = fft_len / 2 + 1;
        let bin_hz = fs / fft_len as f64;
        let filters = (0..n_filters)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut first = None;
                let mut weights = Vec::new();
                for b in 0..n_bins {
                    let f = b as f64 * bin_hz;
                    let w = if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        first.get_or_insert(b);
                        weights.push(S::lit(w));
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();
        MelFilterbank { filters, centers_hz: edges[1..=n_filters].to_vec() }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Filter outputs for a magnitude spectrum (unfloored).
    pub fn apply(&self, magnitude: &[S]) -> Vec<S> {
        self.filters
            .iter()
            .map(|(start, w)| {
                w.iter()
                    .zip(&magnitude[*start..])
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Reusable MFCC computation: FFT plan, filterbank and DCT basis.
pub struct MfccExtractor<S: Scalar> {
    fft: Arc<dyn Fft<S>>,
    fft_len: usize,
    filterbank: MelFilterbank<S>,
    dct: Vec<Vec<S>>,
    floor: S,
}

impl<S: Scalar> MfccExtractor<S> {
    pub fn new(config: &FeatureConfig) -> Self {
        let fft_len = config.frame_len_samples().next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(fft_len);
        let n = config.n_mel_filters;
        let dct = (0..config.n_cepstra)
            .map(|k| {
                (0..n)
                    .map(|m| S::lit((std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / n as f64).cos()))
                    .collect()
            })
            .collect();
        MfccExtractor {
            fft,
            fft_len,
            filterbank: MelFilterbank::new(n, fft_len, config.sample_rate_hz),
            dct,
            floor: S::lit(ENERGY_FLOOR),
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank<S> {
        &self.filterbank
    }

    pub fn magnitude_spectrum(&self, frame: &[S]) -> Vec<S> {
        let mut buf: Vec<Complex<S>> = frame
            .iter()
            .take(self.fft_len)
            .map(|&x| Complex::new(x, S::zero()))
            .collect();
        buf.resize(self.fft_len, Complex::new(S::zero(), S::zero()));
        self.fft.process(&mut buf);
        buf[..self.fft_len / 2 + 1].iter().map(|c| c.norm()).collect()
    }

    /// Cepstra `c0..c_{n-1}` followed by the log frame energy.
    pub fn compute(&self, frame: &[S]) -> Vec<S> {
        let spectrum = self.magnitude_spectrum(frame);
        let log_fb: Vec<S> = self
            .filterbank
            .apply(&spectrum)
            .into_iter()
            .map(|e| e.max(self.floor).ln())
            .collect();
        let mut out: Vec<S> = self
            .dct
            .iter()
            .map(|basis| basis.iter().zip(&log_fb).map(|(&b, &l)| b * l).sum())
            .collect();
        let energy: S = frame.iter().map(|&x| x * x).sum();
        out.push(energy.max(self.floor).ln());
        out
    }
}

/// MFCC vector of one windowed frame. Builds a fresh extractor; prefer
/// [`MfccExtractor`] in loops.
pub fn mfcc<S: Scalar>(frame: &[S], config: &FeatureConfig) -> Vec<S> {
    MfccExtractor::new(config).compute(frame)
}

pub fn extract_acoustic<S: Scalar>(samples: &[S], config: &FeatureConfig) -> Result<ObservationSequence<S>, FeatureError> {
    let emphasized = preemphasize(samples, S::lit(config.preemphasis_coeff));
    let frames = frame_and_window(&emphasized, config)?;
    let extractor = MfccExtractor::new(config);
    let data: Vec<S> = frames.iter().flat_map(|f| extractor.compute(f)).collect();
    Ok(ObservationSequence::new(data, config.acoustic_dim())?.with_timing(config.frame_len_ms, config.frame_hop_ms))
}

/// Autocorrelation pitch tracker over windowed frames.
pub struct PitchTracker<S: Scalar> {
    fft: Arc<dyn Fft<S>>,
    ifft: Arc<dyn Fft<S>>,
    fft_len: usize,
    /// Autocorrelation of the window itself, normalized to 1 at lag 0.
    window_acf: Vec<S>,
    min_lag: usize,
    max_lag: usize,
    sample_rate: f64,
    threshold: S,
}

/// Pitch estimate of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame<S> {
    pub pitch_hz: Option<S>,
    pub strength: S,
}

impl<S: Scalar> PitchTracker<S> {
    pub fn new(config: &FeatureConfig) -> Self {
        let k = config.frame_len_samples();
        let fft_len = (2 * k).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fs = f64::from(config.sample_rate_hz);
        let min_lag = ((fs / config.pitch_max_hz).floor() as usize).max(2);
        let max_lag = ((fs / config.pitch_min_hz).ceil() as usize).min(k.saturating_sub(2)).max(min_lag);
        let mut tracker = PitchTracker {
            fft: planner.plan_fft_forward(fft_len),
            ifft: planner.plan_fft_inverse(fft_len),
            fft_len,
            window_acf: Vec::new(),
            min_lag,
            max_lag,
            sample_rate: fs,
            threshold: S::lit(config.voicing_threshold),
        };
        let window = hamming::<S>(k);
        tracker.window_acf = tracker.autocorrelation(&window);
        tracker
    }

    /// Raw autocorrelation `r[τ]`, τ = 0..frame length, normalized to `r[0] = 1`
    /// (all zeros for a silent frame).
    fn autocorrelation(&self, frame: &[S]) -> Vec<S> {
        let zero = Complex::new(S::zero(), S::zero());
        let mut buf: Vec<Complex<S>> = frame.iter().map(|&x| Complex::new(x, S::zero())).collect();
        buf.resize(self.fft_len, zero);
        self.fft.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), S::zero());
        }
        self.ifft.process(&mut buf);
        let r0 = buf[0].re;
        if !(r0 > S::lit(ENERGY_FLOOR)) {
            return vec![S::zero(); frame.len()];
        }
        buf[..frame.len()].iter().map(|c| c.re / r0).collect()
    }

    pub fn track(&self, frame: &[S]) -> PitchFrame<S> {
        let acf = self.autocorrelation(frame);
        if acf[0] == S::zero() {
            return PitchFrame { pitch_hz: None, strength: S::zero() };
        }
        let floor = S::lit(0.05);
        let corrected = |lag: usize| acf[lag] / self.window_acf[lag].max(floor);
        let hi = self.max_lag.min(acf.len() - 2);
        let lo = self.min_lag.min(hi);
        let mut best = S::neg_infinity();
        for lag in lo..=hi {
            best = best.max(corrected(lag));
        }
        // first local maximum close to the global one; suppresses octave drops
        let mut chosen = None;
        for lag in lo..=hi {
            let v = corrected(lag);
            let left = corrected(lag - 1);
            let right = corrected(lag + 1);
            if v >= left && v >= right && v >= S::lit(0.85) * best {
                chosen = Some(lag);
                break;
            }
        }
        let lag = match chosen {
            Some(l) => l,
            None => return PitchFrame { pitch_hz: None, strength: best.max(S::zero()) },
        };
        let (a, b, c) = (corrected(lag - 1), corrected(lag), corrected(lag + 1));
        let denom = a - S::lit(2.0) * b + c;
        let shift = if denom.abs() > S::lit(1e-12) {
            (S::lit(0.5) * (a - c) / denom).max(S::lit(-0.5)).min(S::lit(0.5))
        } else {
            S::zero()
        };
        let period = S::from_usize_lossy(lag) + shift;
        let strength = b.min(S::one());
        let voiced = strength >= self.threshold;
        PitchFrame {
            pitch_hz: voiced.then(|| S::lit(self.sample_rate) / period),
            strength,
        }
    }
}

pub fn extract_prosodic<S: Scalar>(samples: &[S], config: &FeatureConfig) -> Result<ProsodicSequence<S>, FeatureError> {
    prosodic_with(&PitchTracker::new(config), samples, config)
}

fn prosodic_with<S: Scalar>(
    tracker: &PitchTracker<S>,
    samples: &[S],
    config: &FeatureConfig,
) -> Result<ProsodicSequence<S>, FeatureError> {
    let frames = frame_and_window(samples, config)?;
    let floor = S::lit(ENERGY_FLOOR);
    let mut last_pitch = S::lit(0.5 * (config.pitch_min_hz + config.pitch_max_hz)).ln();
    let mut rows: Vec<[S; PROSODIC_DIM]> = Vec::with_capacity(frames.len());
    let db_per_neper = S::lit(10.0 / std::f64::consts::LN_10);
    let mut run_start_energy = S::zero();
    let mut run_len = 0usize;
    for frame in &frames {
        let p = tracker.track(frame);
        let voiced = match p.pitch_hz {
            Some(hz) => {
                last_pitch = hz.ln();
                S::one()
            }
            None => S::zero(),
        };
        let log_e = frame.iter().map(|&x| x * x).sum::<S>().max(floor).ln();
        if run_len == 0 || (db_per_neper * (log_e - run_start_energy)).abs() > S::lit(3.0) {
            run_start_energy = log_e;
            run_len = 1;
        } else {
            run_len += 1;
        }
        rows.push([last_pitch, voiced, log_e, S::zero(), S::one() / S::from_usize_lossy(run_len)]);
    }
    let t = rows.len();
    if t > 1 {
        let half = S::lit(0.5);
        let energies: Vec<S> = rows.iter().map(|r| r[2]).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            row[3] = match i {
                0 => energies[1] - energies[0],
                i if i == t - 1 => energies[t - 1] - energies[t - 2],
                i => half * (energies[i + 1] - energies[i - 1]),
            };
        }
    }
    let data: Vec<S> = rows.iter().flatten().copied().collect();
    Ok(ProsodicSequence(
        ObservationSequence::new(data, PROSODIC_DIM)?.with_timing(config.frame_len_ms, config.frame_hop_ms),
    ))
}

/// Acoustic and prosodic sequences of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFeatures<S> {
    pub acoustic: ObservationSequence<S>,
    pub prosodic: ProsodicSequence<S>,
}

/// Reusable front-end holding FFT plans for both extractors.
pub struct FrontEnd<S: Scalar> {
    config: FeatureConfig,
    mfcc: MfccExtractor<S>,
    pitch: PitchTracker<S>,
    window: Vec<S>,
}

impl<S: Scalar> FrontEnd<S> {
    pub fn new(config: &FeatureConfig) -> Result<Self, FeatureError> {
        config.validate()?;
        Ok(FrontEnd {
            config: config.clone(),
            mfcc: MfccExtractor::new(config),
            pitch: PitchTracker::new(config),
            window: hamming(config.frame_len_samples()),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn process(&self, samples: &[S]) -> Result<UtteranceFeatures<S>, FeatureError> {
        let cfg = &self.config;
        let k = cfg.frame_len_samples();
        if samples.len() < k {
            return Err(FeatureError::TooShort { samples: samples.len(), needed: k });
        }
        let emphasized = preemphasize(samples, S::lit(cfg.preemphasis_coeff));
        let hop = cfg.hop_samples();
        let n = cfg.frame_count(samples.len());
        let mut acoustic = Vec::with_capacity(n * cfg.acoustic_dim());
        let mut buf = vec![S::zero(); k];
        for i in 0..n {
            for (dst, (&x, &w)) in buf.iter_mut().zip(emphasized[i * hop..].iter().zip(&self.window)) {
                *dst = x * w;
            }
            acoustic.extend(self.mfcc.compute(&buf));
        }
        let acoustic = ObservationSequence::new(acoustic, cfg.acoustic_dim())?.with_timing(cfg.frame_len_ms, cfg.frame_hop_ms);
        let prosodic = prosodic_with(&self.pitch, samples, cfg)?;
        Ok(UtteranceFeatures { acoustic, prosodic })
    }

    pub fn process_file(&self, path: &Path) -> Result<UtteranceFeatures<S>, FeatureError> {
        let samples = wav::read_normalized::<S>(path)?;
        self.process(&samples)
    }
}

/// Features of every utterance in a manifest, looked up by utterance id.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable<S> {
    index: HashMap<String, usize>,
    items: Vec<UtteranceFeatures<S>>,
}

impl<S: Scalar> FeatureTable<S> {
    pub fn from_pairs(pairs: Vec<(String, UtteranceFeatures<S>)>) -> Self {
        let mut table = FeatureTable { index: HashMap::with_capacity(pairs.len()), items: Vec::with_capacity(pairs.len()) };
        for (id, f) in pairs {
            table.index.insert(id, table.items.len());
            table.items.push(f);
        }
        table
    }

    pub fn get(&self, utterance_id: &str) -> Option<&UtteranceFeatures<S>> {
        self.index.get(utterance_id).map(|&i| &self.items[i])
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Reads and processes every WAV of `manifest` in parallel.
pub fn extract_corpus<S: Scalar>(manifest: &CorpusManifest, front: &FrontEnd<S>) -> Result<FeatureTable<S>, FeatureError> {
    let pairs = manifest
        .records
        .par_iter()
        .map(|r| Ok((r.utterance_id.clone(), front.process_file(&manifest.resolve_audio(r))?)))
        .collect::<Result<Vec<_>, FeatureError>>()?;
    Ok(FeatureTable::from_pairs(pairs))
}

/// Like [`extract_corpus`] on a generated corpus, without the WAV round trip.
/// Produces exactly the features the written files would give.
pub fn extract_synthetic<S: Scalar>(
    spec: &SyntheticSpec,
    manifest: &CorpusManifest,
    front: &FrontEnd<S>,
) -> Result<FeatureTable<S>, FeatureError> {
    let pairs = manifest
        .records
        .par_iter()
        .map(|r| {
            let samples = wav::pcm_to_unit(&synthesize(spec, r));
            Ok((r.utterance_id.clone(), front.process(&samples)?))
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;
    Ok(FeatureTable::from_pairs(pairs))
}
