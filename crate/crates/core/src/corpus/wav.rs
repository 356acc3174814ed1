//! 16-bit mono PCM WAV reading and writing.

use std::path::Path;

use super::{CorpusError, SAMPLE_RATE_HZ};
use crate::Scalar;

pub fn write_pcm16(path: &Path, samples: &[i16]) -> Result<(), CorpusError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |source| CorpusError::Wav { path: path.to_path_buf(), source };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    {
        let mut w = writer.get_i16_writer(samples.len() as u32);
        for &s in samples {
            w.write_sample(s);
        }
        w.flush().map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

pub fn read_pcm16(path: &Path) -> Result<Vec<i16>, CorpusError> {
    let wrap = |source| CorpusError::Wav { path: path.to_path_buf(), source };
    let reader = hound::WavReader::open(path).map_err(wrap)?;
    let spec = reader.spec();
    let unsupported = |reason: String| CorpusError::UnsupportedWav { path: path.to_path_buf(), reason };
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(unsupported(format!("{} Hz", spec.sample_rate)));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported(format!("{}-bit {:?}", spec.bits_per_sample, spec.sample_format)));
    }
    reader.into_samples::<i16>().collect::<Result<_, _>>().map_err(wrap)
}

/// Read a corpus WAV as samples in `[-1, 1)`.
pub fn read_normalized<S: Scalar>(path: &Path) -> Result<Vec<S>, CorpusError> {
    Ok(pcm_to_unit(&read_pcm16(path)?))
}

pub fn pcm_to_unit<S: Scalar>(samples: &[i16]) -> Vec<S> {
    let scale = S::lit(1.0 / 32768.0);
    samples.iter().map(|&s| S::lit(f64::from(s)) * scale).collect()
}
