//! RMS envelope extraction, envelope resampling, and WAV ingestion.
//!
//! The envelope of a signal y is the per-window root mean square
//! `r_i = sqrt(mean(y²[ih .. ih+W)))` over half-open windows of W samples
//! advanced by a hop of h samples. Trailing partial windows are dropped,
//! so a signal of length L ≥ W yields exactly `(L - W) / h + 1` frames.

pub mod wav;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// Window length the envelope defaults to, in samples.
pub const DEFAULT_WINDOW: usize = 512;
/// Hop length the envelope defaults to, in samples.
pub const DEFAULT_HOP: usize = 128;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("signal of {len} samples is shorter than one window of {window}")]
    TooShort { len: usize, window: usize },
    #[error("resample target length {0} must be at least 2")]
    InvalidTarget(usize),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A sampled signal. Stereo data is stored interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
    channels: u16,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32, channels: u16) -> Result<Self, EnvelopeError> {
        if sample_rate == 0 {
            return Err(EnvelopeError::InvalidWaveform("sample rate is zero".into()));
        }
        if !(1..=2).contains(&channels) {
            return Err(EnvelopeError::InvalidWaveform(format!(
                "{channels} channels; only mono and stereo are supported"
            )));
        }
        if samples.is_empty() {
            return Err(EnvelopeError::InvalidWaveform("empty sample buffer".into()));
        }
        if samples.len() % channels as usize != 0 {
            return Err(EnvelopeError::InvalidWaveform(format!(
                "{} interleaved samples not divisible by {channels} channels",
                samples.len()
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            channels,
        })
    }

    pub fn mono_from(samples: Vec<f64>, sample_rate: u32) -> Result<Self, EnvelopeError> {
        Self::new(samples, sample_rate, 1)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    /// Per-channel frame count.
    pub fn frame_count(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    /// Downmix to mono by averaging channels. Cheap copy for mono input.
    pub fn mono(&self) -> Vec<f64> {
        match self.channels {
            1 => self.samples.clone(),
            _ => self
                .samples
                .chunks_exact(self.channels as usize)
                .map(|frame| frame.iter().sum::<f64>() / frame.len() as f64)
                .collect(),
        }
    }
}

/// A sequence of non-negative RMS frames with its extraction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    frames: Vec<f64>,
    window: usize,
    hop: usize,
    source_rate: u32,
}

impl Envelope {
    pub fn from_frames(
        frames: Vec<f64>,
        window: usize,
        hop: usize,
        source_rate: u32,
    ) -> Result<Self, EnvelopeError> {
        if frames.is_empty() {
            return Err(EnvelopeError::InvalidWaveform("empty envelope".into()));
        }
        if frames.iter().any(|&f| !(f >= 0.0)) {
            return Err(EnvelopeError::InvalidWaveform(
                "envelope frames must be non-negative".into(),
            ));
        }
        Ok(Self {
            frames,
            window,
            hop,
            source_rate,
        })
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn source_rate(&self) -> u32 {
        self.source_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// An envelope resampled onto a generator's latent time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// RMS envelope of a waveform. Stereo input is downmixed to mono first.
pub fn rms_envelope(w: &Waveform, window: usize, hop: usize) -> Result<Envelope, EnvelopeError> {
    assert!(window >= 1 && hop >= 1, "window and hop must be positive");
    let mono = w.mono();
    if mono.len() < window {
        return Err(EnvelopeError::TooShort {
            len: mono.len(),
            window,
        });
    }
    let count = (mono.len() - window) / hop + 1;
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * hop;
        let sum_sq: f64 = mono[start..start + window].iter().map(|x| x * x).sum();
        frames.push((sum_sq / window as f64).sqrt());
    }
    Envelope::from_frames(frames, window, hop, w.sample_rate())
}

/// Linearly interpolate an envelope onto `target_len` points, preserving
/// the endpoints.
pub fn resample_envelope(
    env: &Envelope,
    target_len: usize,
) -> Result<ControlSignal, EnvelopeError> {
    if target_len < 2 {
        return Err(EnvelopeError::InvalidTarget(target_len));
    }
    let frames = env.frames();
    let values = resample_linear(frames, target_len);
    Ok(ControlSignal { values })
}

/// Linear resampling of an arbitrary sequence onto `target_len` points.
pub(crate) fn resample_linear(frames: &[f64], target_len: usize) -> Vec<f64> {
    if frames.len() == 1 {
        return vec![frames[0]; target_len];
    }
    let last = (frames.len() - 1) as f64;
    (0..target_len)
        .map(|k| {
            let t = k as f64 * last / (target_len - 1) as f64;
            let lo = t.floor() as usize;
            if lo >= frames.len() - 1 {
                frames[frames.len() - 1]
            } else {
                let frac = t - lo as f64;
                frames[lo] * (1.0 - frac) + frames[lo + 1] * frac
            }
        })
        .collect()
}

/// Write an envelope as CSV with header `frame,rms`.
pub fn write_envelope_csv(env: &Envelope, path: &Path) -> Result<(), EnvelopeError> {
    fs::write(path, envelope_csv(env))?;
    Ok(())
}

pub fn envelope_csv(env: &Envelope) -> String {
    let mut out = String::from("frame,rms\n");
    for (i, r) in env.frames().iter().enumerate() {
        let _ = writeln!(out, "{i},{r}");
    }
    out
}
