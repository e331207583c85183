//! Native audio analysis tools: tempo, pitch, spectral centroid and
//! energy-based activity segmentation over mono WAV input.
//!
//! All STFT analyses use a Hann window of 2048 samples and a hop of 512
//! unless overridden through [`StftParams`].

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::toolbus::{ResultMap, ResultValue, Scalar, ToolRequest, ToolResult};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unsupported wav encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt wav file: {0}")]
    CorruptHeader(String),
    #[error("wav io: {0}")]
    Io(std::io::Error),
    #[error("audio buffer is empty")]
    Empty,
    #[error("audio too short: {got:.3} s < {need:.3} s")]
    TooShort { got: f64, need: f64 },
    #[error("no voiced frames")]
    NoVoicedFrames,
    #[error("invalid analysis parameter: {0}")]
    InvalidParam(String),
}

/// Mono samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if samples.is_empty() {
            return Err(DspError::Empty);
        }
        if sample_rate == 0 {
            return Err(DspError::InvalidParam("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(DspError::CorruptHeader("non-finite sample".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self { samples: self.samples.iter().map(|s| s * gain).collect(), sample_rate: self.sample_rate }
    }

    fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub window: usize,
    pub hop: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        Self { window: 2048, hop: 512 }
    }
}

impl StftParams {
    fn check(&self) -> Result<(), DspError> {
        if self.window < 2 || self.hop == 0 || self.hop > self.window {
            return Err(DspError::InvalidParam(format!("window {} / hop {}", self.window, self.hop)));
        }
        Ok(())
    }
}

fn map_write(e: hound::Error) -> DspError {
    match e {
        hound::Error::IoError(io) => DspError::Io(io),
        other => DspError::UnsupportedEncoding(other.to_string()),
    }
}

fn map_hound(e: hound::Error) -> DspError {
    match e {
        // the file itself opened fine, so read failures here mean truncation
        hound::Error::IoError(io) => DspError::CorruptHeader(io.to_string()),
        hound::Error::FormatError(m) => DspError::CorruptHeader(m.to_string()),
        hound::Error::Unsupported => DspError::UnsupportedEncoding("unsupported wav variant".into()),
        other => DspError::CorruptHeader(other.to_string()),
    }
}

/// Reads PCM16 or float32 WAV, averaging channels to mono.
pub fn read_wav(path: &Path) -> Result<AudioBuffer, DspError> {
    let file = std::fs::File::open(path).map_err(DspError::Io)?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => return Err(DspError::UnsupportedEncoding(format!("{fmt:?} {bits}-bit"))),
    };
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes a mono PCM16 WAV.
pub fn write_wav_pcm16(path: &Path, buffer: &AudioBuffer) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(map_write)?;
    for &s in &buffer.samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).map_err(map_write)?;
    }
    w.finalize().map_err(map_write)
}

/// Writes a mono float32 WAV.
pub fn write_wav_f32(path: &Path, buffer: &AudioBuffer) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(map_write)?;
    for &s in &buffer.samples {
        w.write_sample(s as f32).map_err(map_write)?;
    }
    w.finalize().map_err(map_write)
}

struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    params: StftParams,
}

impl Stft {
    fn new(params: StftParams) -> Self {
        let n = params.window;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        Self { fft: FftPlanner::new().plan_fft_forward(n), window, params }
    }

    /// Magnitude spectra (bins `0..=window/2`) of every frame. Buffers shorter
    /// than one window yield a single zero-padded frame.
    fn magnitudes(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        let n = self.params.window;
        let frames = if samples.len() <= n { 1 } else { 1 + (samples.len() - n) / self.params.hop };
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        (0..frames)
            .map(|f| {
                let start = f * self.params.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    let s = samples.get(start + i).copied().unwrap_or(0.0);
                    *b = Complex::new(s * self.window[i], 0.0);
                }
                self.fft.process(&mut buf);
                buf[..=n / 2].iter().map(|c| c.norm()).collect()
            })
            .collect()
    }
}

pub const TEMPO_MIN_BPM: f64 = 40.0;
pub const TEMPO_MAX_BPM: f64 = 240.0;
pub const TEMPO_MIN_DURATION_S: f64 = 2.0;
/// Mean spectral flux relative to mean frame magnitude below which a signal
/// is treated as having no onsets.
pub const MIN_ONSET_STRENGTH: f64 = 0.01;
/// `audio_features` omits the tempo below this autocorrelation confidence;
/// a lone onset (a single tone burst) scores around 0.4, a steady pulse 0.8+.
pub const TEMPO_MIN_CONFIDENCE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoEstimate {
    pub bpm: f64,
    /// Autocorrelation at the chosen lag relative to lag zero; zero for a
    /// flat onset envelope.
    pub confidence: f64,
}

/// Tempo from the autocorrelation of a half-wave-rectified spectral-flux
/// onset envelope, searched over 40-240 BPM.
///
/// A flat envelope (silence, steady tones) has no periodicity; it returns
/// the lower bound, 40 BPM, with zero confidence.
pub fn analyze_tempo(buffer: &AudioBuffer, params: StftParams) -> Result<TempoEstimate, DspError> {
    params.check()?;
    if buffer.duration_s() < TEMPO_MIN_DURATION_S {
        return Err(DspError::TooShort { got: buffer.duration_s(), need: TEMPO_MIN_DURATION_S });
    }
    let mags = Stft::new(params).magnitudes(&buffer.samples);
    let env: Vec<f64> = mags
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b - a).max(0.0)).sum())
        .collect();
    let level = mags.iter().map(|m| m.iter().sum::<f64>()).sum::<f64>() / mags.len().max(1) as f64;
    let onset_strength = if level > 0.0 { env.iter().sum::<f64>() / env.len().max(1) as f64 / level } else { 0.0 };
    // onsets of non-integer-period beats land on neighbouring frames; a short
    // smoothing keeps the true period's peak from splitting across lags
    let env: Vec<f64> = (0..env.len())
        .map(|i| {
            [(-2i64, 1.0), (-1, 2.0), (0, 3.0), (1, 2.0), (2, 1.0)]
                .iter()
                .filter_map(|&(o, w)| env.get(usize::try_from(i as i64 + o).ok()?).map(|v| v * w))
                .sum::<f64>()
                / 9.0
        })
        .collect();
    let mut env = env;
    let mean = env.iter().sum::<f64>() / env.len().max(1) as f64;
    env.iter_mut().for_each(|e| *e -= mean);

    let frame_rate = buffer.sample_rate as f64 / params.hop as f64;
    let lag_min = ((60.0 * frame_rate / TEMPO_MAX_BPM).ceil() as usize).max(1);
    let lag_max = ((60.0 * frame_rate / TEMPO_MIN_BPM).floor() as usize).min(env.len().saturating_sub(2));
    let acf = |lag: usize| -> f64 { env.iter().zip(&env[lag..]).map(|(a, b)| a * b).sum() };
    let r0 = acf(0);
    // steady tones still produce a faint, periodic flux from window leakage
    if r0 <= 0.0 || lag_max < lag_min || onset_strength < MIN_ONSET_STRENGTH {
        return Ok(TempoEstimate { bpm: TEMPO_MIN_BPM, confidence: 0.0 });
    }

    let mut best = lag_max;
    let mut best_val = acf(lag_max);
    for lag in (lag_min..lag_max).rev() {
        let v = acf(lag);
        if v > best_val {
            best = lag;
            best_val = v;
        }
    }
    let refined = best as f64 + parabolic_offset(acf(best - 1), best_val, acf(best + 1));
    let bpm = (60.0 * frame_rate / refined).clamp(TEMPO_MIN_BPM, TEMPO_MAX_BPM);
    Ok(TempoEstimate { bpm, confidence: best_val / r0 })
}

pub fn estimate_tempo(buffer: &AudioBuffer) -> Result<f64, DspError> {
    analyze_tempo(buffer, StftParams::default()).map(|t| t.bpm)
}

/// Vertex offset of the parabola through three equally spaced points,
/// limited to half a step.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

pub const PITCH_MIN_HZ: f64 = 50.0;
pub const PITCH_MAX_HZ: f64 = 2000.0;
pub const YIN_THRESHOLD: f64 = 0.1;

/// YIN pitch of one frame, or `None` when no dip falls below the threshold.
fn yin_frame(frame: &[f64], window: usize, tau_min: usize, tau_max: usize, sample_rate: f64) -> Option<f64> {
    let mut diff = vec![0.0; tau_max + 2];
    for (tau, d) in diff.iter_mut().enumerate().take(tau_max + 2).skip(1) {
        *d = (0..window).map(|j| {
            let e = frame[j] - frame[j + tau];
            e * e
        }).sum();
    }
    // cumulative mean normalized difference
    let mut cmnd = vec![1.0; tau_max + 2];
    let mut running = 0.0;
    for tau in 1..tau_max + 2 {
        running += diff[tau];
        cmnd[tau] = if running > 0.0 { diff[tau] * tau as f64 / running } else { 1.0 };
    }
    let mut tau = tau_min.max(2);
    while tau <= tau_max {
        if cmnd[tau] < YIN_THRESHOLD {
            while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            let refined = tau as f64 + parabolic_offset(cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
            return Some(sample_rate / refined);
        }
        tau += 1;
    }
    None
}

/// Median YIN estimate over voiced frames, searched over 50-2000 Hz.
pub fn estimate_pitch(buffer: &AudioBuffer) -> Result<f64, DspError> {
    let sr = buffer.sample_rate as f64;
    let tau_min = (sr / PITCH_MAX_HZ).floor() as usize;
    let tau_max = (sr / PITCH_MIN_HZ).ceil() as usize;
    let window = tau_max;
    let frame_len = window + tau_max + 2;
    let n = buffer.samples.len();
    if n < frame_len {
        return Err(DspError::TooShort { got: buffer.duration_s(), need: frame_len as f64 / sr });
    }
    let mut estimates: Vec<f64> = (0..=(n - frame_len) / window)
        .filter_map(|f| {
            let frame = &buffer.samples[f * window..f * window + frame_len];
            let energy: f64 = frame.iter().map(|s| s * s).sum();
            if energy < 1e-10 {
                return None;
            }
            yin_frame(frame, window, tau_min, tau_max, sr)
        })
        .collect();
    if estimates.is_empty() {
        return Err(DspError::NoVoicedFrames);
    }
    estimates.sort_by(|a, b| a.partial_cmp(b).expect("finite pitch"));
    let m = estimates.len();
    Ok(if m % 2 == 1 { estimates[m / 2] } else { 0.5 * (estimates[m / 2 - 1] + estimates[m / 2]) })
}

/// Magnitude-weighted mean frequency per STFT frame, averaged over frames
/// with any energy. Zero for an all-silent buffer.
pub fn spectral_centroid_with(buffer: &AudioBuffer, params: StftParams) -> Result<f64, DspError> {
    params.check()?;
    let bin_hz = buffer.sample_rate as f64 / params.window as f64;
    let centroids: Vec<f64> = Stft::new(params)
        .magnitudes(&buffer.samples)
        .iter()
        .filter_map(|m| {
            let total: f64 = m.iter().sum();
            (total > 1e-12).then(|| m.iter().enumerate().map(|(k, v)| k as f64 * bin_hz * v).sum::<f64>() / total)
        })
        .collect();
    if centroids.is_empty() {
        return Ok(0.0);
    }
    Ok(centroids.iter().sum::<f64>() / centroids.len() as f64)
}

pub fn spectral_centroid(buffer: &AudioBuffer) -> f64 {
    spectral_centroid_with(buffer, StftParams::default()).expect("default params are valid")
}

/// An active region in seconds, `start < end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Sliding-RMS activity detection. Windows overlap by half; each window
/// owns the hop-wide slice around its center. Active runs separated by less
/// than one window are merged.
pub fn active_segments(buffer: &AudioBuffer, window_ms: f64, threshold_db: f64) -> Vec<Segment> {
    let sr = buffer.sample_rate as f64;
    let n = buffer.samples.len();
    let window = ((window_ms / 1000.0 * sr).round() as usize).max(2);
    if window > n {
        return Vec::new();
    }
    let hop = window / 2;
    let frames = 1 + (n - window) / hop;
    let active: Vec<bool> = (0..frames)
        .map(|f| {
            let w = &buffer.samples[f * hop..f * hop + window];
            let rms = (w.iter().map(|s| s * s).sum::<f64>() / window as f64).sqrt();
            rms > 0.0 && 20.0 * rms.log10() > threshold_db
        })
        .collect();

    let owned = |f: usize| -> (f64, f64) {
        let lo = if f == 0 { 0 } else { f * hop + hop / 2 };
        let hi = if f + 1 == frames { n } else { f * hop + hop / 2 + hop };
        (lo as f64 / sr, hi.min(n) as f64 / sr)
    };

    let mut segs: Vec<Segment> = Vec::new();
    let mut f = 0;
    while f < frames {
        if !active[f] {
            f += 1;
            continue;
        }
        let start = f;
        while f + 1 < frames && active[f + 1] {
            f += 1;
        }
        let seg = Segment { start_s: owned(start).0, end_s: owned(f).1 };
        match segs.last_mut() {
            Some(prev) if seg.start_s - prev.end_s < window as f64 / sr => prev.end_s = seg.end_s,
            _ => segs.push(seg),
        }
        f += 1;
    }
    segs
}

pub const SEGMENT_WINDOW_MS: f64 = 50.0;
pub const SEGMENT_THRESHOLD_DB: f64 = -40.0;

fn stft_from_request(request: &ToolRequest) -> Result<StftParams, String> {
    let mut p = StftParams::default();
    for (key, slot) in [("window", &mut p.window), ("hop", &mut p.hop)] {
        if let Some(v) = request.params.get(key) {
            *slot = v.as_u64().ok_or_else(|| format!("param `{key}` must be a positive integer"))? as usize;
        }
    }
    p.check().map_err(|e| e.to_string())?;
    Ok(p)
}

fn load_request_audio(request: &ToolRequest) -> Result<AudioBuffer, String> {
    let path = request.audio_path.as_deref().ok_or("request has no audio_path")?;
    read_wav(Path::new(path)).map_err(|e| format!("cannot read {path}: {e}"))
}

/// `{tempo, pitch, timbre}`; estimators that fail or see no structure are
/// left out of the result.
pub fn audio_features_tool(name: &str, request: &ToolRequest) -> ToolResult {
    let params = match stft_from_request(request) {
        Ok(p) => p,
        Err(e) => return ToolResult::error(name, e),
    };
    let buffer = match load_request_audio(request) {
        Ok(b) => b,
        Err(e) => return ToolResult::error(name, e),
    };
    let mut out = ResultMap::new();
    if let Ok(t) = analyze_tempo(&buffer, params) {
        if t.confidence > TEMPO_MIN_CONFIDENCE {
            out.insert("tempo".into(), round2(t.bpm).into());
        }
    }
    if let Ok(p) = estimate_pitch(&buffer) {
        out.insert("pitch".into(), round2(p).into());
    }
    if buffer.energy() > 0.0 {
        if let Ok(c) = spectral_centroid_with(&buffer, params) {
            out.insert("timbre".into(), round2(c).into());
        }
    }
    if out.is_empty() {
        return ToolResult::error(name, "no extractable features");
    }
    ToolResult::ok(name, out)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn segment_params(request: &ToolRequest) -> (f64, f64) {
    let get = |k: &str, d: f64| request.params.get(k).and_then(|v| v.as_f64()).unwrap_or(d);
    (get("window_ms", SEGMENT_WINDOW_MS), get("threshold_db", SEGMENT_THRESHOLD_DB))
}

/// `{segment_count, total_active_s, longest_s}`.
pub fn duration_tool(name: &str, request: &ToolRequest) -> ToolResult {
    let buffer = match load_request_audio(request) {
        Ok(b) => b,
        Err(e) => return ToolResult::error(name, e),
    };
    let (w, t) = segment_params(request);
    let segs = active_segments(&buffer, w, t);
    let mut out = ResultMap::new();
    out.insert("segment_count".into(), (segs.len() as f64).into());
    out.insert("total_active_s".into(), round3(segs.iter().map(Segment::duration_s).sum()).into());
    out.insert("longest_s".into(), round3(segs.iter().map(Segment::duration_s).fold(0.0, f64::max)).into());
    ToolResult::ok(name, out)
}

/// `{segment_count, onsets_s, offsets_s}`.
pub fn temporal_tool(name: &str, request: &ToolRequest) -> ToolResult {
    let buffer = match load_request_audio(request) {
        Ok(b) => b,
        Err(e) => return ToolResult::error(name, e),
    };
    let (w, t) = segment_params(request);
    let segs = active_segments(&buffer, w, t);
    let mut out = ResultMap::new();
    out.insert("segment_count".into(), (segs.len() as f64).into());
    out.insert("onsets_s".into(), ResultValue::List(segs.iter().map(|s| Scalar::Number(round3(s.start_s))).collect()));
    out.insert("offsets_s".into(), ResultValue::List(segs.iter().map(|s| Scalar::Number(round3(s.end_s))).collect()));
    ToolResult::ok(name, out)
}

fn round3(v: f64) -> f64 {
    // adding 0.0 turns -0.0 (the sum of nothing) into 0.0
    (v * 1000.0).round() / 1000.0 + 0.0
}

/// Test-signal generators.
pub mod synth {
    use super::AudioBuffer;
    use std::f64::consts::PI;

    pub fn sine(freq: f64, seconds: f64, sample_rate: u32, amplitude: f64) -> AudioBuffer {
        let n = (seconds * sample_rate as f64).round() as usize;
        let samples = (0..n).map(|i| amplitude * (2.0 * PI * freq * i as f64 / sample_rate as f64).sin()).collect();
        AudioBuffer { samples, sample_rate }
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> AudioBuffer {
        let n = (seconds * sample_rate as f64).round() as usize;
        AudioBuffer { samples: vec![0.0; n.max(1)], sample_rate }
    }

    /// Short decaying noise-like clicks (a 2 kHz burst of 10 ms) every beat.
    pub fn click_track(bpm: f64, seconds: f64, sample_rate: u32) -> AudioBuffer {
        let sr = sample_rate as f64;
        let n = (seconds * sr).round() as usize;
        let mut samples = vec![0.0; n];
        let period = 60.0 / bpm * sr;
        let click_len = (0.01 * sr) as usize;
        let mut k = 0usize;
        loop {
            let start = (k as f64 * period).round() as usize;
            if start >= n {
                break;
            }
            for j in 0..click_len.min(n - start) {
                let t = j as f64 / sr;
                samples[start + j] = 0.9 * (-t / 0.002).exp() * (2.0 * PI * 2000.0 * t).sin();
            }
            k += 1;
        }
        AudioBuffer { samples, sample_rate }
    }

    /// Sine burst of `freq` between `start_s` and `end_s` inside silence.
    pub fn tone_burst(freq: f64, start_s: f64, end_s: f64, seconds: f64, sample_rate: u32) -> AudioBuffer {
        let mut b = silence(seconds, sample_rate);
        let sr = sample_rate as f64;
        let (lo, hi) = ((start_s * sr).round() as usize, ((end_s * sr).round() as usize).min(b.samples.len()));
        for i in lo..hi {
            b.samples[i] = 0.5 * (2.0 * PI * freq * i as f64 / sr).sin();
        }
        b
    }

    /// Uniform white noise from a fixed linear congruential sequence.
    pub fn white_noise(seconds: f64, sample_rate: u32, seed: u64) -> AudioBuffer {
        let n = (seconds * sample_rate as f64).round() as usize;
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let samples = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 1.6 - 0.8
            })
            .collect();
        AudioBuffer { samples, sample_rate }
    }

    pub fn mix(a: &AudioBuffer, b: &AudioBuffer) -> AudioBuffer {
        assert_eq!(a.sample_rate, b.sample_rate);
        let samples = a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
        AudioBuffer { samples, sample_rate: a.sample_rate }
    }
}
