//! Speech audio to per-frame log-mel features at 25 rows per second.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array2};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::TensorFile;
use crate::error::{Error, Result};

pub const FEATURE_FPS: u32 = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite audio sample".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// `T × F` feature matrix at 25 rows per second.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f32>,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f32>) -> Result<Self> {
        if frames.ncols() == 0 {
            return Err(Error::Shape("feature width must be positive".into()));
        }
        if !frames.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(FeatureSequence { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_fft: 400,
            hop: 160,
            n_mels: 26,
            fmin: 50.0,
            fmax: 7600.0,
            log_floor: 1e-6,
        }
    }
}

impl MelConfig {
    /// Defaults with window and hop scaled to `sample_rate` (25 ms / 10 ms).
    pub fn for_rate(sample_rate: u32) -> Result<Self> {
        if sample_rate % 100 != 0 {
            return Err(Error::Unsupported(format!(
                "sample rate {sample_rate} Hz cannot be framed at 100 Hz"
            )));
        }
        let sr = sample_rate as usize;
        let mut cfg = MelConfig {
            n_fft: sr / 40,
            hop: sr / 100,
            ..MelConfig::default()
        };
        cfg.fmax = cfg.fmax.min(sample_rate as f64 / 2.0);
        Ok(cfg)
    }

    /// Number of hop frames averaged into one 25 Hz row.
    pub fn block(&self, sample_rate: u32) -> Result<usize> {
        let sr = sample_rate as usize;
        if self.hop == 0 || sr % self.hop != 0 || (sr / self.hop) % FEATURE_FPS as usize != 0 {
            return Err(Error::Unsupported(format!(
                "hop {} at {sample_rate} Hz does not give a multiple of 25 frames/s",
                self.hop
            )));
        }
        Ok(sr / self.hop / FEATURE_FPS as usize)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyq = sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyq) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= fmin < fmax <= {nyq}, got {}..{}",
                self.fmin, self.fmax
            )));
        }
        if self.n_mels == 0 || self.n_fft < 2 {
            return Err(Error::InvalidArgument("n_mels and n_fft must be positive".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidArgument("log_floor must be > 0".into()));
        }
        self.block(sample_rate).map(|_| ())
    }
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::Unsupported(format!("{}: unsupported WAV encoding", path.display())),
        other => Error::Unsupported(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Unsupported(format!(
            "{}: need 16-bit PCM mono, got {} channel(s), {} bits, {:?}",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono, clamping to [-1, 1].
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequency (Hz) of each mel band.
pub fn mel_centers(cfg: &MelConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    (1..=cfg.n_mels)
        .map(|k| mel_to_hz(lo + (hi - lo) * k as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Triangular filters over FFT bins `0..=n_fft/2`, each row summing to one.
pub fn mel_filterbank(cfg: &MelConfig, sample_rate: u32) -> Array2<f64> {
    let n_bins = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|k| mel_to_hz(lo + (hi - lo) * k as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * bin_hz;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[[m, b]] = w;
        }
        let area: f64 = fb.row(m).sum();
        if area > 0.0 {
            fb.row_mut(m).mapv_inplace(|w| w / area);
        }
    }
    fb
}

/// Per-hop power spectra `|STFT|²` with a periodic Hann window. Frames start
/// at multiples of `hop`; samples past the end read as zero.
pub fn power_spectrogram(samples: &[f32], n_fft: usize, hop: usize) -> Array2<f64> {
    let n_frames = samples.len() / hop;
    let n_bins = n_fft / 2 + 1;
    let window: Vec<f64> = (0..n_fft)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n_fft as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Array2::zeros((n_frames, n_bins));
    for i in 0..n_frames {
        let start = i * hop;
        for (j, z) in buf.iter_mut().enumerate() {
            let x = samples.get(start + j).copied().unwrap_or(0.0) as f64;
            *z = Complex::new(x * window[j], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for b in 0..n_bins {
            out[[i, b]] = buf[b].norm_sqr();
        }
    }
    out
}

pub fn log_mel(clip: &AudioClip, cfg: &MelConfig) -> Result<FeatureSequence> {
    cfg.validate(clip.sample_rate)?;
    if clip.samples.len() < cfg.n_fft {
        return Err(Error::TooShort(format!(
            "clip has {} samples, one FFT frame needs {}",
            clip.samples.len(),
            cfg.n_fft
        )));
    }
    let block = cfg.block(clip.sample_rate)?;
    let power = power_spectrogram(&clip.samples, cfg.n_fft, cfg.hop);
    let fb = mel_filterbank(cfg, clip.sample_rate);
    let mut logmel = power.dot(&fb.t());
    logmel.mapv_inplace(|v| (v + cfg.log_floor).ln());
    let rows = logmel.nrows() / block;
    let mut out = Array2::<f32>::zeros((rows, cfg.n_mels));
    for r in 0..rows {
        let chunk = logmel.slice(s![r * block..(r + 1) * block, ..]);
        for m in 0..cfg.n_mels {
            out[[r, m]] = (chunk.column(m).sum() / block as f64) as f32;
        }
    }
    FeatureSequence::new(out)
}

/// Trims or edge-pads features to `motion_len`; more than two frames of
/// disagreement means the streams are out of sync.
pub fn align_features(feats: &FeatureSequence, motion_len: usize) -> Result<FeatureSequence> {
    let t = feats.len();
    if t.abs_diff(motion_len) > 2 || t == 0 {
        return Err(Error::Alignment {
            features: t,
            motion: motion_len,
        });
    }
    let mut out = Array2::zeros((motion_len, feats.dim()));
    for r in 0..motion_len {
        out.row_mut(r).assign(&feats.frames.row(r.min(t - 1)));
    }
    Ok(FeatureSequence { frames: out })
}

pub fn features_to_file(feats: &FeatureSequence) -> TensorFile {
    let mut f = TensorFile::new("features", json!({ "fps": FEATURE_FPS }));
    f.push(
        "features",
        vec![feats.len(), feats.dim()],
        feats.frames.iter().copied().collect(),
        false,
    );
    f
}

pub fn features_from_file(file: &TensorFile) -> Result<FeatureSequence> {
    let t = file
        .get("features")
        .ok_or_else(|| Error::Format("feature file has no `features` tensor".into()))?;
    if t.shape.len() != 2 {
        return Err(Error::Format(format!("features must be rank 2, got shape {:?}", t.shape)));
    }
    let frames = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
        .map_err(|e| Error::Format(e.to_string()))?;
    FeatureSequence::new(frames)
}

pub fn save_features(feats: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    features_to_file(feats).save(path)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    features_from_file(&TensorFile::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, amp: f64, n: usize) -> AudioClip {
        let s = (0..n)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32)
            .collect();
        AudioClip::new(s, 16000).unwrap()
    }

    #[test]
    fn silence_is_log_floor() {
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let f = log_mel(&clip, &MelConfig::default()).unwrap();
        assert_eq!(f.frames.dim(), (25, 26));
        let want = (1e-6f64).ln() as f32;
        assert!(f.frames.iter().all(|v| (v - want).abs() < 1e-5));
    }

    #[test]
    fn filter_rows_have_unit_area() {
        let fb = mel_filterbank(&MelConfig::default(), 16000);
        for row in fb.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_at_band_center_peaks_in_that_band() {
        let cfg = MelConfig::default();
        let centers = mel_centers(&cfg);
        for k in [3, 8, 13, 20, 24] {
            let f = log_mel(&sine(centers[k], 0.5, 8000), &cfg).unwrap();
            for row in f.frames.rows() {
                let arg = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                assert_eq!(arg, k, "band {k}");
            }
        }
    }

    #[test]
    fn louder_never_lowers_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let s: Vec<f32> = (0..6400).map(|_| rng.random_range(-0.4..0.4)).collect();
            let a = AudioClip::new(s.clone(), 16000).unwrap();
            let b = AudioClip::new(s.iter().map(|v| v * 2.0).collect(), 16000).unwrap();
            let fa = log_mel(&a, &MelConfig::default()).unwrap();
            let fb = log_mel(&b, &MelConfig::default()).unwrap();
            assert!(fa.frames.iter().zip(fb.frames.iter()).all(|(x, y)| y >= x));
        }
    }

    #[test]
    fn rows_per_second_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f32> = (0..16000 * 2 + 640).map(|_| rng.random_range(-0.5..0.5)).collect();
        let cfg = MelConfig::default();
        let full = log_mel(&AudioClip::new(s.clone(), 16000).unwrap(), &cfg).unwrap();
        assert_eq!(full.len(), 51);
        let shifted = log_mel(&AudioClip::new(s[640..].to_vec(), 16000).unwrap(), &cfg).unwrap();
        assert_eq!(shifted.len(), 50);
        for r in 0..49 {
            assert_eq!(shifted.frames.row(r), full.frames.row(r + 1));
        }
    }

    #[test]
    fn too_short_and_bad_rate() {
        let clip = AudioClip::new(vec![0.0; 399], 16000).unwrap();
        assert!(matches!(log_mel(&clip, &MelConfig::default()), Err(Error::TooShort(_))));
        assert!(MelConfig::for_rate(22050).is_err());
        let cfg = MelConfig::for_rate(48000).unwrap();
        assert_eq!(cfg.block(48000).unwrap(), 4);
    }

    #[test]
    fn align_cases() {
        let f = FeatureSequence::new(Array2::from_shape_fn((100, 2), |(t, _)| t as f32)).unwrap();
        assert_eq!(align_features(&f, 100).unwrap(), f);
        let g = FeatureSequence::new(Array2::from_shape_fn((101, 2), |(t, _)| t as f32)).unwrap();
        assert_eq!(align_features(&g, 100).unwrap(), f);
        let short = FeatureSequence::new(Array2::zeros((97, 2))).unwrap();
        assert!(matches!(align_features(&short, 100), Err(Error::Alignment { .. })));
        let padded = align_features(&FeatureSequence::new(Array2::from_shape_fn((99, 1), |(t, _)| t as f32)).unwrap(), 100).unwrap();
        assert_eq!(padded.frames[[99, 0]], 98.0);
    }
}
