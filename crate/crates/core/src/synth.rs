//! Style-parameterized synthetic gaze, head and audio sessions.
//!
//! Gaze alternates between a home position and a speaker-specific aversion
//! direction. Shifts are minimum-jerk saccades; fixations carry AR(1)
//! jitter. The head pursues a scaled copy of the gaze target through a
//! first-order lag plus slow drift, and the eyes counter-rotate so that the
//! world gaze stays on target while the head settles. Audio is noise whose
//! envelope mixes a slow speech-like modulation with bumps at saccade onsets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::{save_wav, AudioClip};
use crate::corpus::{save_manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::motion::{save_motion_file, MotionSequence, MOTION_DIM, TARGET_FPS};
use crate::trainer::derive_seed;

pub const SAMPLE_RATE: u32 = 16_000;
/// Gaze targets never leave this box.
pub const TARGET_BOUND: f64 = 35.0;
/// Hard clamp keeping every channel inside the ±40° filter.
pub const CHANNEL_BOUND: f64 = 39.9;
/// Head pursuit time constant in seconds.
pub const HEAD_TAU: f64 = 0.6;
/// Head drift mean-reversion time in seconds.
pub const DRIFT_TAU: f64 = 2.0;
/// Correlation time of the head drift velocity in seconds.
pub const DRIFT_VEL_TAU: f64 = 1.0;
/// Fixation jitter AR(1) coefficient per frame.
pub const JITTER_RHO: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleProfile {
    /// Minimum fixation length in frames.
    pub fixation_dwell_mean: f64,
    /// Saccade onsets per second once the dwell has elapsed.
    pub saccade_rate: f64,
    /// Mean shift amplitude in degrees.
    pub saccade_amp_mean: f64,
    /// Fraction of each gaze shift taken up by the head.
    pub head_gain: f64,
    /// Standard deviation of the head drift velocity in °/s.
    pub head_drift_scale: f64,
    /// Share of the audio envelope driven by saccade onsets.
    pub speech_coupling: f64,
    /// Stationary standard deviation of fixation jitter in degrees.
    pub noise_scale: f64,
    /// Direction of gaze aversion in radians, measured from +yaw toward +pitch.
    pub aversion_angle: f64,
}

impl Default for StyleProfile {
    fn default() -> Self {
        StyleProfile {
            fixation_dwell_mean: 8.0,
            saccade_rate: 3.0,
            saccade_amp_mean: 12.0,
            head_gain: 0.6,
            head_drift_scale: 1.5,
            speech_coupling: 0.5,
            noise_scale: 0.15,
            aversion_angle: 0.5,
        }
    }
}

impl StyleProfile {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.fixation_dwell_mean,
            self.saccade_rate,
            self.saccade_amp_mean,
            self.head_gain,
            self.head_drift_scale,
            self.speech_coupling,
            self.noise_scale,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("style profile fields must be finite and non-negative".into()));
        }
        if self.head_gain > 1.0 || self.speech_coupling > 1.0 {
            return Err(Error::InvalidArgument("head_gain and speech_coupling must be at most 1".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Sampling range of every profile field, in declaration order.
pub const PROFILE_RANGES: [(f64, f64); 8] = [
    (5.0, 25.0),
    (0.5, 3.0),
    (3.0, 15.0),
    (0.3, 0.9),
    (0.5, 3.0),
    (0.2, 0.8),
    (0.05, 0.3),
    (0.0, 2.0 * PI),
];

fn profile_from(v: [f64; 8]) -> StyleProfile {
    StyleProfile {
        fixation_dwell_mean: v[0],
        saccade_rate: v[1],
        saccade_amp_mean: v[2],
        head_gain: v[3],
        head_drift_scale: v[4],
        speech_coupling: v[5],
        noise_scale: v[6],
        aversion_angle: v[7],
    }
}

/// Independent uniform draw of every field.
pub fn sample_style_profile(rng: &mut impl Rng) -> StyleProfile {
    profile_from(PROFILE_RANGES.map(|(lo, hi)| uniform(rng, lo, hi)))
}

/// Latin-hypercube draw of `n` profiles: along every field the range is cut
/// into `n` equal strata and each speaker lands in a different one.
pub fn sample_speaker_profiles(n: usize, rng: &mut impl Rng) -> Vec<StyleProfile> {
    let mut values = vec![[0.0; 8]; n];
    for (f, (lo, hi)) in PROFILE_RANGES.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (k, stratum) in strata.into_iter().enumerate() {
            let u = (stratum as f64 + rng.random::<f64>()) / n as f64;
            values[k][f] = lo + (hi - lo) * u;
        }
    }
    values.into_iter().map(profile_from).collect()
}

/// Minimum-jerk position profile on `[0, 1]`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Saccade duration in frames for a shift of `amp` degrees.
pub fn saccade_frames(amp: f64) -> usize {
    3 + (amp / 4.0).floor() as usize
}

/// A planned gaze shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift {
    pub onset: usize,
    pub frames: usize,
    /// `(pitch, yaw)` before and after.
    pub from: [f64; 2],
    pub to: [f64; 2],
}

/// Gaze targets and shift timing for `n` frames.
pub fn plan_shifts(profile: &StyleProfile, n: usize, home: [f64; 2], rng: &mut impl Rng) -> Vec<Shift> {
    let mut shifts = Vec::new();
    if profile.saccade_rate <= 0.0 {
        return shifts;
    }
    let fps = TARGET_FPS as f64;
    let mut pos = home;
    let mut away = false;
    let mut t = 0usize;
    loop {
        let dwell = profile.fixation_dwell_mean * uniform(rng, 0.5, 1.5);
        let wait = -(1.0 - rng.random::<f64>()).ln() * fps / profile.saccade_rate;
        let onset = t + dwell.max(wait).round().max(1.0) as usize;
        let to = if away {
            [home[0] + 0.5 * normal(rng), home[1] + 0.5 * normal(rng)]
        } else {
            let amp = profile.saccade_amp_mean * uniform(rng, 0.75, 1.25);
            let dir = profile.aversion_angle + 0.3 * normal(rng);
            [pos[0] + amp * dir.sin(), pos[1] + amp * dir.cos()]
        };
        let to = to.map(|v| v.clamp(-TARGET_BOUND, TARGET_BOUND));
        let amp = (to[0] - pos[0]).hypot(to[1] - pos[1]);
        let frames = saccade_frames(amp);
        if onset + frames >= n {
            break;
        }
        shifts.push(Shift { onset, frames, from: pos, to });
        pos = to;
        away = !away;
        t = onset + frames;
    }
    shifts
}

/// World gaze `(pitch, yaw)` per frame, without jitter.
pub fn gaze_trajectory(shifts: &[Shift], n: usize, home: [f64; 2]) -> Vec<[f64; 2]> {
    let mut out = vec![home; n];
    let mut pos = home;
    let mut next = 0;
    for (t, g) in out.iter_mut().enumerate() {
        while next < shifts.len() && t >= shifts[next].onset + shifts[next].frames {
            pos = shifts[next].to;
            next += 1;
        }
        *g = match shifts.get(next) {
            Some(s) if t > s.onset => {
                let a = min_jerk((t - s.onset) as f64 / s.frames as f64);
                [s.from[0] + a * (s.to[0] - s.from[0]), s.from[1] + a * (s.to[1] - s.from[1])]
            }
            _ => pos,
        };
    }
    out
}

/// Current gaze target per frame: switches at each shift onset.
fn target_series(shifts: &[Shift], n: usize, home: [f64; 2]) -> Vec<[f64; 2]> {
    let mut out = vec![home; n];
    let mut pos = home;
    let mut next = 0;
    for (t, g) in out.iter_mut().enumerate() {
        while next < shifts.len() && t >= shifts[next].onset {
            pos = shifts[next].to;
            next += 1;
        }
        *g = pos;
    }
    out
}

/// Slow speech-like modulation in `[0, 1]` at frame rate.
fn speech_envelope(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut phase = uniform(rng, 0.0, 2.0 * PI);
    let mut level = 0.5;
    for _ in 0..n {
        phase += 2.0 * PI * uniform(rng, 3.0, 5.0) / TARGET_FPS as f64;
        level = (0.9 * level + 0.1 * uniform(rng, 0.0, 1.0)).clamp(0.0, 1.0);
        out.push(level * (0.5 + 0.5 * phase.sin()));
    }
    out
}

/// Noise audio whose per-frame envelope is `0.05 + (1−c)·speech + c·bumps`.
pub fn synth_audio(onsets: &[usize], coupling: f64, n_frames: usize, rng: &mut impl Rng) -> Result<AudioClip> {
    let speech = speech_envelope(n_frames, rng);
    let mut bumps = vec![0.0; n_frames];
    for &o in onsets {
        let centre = o as f64 - 1.0;
        for (t, b) in bumps.iter_mut().enumerate() {
            let d = t as f64 - centre;
            if d.abs() <= 8.0 {
                *b += (-d * d / (2.0 * 2.0 * 2.0)).exp();
            }
        }
    }
    let env: Vec<f64> = (0..n_frames)
        .map(|t| 0.05 + (1.0 - coupling) * speech[t] + coupling * bumps[t].min(1.0))
        .collect();
    let per_frame = (SAMPLE_RATE / TARGET_FPS) as usize;
    let mut samples = Vec::with_capacity(n_frames * per_frame);
    for i in 0..n_frames * per_frame {
        // linear interpolation between frame centres
        let pos = (i as f64 + 0.5) / per_frame as f64 - 0.5;
        let k = pos.floor().max(0.0) as usize;
        let frac = (pos - k as f64).clamp(0.0, 1.0);
        let e = env[k.min(n_frames - 1)] * (1.0 - frac) + env[(k + 1).min(n_frames - 1)] * frac;
        let v = 0.3 * e * normal(rng);
        samples.push(v.clamp(-0.99, 0.99) as f32);
    }
    AudioClip::new(samples, SAMPLE_RATE)
}

/// Generates one session of `seconds` length at 25 FPS and 16 kHz.
pub fn generate_session(
    profile: &StyleProfile,
    seconds: f64,
    rng: &mut impl Rng,
    speaker_id: &str,
    session_id: &str,
) -> Result<(MotionSequence, AudioClip)> {
    profile.validate()?;
    if !(seconds >= 2.0) {
        return Err(Error::InvalidArgument(format!("session must be at least 2 s, got {seconds}")));
    }
    let fps = TARGET_FPS as f64;
    let n = (seconds * fps).round() as usize;
    let home = [uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0)];
    let shifts = plan_shifts(profile, n, home, rng);
    let gaze = gaze_trajectory(&shifts, n, home);
    let targets = target_series(&shifts, n, home);

    let alpha = 1.0 / (HEAD_TAU * fps);
    let drift_a = (-1.0 / (DRIFT_TAU * fps)).exp();
    let vel_rho = (-1.0 / (DRIFT_VEL_TAU * fps)).exp();
    let vel_step = profile.head_drift_scale * (1.0 - vel_rho * vel_rho).sqrt();
    let mut head = [profile.head_gain * home[0], profile.head_gain * home[1], 0.0];
    let mut drift = [0.0; 3];
    let mut drift_vel = [0.0; 3];
    let mut jitter = [[0.0; 2]; 2];
    let jitter_step = profile.noise_scale * (1.0 - JITTER_RHO * JITTER_RHO).sqrt();
    let mut frames = Array2::zeros((n, MOTION_DIM));
    for t in 0..n {
        for c in 0..2 {
            head[c] += alpha * (profile.head_gain * targets[t][c] - head[c]);
        }
        head[2] = 0.1 * head[1];
        for (d, v) in drift.iter_mut().zip(drift_vel.iter_mut()) {
            *v = vel_rho * *v + vel_step * normal(rng);
            *d = drift_a * *d + *v / fps;
        }
        for eye in jitter.iter_mut() {
            for j in eye.iter_mut() {
                *j = JITTER_RHO * *j + jitter_step * normal(rng);
            }
        }
        let h = [head[0] + drift[0], head[1] + drift[1], head[2] + 0.3 * drift[2]];
        let row = [
            h[0],
            h[1],
            h[2],
            gaze[t][0] - h[0] + jitter[0][0],
            gaze[t][1] - h[1] + jitter[0][1],
            gaze[t][0] - h[0] + jitter[1][0],
            gaze[t][1] - h[1] + jitter[1][1],
        ];
        for (c, v) in row.iter().enumerate() {
            frames[[t, c]] = v.clamp(-CHANNEL_BOUND, CHANNEL_BOUND);
        }
    }
    let onsets: Vec<usize> = shifts.iter().map(|s| s.onset).collect();
    let audio = synth_audio(&onsets, profile.speech_coupling, n, rng)?;
    Ok((MotionSequence::new(frames, TARGET_FPS, speaker_id, session_id)?, audio))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub sessions_per_speaker: usize,
    pub session_seconds: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0 || self.sessions_per_speaker == 0 {
            return Err(Error::InvalidArgument("speaker and session counts must be positive".into()));
        }
        if !(self.session_seconds >= 2.0) {
            return Err(Error::InvalidArgument("sessions must be at least 2 s long".into()));
        }
        Ok(())
    }
}

pub fn speaker_id(i: usize) -> String {
    format!("spk{i:02}")
}

pub fn session_id(speaker: usize, session: usize) -> String {
    format!("spk{speaker:02}_s{session}")
}

pub fn speaker_profiles(cfg: &SynthConfig) -> Vec<StyleProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    sample_speaker_profiles(cfg.n_speakers, &mut rng)
}

/// One generated session with its identifiers.
#[derive(Debug, Clone)]
pub struct SynthSession {
    pub motion: MotionSequence,
    pub audio: AudioClip,
}

/// All sessions of a corpus in manifest order, without touching disk.
pub fn generate_sessions(cfg: &SynthConfig) -> Result<Vec<(StyleProfile, Vec<SynthSession>)>> {
    cfg.validate()?;
    let profiles = speaker_profiles(cfg);
    (0..cfg.n_speakers)
        .map(|spk| {
            let profile = profiles[spk];
            let sessions = (0..cfg.sessions_per_speaker)
                .map(|sess| {
                    let salt = ((spk as u64 + 1) << 32) | (sess as u64 + 1);
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, salt));
                    let (motion, audio) =
                        generate_session(&profile, cfg.session_seconds, &mut rng, &speaker_id(spk), &session_id(spk, sess))?;
                    Ok(SynthSession { motion, audio })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((profile, sessions))
        })
        .collect()
}

/// Writes `manifest.jsonl`, `motion/*.csv`, `audio/*.wav` and
/// `profiles/*.json` under `out_dir`. Returns the manifest path.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out = out_dir.as_ref();
    for sub in ["motion", "audio", "profiles"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::new();
    for (spk, (profile, sessions)) in generate_sessions(cfg)?.into_iter().enumerate() {
        let ppath = out.join("profiles").join(format!("{}.json", speaker_id(spk)));
        let text = serde_json::to_string_pretty(&profile)?;
        std::fs::write(&ppath, text + "\n").map_err(|e| Error::io(&ppath, e))?;
        for s in sessions {
            let sid = s.motion.session_id.clone();
            let motion_rel = format!("motion/{sid}.csv");
            let audio_rel = format!("audio/{sid}.wav");
            save_motion_file(&s.motion, out.join(&motion_rel), &[])?;
            save_wav(&s.audio, out.join(&audio_rel))?;
            entries.push(ManifestEntry {
                motion_path: motion_rel,
                audio_path: audio_rel,
                speaker_id: speaker_id(spk),
                session_id: sid,
                features_path: None,
            });
        }
    }
    let manifest = out.join("manifest.jsonl");
    save_manifest(&entries, &manifest)?;
    Ok(manifest)
}
