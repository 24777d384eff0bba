//! Corpus manifests and session loading.
//!
//! A manifest is JSON lines, one session per line. Paths are resolved
//! relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{align_features, load_features, load_wav, log_mel, FeatureSequence, MelConfig};
use crate::error::{Error, Result};
use crate::motion::{load_motion_file, resample_to_25fps, valid_runs, MotionSequence, TARGET_FPS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub motion_path: String,
    pub audio_path: String,
    pub speaker_id: String,
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<String>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out: Vec<ManifestEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if out.iter().any(|e| e.session_id == entry.session_id) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate session_id {}", entry.session_id),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_manifest(entries)?).map_err(|e| Error::io(path, e))
}

/// Resolves a manifest-relative path.
pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Directory that manifest paths are relative to.
pub fn manifest_base(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// One session's motion at 25 FPS with features aligned frame for frame.
#[derive(Debug, Clone)]
pub struct Session {
    pub entry: ManifestEntry,
    pub motion: MotionSequence,
    pub features: FeatureSequence,
}

impl Session {
    /// Both streams restricted to frames `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Session {
        Session {
            entry: self.entry.clone(),
            motion: self.motion.slice(start, end),
            features: FeatureSequence {
                frames: self.features.frames.slice(ndarray::s![start..end, ..]).to_owned(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.motion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motion.is_empty()
    }

    /// Maximal runs whose every channel stays within `bound`.
    pub fn filtered_runs(&self, bound: f64) -> Vec<Session> {
        valid_runs(self.motion.frames.view(), bound)
            .into_iter()
            .map(|(a, b)| self.slice(a, b))
            .collect()
    }

    /// Time split: the first `train_frac` of frames and the rest.
    pub fn split(&self, train_frac: f64) -> Result<(Session, Session)> {
        if !(0.0 < train_frac && train_frac < 1.0) {
            return Err(Error::InvalidArgument(format!("train fraction must be in (0,1), got {train_frac}")));
        }
        let cut = (self.len() as f64 * train_frac).round() as usize;
        if cut == 0 || cut >= self.len() {
            return Err(Error::TooShort(format!("session {} has {} frames", self.entry.session_id, self.len())));
        }
        Ok((self.slice(0, cut), self.slice(cut, self.len())))
    }
}

/// Loads motion (resampled to 25 FPS) and features for one entry. Features
/// come from `features_path` when present, otherwise from the audio.
pub fn load_session(entry: &ManifestEntry, base: &Path, mel: &MelConfig) -> Result<Session> {
    let mut motion = load_motion_file(resolve(base, &entry.motion_path))?;
    if motion.fps != TARGET_FPS {
        motion = resample_to_25fps(&motion)?;
    }
    motion.speaker_id = entry.speaker_id.clone();
    motion.session_id = entry.session_id.clone();
    let raw = match &entry.features_path {
        Some(p) => load_features(resolve(base, p))?,
        None => {
            let clip = load_wav(resolve(base, &entry.audio_path))?;
            let cfg = if clip.sample_rate == 16_000 {
                mel.clone()
            } else {
                MelConfig {
                    n_mels: mel.n_mels,
                    fmin: mel.fmin,
                    fmax: mel.fmax.min(clip.sample_rate as f64 / 2.0),
                    ..MelConfig::for_rate(clip.sample_rate)?
                }
            };
            log_mel(&clip, &cfg)?
        }
    };
    let features = align_features(&raw, motion.len())?;
    Ok(Session {
        entry: entry.clone(),
        motion,
        features,
    })
}

pub fn load_corpus(manifest: impl AsRef<Path>, mel: &MelConfig) -> Result<Vec<Session>> {
    let manifest = manifest.as_ref();
    let base = manifest_base(manifest);
    load_manifest(manifest)?
        .iter()
        .map(|e| load_session(e, &base, mel))
        .collect()
}

/// Sorted distinct speaker ids and each session's index into them.
pub fn speaker_index(sessions: &[Session]) -> (Vec<String>, Vec<usize>) {
    let mut ids: Vec<String> = sessions.iter().map(|s| s.entry.speaker_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let idx = sessions
        .iter()
        .map(|s| ids.binary_search(&s.entry.speaker_id).expect("present"))
        .collect();
    (ids, idx)
}
