//! Gaze-head motion sequences: file I/O, resampling to 25 FPS, extreme-angle
//! filtering, normalization and training windows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::audio::FeatureSequence;
use crate::error::{Error, Result};

pub const MOTION_DIM: usize = 7;
pub const TARGET_FPS: u32 = 25;
pub const DEFAULT_ANGLE_BOUND: f64 = 40.0;

/// Column order of a motion frame.
pub const CHANNELS: [&str; MOTION_DIM] = [
    "head_pitch",
    "head_yaw",
    "head_roll",
    "l_eye_pitch",
    "l_eye_yaw",
    "r_eye_pitch",
    "r_eye_yaw",
];

pub const HEADER: &str = "frame,head_pitch,head_yaw,head_roll,l_eye_pitch,l_eye_yaw,r_eye_pitch,r_eye_yaw";

/// One frame of angles in degrees, in [`CHANNELS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionFrame {
    pub head_pitch: f64,
    pub head_yaw: f64,
    pub head_roll: f64,
    pub l_eye_pitch: f64,
    pub l_eye_yaw: f64,
    pub r_eye_pitch: f64,
    pub r_eye_yaw: f64,
}

impl MotionFrame {
    pub fn to_array(&self) -> [f64; MOTION_DIM] {
        [
            self.head_pitch,
            self.head_yaw,
            self.head_roll,
            self.l_eye_pitch,
            self.l_eye_yaw,
            self.r_eye_pitch,
            self.r_eye_yaw,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        MotionFrame {
            head_pitch: v[0],
            head_yaw: v[1],
            head_roll: v[2],
            l_eye_pitch: v[3],
            l_eye_yaw: v[4],
            r_eye_pitch: v[5],
            r_eye_yaw: v[6],
        }
    }
}

/// `T × 7` trajectory in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Array2<f64>,
    pub fps: u32,
    pub session_id: String,
    pub speaker_id: String,
    /// Index of the first frame within the source session (non-zero for runs
    /// produced by filtering or splitting).
    pub start_frame: usize,
}

impl MotionSequence {
    pub fn new(frames: Array2<f64>, fps: u32, speaker_id: &str, session_id: &str) -> Result<Self> {
        if frames.ncols() != MOTION_DIM {
            return Err(Error::Shape(format!("motion needs {MOTION_DIM} columns, got {}", frames.ncols())));
        }
        if frames.nrows() == 0 {
            return Err(Error::InvalidArgument("motion sequence must have at least one frame".into()));
        }
        if fps == 0 {
            return Err(Error::InvalidArgument("fps must be positive".into()));
        }
        if !frames.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite motion value".into()));
        }
        Ok(MotionSequence {
            frames,
            fps,
            session_id: session_id.to_string(),
            speaker_id: speaker_id.to_string(),
            start_frame: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn frame(&self, t: usize) -> MotionFrame {
        MotionFrame::from_slice(self.frames.row(t).as_slice().expect("contiguous row"))
    }

    /// Frames `range` as a new run, keeping provenance.
    pub fn slice(&self, start: usize, end: usize) -> MotionSequence {
        MotionSequence {
            frames: self.frames.slice(s![start..end, ..]).to_owned(),
            fps: self.fps,
            session_id: self.session_id.clone(),
            speaker_id: self.speaker_id.clone(),
            start_frame: self.start_frame + start,
        }
    }
}

type Meta = (Option<u32>, Option<String>, Option<String>, Option<usize>);

fn parse_meta(line: &str) -> Meta {
    let mut fps = None;
    let mut speaker = None;
    let mut session = None;
    let mut start = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = tok.split_once('=') {
            match k {
                "fps" => fps = v.parse().ok(),
                "speaker" => speaker = Some(v.to_string()),
                "session" => session = Some(v.to_string()),
                "start_frame" => start = v.parse().ok(),
                _ => {}
            }
        }
    }
    (fps, speaker, session, start)
}

pub fn parse_motion(text: &str) -> Result<MotionSequence> {
    let mut fps = None;
    let mut speaker = None;
    let mut session = None;
    let mut start = None;
    let mut header_seen = false;
    let mut values: Vec<f64> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let (f, sp, se, st) = parse_meta(line);
            fps = fps.or(f);
            speaker = speaker.or(sp);
            session = session.or(se);
            start = start.or(st);
            continue;
        }
        if !header_seen {
            if line != HEADER {
                let cols: Vec<&str> = line.split(',').collect();
                let missing: Vec<&str> = CHANNELS.iter().copied().filter(|c| !cols.contains(c)).collect();
                let msg = if missing.is_empty() {
                    format!("header must be exactly `{HEADER}`")
                } else {
                    format!("missing column(s) {}", missing.join(", "))
                };
                return Err(Error::Parse { line: line_no, msg });
            }
            if fps.is_none() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "fps field absent from metadata comment".into(),
                });
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != MOTION_DIM + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} fields, found {}", MOTION_DIM + 1, cols.len()),
            });
        }
        for (c, tok) in cols[1..].iter().enumerate() {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad number {tok:?} in column {}", CHANNELS[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite value in column {}", CHANNELS[c]),
                });
            }
            values.push(v);
        }
    }
    if !header_seen {
        let msg = if fps.is_none() { "fps field absent" } else { "missing header line" };
        return Err(Error::Parse { line: 1, msg: msg.into() });
    }
    let fps = fps.unwrap_or_default();
    let rows = values.len() / MOTION_DIM;
    let frames = Array2::from_shape_vec((rows, MOTION_DIM), values).expect("row-multiple");
    let mut seq = MotionSequence::new(
        frames,
        fps,
        speaker.as_deref().unwrap_or("unknown"),
        session.as_deref().unwrap_or("unknown"),
    )?;
    seq.start_frame = start.unwrap_or(0);
    Ok(seq)
}

pub fn load_motion_file(path: impl AsRef<Path>) -> Result<MotionSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_motion(&text)
}

/// Serializes with shortest round-trip float formatting, so load(save(x)) == x.
pub fn format_motion(seq: &MotionSequence, extra_comments: &[String]) -> String {
    let mut out = String::with_capacity(seq.len() * 96);
    let _ = write!(out, "# fps={} speaker={} session={}", seq.fps, seq.speaker_id, seq.session_id);
    if seq.start_frame > 0 {
        let _ = write!(out, " start_frame={}", seq.start_frame);
    }
    out.push('\n');
    for c in extra_comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str(HEADER);
    out.push('\n');
    for (t, row) in seq.frames.rows().into_iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in row {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn save_motion_file(seq: &MotionSequence, path: impl AsRef<Path>, extra_comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_motion(seq, extra_comments)).map_err(|e| Error::io(path, e))
}

/// Linear interpolation onto the 25 Hz grid spanning the input duration.
pub fn resample_to_25fps(seq: &MotionSequence) -> Result<MotionSequence> {
    if seq.fps == TARGET_FPS {
        return Ok(seq.clone());
    }
    if seq.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot resample a single frame from {} fps",
            seq.fps
        )));
    }
    let fps = seq.fps as u64;
    let target = TARGET_FPS as u64;
    let last = (seq.len() - 1) as u64;
    // grid point k sits at source position k·fps/25; keep k·fps <= last·25
    let n_out = (last * target / fps + 1) as usize;
    let mut out = Array2::zeros((n_out, MOTION_DIM));
    for k in 0..n_out as u64 {
        let num = k * fps;
        let i0 = (num / target) as usize;
        let frac = (num % target) as f64 / target as f64;
        if frac == 0.0 {
            out.row_mut(k as usize).assign(&seq.frames.row(i0));
        } else {
            let a = seq.frames.row(i0);
            let b = seq.frames.row(i0 + 1);
            let mut row = out.row_mut(k as usize);
            for c in 0..MOTION_DIM {
                row[c] = a[c] + frac * (b[c] - a[c]);
            }
        }
    }
    Ok(MotionSequence {
        frames: out,
        fps: TARGET_FPS,
        session_id: seq.session_id.clone(),
        speaker_id: seq.speaker_id.clone(),
        start_frame: seq.start_frame,
    })
}

/// Frame ranges `[start, end)` that survive the bound on every channel.
pub fn valid_runs(frames: ArrayView2<'_, f64>, bound: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, row) in frames.rows().into_iter().enumerate() {
        let ok = row.iter().all(|v| v.abs() <= bound);
        match (ok, start) {
            (true, None) => start = Some(t),
            (false, Some(s0)) => {
                runs.push((s0, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s0) = start {
        runs.push((s0, frames.nrows()));
    }
    runs
}

/// Drops frames with any |component| above `bound` and splits the sequence at
/// every drop into maximal contiguous runs.
pub fn filter_extreme_angles(seq: &MotionSequence, bound: f64) -> Result<Vec<MotionSequence>> {
    if bound <= 0.0 || !bound.is_finite() {
        return Err(Error::InvalidArgument(format!("angle bound must be > 0, got {bound}")));
    }
    Ok(valid_runs(seq.frames.view(), bound)
        .into_iter()
        .map(|(a, b)| seq.slice(a, b))
        .collect())
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: [f64; MOTION_DIM],
    pub std: [f64; MOTION_DIM],
}

impl NormalizationStats {
    pub fn identity() -> Self {
        NormalizationStats {
            mean: [0.0; MOTION_DIM],
            std: [1.0; MOTION_DIM],
        }
    }

    pub fn fit(corpus: &[MotionSequence]) -> Result<Self> {
        let total: usize = corpus.iter().map(MotionSequence::len).sum();
        if total < 2 {
            return Err(Error::Insufficient(format!("normalization needs >= 2 frames, got {total}")));
        }
        let n = total as f64;
        let mut mean = [0.0; MOTION_DIM];
        for seq in corpus {
            for row in seq.frames.rows() {
                for c in 0..MOTION_DIM {
                    mean[c] += row[c];
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; MOTION_DIM];
        for seq in corpus {
            for row in seq.frames.rows() {
                for c in 0..MOTION_DIM {
                    var[c] += (row[c] - mean[c]).powi(2);
                }
            }
        }
        let mut std = [0.0; MOTION_DIM];
        for c in 0..MOTION_DIM {
            std[c] = (var[c] / n).sqrt();
            if std[c] < 1e-8 {
                return Err(Error::DegenerateDimension { dim: c, std: std[c] });
            }
        }
        Ok(NormalizationStats { mean, std })
    }

    pub fn normalize(&self, frames: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = frames.to_owned();
        for mut row in out.rows_mut() {
            for c in 0..MOTION_DIM {
                row[c] = (row[c] - self.mean[c]) / self.std[c];
            }
        }
        out
    }

    pub fn denormalize(&self, frames: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = frames.to_owned();
        for mut row in out.rows_mut() {
            for c in 0..MOTION_DIM {
                row[c] = row[c] * self.std[c] + self.mean[c];
            }
        }
        out
    }

    pub fn normalize_seq(&self, seq: &MotionSequence) -> MotionSequence {
        MotionSequence {
            frames: self.normalize(seq.frames.view()),
            ..seq.clone()
        }
    }
}

/// Window lengths and stride for training windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub past: usize,
    pub future: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            past: 25,
            future: 10,
            stride: 10,
        }
    }
}

/// Motion history, the frames to predict, and the audio the predictor sees.
///
/// `past_motion` covers frames `[t, t+M)` and `future_motion` `[t+M, t+M+N)`.
/// The audio window is the `M` frames ending with the last predicted frame,
/// `[t+N, t+N+M)`, so the recurrent step that emits prediction `j` reads the
/// audio of the frame it predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub past_motion: Array2<f64>,
    pub future_motion: Array2<f64>,
    pub audio_window: Array2<f32>,
    /// Start frame of `past_motion` within its run.
    pub t_index: usize,
}

/// First frame of the audio window for a window starting at `t`.
pub fn audio_offset(t: usize, spec: &WindowSpec) -> usize {
    t + spec.future
}

/// Slides windows over one contiguous run. Returns an empty list when the run
/// is shorter than `M + N`.
pub fn make_windows(seq: &MotionSequence, feats: &FeatureSequence, spec: &WindowSpec) -> Result<Vec<WindowPair>> {
    if feats.len() != seq.len() {
        return Err(Error::Alignment {
            features: feats.len(),
            motion: seq.len(),
        });
    }
    if spec.past < 2 || spec.future < 1 || spec.stride < 1 {
        return Err(Error::InvalidArgument(format!("invalid window spec {spec:?}")));
    }
    let span = spec.past + spec.future;
    let mut out = Vec::new();
    let mut t = 0;
    while t + span <= seq.len() {
        let a = audio_offset(t, spec);
        out.push(WindowPair {
            past_motion: seq.frames.slice(s![t..t + spec.past, ..]).to_owned(),
            future_motion: seq.frames.slice(s![t + spec.past..t + span, ..]).to_owned(),
            audio_window: feats.frames.slice(s![a..a + spec.past, ..]).to_owned(),
            t_index: t,
        });
        t += spec.stride;
    }
    Ok(out)
}

/// Mean pose of a set of frames.
pub fn mean_pose(frames: ArrayView2<'_, f64>) -> [f64; MOTION_DIM] {
    let m = frames.mean_axis(Axis(0)).expect("non-empty");
    let mut out = [0.0; MOTION_DIM];
    out.copy_from_slice(m.as_slice().expect("contiguous"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(frames: Array2<f64>, fps: u32) -> MotionSequence {
        MotionSequence::new(frames, fps, "spk", "sess").unwrap()
    }

    fn feats(len: usize) -> FeatureSequence {
        FeatureSequence::new(Array2::zeros((len, 3))).unwrap()
    }

    #[test]
    fn zero_file_parses() {
        let text = format!("# fps=25 speaker=a session=b\n{HEADER}\n0,0,0,0,0,0,0,0\n1,0,0,0,0,0,0,0\n2,0,0,0,0,0,0,0\n");
        let s = parse_motion(&text).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.frames.iter().all(|v| *v == 0.0));
        assert_eq!((s.speaker_id.as_str(), s.session_id.as_str(), s.fps), ("a", "b", 25));
    }

    #[test]
    fn missing_column_is_parse_error() {
        let text = "# fps=25\nframe,head_pitch,head_yaw,head_roll,l_eye_pitch,l_eye_yaw,r_eye_pitch\n0,0,0,0,0,0,0\n";
        match parse_motion(text).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("r_eye_yaw"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_fps_and_nan_are_parse_errors() {
        let no_fps = format!("# speaker=a\n{HEADER}\n0,0,0,0,0,0,0,0\n");
        assert!(matches!(parse_motion(&no_fps), Err(Error::Parse { .. })));
        let nan = format!("# fps=25\n{HEADER}\n0,0,0,0,0,0,0,0\n1,0,NaN,0,0,0,0,0\n");
        assert!(matches!(parse_motion(&nan), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Array2::from_shape_fn((100, 7), |_| rng.random_range(-40.0..40.0));
        let s = seq(f, 25);
        let back = parse_motion(&format_motion(&s, &["note=x".into()])).unwrap();
        assert_eq!(back.frames, s.frames);
    }

    #[test]
    fn resample_50_alternating_takes_even_samples() {
        let f = Array2::from_shape_fn((20, 7), |(t, _)| if t % 2 == 0 { 0.0 } else { 10.0 });
        let r = resample_to_25fps(&seq(f, 50)).unwrap();
        assert_eq!(r.fps, 25);
        assert_eq!(r.len(), 10);
        assert!(r.frames.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn resample_100hz_ramp() {
        let f = Array2::from_shape_fn((100, 7), |(t, _)| t as f64);
        let r = resample_to_25fps(&seq(f, 100)).unwrap();
        assert_eq!(r.len(), 25);
        for k in 0..25 {
            assert_eq!(r.frames[[k, 3]], 4.0 * k as f64);
        }
    }

    #[test]
    fn resample_fractional_positions_interpolate() {
        // 30 fps: grid point 1 sits at source position 1.2
        let f = Array2::from_shape_fn((31, 7), |(t, _)| 3.0 * t as f64);
        let r = resample_to_25fps(&seq(f, 30)).unwrap();
        assert_eq!(r.len(), 26);
        assert!((r.frames[[1, 0]] - 3.6).abs() < 1e-12);
        assert!((r.frames[[25, 0]] - 90.0).abs() < 1e-12);
    }

    #[test]
    fn resample_identity_and_single_frame() {
        let f = Array2::from_shape_fn((7, 7), |(t, c)| (t * c) as f64);
        let s25 = seq(f, 25);
        assert_eq!(resample_to_25fps(&s25).unwrap(), s25);
        let one = seq(Array2::zeros((1, 7)), 30);
        assert!(resample_to_25fps(&one).is_err());
    }

    #[test]
    fn filter_cases() {
        let f = Array2::<f64>::zeros((10, 7));
        assert_eq!(filter_extreme_angles(&seq(f.clone(), 25), 40.0).unwrap().len(), 1);
        let mut g = f.clone();
        g[[5, 1]] = 41.0;
        let runs = filter_extreme_angles(&seq(g, 25), 40.0).unwrap();
        assert_eq!(runs.iter().map(|r| r.len()).collect::<Vec<_>>(), vec![5, 4]);
        assert_eq!(runs[1].start_frame, 6);
        let all = Array2::from_elem((10, 7), 50.0);
        assert!(filter_extreme_angles(&seq(all, 25), 40.0).unwrap().is_empty());
    }

    #[test]
    fn normalization_hand_case_and_degenerate() {
        let mut f = Array2::zeros((2, 7));
        f.row_mut(1).fill(2.0);
        let st = NormalizationStats::fit(&[seq(f, 25)]).unwrap();
        assert_eq!(st.mean, [1.0; 7]);
        assert_eq!(st.std, [1.0; 7]);
        let c = Array2::from_elem((5, 7), 3.0);
        assert!(matches!(
            NormalizationStats::fit(&[seq(c, 25)]),
            Err(Error::DegenerateDimension { .. })
        ));
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec { past: 25, future: 10, stride: 10 };
        let count = |t: usize| make_windows(&seq(Array2::zeros((t, 7)), 25), &feats(t), &spec).unwrap();
        assert_eq!(count(35).len(), 1);
        assert_eq!(count(34).len(), 0);
        let w = count(45);
        assert_eq!(w.iter().map(|w| w.t_index).collect::<Vec<_>>(), vec![0, 10]);
    }

    #[test]
    fn windows_carry_the_right_frames() {
        let f = Array2::from_shape_fn((40, 7), |(t, _)| t as f64);
        let a = FeatureSequence::new(Array2::from_shape_fn((40, 2), |(t, _)| t as f32)).unwrap();
        let spec = WindowSpec { past: 5, future: 3, stride: 4 };
        for w in make_windows(&seq(f, 25), &a, &spec).unwrap() {
            let t = w.t_index as f64;
            assert_eq!(w.past_motion[[0, 0]], t);
            assert_eq!(w.future_motion[[0, 0]], t + 5.0);
            assert_eq!(w.audio_window[[4, 0]] as f64, t + 7.0);
        }
    }

    #[test]
    fn windows_need_aligned_features() {
        let spec = WindowSpec::default();
        assert!(make_windows(&seq(Array2::zeros((40, 7)), 25), &feats(39), &spec).is_err());
    }
}
