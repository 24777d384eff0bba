//! Evaluation quantities: I-DT fixation labels, fixation ratio, gaze-head
//! compensation, similarity to ground truth, angular errors, beat alignment,
//! style cosine error and cluster quality.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::audio::FeatureSequence;
use crate::error::{Error, Result};
use crate::motion::{MotionSequence, MOTION_DIM, TARGET_FPS};
use crate::style::{cosine_sim, StyleEmbedding};

/// Column indices of the binocular gaze channels: left pitch, left yaw,
/// right pitch, right yaw.
pub const GAZE_COLUMNS: [usize; 4] = [3, 4, 5, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GazeLabel {
    Fixation,
    Saccade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdtConfig {
    pub disp_max: f64,
    pub min_dur: usize,
}

impl Default for IdtConfig {
    fn default() -> Self {
        IdtConfig {
            disp_max: 3.5,
            min_dur: 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Extent {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Extent {
    fn empty() -> Self {
        Extent {
            min_x: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            min_y: f64::INFINITY,
            max_y: f64::NEG_INFINITY,
        }
    }

    /// Adds frame `t`: x takes both yaw samples, y both pitch samples.
    fn add(&mut self, gaze: &ArrayView2<'_, f64>, t: usize) {
        for yaw in [gaze[[t, 1]], gaze[[t, 3]]] {
            self.min_x = self.min_x.min(yaw);
            self.max_x = self.max_x.max(yaw);
        }
        for pitch in [gaze[[t, 0]], gaze[[t, 2]]] {
            self.min_y = self.min_y.min(pitch);
            self.max_y = self.max_y.max(pitch);
        }
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// Dispersion-threshold fixation labelling over `T × 4` gaze
/// (`l_pitch, l_yaw, r_pitch, r_yaw`).
pub fn idt_labels(gaze: ArrayView2<'_, f64>, cfg: &IdtConfig) -> Result<Vec<GazeLabel>> {
    let t_len = gaze.nrows();
    if gaze.ncols() != 4 {
        return Err(Error::Shape(format!("I-DT needs 4 gaze columns, got {}", gaze.ncols())));
    }
    if cfg.min_dur == 0 || t_len < cfg.min_dur {
        return Err(Error::TooShort(format!(
            "I-DT needs at least {} frames, got {t_len}",
            cfg.min_dur
        )));
    }
    let mut labels = vec![GazeLabel::Saccade; t_len];
    let mut i = 0;
    while i + cfg.min_dur <= t_len {
        let mut ext = Extent::empty();
        for t in i..i + cfg.min_dur {
            ext.add(&gaze, t);
        }
        if ext.dispersion() > cfg.disp_max {
            i += 1;
            continue;
        }
        let mut end = i + cfg.min_dur;
        while end < t_len {
            let mut grown = ext;
            grown.add(&gaze, end);
            if grown.dispersion() > cfg.disp_max {
                break;
            }
            ext = grown;
            end += 1;
        }
        labels[i..end].iter_mut().for_each(|l| *l = GazeLabel::Fixation);
        i = end;
    }
    Ok(labels)
}

/// Gaze columns of a motion matrix in I-DT order.
pub fn gaze_columns(frames: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((frames.nrows(), 4), |(t, c)| frames[[t, GAZE_COLUMNS[c]]])
}

pub fn fixation_ratio(labels: &[GazeLabel]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("fixation ratio of an empty label series".into()));
    }
    let n = labels.iter().filter(|l| **l == GazeLabel::Fixation).count();
    Ok(n as f64 / labels.len() as f64)
}

/// Per-frame head and mean-eye velocities (pitch, yaw) in °/s.
pub fn head_eye_velocities(frames: ArrayView2<'_, f64>, fps: f64) -> (Array2<f64>, Array2<f64>) {
    let n = frames.nrows().saturating_sub(1);
    let mut head = Array2::zeros((n, 2));
    let mut eye = Array2::zeros((n, 2));
    for t in 0..n {
        let (a, b) = (frames.row(t), frames.row(t + 1));
        head[[t, 0]] = fps * (b[0] - a[0]);
        head[[t, 1]] = fps * (b[1] - a[1]);
        eye[[t, 0]] = fps * ((b[3] + b[5]) - (a[3] + a[5])) / 2.0;
        eye[[t, 1]] = fps * ((b[4] + b[6]) - (a[4] + a[6])) / 2.0;
    }
    (head, eye)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationConfig {
    pub low: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    /// Divide the head-speed branch by `band_hi` so both branches are unitless.
    pub normalize_head: bool,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        CompensationConfig {
            low: 20.0,
            band_lo: 25.0,
            band_hi: 90.0,
            normalize_head: false,
        }
    }
}

fn compensation_frame(h: [f64; 2], e: [f64; 2], cfg: &CompensationConfig) -> f64 {
    let g = (h[0] + e[0]).hypot(h[1] + e[1]);
    let hn = h[0].hypot(h[1]);
    if g < cfg.low {
        let s = -hn;
        if cfg.normalize_head {
            s / cfg.band_hi
        } else {
            s
        }
    } else if g >= cfg.band_lo && g <= cfg.band_hi {
        if hn == 0.0 || e[0].hypot(e[1]) == 0.0 {
            return 0.0;
        }
        let cross = h[0] * e[1] - h[1] * e[0];
        let dot = h[0] * e[0] + h[1] * e[1];
        -cross.atan2(dot).cos()
    } else {
        0.0
    }
}

/// Mean per-frame compensation score over `T × 2` velocity series.
pub fn compensation_score(head_vel: ArrayView2<'_, f64>, eye_vel: ArrayView2<'_, f64>, cfg: &CompensationConfig) -> Result<f64> {
    if head_vel.dim() != eye_vel.dim() || head_vel.ncols() != 2 {
        return Err(Error::Shape(format!(
            "velocity series {:?} vs {:?}, both must be T x 2",
            head_vel.dim(),
            eye_vel.dim()
        )));
    }
    if head_vel.nrows() == 0 {
        return Err(Error::InvalidArgument("compensation score of an empty series".into()));
    }
    let sum: f64 = (0..head_vel.nrows())
        .map(|t| {
            compensation_frame(
                [head_vel[[t, 0]], head_vel[[t, 1]]],
                [eye_vel[[t, 0]], eye_vel[[t, 1]]],
                cfg,
            )
        })
        .sum();
    Ok(sum / head_vel.nrows() as f64)
}

/// `1 − (|Δfix| + |Δcomp|)`, unclamped.
pub fn sim_with_gt(fix_gt: f64, fix_pred: f64, comp_gt: f64, comp_pred: f64) -> f64 {
    1.0 - ((fix_gt - fix_pred).abs() + (comp_gt - comp_pred).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMask {
    All,
    Gaze,
    Head,
}

impl ChannelMask {
    pub fn columns(self) -> &'static [usize] {
        match self {
            ChannelMask::All => &[0, 1, 2, 3, 4, 5, 6],
            ChannelMask::Gaze => &GAZE_COLUMNS,
            ChannelMask::Head => &[0, 1, 2],
        }
    }
}

fn check_pair(pred: &ArrayView2<'_, f64>, gt: &ArrayView2<'_, f64>, min_len: usize) -> Result<()> {
    if pred.dim() != gt.dim() || pred.ncols() != MOTION_DIM {
        return Err(Error::Shape(format!("pred {:?} vs gt {:?}", pred.dim(), gt.dim())));
    }
    if pred.nrows() < min_len {
        return Err(Error::TooShort(format!("need at least {min_len} frames, got {}", pred.nrows())));
    }
    Ok(())
}

/// Mean absolute angular error in degrees.
pub fn mae(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>, mask: ChannelMask) -> Result<f64> {
    check_pair(&pred, &gt, 1)?;
    let cols = mask.columns();
    let mut sum = 0.0;
    for t in 0..pred.nrows() {
        for &c in cols {
            sum += (pred[[t, c]] - gt[[t, c]]).abs();
        }
    }
    Ok(sum / (pred.nrows() * cols.len()) as f64)
}

/// Mean absolute error of per-frame differences, in degrees per frame.
pub fn vel_error(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>, mask: ChannelMask) -> Result<f64> {
    check_pair(&pred, &gt, 2)?;
    let cols = mask.columns();
    let mut sum = 0.0;
    for t in 1..pred.nrows() {
        for &c in cols {
            let dp = pred[[t, c]] - pred[[t - 1, c]];
            let dg = gt[[t, c]] - gt[[t - 1, c]];
            sum += (dp - dg).abs();
        }
    }
    Ok(sum / ((pred.nrows() - 1) * cols.len()) as f64)
}

/// Total squared frame-difference energy over the selected channels.
pub fn motion_energy(frames: ArrayView2<'_, f64>, mask: ChannelMask) -> f64 {
    let mut e = 0.0;
    for t in 1..frames.nrows() {
        for &c in mask.columns() {
            e += (frames[[t, c]] - frames[[t - 1, c]]).powi(2);
        }
    }
    e
}

pub fn mee(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>, mask: ChannelMask) -> Result<f64> {
    check_pair(&pred, &gt, 2)?;
    Ok((motion_energy(pred, mask) - motion_energy(gt, mask)).abs())
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Frames where the 7-channel speed has a local minimum below its median.
pub fn motion_beats(frames: ArrayView2<'_, f64>) -> Vec<usize> {
    if frames.nrows() < 3 {
        return Vec::new();
    }
    // speed[k] is the motion between frames k and k+1, attributed to frame k+1
    let speed: Vec<f64> = (1..frames.nrows())
        .map(|t| {
            (0..frames.ncols())
                .map(|c| (frames[[t, c]] - frames[[t - 1, c]]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let med = quantile(&speed, 0.5);
    (1..speed.len() - 1)
        .filter(|&k| speed[k] < speed[k - 1] && speed[k] <= speed[k + 1] && speed[k] < med)
        .map(|k| k + 1)
        .collect()
}

/// Frames where summed feature energy has a local maximum above its 75th percentile.
pub fn audio_beats(feats: ArrayView2<'_, f32>) -> Vec<usize> {
    if feats.nrows() < 3 {
        return Vec::new();
    }
    let e: Vec<f64> = feats.rows().into_iter().map(|r| r.iter().map(|v| *v as f64).sum()).collect();
    let q = quantile(&e, 0.75);
    (1..e.len() - 1)
        .filter(|&t| e[t] > e[t - 1] && e[t] >= e[t + 1] && e[t] > q)
        .collect()
}

/// Mean Gaussian-kernel distance from each motion beat to its nearest audio beat.
pub fn beat_alignment_from_beats(motion: &[usize], audio: &[usize], sigma: f64) -> f64 {
    if motion.is_empty() || audio.is_empty() {
        return 0.0;
    }
    let sum: f64 = motion
        .iter()
        .map(|&b| {
            let d = audio.iter().map(|&a| (b as f64 - a as f64).abs()).fold(f64::INFINITY, f64::min);
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .sum();
    sum / motion.len() as f64
}

/// BAS between a motion sequence and the features of the same frames.
pub fn beat_alignment(motion: ArrayView2<'_, f64>, feats: ArrayView2<'_, f32>, sigma: f64) -> Result<f64> {
    if motion.nrows() != feats.nrows() {
        return Err(Error::Alignment {
            features: feats.nrows(),
            motion: motion.nrows(),
        });
    }
    Ok(beat_alignment_from_beats(&motion_beats(motion), &audio_beats(feats), sigma))
}

/// Mean `1 − cos` over aligned embedding pairs.
pub fn style_cosine_error_from_embeddings(gt: &[StyleEmbedding], pred: &[StyleEmbedding]) -> Result<f64> {
    if gt.len() != pred.len() || gt.is_empty() {
        return Err(Error::Shape(format!("{} gt vs {} pred embeddings", gt.len(), pred.len())));
    }
    let mut sum = 0.0;
    for (a, b) in gt.iter().zip(pred) {
        sum += 1.0 - cosine_sim(a, b)?;
    }
    Ok(sum / gt.len() as f64)
}

/// Anything that maps `M × 7` windows in degrees to style vectors.
pub trait WindowEmbedder {
    fn window(&self) -> usize;
    fn embed(&self, windows: &[ArrayView2<'_, f64>]) -> Result<Vec<StyleEmbedding>>;
}

/// Non-overlapping `M`-frame windows.
pub fn tile_windows(frames: ArrayView2<'_, f64>, m: usize) -> Vec<ArrayView2<'_, f64>> {
    (0..frames.nrows() / m)
        .map(|k| frames.slice_move(s![k * m..(k + 1) * m, ..]))
        .collect()
}

pub fn style_cosine_error(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>, encoder: &dyn WindowEmbedder) -> Result<f64> {
    let m = encoder.window();
    check_pair(&pred, &gt, m)?;
    let eg = encoder.embed(&tile_windows(gt, m))?;
    let ep = encoder.embed(&tile_windows(pred, m))?;
    style_cosine_error_from_embeddings(&eg, &ep)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient with Euclidean distance.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Shape(format!("{} points vs {} labels", points.len(), labels.len())));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("silhouette needs at least 2 labels".into()));
    }
    for c in &classes {
        if labels.iter().filter(|l| *l == c).count() < 2 {
            return Err(Error::InvalidArgument(format!("label {c} has a singleton cluster")));
        }
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = vec![0.0; classes.len()];
        let mut counts = vec![0usize; classes.len()];
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let k = classes.binary_search(&labels[j]).expect("known label");
            sums[k] += euclid(p, q);
            counts[k] += 1;
        }
        let own = classes.binary_search(&labels[i]).expect("known label");
        let a = sums[own] / counts[own] as f64;
        let b = (0..classes.len())
            .filter(|&k| k != own)
            .map(|k| sums[k] / counts[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        total += if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    Ok(total / points.len() as f64)
}

/// Fraction of `queries` whose nearest class centroid (built from
/// `reference`) carries the query's own label.
pub fn nearest_centroid_accuracy(
    reference: &[Vec<f64>],
    ref_labels: &[usize],
    queries: &[Vec<f64>],
    query_labels: &[usize],
) -> Result<f64> {
    if reference.is_empty() || queries.is_empty() || queries.len() != query_labels.len() {
        return Err(Error::InvalidArgument("nearest-centroid accuracy needs labelled points".into()));
    }
    let mut classes: Vec<usize> = ref_labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let dim = reference[0].len();
    let centroids: Vec<Vec<f64>> = classes
        .iter()
        .map(|c| {
            let members: Vec<&Vec<f64>> = reference.iter().zip(ref_labels).filter(|(_, l)| *l == c).map(|(p, _)| p).collect();
            (0..dim)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect()
        })
        .collect();
    let hits = queries
        .iter()
        .zip(query_labels)
        .filter(|(q, l)| {
            let best = centroids
                .iter()
                .enumerate()
                .min_by(|a, b| euclid(q, a.1).total_cmp(&euclid(q, b.1)))
                .map(|(k, _)| classes[k])
                .expect("non-empty");
            best == **l
        })
        .count();
    Ok(hits as f64 / queries.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub idt: IdtConfig,
    pub compensation: CompensationConfig,
    /// Beat-alignment kernel width in frames.
    pub bas_sigma: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            idt: IdtConfig::default(),
            compensation: CompensationConfig::default(),
            bas_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelErrors {
    pub mae: f64,
    pub vel: f64,
    pub mee: f64,
}

/// Gaze-pattern statistics of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePattern {
    pub fixation: f64,
    #[serde(rename = "compScore")]
    pub comp_score: f64,
}

pub fn gaze_pattern(frames: ArrayView2<'_, f64>, cfg: &MetricConfig) -> Result<GazePattern> {
    let labels = idt_labels(gaze_columns(frames).view(), &cfg.idt)?;
    let (h, e) = head_eye_velocities(frames, TARGET_FPS as f64);
    Ok(GazePattern {
        fixation: fixation_ratio(&labels)?,
        comp_score: compensation_score(h.view(), e.view(), &cfg.compensation)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    pub vel: f64,
    pub mee: f64,
    pub ce: Option<f64>,
    pub bas: f64,
    pub saccades: f64,
    pub fixation: f64,
    #[serde(rename = "compScore")]
    pub comp_score: f64,
    #[serde(rename = "simScore")]
    pub sim_score: f64,
    pub all: ChannelErrors,
    pub gaze: ChannelErrors,
    pub head: ChannelErrors,
    /// Ground-truth gaze pattern the similarity was measured against.
    pub reference: GazePattern,
}

fn channel_errors(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>, mask: ChannelMask) -> Result<ChannelErrors> {
    Ok(ChannelErrors {
        mae: mae(pred, gt, mask)?,
        vel: vel_error(pred, gt, mask)?,
        mee: mee(pred, gt, mask)?,
    })
}

/// Scores `pred` against `gt` (same frames, degrees). `feats` are the audio
/// features of those frames.
pub fn evaluate_sequence(
    pred: &MotionSequence,
    gt: &MotionSequence,
    feats: &FeatureSequence,
    encoder: Option<&dyn WindowEmbedder>,
    cfg: &MetricConfig,
) -> Result<EvalReport> {
    let (p, g) = (pred.frames.view(), gt.frames.view());
    check_pair(&p, &g, cfg.idt.min_dur.max(3))?;
    let all = channel_errors(p, g, ChannelMask::All)?;
    let gaze = channel_errors(p, g, ChannelMask::Gaze)?;
    let head = channel_errors(p, g, ChannelMask::Head)?;
    let ce = match encoder {
        Some(enc) if p.nrows() >= enc.window() => Some(style_cosine_error(p, g, enc)?),
        _ => None,
    };
    let bas = beat_alignment(p, feats.frames.view(), cfg.bas_sigma)?;
    let gp = gaze_pattern(p, cfg)?;
    let gg = gaze_pattern(g, cfg)?;
    Ok(EvalReport {
        mae: all.mae,
        vel: all.vel,
        mee: all.mee,
        ce,
        bas,
        saccades: 1.0 - gp.fixation,
        fixation: gp.fixation,
        comp_score: gp.comp_score,
        sim_score: sim_with_gt(gg.fixation, gp.fixation, gg.comp_score, gp.comp_score),
        all,
        gaze,
        head,
        reference: gg,
    })
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

fn mean_channels(items: &[&ChannelErrors]) -> ChannelErrors {
    ChannelErrors {
        mae: mean_of(items.iter().map(|c| c.mae)),
        vel: mean_of(items.iter().map(|c| c.vel)),
        mee: mean_of(items.iter().map(|c| c.mee)),
    }
}

/// Unweighted mean of per-sequence reports. The similarity is recomputed
/// from the mean predicted and mean reference patterns.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    }
    let ce = if reports.iter().all(|r| r.ce.is_some()) {
        Some(mean_of(reports.iter().map(|r| r.ce.unwrap_or_default())))
    } else {
        None
    };
    let all = mean_channels(&reports.iter().map(|r| &r.all).collect::<Vec<_>>());
    let fixation = mean_of(reports.iter().map(|r| r.fixation));
    let comp_score = mean_of(reports.iter().map(|r| r.comp_score));
    let reference = GazePattern {
        fixation: mean_of(reports.iter().map(|r| r.reference.fixation)),
        comp_score: mean_of(reports.iter().map(|r| r.reference.comp_score)),
    };
    Ok(EvalReport {
        mae: all.mae,
        vel: all.vel,
        mee: all.mee,
        ce,
        bas: mean_of(reports.iter().map(|r| r.bas)),
        saccades: mean_of(reports.iter().map(|r| r.saccades)),
        fixation,
        comp_score,
        sim_score: sim_with_gt(reference.fixation, fixation, reference.comp_score, comp_score),
        all,
        gaze: mean_channels(&reports.iter().map(|r| &r.gaze).collect::<Vec<_>>()),
        head: mean_channels(&reports.iter().map(|r| &r.head).collect::<Vec<_>>()),
        reference,
    })
}

/// Column-aligned text table of named reports.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let mut out = format!(
        "{:<20} {:>8} {:>8} {:>10} {:>7} {:>7} {:>9} {:>9} {:>10} {:>9}\n",
        "name", "mae", "vel", "mee", "ce", "bas", "saccades", "fixation", "compScore", "simScore"
    );
    for (name, r) in rows {
        let ce = r.ce.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<20} {:>8.3} {:>8.3} {:>10.3} {:>7} {:>7.3} {:>8.2}% {:>8.2}% {:>10.4} {:>9.4}\n",
            name,
            r.mae,
            r.vel,
            r.mee,
            ce,
            r.bas,
            100.0 * r.saccades,
            100.0 * r.fixation,
            r.comp_score,
            r.sim_score
        ));
    }
    out
}
