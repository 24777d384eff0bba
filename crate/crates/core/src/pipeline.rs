//! End-to-end experiment plumbing shared by the command-line tool and the
//! acceptance suite: corpus preparation, two-stage training, rollouts on
//! held-out segments, evaluation, embedding export and style transfer.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::audio::{FeatureSequence, MelConfig};
use crate::corpus::{speaker_index, Session};
use crate::error::{Error, Result};
use crate::generator::{GazeHeadModel, GenerationConfig, StyleMode};
use crate::metrics::{
    aggregate, evaluate_sequence, gaze_pattern, nearest_centroid_accuracy, silhouette, tile_windows, EvalReport,
    MetricConfig, WindowEmbedder,
};
use crate::motion::{MotionSequence, NormalizationStats, DEFAULT_ANGLE_BOUND};
use crate::nn::ParameterStore;
use crate::style::{cosine_sim, StyleEmbedding, StyleEncoder};
use crate::trainer::{encoder_from_checkpoint, Checkpoint, pretrain_style, train_generator, TrainConfig, TrainOutcome, WindowSet};

/// Held-out split and filtering settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Leading fraction of every session used for training.
    pub train_frac: f64,
    pub angle_bound: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frac: 0.75,
            angle_bound: DEFAULT_ANGLE_BOUND,
        }
    }
}

/// Filtered training runs, untouched test segments and the statistics fitted
/// on the training runs.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub train: Vec<Session>,
    pub test: Vec<Session>,
    pub stats: NormalizationStats,
}

pub fn prepare(sessions: &[Session], split: &SplitConfig) -> Result<PreparedCorpus> {
    if sessions.is_empty() {
        return Err(Error::Insufficient("empty corpus".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in sessions {
        let (a, b) = s.split(split.train_frac)?;
        train.extend(a.filtered_runs(split.angle_bound));
        test.push(b);
    }
    let motions: Vec<MotionSequence> = train.iter().map(|s| s.motion.clone()).collect();
    let stats = NormalizationStats::fit(&motions)?;
    Ok(PreparedCorpus { train, test, stats })
}

impl PreparedCorpus {
    pub fn normalized_train_motion(&self) -> Vec<MotionSequence> {
        self.train.iter().map(|s| self.stats.normalize_seq(&s.motion)).collect()
    }

    pub fn normalized_train_pairs(&self) -> Vec<(MotionSequence, FeatureSequence)> {
        self.train
            .iter()
            .map(|s| (self.stats.normalize_seq(&s.motion), s.features.clone()))
            .collect()
    }
}

pub fn train_style_stage(
    corpus: &PreparedCorpus,
    enc_cfg: crate::style::StyleEncoderConfig,
    cfg: TrainConfig,
    resume: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    pretrain_style(&corpus.normalized_train_motion(), enc_cfg, cfg, corpus.stats, resume)
}

pub fn train_generator_stage(
    corpus: &PreparedCorpus,
    gen_cfg: GenerationConfig,
    cfg: TrainConfig,
    style: Option<&Checkpoint>,
    resume: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    let encoder = match (gen_cfg.style_dim, style) {
        (0, _) | (_, None) => None,
        (_, Some(ck)) => Some(encoder_from_checkpoint(ck)?),
    };
    let data = WindowSet::build(
        &corpus.normalized_train_pairs(),
        &gen_cfg,
        encoder.as_ref().map(|(e, p)| (e, p)),
    )?;
    train_generator(&data, gen_cfg, cfg, corpus.stats, style, resume)
}

/// Style encoder that accepts windows in degrees.
#[derive(Debug, Clone)]
pub struct FrozenEncoder {
    pub encoder: StyleEncoder,
    pub params: ParameterStore<f32>,
    pub stats: NormalizationStats,
}

impl FrozenEncoder {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (encoder, params) = encoder_from_checkpoint(ck)?;
        Ok(FrozenEncoder {
            encoder,
            params,
            stats: ck.meta.stats,
        })
    }

    /// Embeddings of the non-overlapping windows of a sequence in degrees.
    pub fn embed_sequence(&self, frames: ArrayView2<'_, f64>) -> Result<Vec<StyleEmbedding>> {
        self.embed(&tile_windows(frames, self.window()))
    }

    /// Mean embedding of a sequence in degrees.
    pub fn reference(&self, frames: ArrayView2<'_, f64>) -> Result<StyleEmbedding> {
        StyleEmbedding::mean(&self.embed_sequence(frames)?)
    }
}

impl WindowEmbedder for FrozenEncoder {
    fn window(&self) -> usize {
        self.encoder.cfg.window
    }

    fn embed(&self, windows: &[ArrayView2<'_, f64>]) -> Result<Vec<StyleEmbedding>> {
        let norm: Vec<_> = windows.iter().map(|w| self.stats.normalize(*w)).collect();
        let views: Vec<_> = norm.iter().map(|w| w.view()).collect();
        self.encoder.encode_many(&self.params, &views)
    }
}

/// Maps `f` over `items` on up to `threads` workers; output order matches input.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// A generated sequence with the ground truth and features of the same frames.
#[derive(Debug, Clone)]
pub struct Generated {
    pub session_id: String,
    pub speaker_id: String,
    pub pred: MotionSequence,
    pub gt: MotionSequence,
    pub features: FeatureSequence,
}

/// Where the first history window of a rollout comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedMode {
    /// The first `M` ground-truth frames of the segment.
    #[default]
    Gt,
    /// The training mean pose repeated `M` times.
    MeanPose,
}

/// Rolls the model over a held-out segment seeded with its first `M` frames.
pub fn generate_for(model: &GazeHeadModel<f32>, test: &Session, mode: &StyleMode) -> Result<Generated> {
    generate_seeded(model, test, mode, SeedMode::Gt)
}

pub fn generate_seeded(model: &GazeHeadModel<f32>, test: &Session, mode: &StyleMode, seed_mode: SeedMode) -> Result<Generated> {
    let m = model.cfg().past;
    if test.len() < m + model.cfg().future {
        return Err(Error::TooShort(format!("test segment {} is shorter than M+N", test.entry.session_id)));
    }
    let seed = match seed_mode {
        SeedMode::Gt => model.stats.normalize(test.motion.frames.slice(ndarray::s![..m, ..])),
        SeedMode::MeanPose => ndarray::Array2::zeros((m, crate::motion::MOTION_DIM)),
    };
    let mut pred = model.rollout(seed.view(), &test.features, mode)?;
    let end = m + pred.len();
    pred.session_id = test.entry.session_id.clone();
    pred.speaker_id = test.entry.speaker_id.clone();
    pred.start_frame = test.motion.start_frame + m;
    let span = test.slice(m, end);
    Ok(Generated {
        session_id: test.entry.session_id.clone(),
        speaker_id: test.entry.speaker_id.clone(),
        pred,
        gt: span.motion,
        features: span.features,
    })
}

pub fn generate_all(model: &GazeHeadModel<f32>, tests: &[Session], threads: usize) -> Result<Vec<Generated>> {
    generate_all_with(model, tests, &model.default_style_mode(), SeedMode::Gt, threads)
}

pub fn generate_all_with(
    model: &GazeHeadModel<f32>,
    tests: &[Session],
    mode: &StyleMode,
    seed_mode: SeedMode,
    threads: usize,
) -> Result<Vec<Generated>> {
    par_map(tests, threads, |t| generate_seeded(model, t, mode, seed_mode))
        .into_iter()
        .collect()
}

/// Per-sequence reports in input order and their unweighted mean.
pub fn evaluate_all(
    items: &[Generated],
    encoder: Option<&FrozenEncoder>,
    cfg: &MetricConfig,
    threads: usize,
) -> Result<(Vec<(String, EvalReport)>, EvalReport)> {
    let reports = par_map(items, threads, |g| {
        evaluate_sequence(
            &g.pred,
            &g.gt,
            &g.features,
            encoder.map(|e| e as &dyn WindowEmbedder),
            cfg,
        )
        .map(|r| (g.session_id.clone(), r))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let agg = aggregate(&reports.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?;
    Ok((reports, agg))
}

/// Mean ground-truth fixation ratio and compensation score over the same spans.
pub fn gt_pattern(items: &[Generated], cfg: &MetricConfig) -> Result<(f64, f64)> {
    let mut fix = 0.0;
    let mut comp = 0.0;
    for g in items {
        let p = gaze_pattern(g.gt.frames.view(), cfg)?;
        fix += p.fixation;
        comp += p.comp_score;
    }
    Ok((fix / items.len() as f64, comp / items.len() as f64))
}

/// One exported window embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub session_id: String,
    pub speaker_id: String,
    pub source: String,
    pub start_frame: usize,
    pub embedding: Vec<f64>,
}

pub fn embed_sequence_windows(enc: &FrozenEncoder, seq: &MotionSequence, source: &str) -> Result<Vec<EmbeddingRecord>> {
    let m = enc.window();
    Ok(enc
        .embed_sequence(seq.frames.view())?
        .into_iter()
        .enumerate()
        .map(|(k, e)| EmbeddingRecord {
            session_id: seq.session_id.clone(),
            speaker_id: seq.speaker_id.clone(),
            source: source.to_string(),
            start_frame: seq.start_frame + k * m,
            embedding: e.0,
        })
        .collect())
}

/// Cluster quality of embedding records over speaker labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub silhouette: f64,
    pub centroid_accuracy: f64,
    pub chance: f64,
}

fn labels_of(records: &[EmbeddingRecord], ids: &[String]) -> Vec<usize> {
    records
        .iter()
        .map(|r| ids.iter().position(|s| *s == r.speaker_id).unwrap_or(usize::MAX))
        .collect()
}

/// Silhouette of `gt` over speakers and nearest-centroid accuracy of `pred`
/// against centroids built from `gt`.
pub fn cluster_report(gt: &[EmbeddingRecord], pred: &[EmbeddingRecord]) -> Result<ClusterReport> {
    let mut ids: Vec<String> = gt.iter().map(|r| r.speaker_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let gl = labels_of(gt, &ids);
    let pl = labels_of(pred, &ids);
    let gp: Vec<Vec<f64>> = gt.iter().map(|r| r.embedding.clone()).collect();
    let pp: Vec<Vec<f64>> = pred.iter().map(|r| r.embedding.clone()).collect();
    Ok(ClusterReport {
        silhouette: silhouette(&gp, &gl)?,
        centroid_accuracy: nearest_centroid_accuracy(&gp, &gl, &pp, &pl)?,
        chance: 1.0 / ids.len() as f64,
    })
}

/// Outcome of swapping two references over the same audio and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub reference_a: String,
    pub reference_b: String,
    pub reference_cosine: f64,
    pub windows: usize,
    pub own_closer: usize,
    pub fraction: f64,
}

/// Picks the pair of test segments from different speakers whose mean
/// embeddings have the lowest cosine similarity.
pub fn pick_references(enc: &FrozenEncoder, tests: &[Session]) -> Result<(usize, usize, f64)> {
    let refs: Vec<StyleEmbedding> = tests
        .iter()
        .map(|t| enc.reference(t.motion.frames.view()))
        .collect::<Result<_>>()?;
    let (_, idx) = speaker_index(tests);
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..tests.len() {
        for j in i + 1..tests.len() {
            if idx[i] == idx[j] {
                continue;
            }
            let c = cosine_sim(&refs[i], &refs[j])?;
            if best.is_none_or(|b| c < b.2) {
                best = Some((i, j, c));
            }
        }
    }
    best.ok_or_else(|| Error::Insufficient("style transfer needs test segments from two speakers".into()))
}

/// Rolls every test segment with reference A and with reference B and
/// counts output windows closer (cosine) to their own reference.
pub fn style_transfer_check(
    model: &GazeHeadModel<f32>,
    enc: &FrozenEncoder,
    tests: &[Session],
    threads: usize,
) -> Result<TransferReport> {
    let (ia, ib, cos_ab) = pick_references(enc, tests)?;
    let ref_a = enc.reference(tests[ia].motion.frames.view())?;
    let ref_b = enc.reference(tests[ib].motion.frames.view())?;
    let style_a = model.reference_style(&tests[ia].motion)?;
    let style_b = model.reference_style(&tests[ib].motion)?;
    let counts = par_map(tests, threads, |t| -> Result<(usize, usize)> {
        let mut windows = 0;
        let mut hits = 0;
        for (style, own, other) in [(&style_a, &ref_a, &ref_b), (&style_b, &ref_b, &ref_a)] {
            let g = generate_for(model, t, &StyleMode::Fixed(style.clone()))?;
            for e in enc.embed_sequence(g.pred.frames.view())? {
                windows += 1;
                if cosine_sim(&e, own)? > cosine_sim(&e, other)? {
                    hits += 1;
                }
            }
        }
        Ok((windows, hits))
    });
    let mut windows = 0;
    let mut own_closer = 0;
    for c in counts {
        let (w, h) = c?;
        windows += w;
        own_closer += h;
    }
    Ok(TransferReport {
        reference_a: tests[ia].entry.session_id.clone(),
        reference_b: tests[ib].entry.session_id.clone(),
        reference_cosine: cos_ab,
        windows,
        own_closer,
        fraction: own_closer as f64 / windows.max(1) as f64,
    })
}

/// Everything needed to reproduce one ablation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub split: SplitConfig,
    pub mel: MelConfig,
    pub style: crate::style::StyleEncoderConfig,
    pub style_train: TrainConfig,
    pub generator: GenerationConfig,
    pub generator_train: TrainConfig,
    pub metrics: MetricConfig,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            split: SplitConfig::default(),
            mel: MelConfig::default(),
            style: Default::default(),
            style_train: TrainConfig::style_default(),
            generator: GenerationConfig::default(),
            generator_train: TrainConfig::generator_default(),
            metrics: MetricConfig::default(),
            threads: 1,
        }
    }
}

/// A named generator variant: style width and loss weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub style_dim: usize,
    pub lambda: f64,
}

impl Variant {
    pub fn new(name: &str, style_dim: usize, lambda: f64) -> Self {
        Variant {
            name: name.to_string(),
            style_dim,
            lambda,
        }
    }
}

/// Trained variant with its evaluation.
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: Variant,
    pub checkpoint: Checkpoint,
    pub generated: Vec<Generated>,
    pub per_sequence: Vec<(String, EvalReport)>,
    pub report: EvalReport,
}

impl VariantResult {
    pub fn eval_json(&self) -> Result<String> {
        let value = serde_json::json!({
            "aggregate": self.report,
            "sequences": self.per_sequence.iter().map(|(k, r)| serde_json::json!({"session_id": k, "report": r})).collect::<Vec<_>>(),
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

/// Trains and evaluates one generator variant against the shared evaluator.
pub fn run_variant(
    corpus: &PreparedCorpus,
    cfg: &ExperimentConfig,
    variant: &Variant,
    style: &Checkpoint,
    evaluator: &FrozenEncoder,
) -> Result<VariantResult> {
    let gen_cfg = GenerationConfig {
        style_dim: variant.style_dim,
        lambda: variant.lambda,
        ..cfg.generator
    };
    let style_ck = (variant.style_dim > 0).then_some(style);
    let out = train_generator_stage(corpus, gen_cfg, cfg.generator_train, style_ck, None)?;
    let model = crate::trainer::model_from_checkpoint(&out.checkpoint)?;
    let generated = generate_all(&model, &corpus.test, cfg.threads)?;
    let (per_sequence, report) = evaluate_all(&generated, Some(evaluator), &cfg.metrics, cfg.threads)?;
    Ok(VariantResult {
        variant: variant.clone(),
        checkpoint: out.checkpoint,
        generated,
        per_sequence,
        report,
    })
}
