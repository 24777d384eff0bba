//! Two-stage optimization: contrastive style pretraining, then generator
//! training against the frozen encoder. Also holds the optimizer, checkpoint
//! persistence and finite-difference gradient checks.

mod adam;
mod checkpoint;
mod gradcheck;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, GENERATOR_KIND, STYLE_KIND};
pub use gradcheck::{finite_difference_check, GradCheckModule, GradCheckReport, GroupError};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::FeatureSequence;
use crate::error::{Error, Result};
use crate::generator::{batch_loss, to_time_major, GazeHeadModel, GenerationConfig, Generator};
use crate::motion::{make_windows, MotionSequence, NormalizationStats};
use crate::nn::ParameterStore;
use crate::style::{nt_xent_loss, sample_pairs, PairSampling, StyleEncoder, StyleEncoderConfig};

/// Learning-rate schedule over the planned optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero.
    Cosine,
}

impl LrSchedule {
    pub fn lr_at(self, base: f64, step: u64, total: u64) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = step.min(total) as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per generator batch, or positive pairs per style batch.
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub clip_norm: f64,
    /// Style stage only: sampled batches per epoch.
    pub steps_per_epoch: usize,
    /// Style stage only: NT-Xent temperature.
    pub tau: f64,
    /// Style stage only: minimum frame gap between same-session pairs.
    pub gap_min: usize,
    #[serde(default)]
    pub schedule: LrSchedule,
}

impl TrainConfig {
    pub fn style_default() -> Self {
        TrainConfig {
            epochs: 8,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            clip_norm: 5.0,
            steps_per_epoch: 50,
            tau: 0.1,
            gap_min: 250,
            schedule: LrSchedule::Constant,
        }
    }

    pub fn generator_default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: 3e-4,
            schedule: LrSchedule::Cosine,
            ..Self::style_default()
        }
    }

    pub fn validate_style(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("style stage needs at least 2 pairs per batch".into()));
        }
        if self.steps_per_epoch == 0 || !(self.tau > 0.0) || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid style training config {self:?}")));
        }
        Ok(())
    }

    pub fn validate_generator(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid generator training config {self:?}")));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub stage: String,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vel: Option<f64>,
    pub grad_norm: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
}

/// Mixes a base seed with a counter into an independent stream seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains the style encoder on normalized runs with NT-Xent over sampled
/// adjacent-window pairs. `resume` continues from a saved style checkpoint.
pub fn pretrain_style(
    runs: &[MotionSequence],
    enc_cfg: StyleEncoderConfig,
    cfg: TrainConfig,
    stats: NormalizationStats,
    resume: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate_style()?;
    let encoder = StyleEncoder::new(enc_cfg)?;
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let (mut store, mut opt, start_epoch) = match resume {
        Some(ck) => {
            ck.expect_kind(STYLE_KIND)?;
            if ck.meta.style != Some(enc_cfg) {
                return Err(Error::ConfigMismatch("style checkpoint was trained with a different encoder config".into()));
            }
            let store = ck.restore_store(encoder.layout())?;
            let opt = ck
                .restore_optimizer(&store, adam_cfg)?
                .unwrap_or_else(|| OptimizerState::new(&store, adam_cfg));
            (store, opt, ck.meta.epoch)
        }
        None => {
            let store = encoder.init_params::<f32>(cfg.seed);
            let opt = OptimizerState::new(&store, adam_cfg);
            (store, opt, 0)
        }
    };
    let sampling = PairSampling {
        window: enc_cfg.window,
        pairs: cfg.batch_size,
        gap_min: cfg.gap_min,
    };
    let mut log = Vec::new();
    let total_steps = (cfg.epochs * cfg.steps_per_epoch) as u64;
    for epoch in start_epoch..cfg.epochs {
        for _ in 0..cfg.steps_per_epoch {
            let step = opt.step;
            let batch = sample_pairs(runs, &sampling, derive_seed(cfg.seed, step))?;
            let x = batch.stacked::<f32>()?;
            let (emb, cache) = encoder.forward(&store, x.view())?;
            let (loss, d_emb) = nt_xent_loss(emb.view(), cfg.tau)?;
            let mut grads = store.take_grads();
            encoder.backward(&store, &cache, d_emb.view(), &mut grads);
            let (grad_norm, clipped) = clip_grad_norm(&mut grads, cfg.clip_norm);
            store.put_grads(grads);
            opt.cfg.lr = cfg.schedule.lr_at(cfg.lr, step, total_steps);
            adam_step(&mut store, &mut opt)?;
            log.push(StepRecord {
                step,
                epoch,
                stage: "style".into(),
                loss: loss as f64,
                mse: None,
                vel: None,
                grad_norm,
                clipped,
            });
        }
    }
    let meta = CheckpointMeta {
        style: Some(enc_cfg),
        generator: None,
        stats,
        train: cfg,
        seed: cfg.seed,
        step: opt.step,
        epoch: cfg.epochs.max(start_epoch),
        precision: "f32".into(),
    };
    let mut ck = Checkpoint::new(STYLE_KIND, meta);
    ck.add_store(&store);
    ck.add_optimizer(&store, &opt);
    Ok(TrainOutcome { checkpoint: ck, log })
}

/// Teacher-forced training windows with precomputed style vectors.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub audio: Vec<Array2<f32>>,
    pub past: Vec<Array2<f64>>,
    pub future: Vec<Array2<f64>>,
    pub style: Vec<Vec<f64>>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.past.len()
    }

    pub fn is_empty(&self) -> bool {
        self.past.is_empty()
    }

    /// Windows every normalized run with its aligned features and embeds each
    /// history window with the frozen encoder.
    pub fn build(
        runs: &[(MotionSequence, FeatureSequence)],
        cfg: &GenerationConfig,
        encoder: Option<(&StyleEncoder, &ParameterStore<f32>)>,
    ) -> Result<Self> {
        let mut set = WindowSet::default();
        for (motion, feats) in runs {
            for w in make_windows(motion, feats, &cfg.window_spec())? {
                set.audio.push(w.audio_window);
                set.past.push(w.past_motion);
                set.future.push(w.future_motion);
            }
        }
        if set.is_empty() {
            return Err(Error::Insufficient("no training windows (runs shorter than M+N)".into()));
        }
        set.style = match (cfg.style_dim, encoder) {
            (0, _) => vec![Vec::new(); set.len()],
            (_, Some((enc, p))) => {
                let views: Vec<_> = set.past.iter().map(|w| w.view()).collect();
                enc.encode_many(p, &views)?.into_iter().map(|e| e.0).collect()
            }
            (_, None) => return Err(Error::InvalidArgument("style_dim > 0 needs a style encoder".into())),
        };
        Ok(set)
    }

    /// Time-major tensors for the windows at `idx`.
    pub fn batch(&self, idx: &[usize], style_dim: usize) -> (Array2<f32>, Array2<f32>, Array2<f32>, Array2<f32>) {
        let audio: Vec<ArrayView2<'_, f32>> = idx.iter().map(|&i| self.audio[i].view()).collect();
        let past: Vec<ArrayView2<'_, f64>> = idx.iter().map(|&i| self.past[i].view()).collect();
        let future: Vec<ArrayView2<'_, f64>> = idx.iter().map(|&i| self.future[i].view()).collect();
        let style = Array2::from_shape_fn((idx.len(), style_dim), |(b, j)| self.style[idx[b]][j] as f32);
        (
            to_time_major(&audio, |v| v),
            to_time_major(&past, |v| v as f32),
            style,
            to_time_major(&future, |v| v as f32),
        )
    }
}

/// Epoch-specific window order, reproducible from `(seed, epoch)` alone.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5EED_0000 + epoch as u64));
    order.shuffle(&mut rng);
    order
}

/// Trains the generator on teacher-forced windows. The style encoder from
/// `style` is frozen and copied into the output checkpoint unchanged.
pub fn train_generator(
    data: &WindowSet,
    gen_cfg: GenerationConfig,
    cfg: TrainConfig,
    stats: NormalizationStats,
    style: Option<&Checkpoint>,
    resume: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate_generator()?;
    let generator = Generator::new(gen_cfg)?;
    let style_store = match (gen_cfg.style_dim, style) {
        (0, _) => None,
        (ds, Some(ck)) => {
            ck.expect_kind(STYLE_KIND)?;
            let enc_cfg = ck
                .meta
                .style
                .ok_or_else(|| Error::Format("style checkpoint lacks encoder config".into()))?;
            if enc_cfg.style_dim != ds {
                return Err(Error::ConfigMismatch(format!(
                    "style checkpoint has d_s={}, generator expects {ds}",
                    enc_cfg.style_dim
                )));
            }
            if enc_cfg.window != gen_cfg.past {
                return Err(Error::ConfigMismatch(format!(
                    "style window {} differs from generator history M={}",
                    enc_cfg.window, gen_cfg.past
                )));
            }
            let enc = StyleEncoder::new(enc_cfg)?;
            let mut store = ck.restore_store(enc.layout())?;
            store.freeze();
            Some((enc_cfg, store))
        }
        (_, None) => return Err(Error::InvalidArgument("style_dim > 0 needs a style checkpoint".into())),
    };
    if data.style.first().map(Vec::len) != Some(gen_cfg.style_dim) {
        return Err(Error::ConfigMismatch("window set style width differs from generator d_s".into()));
    }
    if data.audio[0].ncols() != gen_cfg.feature_dim {
        return Err(Error::ConfigMismatch(format!(
            "features have width {}, generator expects {}",
            data.audio[0].ncols(),
            gen_cfg.feature_dim
        )));
    }
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let (mut store, mut opt, start_epoch) = match resume {
        Some(ck) => {
            ck.expect_kind(GENERATOR_KIND)?;
            if ck.meta.generator != Some(gen_cfg) {
                return Err(Error::ConfigMismatch("resume checkpoint has a different generator config".into()));
            }
            let store = ck.restore_store(generator.layout())?;
            let opt = ck
                .restore_optimizer(&store, adam_cfg)?
                .unwrap_or_else(|| OptimizerState::new(&store, adam_cfg));
            (store, opt, ck.meta.epoch)
        }
        None => {
            let store = generator.init_params::<f32>(cfg.seed);
            let opt = OptimizerState::new(&store, adam_cfg);
            (store, opt, 0)
        }
    };
    let mut log = Vec::new();
    let total_steps = (cfg.epochs * data.len().div_ceil(cfg.batch_size)) as u64;
    for epoch in start_epoch..cfg.epochs {
        let order = epoch_order(data.len(), cfg.seed, epoch);
        for idx in order.chunks(cfg.batch_size) {
            let b = idx.len();
            let (audio, past, sty, gt) = data.batch(idx, gen_cfg.style_dim);
            let (pred, cache) = generator.forward(&store, audio.view(), past.view(), sty.view(), b)?;
            let (terms, dpred) = batch_loss(pred.view(), gt.view(), b, gen_cfg.lambda)?;
            let mut grads = store.take_grads();
            generator.backward(&store, &cache, dpred.view(), &mut grads);
            let (grad_norm, clipped) = clip_grad_norm(&mut grads, cfg.clip_norm);
            store.put_grads(grads);
            let step = opt.step;
            opt.cfg.lr = cfg.schedule.lr_at(cfg.lr, step, total_steps);
            adam_step(&mut store, &mut opt)?;
            log.push(StepRecord {
                step,
                epoch,
                stage: "generator".into(),
                loss: terms.total,
                mse: Some(terms.mse),
                vel: Some(terms.vel),
                grad_norm,
                clipped,
            });
        }
    }
    let meta = CheckpointMeta {
        style: style_store.as_ref().map(|(c, _)| *c),
        generator: Some(gen_cfg),
        stats,
        train: cfg,
        seed: cfg.seed,
        step: opt.step,
        epoch: cfg.epochs.max(start_epoch),
        precision: "f32".into(),
    };
    let mut ck = Checkpoint::new(GENERATOR_KIND, meta);
    ck.add_store(&store);
    ck.add_optimizer(&store, &opt);
    if let Some((_, s)) = &style_store {
        ck.add_store(s);
    }
    Ok(TrainOutcome { checkpoint: ck, log })
}

/// Rebuilds an inference model from a generator checkpoint.
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<GazeHeadModel<f32>> {
    ck.expect_kind(GENERATOR_KIND)?;
    let gen_cfg = ck
        .meta
        .generator
        .ok_or_else(|| Error::Format("generator checkpoint lacks generator config".into()))?;
    let generator = Generator::new(gen_cfg)?;
    let params = ck.restore_store(generator.layout())?;
    let encoder = match (gen_cfg.style_dim, ck.meta.style) {
        (0, _) => None,
        (_, Some(enc_cfg)) => {
            let enc = StyleEncoder::new(enc_cfg)?;
            let p = ck.restore_store(enc.layout())?;
            Some((enc, p))
        }
        (_, None) => return Err(Error::Format("styled generator checkpoint lacks encoder config".into())),
    };
    Ok(GazeHeadModel {
        generator,
        params,
        encoder,
        stats: ck.meta.stats,
    })
}

/// Rebuilds the style encoder stored in a style or generator checkpoint.
pub fn encoder_from_checkpoint(ck: &Checkpoint) -> Result<(StyleEncoder, ParameterStore<f32>)> {
    let enc_cfg = ck
        .meta
        .style
        .ok_or_else(|| Error::Format("checkpoint carries no style encoder".into()))?;
    let enc = StyleEncoder::new(enc_cfg)?;
    let p = ck.restore_store(enc.layout())?;
    Ok((enc, p))
}
