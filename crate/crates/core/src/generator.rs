//! Motion generator: fuses audio, motion history and style into a recurrent
//! predictor of the next `N` frames, its training losses, and autoregressive
//! rollout.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::audio::FeatureSequence;
use crate::error::{Error, Result};
use crate::motion::{MotionSequence, NormalizationStats, WindowSpec, MOTION_DIM, TARGET_FPS};
use crate::nn::{check_finite, Grads, Layout, Linear, LstmCache, LstmStack, LstmStackConfig, ParameterStore, Scalar};
use crate::style::{StyleEmbedding, StyleEncoder};

pub const PARAM_PREFIX: &str = "generator";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// History length `M` in frames.
    pub past: usize,
    /// Prediction length `N` in frames.
    pub future: usize,
    /// Width `d` of the audio and motion projections.
    pub model_dim: usize,
    /// Style width `d_s`; zero disables style conditioning.
    pub style_dim: usize,
    pub lambda: f64,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    /// Audio feature width `F`.
    pub feature_dim: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            past: 25,
            future: 10,
            model_dim: 64,
            style_dim: 64,
            lambda: 0.8,
            lstm_layers: 3,
            lstm_hidden: 128,
            feature_dim: 26,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.past < 2 || self.future < 1 {
            return Err(Error::InvalidArgument(format!(
                "need M >= 2 and N >= 1, got M={} N={}",
                self.past, self.future
            )));
        }
        if self.future > self.past {
            return Err(Error::InvalidArgument(format!(
                "prediction length N={} exceeds history M={}",
                self.future, self.past
            )));
        }
        if self.future < 2 && self.lambda < 1.0 {
            return Err(Error::InvalidArgument("velocity loss needs N >= 2".into()));
        }
        if self.model_dim == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument("model_dim and feature_dim must be positive".into()));
        }
        self.lstm().validate()
    }

    pub fn fused_dim(&self) -> usize {
        2 * self.model_dim + self.style_dim
    }

    pub fn lstm(&self) -> LstmStackConfig {
        LstmStackConfig {
            n_layers: self.lstm_layers,
            hidden: self.lstm_hidden,
            input_dim: self.fused_dim(),
        }
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            past: self.past,
            future: self.future,
            stride: self.future,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub cfg: GenerationConfig,
    pub audio_proj: Linear,
    pub motion_proj: Linear,
    pub lstm: LstmStack,
    pub head: Linear,
    layout: Layout,
}

#[derive(Debug, Clone)]
pub struct GeneratorCache<S> {
    audio: Array2<S>,
    motion: Array2<S>,
    lstm: LstmCache<S>,
    tail: Array2<S>,
    batch: usize,
}

/// Gradients with respect to the generator's inputs.
#[derive(Debug, Clone)]
pub struct InputGrads<S> {
    pub audio: Array2<S>,
    pub motion: Array2<S>,
    /// `B × d_s`, summed over time.
    pub style: Array2<S>,
}

impl Generator {
    pub fn new(cfg: GenerationConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layout = Layout::new();
        let p = PARAM_PREFIX;
        let audio_proj = Linear::new(&mut layout, &format!("{p}.audio_proj"), cfg.feature_dim, cfg.model_dim);
        let motion_proj = Linear::new(&mut layout, &format!("{p}.motion_proj"), MOTION_DIM, cfg.model_dim);
        let lstm = LstmStack::new(&mut layout, &format!("{p}.lstm"), &cfg.lstm());
        let head = Linear::new(&mut layout, &format!("{p}.head"), cfg.lstm_hidden, MOTION_DIM);
        Ok(Generator {
            cfg,
            audio_proj,
            motion_proj,
            lstm,
            head,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn init_params<S: Scalar>(&self, seed: u64) -> ParameterStore<S> {
        ParameterStore::init(&self.layout, seed)
    }

    fn check_inputs<S>(&self, audio: &ArrayView2<'_, S>, motion: &ArrayView2<'_, S>, style: &ArrayView2<'_, S>, batch: usize) -> Result<()> {
        let rows = self.cfg.past * batch;
        if audio.dim() != (rows, self.cfg.feature_dim) {
            return Err(Error::Shape(format!(
                "audio window {:?}, expected ({rows}, {})",
                audio.dim(),
                self.cfg.feature_dim
            )));
        }
        if motion.dim() != (rows, MOTION_DIM) {
            return Err(Error::Shape(format!("motion window {:?}, expected ({rows}, {MOTION_DIM})", motion.dim())));
        }
        if style.dim() != (batch, self.cfg.style_dim) {
            return Err(Error::Shape(format!(
                "style {:?}, expected ({batch}, {})",
                style.dim(),
                self.cfg.style_dim
            )));
        }
        Ok(())
    }

    /// Builds `Z = [Linear_a(A) ‖ Linear_x(X) ‖ s]` for a time-major batch.
    pub fn fuse<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        audio: ArrayView2<'_, S>,
        motion: ArrayView2<'_, S>,
        style: ArrayView2<'_, S>,
        batch: usize,
    ) -> Result<Array2<S>> {
        self.check_inputs(&audio, &motion, &style, batch)?;
        let d = self.cfg.model_dim;
        let mut z = Array2::zeros((self.cfg.past * batch, self.cfg.fused_dim()));
        z.slice_mut(s![.., ..d]).assign(&self.audio_proj.forward(store, audio));
        z.slice_mut(s![.., d..2 * d]).assign(&self.motion_proj.forward(store, motion));
        if self.cfg.style_dim > 0 {
            for (r, mut row) in z.rows_mut().into_iter().enumerate() {
                row.slice_mut(s![2 * d..]).assign(&style.row(r % batch));
            }
        }
        Ok(z)
    }

    /// Predicts `N × B` frames (time-major) from `M × B` rows of audio and
    /// motion plus one style vector per window.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        audio: ArrayView2<'_, S>,
        motion: ArrayView2<'_, S>,
        style: ArrayView2<'_, S>,
        batch: usize,
    ) -> Result<(Array2<S>, GeneratorCache<S>)> {
        let z = self.fuse(store, audio, motion, style, batch)?;
        let (h, lstm) = self.lstm.forward(store, z.view(), self.cfg.past, batch)?;
        let skip = (self.cfg.past - self.cfg.future) * batch;
        let tail = h.slice(s![skip.., ..]).to_owned();
        let pred = self.head.forward(store, tail.view());
        check_finite("generator output", pred.view())?;
        Ok((
            pred,
            GeneratorCache {
                audio: audio.to_owned(),
                motion: motion.to_owned(),
                lstm,
                tail,
                batch,
            },
        ))
    }

    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        cache: &GeneratorCache<S>,
        dpred: ArrayView2<'_, S>,
        grads: &mut Grads<S>,
    ) -> InputGrads<S> {
        let b = cache.batch;
        let d = self.cfg.model_dim;
        let dtail = self.head.backward(store, cache.tail.view(), dpred, grads);
        let mut dh = Array2::zeros((self.cfg.past * b, self.cfg.lstm_hidden));
        let skip = (self.cfg.past - self.cfg.future) * b;
        dh.slice_mut(s![skip.., ..]).assign(&dtail);
        let dz = self.lstm.backward(store, &cache.lstm, dh.view(), grads);
        let audio = self
            .audio_proj
            .backward(store, cache.audio.view(), dz.slice(s![.., ..d]), grads);
        let motion = self
            .motion_proj
            .backward(store, cache.motion.view(), dz.slice(s![.., d..2 * d]), grads);
        let mut style = Array2::zeros((b, self.cfg.style_dim));
        if self.cfg.style_dim > 0 {
            for (r, row) in dz.slice(s![.., 2 * d..]).rows().into_iter().enumerate() {
                let mut acc = style.row_mut(r % b);
                acc += &row;
            }
        }
        InputGrads { audio, motion, style }
    }

    /// Fused input of one window.
    pub fn fuse_window<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        audio: ArrayView2<'_, f32>,
        motion: ArrayView2<'_, f64>,
        style: &StyleEmbedding,
    ) -> Result<Array2<S>> {
        let s = style_row::<S>(style, self.cfg.style_dim)?;
        self.fuse(store, audio.mapv(|v| S::lit(v as f64)).view(), motion.mapv(S::lit).view(), s.view(), 1)
    }

    /// Predicts `N × 7` normalized frames for one window.
    pub fn predict_window<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        audio: ArrayView2<'_, f32>,
        motion: ArrayView2<'_, f64>,
        style: &StyleEmbedding,
    ) -> Result<Array2<f64>> {
        let s = style_row::<S>(style, self.cfg.style_dim)?;
        let (pred, _) = self.forward(
            store,
            audio.mapv(|v| S::lit(v as f64)).view(),
            motion.mapv(S::lit).view(),
            s.view(),
            1,
        )?;
        Ok(pred.mapv(|v| v.as_f64()))
    }
}

fn style_row<S: Scalar>(style: &StyleEmbedding, dim: usize) -> Result<Array2<S>> {
    if style.dim() != dim {
        return Err(Error::Shape(format!("style width {} but generator expects {dim}", style.dim())));
    }
    Ok(Array2::from_shape_fn((1, dim), |(_, j)| S::lit(style.0[j])))
}

fn same_shape(pred: &ArrayView2<'_, f64>, gt: &ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != gt.dim() {
        return Err(Error::Shape(format!("pred {:?} vs gt {:?}", pred.dim(), gt.dim())));
    }
    Ok(())
}

/// `(1/T) Σ_t ‖x̂_t − x_t‖²`.
pub fn mse_loss(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(&pred, &gt)?;
    if pred.nrows() == 0 {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let sum: f64 = pred.iter().zip(gt.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / pred.nrows() as f64)
}

/// `(1/(T−1)) Σ_{t≥1} ‖Δx̂_t − Δx_t‖²`.
pub fn velocity_loss(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(&pred, &gt)?;
    let t = pred.nrows();
    if t < 2 {
        return Err(Error::InvalidArgument("velocity loss needs at least 2 frames".into()));
    }
    let mut sum = 0.0;
    for i in 1..t {
        for c in 0..pred.ncols() {
            let r = (pred[[i, c]] - pred[[i - 1, c]]) - (gt[[i, c]] - gt[[i - 1, c]]);
            sum += r * r;
        }
    }
    Ok(sum / (t - 1) as f64)
}

pub fn combined_loss(pred: ArrayView2<'_, f64>, gt: ArrayView2<'_, f64>, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let mse = mse_loss(pred, gt)?;
    if lambda == 1.0 {
        return Ok(mse);
    }
    Ok(lambda * mse + (1.0 - lambda) * velocity_loss(pred, gt)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub mse: f64,
    pub vel: f64,
    pub total: f64,
}

/// Batch-mean generator loss over `B` windows of `N` time-major rows, with its
/// gradient w.r.t. `pred`.
pub fn batch_loss<S: Scalar>(
    pred: ArrayView2<'_, S>,
    gt: ArrayView2<'_, S>,
    batch: usize,
    lambda: f64,
) -> Result<(LossTerms, Array2<S>)> {
    if pred.dim() != gt.dim() || batch == 0 || pred.nrows() % batch != 0 {
        return Err(Error::Shape(format!("pred {:?} vs gt {:?} for batch {batch}", pred.dim(), gt.dim())));
    }
    let n = pred.nrows() / batch;
    let diff = &pred - &gt;
    let mse_sum: f64 = diff.iter().map(|v| v.as_f64() * v.as_f64()).sum();
    let mse = mse_sum / (n * batch) as f64;
    let mut grad = diff.mapv(|v| v * S::lit(2.0 * lambda / (n * batch) as f64));
    let mut vel = 0.0;
    if n >= 2 {
        let scale = S::lit(2.0 * (1.0 - lambda) / ((n - 1) * batch) as f64);
        let mut sum = 0.0;
        for t in 1..n {
            for b in 0..batch {
                let (cur, prev) = (t * batch + b, (t - 1) * batch + b);
                for c in 0..pred.ncols() {
                    let r = diff[[cur, c]] - diff[[prev, c]];
                    sum += r.as_f64() * r.as_f64();
                    if lambda < 1.0 {
                        grad[[cur, c]] += scale * r;
                        grad[[prev, c]] -= scale * r;
                    }
                }
            }
        }
        vel = sum / ((n - 1) * batch) as f64;
    } else if lambda < 1.0 {
        return Err(Error::InvalidArgument("velocity loss needs at least 2 frames".into()));
    }
    let total = if lambda == 1.0 { mse } else { lambda * mse + (1.0 - lambda) * vel };
    Ok((LossTerms { mse, vel, total }, grad))
}

/// Where the rollout takes its style vector from.
#[derive(Debug, Clone, PartialEq)]
pub enum StyleMode {
    /// No style input (`d_s = 0`).
    Off,
    /// Re-encode the current history window before every step.
    Recompute,
    /// Use one vector for the whole rollout.
    Fixed(StyleEmbedding),
}

impl StyleMode {
    pub fn label(&self) -> &'static str {
        match self {
            StyleMode::Off => "off",
            StyleMode::Recompute => "recompute",
            StyleMode::Fixed(_) => "fixed",
        }
    }
}

/// Trained generator plus the frozen style encoder and normalization stats
/// needed at inference time.
#[derive(Debug, Clone)]
pub struct GazeHeadModel<S> {
    pub generator: Generator,
    pub params: ParameterStore<S>,
    pub encoder: Option<(StyleEncoder, ParameterStore<S>)>,
    pub stats: NormalizationStats,
}

impl<S: Scalar> GazeHeadModel<S> {
    pub fn cfg(&self) -> &GenerationConfig {
        &self.generator.cfg
    }

    pub fn default_style_mode(&self) -> StyleMode {
        if self.cfg().style_dim == 0 {
            StyleMode::Off
        } else {
            StyleMode::Recompute
        }
    }

    /// Style vector of a normalized `M × 7` window.
    pub fn encode(&self, window: ArrayView2<'_, f64>) -> Result<StyleEmbedding> {
        match &self.encoder {
            Some((enc, p)) => enc.encode_window(p, window),
            None => Err(Error::InvalidArgument("model has no style encoder".into())),
        }
    }

    /// Mean embedding over the non-overlapping `M`-frame windows of a
    /// reference sequence given in degrees.
    pub fn reference_style(&self, reference: &MotionSequence) -> Result<StyleEmbedding> {
        let m = self.cfg().past;
        if reference.len() < m {
            return Err(Error::TooShort(format!(
                "reference has {} frames, needs at least {m}",
                reference.len()
            )));
        }
        let norm = self.stats.normalize(reference.frames.view());
        let windows: Vec<_> = (0..reference.len() / m)
            .map(|k| norm.slice(s![k * m..(k + 1) * m, ..]))
            .collect();
        let (enc, p) = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no style encoder".into()))?;
        StyleEmbedding::mean(&enc.encode_many(p, &windows)?)
    }

    /// Sliding-window autoregression with stride `N`. `seed` is the first
    /// `M` frames in normalized space; the output (degrees) covers feature
    /// frames `M .. M + k·N` with `k = ⌊(T − M)/N⌋`.
    pub fn rollout(&self, seed: ArrayView2<'_, f64>, feats: &FeatureSequence, mode: &StyleMode) -> Result<MotionSequence> {
        let cfg = *self.cfg();
        let (m, n) = (cfg.past, cfg.future);
        if seed.dim() != (m, MOTION_DIM) {
            return Err(Error::Shape(format!("seed window {:?}, expected ({m}, {MOTION_DIM})", seed.dim())));
        }
        if feats.len() < m + n {
            return Err(Error::TooShort(format!(
                "rollout needs at least M+N={} feature frames, got {}",
                m + n,
                feats.len()
            )));
        }
        if feats.dim() != cfg.feature_dim {
            return Err(Error::ConfigMismatch(format!(
                "features have width {}, model expects {}",
                feats.dim(),
                cfg.feature_dim
            )));
        }
        match (mode, cfg.style_dim) {
            (StyleMode::Off, 0) => {}
            (StyleMode::Off, _) => return Err(Error::InvalidArgument("style mode off needs a d_s = 0 model".into())),
            (_, 0) => return Err(Error::InvalidArgument("model has no style input".into())),
            _ => {}
        }
        let steps = (feats.len() - m) / n;
        let mut history = seed.to_owned();
        let mut out = Array2::zeros((steps * n, MOTION_DIM));
        for k in 0..steps {
            let t = k * n;
            let style = match mode {
                StyleMode::Off => StyleEmbedding(Vec::new()),
                StyleMode::Recompute => self.encode(history.view())?,
                StyleMode::Fixed(e) => e.clone(),
            };
            let a = crate::motion::audio_offset(t, &cfg.window_spec());
            let audio = feats.frames.slice(s![a..a + m, ..]);
            let pred = self.generator.predict_window(&self.params, audio, history.view(), &style)?;
            out.slice_mut(s![t..t + n, ..]).assign(&pred);
            let mut next = Array2::zeros((m, MOTION_DIM));
            next.slice_mut(s![..m - n, ..]).assign(&history.slice(s![n.., ..]));
            next.slice_mut(s![m - n.., ..]).assign(&pred);
            history = next;
        }
        let frames = self.stats.denormalize(out.view());
        Ok(MotionSequence {
            frames,
            fps: TARGET_FPS,
            session_id: "generated".into(),
            speaker_id: "generated".into(),
            start_frame: m,
        })
    }

    /// Rollout with the style fixed to the mean embedding of `reference`.
    pub fn style_transfer_rollout(
        &self,
        seed: ArrayView2<'_, f64>,
        feats: &FeatureSequence,
        reference: &MotionSequence,
    ) -> Result<MotionSequence> {
        let style = self.reference_style(reference)?;
        self.rollout(seed, feats, &StyleMode::Fixed(style))
    }
}

/// Splits a time-major stack into its `B` per-window blocks.
pub fn split_time_major(pred: ArrayView2<'_, f64>, batch: usize) -> Vec<Array2<f64>> {
    let n = pred.nrows() / batch;
    (0..batch)
        .map(|b| {
            let mut w = Array2::zeros((n, pred.ncols()));
            for t in 0..n {
                w.row_mut(t).assign(&pred.row(t * batch + b));
            }
            w
        })
        .collect()
}

/// Interleaves per-window `len × c` matrices into a time-major stack.
pub fn to_time_major<S: Scalar, T: Copy>(windows: &[ArrayView2<'_, T>], conv: impl Fn(T) -> S) -> Array2<S> {
    let b = windows.len();
    let (len, c) = windows[0].dim();
    let mut out = Array2::zeros((len * b, c));
    for (i, w) in windows.iter().enumerate() {
        for t in 0..len {
            let mut row = out.row_mut(t * b + i);
            for (dst, src) in row.iter_mut().zip(w.row(t).iter()) {
                *dst = conv(*src);
            }
        }
    }
    out
}

/// Mean pose in degrees (the rollout fixed point of a zero-parameter model).
pub fn mean_pose_frames(stats: &NormalizationStats, len: usize) -> Array2<f64> {
    stats.denormalize(Array2::<f64>::zeros((len, MOTION_DIM)).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_cfg() -> GenerationConfig {
        GenerationConfig {
            past: 6,
            future: 3,
            model_dim: 2,
            style_dim: 1,
            lambda: 0.5,
            lstm_layers: 2,
            lstm_hidden: 4,
            feature_dim: 3,
        }
    }

    fn zeroed(g: &Generator) -> ParameterStore<f64> {
        let mut p = g.init_params::<f64>(0);
        for id in p.ids().collect::<Vec<_>>() {
            p.value_mut(id).fill_zero();
        }
        p
    }

    #[test]
    fn fusion_zero_path_broadcasts_style() {
        let g = Generator::new(toy_cfg()).unwrap();
        let p = zeroed(&g);
        let z = g
            .fuse_window(&p, Array2::<f32>::ones((6, 3)).view(), Array2::ones((6, 7)).view(), &StyleEmbedding(vec![5.0]))
            .unwrap();
        assert_eq!(z.dim(), (6, 5));
        for row in z.rows() {
            assert_eq!(row.to_vec(), vec![0.0, 0.0, 0.0, 0.0, 5.0]);
        }
    }

    #[test]
    fn zero_params_predict_zero() {
        let g = Generator::new(toy_cfg()).unwrap();
        let p = zeroed(&g);
        let y = g
            .predict_window(&p, Array2::<f32>::ones((6, 3)).view(), Array2::ones((6, 7)).view(), &StyleEmbedding(vec![1.0]))
            .unwrap();
        assert_eq!(y.dim(), (3, 7));
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn n_above_m_rejected() {
        let cfg = GenerationConfig { past: 3, future: 4, ..toy_cfg() };
        assert!(Generator::new(cfg).is_err());
        let cfg = GenerationConfig { lambda: 1.5, ..toy_cfg() };
        assert!(Generator::new(cfg).is_err());
    }

    #[test]
    fn loss_hand_cases() {
        let gt = Array2::<f64>::zeros((4, 7));
        assert_eq!(mse_loss(gt.view(), gt.view()).unwrap(), 0.0);
        let pred = Array2::<f64>::ones((4, 7));
        assert_eq!(mse_loss(pred.view(), gt.view()).unwrap(), 7.0);
        assert_eq!(mse_loss((pred.clone() * 3.0).view(), gt.view()).unwrap(), 63.0);
        assert_eq!(velocity_loss(pred.view(), gt.view()).unwrap(), 0.0);
        let gt3 = Array2::<f64>::zeros((3, 7));
        let mut p3 = gt3.clone();
        p3[[1, 0]] = 1.0;
        assert_eq!(velocity_loss(p3.view(), gt3.view()).unwrap(), 1.0);
        let mse = mse_loss(p3.view(), gt3.view()).unwrap();
        assert_eq!(combined_loss(p3.view(), gt3.view(), 1.0).unwrap(), mse);
        assert_eq!(combined_loss(p3.view(), gt3.view(), 0.0).unwrap(), 1.0);
        assert!((combined_loss(p3.view(), gt3.view(), 0.5).unwrap() - 0.5 * (mse + 1.0)).abs() < 1e-15);
        assert!(combined_loss(p3.view(), gt3.view(), -0.1).is_err());
        assert!(velocity_loss(gt3.slice(s![..1, ..]), gt3.slice(s![..1, ..])).is_err());
    }

    #[test]
    fn velocity_loss_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Array2::from_shape_fn((9, 7), |_| rng.random_range(-1.0..1.0));
        let g = Array2::from_shape_fn((9, 7), |_| rng.random_range(-1.0..1.0));
        let c = array![0.5, -2.0, 0.0, 1.0, 3.0, -1.0, 0.25];
        let shifted = &p + &c;
        let a = velocity_loss(p.view(), g.view()).unwrap();
        let b = velocity_loss(shifted.view(), g.view()).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn batch_loss_matches_per_window_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let windows: Vec<(Array2<f64>, Array2<f64>)> = (0..3)
            .map(|_| {
                (
                    Array2::from_shape_fn((4, 7), |_| rng.random_range(-1.0..1.0)),
                    Array2::from_shape_fn((4, 7), |_| rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        let pv: Vec<_> = windows.iter().map(|w| w.0.view()).collect();
        let gv: Vec<_> = windows.iter().map(|w| w.1.view()).collect();
        let p = to_time_major::<f64, f64>(&pv, |v| v);
        let g = to_time_major::<f64, f64>(&gv, |v| v);
        let (terms, _) = batch_loss(p.view(), g.view(), 3, 0.3).unwrap();
        let want: f64 = windows.iter().map(|(a, b)| combined_loss(a.view(), b.view(), 0.3).unwrap()).sum::<f64>() / 3.0;
        assert!((terms.total - want).abs() < 1e-12);
        assert_eq!(split_time_major(p.view(), 3)[1], windows[1].0);
    }

    #[test]
    fn batch_loss_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = Array2::from_shape_fn((8, 7), |_| rng.random_range(-1.0..1.0));
        let g = Array2::from_shape_fn((8, 7), |_| rng.random_range(-1.0..1.0));
        let (_, grad) = batch_loss(p.view(), g.view(), 2, 0.4).unwrap();
        let h = 1e-6;
        for (i, j) in [(0, 0), (3, 4), (7, 6)] {
            let mut a = p.clone();
            a[[i, j]] += h;
            let mut b = p.clone();
            b[[i, j]] -= h;
            let fa = batch_loss(a.view(), g.view(), 2, 0.4).unwrap().0.total;
            let fb = batch_loss(b.view(), g.view(), 2, 0.4).unwrap().0.total;
            assert!(((fa - fb) / (2.0 * h) - grad[[i, j]]).abs() < 1e-7);
        }
    }

    fn toy_model(zero: bool) -> GazeHeadModel<f64> {
        let cfg = GenerationConfig {
            style_dim: 0,
            ..toy_cfg()
        };
        let g = Generator::new(cfg).unwrap();
        let params = if zero { zeroed(&g) } else { g.init_params(4) };
        GazeHeadModel {
            generator: g,
            params,
            encoder: None,
            stats: NormalizationStats {
                mean: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
                std: [2.0; 7],
            },
        }
    }

    #[test]
    fn zero_model_rolls_out_mean_pose() {
        let m = toy_model(true);
        let feats = FeatureSequence::new(Array2::ones((20, 3))).unwrap();
        let out = m.rollout(Array2::zeros((6, 7)).view(), &feats, &StyleMode::Off).unwrap();
        assert_eq!(out.len(), 12);
        assert_eq!(out.frames, mean_pose_frames(&m.stats, 12));
    }

    #[test]
    fn rollout_length_and_determinism() {
        let cfg = GenerationConfig {
            past: 25,
            future: 10,
            style_dim: 0,
            ..toy_cfg()
        };
        let g = Generator::new(cfg).unwrap();
        let m = GazeHeadModel {
            params: g.init_params::<f64>(1),
            generator: g,
            encoder: None,
            stats: NormalizationStats::identity(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let feats = FeatureSequence::new(Array2::from_shape_fn((105, 3), |_| rng.random_range(-1.0f32..1.0))).unwrap();
        let seed = Array2::from_shape_fn((25, 7), |_| rng.random_range(-1.0..1.0));
        let a = m.rollout(seed.view(), &feats, &StyleMode::Off).unwrap();
        assert_eq!(a.len(), 80);
        let b = m.rollout(seed.view(), &feats, &StyleMode::Off).unwrap();
        assert_eq!(a.frames, b.frames);
        let short = FeatureSequence::new(Array2::zeros((34, 3))).unwrap();
        assert!(m.rollout(seed.view(), &short, &StyleMode::Off).is_err());
    }

    #[test]
    fn rollout_style_mode_must_match_model() {
        let m = toy_model(false);
        let feats = FeatureSequence::new(Array2::ones((20, 3))).unwrap();
        assert!(m.rollout(Array2::zeros((6, 7)).view(), &feats, &StyleMode::Recompute).is_err());
    }
}
