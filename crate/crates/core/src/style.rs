//! Contrastive style encoder.
//!
//! A motion window (`M × 7`, normalized) is projected to the model width, offset
//! by a sinusoidal temporal code, passed through a pre-norm Transformer stack and
//! mean-pooled over time. The encoder is trained with NT-Xent over pairs of
//! temporally adjacent windows from the same session.

use std::collections::HashSet;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{MotionSequence, MOTION_DIM};
use crate::nn::{
    add_temporal_encoding, check_finite, temporal_encoding, Grads, Layout, Linear, ParameterStore, Scalar,
    TransformerCache, TransformerConfig, TransformerStack,
};

pub const PARAM_PREFIX: &str = "style_encoder";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleEncoderConfig {
    /// Window length M in frames.
    pub window: usize,
    /// Embedding width d_s; also the Transformer model width.
    pub style_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
}

impl Default for StyleEncoderConfig {
    fn default() -> Self {
        StyleEncoderConfig {
            window: 25,
            style_dim: 64,
            n_layers: 2,
            n_heads: 4,
            ff_dim: 128,
        }
    }
}

impl StyleEncoderConfig {
    pub fn transformer(&self) -> TransformerConfig {
        TransformerConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            model_dim: self.style_dim,
            ff_dim: self.ff_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidArgument("style window must be >= 2".into()));
        }
        if self.style_dim == 0 || self.style_dim % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "style_dim must be even and positive, got {}",
                self.style_dim
            )));
        }
        self.transformer().validate()
    }
}

/// Fixed-length style vector. Kept unnormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleEmbedding(pub Vec<f64>);

impl StyleEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Element-wise mean of several embeddings.
    pub fn mean(items: &[StyleEmbedding]) -> Result<StyleEmbedding> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("mean of zero embeddings".into()))?;
        let mut acc = vec![0.0; first.dim()];
        for e in items {
            if e.dim() != acc.len() {
                return Err(Error::Shape("embedding widths differ".into()));
            }
            acc.iter_mut().zip(&e.0).for_each(|(a, v)| *a += v);
        }
        let n = items.len() as f64;
        Ok(StyleEmbedding(acc.into_iter().map(|v| v / n).collect()))
    }
}

/// Cosine similarity `aᵀb / (‖a‖‖b‖)`.
pub fn cosine_sim(a: &StyleEmbedding, b: &StyleEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("embedding widths {} vs {}", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine similarity undefined for a zero vector".into()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleEncoder {
    pub cfg: StyleEncoderConfig,
    pub input: Linear,
    pub stack: TransformerStack,
    layout: Layout,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<S> {
    x: Array2<S>,
    stack: TransformerCache<S>,
    windows: usize,
}

impl StyleEncoder {
    pub fn new(cfg: StyleEncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layout = Layout::new();
        let input = Linear::new(&mut layout, &format!("{PARAM_PREFIX}.input"), MOTION_DIM, cfg.style_dim);
        let stack = TransformerStack::new(&mut layout, &format!("{PARAM_PREFIX}.encoder"), &cfg.transformer());
        Ok(StyleEncoder {
            cfg,
            input,
            stack,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn init_params<S: Scalar>(&self, seed: u64) -> ParameterStore<S> {
        ParameterStore::init(&self.layout, seed)
    }

    /// Encodes a window-major batch (`B·M × 7`) to `B × d_s`.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        windows: ArrayView2<'_, S>,
    ) -> Result<(Array2<S>, EncoderCache<S>)> {
        let m = self.cfg.window;
        if windows.ncols() != MOTION_DIM || windows.nrows() % m != 0 || windows.nrows() == 0 {
            return Err(Error::Shape(format!(
                "style encoder expects a multiple of {m} rows x {MOTION_DIM}, got {:?}",
                windows.dim()
            )));
        }
        let b = windows.nrows() / m;
        let mut x = self.input.forward(store, windows);
        let pe = temporal_encoding::<S>(m, self.cfg.style_dim)?;
        add_temporal_encoding(&mut x.view_mut(), &pe);
        let (h, stack) = self.stack.forward(store, x.view(), m);
        let inv_m = S::one() / S::lit(m as f64);
        let mut out = Array2::zeros((b, self.cfg.style_dim));
        for w in 0..b {
            let pooled = h.slice(s![w * m..(w + 1) * m, ..]).sum_axis(Axis(0));
            out.row_mut(w).assign(&(pooled * inv_m));
        }
        check_finite("style embedding", out.view())?;
        Ok((
            out,
            EncoderCache {
                x: windows.to_owned(),
                stack,
                windows: b,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the input windows.
    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        cache: &EncoderCache<S>,
        d_emb: ArrayView2<'_, S>,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        let m = self.cfg.window;
        let inv_m = S::one() / S::lit(m as f64);
        let mut dh = Array2::zeros((cache.windows * m, self.cfg.style_dim));
        for w in 0..cache.windows {
            let row = d_emb.row(w).mapv(|v| v * inv_m);
            for t in 0..m {
                dh.row_mut(w * m + t).assign(&row);
            }
        }
        let dx = self.stack.backward(store, &cache.stack, dh.view(), m, grads);
        self.input.backward(store, cache.x.view(), dx.view(), grads)
    }

    /// Embeds one normalized `M × 7` window.
    pub fn encode_window<S: Scalar>(&self, store: &ParameterStore<S>, window: ArrayView2<'_, f64>) -> Result<StyleEmbedding> {
        if window.nrows() != self.cfg.window {
            return Err(Error::Shape(format!(
                "style window has {} frames, encoder expects {}",
                window.nrows(),
                self.cfg.window
            )));
        }
        let x = window.mapv(S::lit);
        let (e, _) = self.forward(store, x.view())?;
        Ok(StyleEmbedding(e.row(0).iter().map(|v| v.as_f64()).collect()))
    }

    /// Embeds many windows in one batched pass.
    pub fn encode_many<S: Scalar>(&self, store: &ParameterStore<S>, windows: &[ArrayView2<'_, f64>]) -> Result<Vec<StyleEmbedding>> {
        const CHUNK: usize = 64;
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(CHUNK) {
            let x = stack_window_major::<S>(chunk)?;
            let (e, _) = self.forward(store, x.view())?;
            out.extend(e.rows().into_iter().map(|r| StyleEmbedding(r.iter().map(|v| v.as_f64()).collect())));
        }
        Ok(out)
    }
}

/// Stacks equally sized windows into a window-major matrix.
pub fn stack_window_major<S: Scalar>(windows: &[ArrayView2<'_, f64>]) -> Result<Array2<S>> {
    let first = windows
        .first()
        .ok_or_else(|| Error::InvalidArgument("no windows to stack".into()))?;
    let (m, c) = first.dim();
    let mut out = Array2::zeros((m * windows.len(), c));
    for (i, w) in windows.iter().enumerate() {
        if w.dim() != (m, c) {
            return Err(Error::Shape("windows differ in shape".into()));
        }
        out.slice_mut(s![i * m..(i + 1) * m, ..]).assign(&w.mapv(S::lit));
    }
    Ok(out)
}

/// NT-Xent over `2N` embeddings, rows `0..N` the anchors and `N..2N` their
/// partners (`p(i) = i ± N`). Returns the unaveraged sum over all `2N` anchors
/// and its gradient w.r.t. the embeddings.
pub fn nt_xent_loss<S: Scalar>(emb: ArrayView2<'_, S>, tau: f64) -> Result<(S, Array2<S>)> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
    }
    let n2 = emb.nrows();
    if n2 < 4 || n2 % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "nt-xent needs an even batch of at least 4 embeddings, got {n2}"
        )));
    }
    let half = n2 / 2;
    let norms: Vec<S> = emb.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if norms.iter().any(|n| *n == S::zero()) {
        return Err(Error::InvalidArgument("zero embedding in nt-xent batch".into()));
    }
    let mut unit = emb.to_owned();
    for (mut row, n) in unit.rows_mut().into_iter().zip(&norms) {
        row.mapv_inplace(|v| v / *n);
    }
    let sim = unit.dot(&unit.t());
    let inv_tau = S::lit(1.0 / tau);
    let partner = |i: usize| if i < half { i + half } else { i - half };

    let mut loss = S::zero();
    // dL/dsim, not yet symmetrized
    let mut dsim = Array2::<S>::zeros((n2, n2));
    for i in 0..n2 {
        let max = (0..n2)
            .filter(|&k| k != i)
            .map(|k| sim[[i, k]] * inv_tau)
            .fold(S::neg_infinity(), S::max);
        let mut denom = S::zero();
        for k in (0..n2).filter(|&k| k != i) {
            denom += (sim[[i, k]] * inv_tau - max).exp();
        }
        let p = partner(i);
        loss += -(sim[[i, p]] * inv_tau - max) + denom.ln();
        for k in (0..n2).filter(|&k| k != i) {
            let soft = (sim[[i, k]] * inv_tau - max).exp() / denom;
            dsim[[i, k]] += soft * inv_tau;
        }
        dsim[[i, p]] -= inv_tau;
    }
    // sim[i,k] = u_i · u_k, with u = e / ‖e‖
    let dsym = &dsim + &dsim.t();
    let du = dsym.dot(&unit);
    let mut grad = Array2::zeros(emb.raw_dim());
    for i in 0..n2 {
        let u = unit.row(i);
        let g = du.row(i);
        let proj = g.dot(&u);
        let mut out = grad.row_mut(i);
        for ((o, &gv), &uv) in out.iter_mut().zip(g.iter()).zip(u.iter()) {
            *o = (gv - proj * uv) / norms[i];
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite nt-xent loss".into()));
    }
    Ok((loss, grad))
}

/// Where a window came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowTag {
    pub speaker: String,
    pub session: String,
    /// Start frame within the session.
    pub t_index: usize,
}

/// `N` anchor windows and their temporally adjacent partners.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub anchors: Vec<Array2<f64>>,
    pub partners: Vec<Array2<f64>>,
    pub anchor_tags: Vec<WindowTag>,
    pub partner_tags: Vec<WindowTag>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Window-major stack of anchors followed by partners (`2N·M × 7`).
    pub fn stacked<S: Scalar>(&self) -> Result<Array2<S>> {
        let views: Vec<_> = self.anchors.iter().chain(&self.partners).map(|w| w.view()).collect();
        stack_window_major(&views)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSampling {
    pub window: usize,
    pub pairs: usize,
    /// Minimum frame gap between same-session pairs in one batch.
    pub gap_min: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    seq: usize,
    start: usize,
}

/// Draws `N` positive pairs (windows starting exactly `M` frames apart in the
/// same contiguous run). Any two pairs in the batch come from different
/// speakers, different sessions, or are at least `gap_min` frames apart.
pub fn sample_pairs(runs: &[MotionSequence], cfg: &PairSampling, seed: u64) -> Result<PairBatch> {
    let m = cfg.window;
    let mut candidates: Vec<Candidate> = runs
        .iter()
        .enumerate()
        .flat_map(|(seq, r)| {
            let n = if r.len() >= 2 * m { r.len() - 2 * m + 1 } else { 0 };
            (0..n).map(move |start| Candidate { seq, start })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);

    let mut chosen: Vec<Candidate> = Vec::with_capacity(cfg.pairs);
    for cand in candidates {
        if chosen.len() == cfg.pairs {
            break;
        }
        if chosen.iter().all(|c| pairs_compatible(runs, c, &cand, m, cfg.gap_min)) {
            chosen.push(cand);
        }
    }
    if chosen.len() < cfg.pairs {
        return Err(Error::Insufficient(format!(
            "only {} of {} mutually compatible pairs available",
            chosen.len(),
            cfg.pairs
        )));
    }

    let mut batch = PairBatch {
        anchors: Vec::with_capacity(cfg.pairs),
        partners: Vec::with_capacity(cfg.pairs),
        anchor_tags: Vec::with_capacity(cfg.pairs),
        partner_tags: Vec::with_capacity(cfg.pairs),
    };
    for c in chosen {
        let run = &runs[c.seq];
        for (offset, frames, tags) in [
            (0, &mut batch.anchors, &mut batch.anchor_tags),
            (m, &mut batch.partners, &mut batch.partner_tags),
        ] {
            let start = c.start + offset;
            frames.push(run.frames.slice(s![start..start + m, ..]).to_owned());
            tags.push(WindowTag {
                speaker: run.speaker_id.clone(),
                session: run.session_id.clone(),
                t_index: run.start_frame + start,
            });
        }
    }
    Ok(batch)
}

fn pairs_compatible(runs: &[MotionSequence], a: &Candidate, b: &Candidate, m: usize, gap_min: usize) -> bool {
    let (ra, rb) = (&runs[a.seq], &runs[b.seq]);
    if ra.speaker_id != rb.speaker_id || ra.session_id != rb.session_id {
        return true;
    }
    let sa = ra.start_frame + a.start;
    let sb = rb.start_frame + b.start;
    let (lo, hi) = if sa <= sb { (sa, sb) } else { (sb, sa) };
    hi >= lo + 2 * m + gap_min
}

/// Distinct speakers represented in a set of runs.
pub fn speaker_count(runs: &[MotionSequence]) -> usize {
    runs.iter().map(|r| r.speaker_id.as_str()).collect::<HashSet<_>>().len()
}
