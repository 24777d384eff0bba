use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{batch_loss, GenerationConfig, Generator};
use crate::nn::{
    Grads, Layout, Linear, LstmStack, LstmStackConfig, Mha, ParameterStore, TransformerConfig, TransformerLayer,
};
use crate::style::{nt_xent_loss, StyleEncoder, StyleEncoderConfig};

const STEP: f64 = 1e-5;
/// Gradient norms below this are compared absolutely rather than relatively.
const NORM_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradCheckModule {
    Linear,
    Attention,
    TransformerLayer,
    Lstm,
    NtXent,
    StyleEncoder,
    Generator,
}

impl GradCheckModule {
    pub const ALL: [GradCheckModule; 7] = [
        GradCheckModule::Linear,
        GradCheckModule::Attention,
        GradCheckModule::TransformerLayer,
        GradCheckModule::Lstm,
        GradCheckModule::NtXent,
        GradCheckModule::StyleEncoder,
        GradCheckModule::Generator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradCheckModule::Linear => "linear",
            GradCheckModule::Attention => "attention",
            GradCheckModule::TransformerLayer => "transformer-layer",
            GradCheckModule::Lstm => "lstm",
            GradCheckModule::NtXent => "nt-xent",
            GradCheckModule::StyleEncoder => "style-encoder",
            GradCheckModule::Generator => "generator",
        }
    }

    /// Maximum acceptable relative error.
    pub fn threshold(self) -> f64 {
        match self {
            GradCheckModule::Linear => 1e-6,
            GradCheckModule::Generator => 1e-4,
            _ => 1e-5,
        }
    }
}

impl fmt::Display for GradCheckModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradCheckModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gradcheck module {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub name: String,
    pub rel_err: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub module: GradCheckModule,
    pub seed: u64,
    pub groups: Vec<GroupError>,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, floor)`.
fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nn).max(NORM_FLOOR)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Parameters drawn from the layout's initializer, then jittered so that
/// zero-initialized biases and states are exercised too.
fn jittered_store(layout: &Layout, rng: &mut ChaCha8Rng) -> ParameterStore<f64> {
    let mut store = ParameterStore::<f64>::init(layout, rng.random());
    for id in store.ids().collect::<Vec<_>>() {
        for v in &mut store.value_mut(id).data {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    store
}

/// Central differences over every element of every parameter group.
fn compare(store: &mut ParameterStore<f64>, analytic: &Grads<f64>, f: impl Fn(&ParameterStore<f64>) -> f64) -> Vec<GroupError> {
    let mut out = Vec::new();
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.value(id).len();
        let mut numeric = vec![0.0; n];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = store.value(id).data[k];
            store.value_mut(id).data[k] = orig + STEP;
            let fp = f(store);
            store.value_mut(id).data[k] = orig - STEP;
            let fm = f(store);
            store.value_mut(id).data[k] = orig;
            *slot = (fp - fm) / (2.0 * STEP);
        }
        let a = &analytic.get(id).data;
        out.push(GroupError {
            name: store.name(id).to_string(),
            rel_err: rel_err(a, &numeric),
            analytic_norm: a.iter().map(|x| x * x).sum::<f64>().sqrt(),
        });
    }
    out
}

fn projection_loss(y: &Array2<f64>, r: &Array2<f64>) -> f64 {
    (y * r).sum()
}

fn check_linear(rng: &mut ChaCha8Rng) -> Vec<GroupError> {
    let mut layout = Layout::new();
    let lin = Linear::new(&mut layout, "linear", 4, 3);
    let mut store = jittered_store(&layout, rng);
    let x = random_matrix(rng, 5, 4);
    let r = random_matrix(rng, 5, 3);
    let mut g = Grads::zeros_for(&layout);
    lin.backward(&store, x.view(), r.view(), &mut g);
    compare(&mut store, &g, |s| projection_loss(&lin.forward(s, x.view()), &r))
}

fn check_attention(rng: &mut ChaCha8Rng) -> Vec<GroupError> {
    let (len, windows, dim) = (4, 2, 6);
    let mut layout = Layout::new();
    let mha = Mha::new(&mut layout, "attn", dim, 2);
    let mut store = jittered_store(&layout, rng);
    let x = random_matrix(rng, len * windows, dim);
    let r = random_matrix(rng, len * windows, dim);
    let (_, cache) = mha.forward(&store, x.view(), len);
    let mut g = Grads::zeros_for(&layout);
    mha.backward(&store, &cache, r.view(), len, &mut g);
    compare(&mut store, &g, |s| projection_loss(&mha.forward(s, x.view(), len).0, &r))
}

fn check_transformer(rng: &mut ChaCha8Rng) -> Vec<GroupError> {
    let (len, windows) = (4, 2);
    let cfg = TransformerConfig {
        n_layers: 1,
        n_heads: 2,
        model_dim: 4,
        ff_dim: 8,
    };
    let mut layout = Layout::new();
    let layer = TransformerLayer::new(&mut layout, "layer", &cfg);
    let mut store = jittered_store(&layout, rng);
    let x = random_matrix(rng, len * windows, 4);
    let r = random_matrix(rng, len * windows, 4);
    let (_, cache) = layer.forward(&store, x.view(), len);
    let mut g = Grads::zeros_for(&layout);
    layer.backward(&store, &cache, r.view(), len, &mut g);
    compare(&mut store, &g, |s| projection_loss(&layer.forward(s, x.view(), len).0, &r))
}

fn check_lstm(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let (len, batch) = (5, 2);
    let cfg = LstmStackConfig {
        n_layers: 2,
        hidden: 3,
        input_dim: 4,
    };
    let mut layout = Layout::new();
    let lstm = LstmStack::new(&mut layout, "lstm", &cfg);
    let mut store = jittered_store(&layout, rng);
    let x = random_matrix(rng, len * batch, 4);
    let r = random_matrix(rng, len * batch, 3);
    let (_, cache) = lstm.forward(&store, x.view(), len, batch)?;
    let mut g = Grads::zeros_for(&layout);
    lstm.backward(&store, &cache, r.view(), &mut g);
    Ok(compare(&mut store, &g, |s| {
        projection_loss(&lstm.forward(s, x.view(), len, batch).expect("finite").0, &r)
    }))
}

fn check_nt_xent(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let mut layout = Layout::new();
    layout.add("embeddings", &[6, 4], crate::nn::Init::Zeros);
    let mut store = ParameterStore::<f64>::init(&layout, 0);
    let id = store.id("embeddings").expect("declared");
    for v in &mut store.value_mut(id).data {
        *v = rng.random_range(-1.0..1.0);
    }
    let (_, grad) = nt_xent_loss(store.mat(id), 0.5)?;
    let mut g = Grads::zeros_for(&layout);
    g.mat_mut(id).assign(&grad);
    Ok(compare(&mut store, &g, |s| nt_xent_loss(s.mat(id), 0.5).expect("valid").0))
}

fn check_style_encoder(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let cfg = StyleEncoderConfig {
        window: 5,
        style_dim: 4,
        n_layers: 2,
        n_heads: 2,
        ff_dim: 8,
    };
    let enc = StyleEncoder::new(cfg)?;
    let mut store = jittered_store(enc.layout(), rng);
    let x = random_matrix(rng, 6 * cfg.window, 7);
    let tau = 0.5;
    let (emb, cache) = enc.forward(&store, x.view())?;
    let (_, d_emb) = nt_xent_loss(emb.view(), tau)?;
    let mut g = Grads::zeros_for(enc.layout());
    enc.backward(&store, &cache, d_emb.view(), &mut g);
    Ok(compare(&mut store, &g, |s| {
        let (e, _) = enc.forward(s, x.view()).expect("finite");
        nt_xent_loss(e.view(), tau).expect("valid").0
    }))
}

fn check_generator(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let cfg = GenerationConfig {
        past: 6,
        future: 3,
        model_dim: 3,
        style_dim: 2,
        lambda: 0.5,
        lstm_layers: 2,
        lstm_hidden: 4,
        feature_dim: 3,
    };
    let batch = 2;
    let gen = Generator::new(cfg)?;
    let mut store = jittered_store(gen.layout(), rng);
    let audio = random_matrix(rng, cfg.past * batch, cfg.feature_dim);
    let motion = random_matrix(rng, cfg.past * batch, 7);
    let style = random_matrix(rng, batch, cfg.style_dim);
    let gt = random_matrix(rng, cfg.future * batch, 7);
    let (pred, cache) = gen.forward(&store, audio.view(), motion.view(), style.view(), batch)?;
    let (_, dpred) = batch_loss(pred.view(), gt.view(), batch, cfg.lambda)?;
    let mut g = Grads::zeros_for(gen.layout());
    gen.backward(&store, &cache, dpred.view(), &mut g);
    Ok(compare(&mut store, &g, |s| {
        let (p, _) = gen
            .forward(s, audio.view(), motion.view(), style.view(), batch)
            .expect("finite");
        batch_loss(p.view(), gt.view(), batch, cfg.lambda).expect("shapes").0.total
    }))
}

/// Compares analytic and central-difference gradients (`h = 1e-5`, f64) for
/// every parameter group of a toy-sized instance of `module`.
pub fn finite_difference_check(module: GradCheckModule, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = match module {
        GradCheckModule::Linear => check_linear(&mut rng),
        GradCheckModule::Attention => check_attention(&mut rng),
        GradCheckModule::TransformerLayer => check_transformer(&mut rng),
        GradCheckModule::Lstm => check_lstm(&mut rng)?,
        GradCheckModule::NtXent => check_nt_xent(&mut rng)?,
        GradCheckModule::StyleEncoder => check_style_encoder(&mut rng)?,
        GradCheckModule::Generator => check_generator(&mut rng)?,
    };
    let max_rel_err = groups.iter().map(|g| g.rel_err).fold(0.0, f64::max);
    let threshold = module.threshold();
    Ok(GradCheckReport {
        module,
        seed,
        groups,
        max_rel_err,
        threshold,
        passed: max_rel_err < threshold,
    })
}
