use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::{gelu, gelu_grad, Grads, LayerNorm, LayerNormCache, Layout, Linear, Mha, MhaCache, ParameterStore, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.model_dim % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model_dim {} not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        if self.ff_dim == 0 {
            return Err(Error::InvalidArgument("ff_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Pre-norm encoder layer: `x + MHA(LN(x))`, then `x + FF(LN(x))` with a GELU
/// feed-forward block.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayer {
    pub ln1: LayerNorm,
    pub attn: Mha,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Debug, Clone)]
pub struct LayerCache<S> {
    ln1: LayerNormCache<S>,
    attn: MhaCache<S>,
    ln2: LayerNormCache<S>,
    ln2_out: Array2<S>,
    ff_pre: Array2<S>,
    ff_act: Array2<S>,
}

impl TransformerLayer {
    pub fn new(layout: &mut Layout, name: &str, cfg: &TransformerConfig) -> Self {
        TransformerLayer {
            ln1: LayerNorm::new(layout, &format!("{name}.ln1"), cfg.model_dim),
            attn: Mha::new(layout, &format!("{name}.attn"), cfg.model_dim, cfg.n_heads),
            ln2: LayerNorm::new(layout, &format!("{name}.ln2"), cfg.model_dim),
            ff1: Linear::new(layout, &format!("{name}.ff1"), cfg.model_dim, cfg.ff_dim),
            ff2: Linear::new(layout, &format!("{name}.ff2"), cfg.ff_dim, cfg.model_dim),
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: ArrayView2<'_, S>,
        len: usize,
    ) -> (Array2<S>, LayerCache<S>) {
        let (n1, ln1) = self.ln1.forward(store, x);
        let (a, attn) = self.attn.forward(store, n1.view(), len);
        let h = &x + &a;
        let (n2, ln2) = self.ln2.forward(store, h.view());
        let ff_pre = self.ff1.forward(store, n2.view());
        let ff_act = ff_pre.mapv(gelu);
        let f = self.ff2.forward(store, ff_act.view());
        let y = h + f;
        (
            y,
            LayerCache {
                ln1,
                attn,
                ln2,
                ln2_out: n2,
                ff_pre,
                ff_act,
            },
        )
    }

    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        cache: &LayerCache<S>,
        dy: ArrayView2<'_, S>,
        len: usize,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        let dact = self.ff2.backward(store, cache.ff_act.view(), dy, grads);
        let mut dpre = dact;
        Zip::from(&mut dpre)
            .and(&cache.ff_pre)
            .for_each(|d, &p| *d = *d * gelu_grad(p));
        let dn2 = self.ff1.backward(store, cache.ln2_out.view(), dpre.view(), grads);
        let mut dh = self.ln2.backward(store, &cache.ln2, dn2.view(), grads);
        dh += &dy;
        let dn1 = self.attn.backward(store, &cache.attn, dh.view(), len, grads);
        let mut dx = self.ln1.backward(store, &cache.ln1, dn1.view(), grads);
        dx += &dh;
        dx
    }

    /// Attention probabilities from a cached forward pass.
    pub fn attention_probs<'a, S>(cache: &'a LayerCache<S>) -> &'a [Array2<S>] {
        &cache.attn.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerStack {
    pub layers: Vec<TransformerLayer>,
    pub cfg: TransformerConfig,
}

pub type TransformerCache<S> = Vec<LayerCache<S>>;

impl TransformerStack {
    pub fn new(layout: &mut Layout, name: &str, cfg: &TransformerConfig) -> Self {
        let layers = (0..cfg.n_layers)
            .map(|i| TransformerLayer::new(layout, &format!("{name}.layer{i}"), cfg))
            .collect();
        TransformerStack { layers, cfg: *cfg }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: ArrayView2<'_, S>,
        len: usize,
    ) -> (Array2<S>, TransformerCache<S>) {
        let mut h = x.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(store, h.view(), len);
            caches.push(c);
            h = y;
        }
        (h, caches)
    }

    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        caches: &TransformerCache<S>,
        dy: ArrayView2<'_, S>,
        len: usize,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        let mut d = dy.to_owned();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            d = layer.backward(store, cache, d.view(), len, grads);
        }
        d
    }
}
