use ndarray::{s, Array2, ArrayView2, Axis};

use super::{Grads, Layout, Linear, ParameterStore, Scalar};

/// Multi-head scaled dot-product self-attention over window-major batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Mha {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct MhaCache<S> {
    x: Array2<S>,
    q: Array2<S>,
    k: Array2<S>,
    v: Array2<S>,
    ctx: Array2<S>,
    /// Row-stochastic attention matrices, indexed `window * heads + head`.
    pub probs: Vec<Array2<S>>,
}

impl Mha {
    pub fn new(layout: &mut Layout, name: &str, dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim % heads == 0, "model width {dim} not divisible by {heads} heads");
        Mha {
            q: Linear::new(layout, &format!("{name}.q"), dim, dim),
            k: Linear::new(layout, &format!("{name}.k"), dim, dim),
            v: Linear::new(layout, &format!("{name}.v"), dim, dim),
            out: Linear::new(layout, &format!("{name}.out"), dim, dim),
            heads,
            dim,
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// `x` holds `x.nrows() / len` windows of `len` rows each.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: ArrayView2<'_, S>,
        len: usize,
    ) -> (Array2<S>, MhaCache<S>) {
        let windows = x.nrows() / len;
        let dh = self.head_dim();
        let scale = S::one() / S::lit(dh as f64).sqrt();
        let q = self.q.forward(store, x);
        let k = self.k.forward(store, x);
        let v = self.v.forward(store, x);
        let mut ctx = Array2::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(windows * self.heads);
        for w in 0..windows {
            let rows = w * len..(w + 1) * len;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut p = qh.dot(&kh.t());
                p.mapv_inplace(|e| e * scale);
                softmax_rows(&mut p);
                ctx.slice_mut(s![rows.clone(), cols]).assign(&p.dot(&vh));
                probs.push(p);
            }
        }
        let y = self.out.forward(store, ctx.view());
        (
            y,
            MhaCache {
                x: x.to_owned(),
                q,
                k,
                v,
                ctx,
                probs,
            },
        )
    }

    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        cache: &MhaCache<S>,
        dy: ArrayView2<'_, S>,
        len: usize,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        let windows = dy.nrows() / len;
        let dh = self.head_dim();
        let scale = S::one() / S::lit(dh as f64).sqrt();
        let dctx = self.out.backward(store, cache.ctx.view(), dy, grads);
        let mut dq = Array2::zeros(dy.raw_dim());
        let mut dk = Array2::zeros(dy.raw_dim());
        let mut dv = Array2::zeros(dy.raw_dim());
        for w in 0..windows {
            let rows = w * len..(w + 1) * len;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let p = &cache.probs[w * self.heads + h];
                let qh = cache.q.slice(s![rows.clone(), cols.clone()]);
                let kh = cache.k.slice(s![rows.clone(), cols.clone()]);
                let vh = cache.v.slice(s![rows.clone(), cols.clone()]);
                let dch = dctx.slice(s![rows.clone(), cols.clone()]);
                let dp = dch.dot(&vh.t());
                dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&p.t().dot(&dch));
                // softmax backward: dS = P ⊙ (dP − rowsum(dP ⊙ P))
                let inner = (&dp * p).sum_axis(Axis(1));
                let mut ds = dp;
                for (mut row, (prow, c)) in ds.rows_mut().into_iter().zip(p.rows().into_iter().zip(inner.iter())) {
                    for (d, &pv) in row.iter_mut().zip(prow.iter()) {
                        *d = pv * (*d - *c) * scale;
                    }
                }
                dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
                dk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qh));
            }
        }
        let x = cache.x.view();
        let mut dx = self.q.backward(store, x, dq.view(), grads);
        dx += &self.k.backward(store, x, dk.view(), grads);
        dx += &self.v.backward(store, x, dv.view(), grads);
        dx
    }
}

fn softmax_rows<S: Scalar>(m: &mut Array2<S>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}
