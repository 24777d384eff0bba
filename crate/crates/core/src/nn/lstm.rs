use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_finite, sigmoid, Grads, Init, Layout, ParamId, ParameterStore, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmStackConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub input_dim: usize,
}

impl LstmStackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.hidden == 0 || self.input_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "lstm needs n_layers, hidden and input_dim >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// One recurrent layer. Gate blocks in the 4·H axis are ordered i, f, g, o.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub h0: ParamId,
    pub c0: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
struct LayerCache<S> {
    input: Array2<S>,
    gates: Array2<S>,
    c: Array2<S>,
    tanh_c: Array2<S>,
    h: Array2<S>,
}

#[derive(Debug, Clone)]
pub struct LstmCache<S> {
    layers: Vec<LayerCache<S>>,
    len: usize,
    batch: usize,
}

impl LstmLayer {
    fn new(layout: &mut Layout, name: &str, input_dim: usize, hidden: usize) -> Self {
        let g = 4 * hidden;
        LstmLayer {
            wx: layout.add(format!("{name}.wx"), &[input_dim, g], Init::Uniform { fan_in: input_dim }),
            wh: layout.add(format!("{name}.wh"), &[hidden, g], Init::Uniform { fan_in: hidden }),
            b: layout.add(format!("{name}.bias"), &[g], Init::ForgetBias { hidden }),
            h0: layout.add(format!("{name}.h0"), &[hidden], Init::Zeros),
            c0: layout.add(format!("{name}.c0"), &[hidden], Init::Zeros),
            input_dim,
            hidden,
        }
    }

    fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: ArrayView2<'_, S>,
        len: usize,
        batch: usize,
    ) -> LayerCache<S> {
        let hd = self.hidden;
        let mut gates = x.dot(&store.mat(self.wx));
        gates += &store.mat(self.b);
        let wh = store.mat(self.wh);
        let mut c = Array2::zeros((len * batch, hd));
        let mut tanh_c = Array2::zeros((len * batch, hd));
        let mut h = Array2::zeros((len * batch, hd));
        let h0 = store.mat(self.h0).broadcast((batch, hd)).unwrap().to_owned();
        let c0 = store.mat(self.c0).broadcast((batch, hd)).unwrap().to_owned();
        for t in 0..len {
            let rows = t * batch..(t + 1) * batch;
            let rec = if t == 0 {
                h0.dot(&wh)
            } else {
                h.slice(s![(t - 1) * batch..t * batch, ..]).dot(&wh)
            };
            let mut a = gates.slice_mut(s![rows.clone(), ..]);
            a += &rec;
            for r in 0..batch {
                let row = t * batch + r;
                for j in 0..hd {
                    let i_g = sigmoid(gates[[row, j]]);
                    let f_g = sigmoid(gates[[row, hd + j]]);
                    let g_g = gates[[row, 2 * hd + j]].tanh();
                    let o_g = sigmoid(gates[[row, 3 * hd + j]]);
                    gates[[row, j]] = i_g;
                    gates[[row, hd + j]] = f_g;
                    gates[[row, 2 * hd + j]] = g_g;
                    gates[[row, 3 * hd + j]] = o_g;
                    let c_prev = if t == 0 { c0[[r, j]] } else { c[[row - batch, j]] };
                    let ct = f_g * c_prev + i_g * g_g;
                    let tc = ct.tanh();
                    c[[row, j]] = ct;
                    tanh_c[[row, j]] = tc;
                    h[[row, j]] = o_g * tc;
                }
            }
        }
        LayerCache {
            input: x.to_owned(),
            gates,
            c,
            tanh_c,
            h,
        }
    }

    fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        cache: &LayerCache<S>,
        dh_out: ArrayView2<'_, S>,
        len: usize,
        batch: usize,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        let hd = self.hidden;
        let wh = store.mat(self.wh);
        let c0 = store.mat(self.c0);
        let mut da = Array2::<S>::zeros((len * batch, 4 * hd));
        let mut dh_next = Array2::<S>::zeros((batch, hd));
        let mut dc_next = Array2::<S>::zeros((batch, hd));
        for t in (0..len).rev() {
            for r in 0..batch {
                let row = t * batch + r;
                for j in 0..hd {
                    let i_g = cache.gates[[row, j]];
                    let f_g = cache.gates[[row, hd + j]];
                    let g_g = cache.gates[[row, 2 * hd + j]];
                    let o_g = cache.gates[[row, 3 * hd + j]];
                    let tc = cache.tanh_c[[row, j]];
                    let c_prev = if t == 0 { c0[[0, j]] } else { cache.c[[row - batch, j]] };
                    let dh = dh_out[[row, j]] + dh_next[[r, j]];
                    let d_o = dh * tc;
                    let dc = dh * o_g * (S::one() - tc * tc) + dc_next[[r, j]];
                    let di = dc * g_g;
                    let dg = dc * i_g;
                    let df = dc * c_prev;
                    dc_next[[r, j]] = dc * f_g;
                    da[[row, j]] = di * i_g * (S::one() - i_g);
                    da[[row, hd + j]] = df * f_g * (S::one() - f_g);
                    da[[row, 2 * hd + j]] = dg * (S::one() - g_g * g_g);
                    da[[row, 3 * hd + j]] = d_o * o_g * (S::one() - o_g);
                }
            }
            let da_t = da.slice(s![t * batch..(t + 1) * batch, ..]);
            dh_next = da_t.dot(&wh.t());
        }
        // previous hidden states, with h0 broadcast in front
        let mut h_prev = Array2::<S>::zeros((len * batch, hd));
        h_prev
            .slice_mut(s![0..batch, ..])
            .assign(&store.mat(self.h0).broadcast((batch, hd)).unwrap());
        if len > 1 {
            h_prev
                .slice_mut(s![batch.., ..])
                .assign(&cache.h.slice(s![..(len - 1) * batch, ..]));
        }
        {
            let mut dwh = grads.mat_mut(self.wh);
            ndarray::linalg::general_mat_mul(S::one(), &h_prev.t(), &da, S::one(), &mut dwh);
        }
        {
            let mut dwx = grads.mat_mut(self.wx);
            ndarray::linalg::general_mat_mul(S::one(), &cache.input.t(), &da, S::one(), &mut dwx);
        }
        {
            let mut db = grads.mat_mut(self.b);
            db += &da.sum_axis(Axis(0));
        }
        {
            let mut dh0 = grads.mat_mut(self.h0);
            dh0 += &dh_next.sum_axis(Axis(0));
        }
        {
            let mut dc0 = grads.mat_mut(self.c0);
            dc0 += &dc_next.sum_axis(Axis(0));
        }
        da.dot(&store.mat(self.wx).t())
    }
}

/// Stack of LSTM layers with trainable initial states. Layer `l` consumes
/// layer `l-1`'s hidden sequence; the top layer's hidden sequence is returned.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
    pub cfg: LstmStackConfig,
}

impl LstmStack {
    pub fn new(layout: &mut Layout, name: &str, cfg: &LstmStackConfig) -> Self {
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let input = if l == 0 { cfg.input_dim } else { cfg.hidden };
                LstmLayer::new(layout, &format!("{name}.layer{l}"), input, cfg.hidden)
            })
            .collect();
        LstmStack { layers, cfg: *cfg }
    }

    /// `x` is time-major: row `t * batch + b`.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: ArrayView2<'_, S>,
        len: usize,
        batch: usize,
    ) -> Result<(Array2<S>, LstmCache<S>)> {
        if x.nrows() != len * batch || x.ncols() != self.cfg.input_dim {
            return Err(Error::Shape(format!(
                "lstm input {:?}, expected ({}, {})",
                x.dim(),
                len * batch,
                self.cfg.input_dim
            )));
        }
        let mut caches: Vec<LayerCache<S>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { caches[l - 1].h.view() };
            let c = layer.forward(store, input, len, batch);
            caches.push(c);
        }
        let top = caches.last().expect("n_layers >= 1");
        check_finite("lstm cell state", top.c.view())?;
        let out = top.h.clone();
        Ok((
            out,
            LstmCache {
                layers: caches,
                len,
                batch,
            },
        ))
    }

    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        cache: &LstmCache<S>,
        dh: ArrayView2<'_, S>,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        let mut d = dh.to_owned();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            d = layer.backward(store, lc, d.view(), cache.len, cache.batch, grads);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_parameters_give_zero_output() {
        let cfg = LstmStackConfig {
            n_layers: 2,
            hidden: 3,
            input_dim: 4,
        };
        let mut l = Layout::new();
        let stack = LstmStack::new(&mut l, "lstm", &cfg);
        let mut s = ParameterStore::<f64>::init(&l, 0);
        for id in s.ids().collect::<Vec<_>>() {
            s.value_mut(id).fill_zero();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((5 * 2, 4), |_| rng.random_range(-1.0..1.0));
        let (y, _) = stack.forward(&s, x.view(), 5, 2).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let cfg = LstmStackConfig {
            n_layers: 1,
            hidden: 1,
            input_dim: 1,
        };
        let mut l = Layout::new();
        let stack = LstmStack::new(&mut l, "lstm", &cfg);
        let mut s = ParameterStore::<f64>::init(&l, 0);
        let layer = &stack.layers[0];
        s.value_mut(layer.wx).data = vec![0.5, -0.25, 1.0, 0.75];
        s.value_mut(layer.wh).data = vec![0.1, 0.2, -0.3, 0.4];
        s.value_mut(layer.b).data = vec![0.0, 1.0, 0.1, -0.2];
        s.value_mut(layer.h0).data = vec![0.5];
        s.value_mut(layer.c0).data = vec![-0.4];
        let x = ndarray::array![[2.0]];
        let (y, _) = stack.forward(&s, x.view(), 1, 1).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * 2.0 + 0.1 * 0.5);
        let f = sig(-0.25 * 2.0 + 0.2 * 0.5 + 1.0);
        let g = (1.0f64 * 2.0 - 0.3 * 0.5 + 0.1).tanh();
        let o = sig(0.75 * 2.0 + 0.4 * 0.5 - 0.2);
        let c = f * -0.4 + i * g;
        let h = o * c.tanh();
        assert!((y[[0, 0]] - h).abs() < 1e-14);
    }

    #[test]
    fn long_rollout_stays_finite() {
        let cfg = LstmStackConfig {
            n_layers: 2,
            hidden: 8,
            input_dim: 3,
        };
        let mut l = Layout::new();
        let stack = LstmStack::new(&mut l, "lstm", &cfg);
        let s = ParameterStore::<f32>::init(&l, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((1000, 3), |_| rng.random_range(-1.0f32..1.0));
        let (y, _) = stack.forward(&s, x.view(), 1000, 1).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_width_is_shape_error() {
        let cfg = LstmStackConfig {
            n_layers: 1,
            hidden: 2,
            input_dim: 3,
        };
        let mut l = Layout::new();
        let stack = LstmStack::new(&mut l, "lstm", &cfg);
        let s = ParameterStore::<f64>::init(&l, 0);
        let x = Array2::zeros((4, 2));
        assert!(stack.forward(&s, x.view(), 4, 1).is_err());
    }
}
