use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::{Grads, Init, Layout, ParamId, ParameterStore, Scalar};

const LN_EPS: f64 = 1e-5;

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<S> {
    xhat: Array2<S>,
    inv_std: Array1<S>,
}

impl LayerNorm {
    pub fn new(layout: &mut Layout, name: &str, dim: usize) -> Self {
        let gain = layout.add(format!("{name}.gain"), &[dim], Init::Ones);
        let bias = layout.add(format!("{name}.bias"), &[dim], Init::Zeros);
        LayerNorm { gain, bias, dim }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: ArrayView2<'_, S>,
    ) -> (Array2<S>, LayerNormCache<S>) {
        let n = S::lit(self.dim as f64);
        let mut xhat = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, istd) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| *v * *v).sum::<S>() / n;
            let s = S::one() / (var + S::lit(LN_EPS)).sqrt();
            row.mapv_inplace(|v| v * s);
            *istd = s;
        }
        let gain = store.mat(self.gain);
        let bias = store.mat(self.bias);
        let y = &xhat * &gain + &bias;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        cache: &LayerNormCache<S>,
        dy: ArrayView2<'_, S>,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        {
            let mut dg = grads.mat_mut(self.gain);
            dg += &(&dy * &cache.xhat).sum_axis(Axis(0));
        }
        {
            let mut db = grads.mat_mut(self.bias);
            db += &dy.sum_axis(Axis(0));
        }
        let gain = store.mat(self.gain);
        let dxhat = &dy * &gain;
        let n = S::lit(self.dim as f64);
        let mut dx = Array2::zeros(dy.raw_dim());
        Zip::from(dx.rows_mut())
            .and(dxhat.rows())
            .and(cache.xhat.rows())
            .and(&cache.inv_std)
            .for_each(|mut out, dxh, xh, &istd| {
                let mean_dxh = dxh.sum() / n;
                let mean_dxh_xh = dxh.iter().zip(xh.iter()).map(|(a, b)| *a * *b).sum::<S>() / n;
                for ((o, &a), &b) in out.iter_mut().zip(dxh.iter()).zip(xh.iter()) {
                    *o = istd * (a - mean_dxh - b * mean_dxh_xh);
                }
            });
        dx
    }
}
