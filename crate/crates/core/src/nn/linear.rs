use ndarray::{Array2, ArrayView2, Axis};

use super::{Grads, Init, Layout, ParamId, ParameterStore, Scalar};

/// Affine map `y = xW + b` applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(layout: &mut Layout, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = layout.add(
            format!("{name}.weight"),
            &[in_dim, out_dim],
            Init::Uniform { fan_in: in_dim },
        );
        let b = layout.add(format!("{name}.bias"), &[out_dim], Init::Zeros);
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<S: Scalar>(&self, store: &ParameterStore<S>, x: ArrayView2<'_, S>) -> Array2<S> {
        debug_assert_eq!(x.ncols(), self.in_dim);
        let mut y = x.dot(&store.mat(self.w));
        y += &store.mat(self.b);
        y
    }

    /// Accumulates dW and db; returns dx.
    pub fn backward<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        x: ArrayView2<'_, S>,
        dy: ArrayView2<'_, S>,
        grads: &mut Grads<S>,
    ) -> Array2<S> {
        {
            let mut dw = grads.mat_mut(self.w);
            ndarray::linalg::general_mat_mul(S::one(), &x.t(), &dy, S::one(), &mut dw);
        }
        {
            let mut db = grads.mat_mut(self.b);
            db += &dy.sum_axis(Axis(0));
        }
        dy.dot(&store.mat(self.w).t())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut l = Layout::new();
        let lin = Linear::new(&mut l, "p", 3, 3);
        let mut s = ParameterStore::<f64>::init(&l, 0);
        s.value_mut(lin.w).mat_mut().assign(&Array2::eye(3));
        s.value_mut(lin.b).fill_zero();
        let x = array![[1.0, -2.0, 0.5], [3.0, 0.0, 7.0]];
        assert_eq!(lin.forward(&s, x.view()), x);
    }

    #[test]
    fn hand_case() {
        let mut l = Layout::new();
        let lin = Linear::new(&mut l, "p", 2, 2);
        let mut s = ParameterStore::<f64>::init(&l, 0);
        s.value_mut(lin.w).mat_mut().assign(&array![[1.0, 0.0], [0.0, 1.0]]);
        s.value_mut(lin.b).data = vec![3.0, 4.0];
        let y = lin.forward(&s, array![[1.0, 2.0]].view());
        assert_eq!(y, array![[4.0, 6.0]]);
    }

    #[test]
    fn weight_grad_of_sum_is_column_sums_of_x() {
        let mut l = Layout::new();
        let lin = Linear::new(&mut l, "p", 3, 2);
        let s = ParameterStore::<f64>::init(&l, 5);
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]];
        let mut g = Grads::zeros_for(&l);
        let dy = Array2::ones((2, 2));
        lin.backward(&s, x.view(), dy.view(), &mut g);
        let dw = g.get(lin.w).mat().to_owned();
        let colsum = x.sum_axis(Axis(0));
        for i in 0..3 {
            for j in 0..2 {
                assert!((dw[[i, j]] - colsum[i]).abs() < 1e-12);
            }
        }
        assert_eq!(g.get(lin.b).data, vec![2.0, 2.0]);
    }
}
