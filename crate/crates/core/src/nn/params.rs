use std::collections::HashMap;

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major tensor of rank 1 to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::Shape(format!("tensor rank {} not in 1..=3", shape.len())));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows/cols of the matrix view: rank 1 is a single row, rank 3 folds the
    /// leading two axes.
    pub fn mat_dims(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => (self.shape[0] * self.shape[1], self.shape[2]),
        }
    }

    pub fn mat(&self) -> ArrayView2<'_, S> {
        ArrayView2::from_shape(self.mat_dims(), &self.data).expect("tensor shape invariant")
    }

    pub fn mat_mut(&mut self) -> ArrayViewMut2<'_, S> {
        let dims = self.mat_dims();
        ArrayViewMut2::from_shape(dims, &mut self.data).expect("tensor shape invariant")
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = S::zero());
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in ±1/√fan_in.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
    /// LSTM bias vector of width 4·hidden: forget-gate block set to 1, rest 0.
    ForgetBias { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Ordered list of parameter declarations. Layers register their parameters here
/// at construction time; the store is materialized from it afterwards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    specs: Vec<ParamSpec>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let name = name.into();
        assert!(
            self.specs.iter().all(|s| s.name != name),
            "duplicate parameter name {name}"
        );
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
        ParamId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// Gradient buffers laid out like a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<S> {
    slots: Vec<Tensor<S>>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_for(layout: &Layout) -> Self {
        Grads {
            slots: layout.specs.iter().map(|s| Tensor::zeros(&s.shape)).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.slots[id.0]
    }

    pub fn mat_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, S> {
        self.slots[id.0].mat_mut()
    }

    pub fn zero(&mut self) {
        self.slots.iter_mut().for_each(Tensor::fill_zero);
    }

    pub fn slots(&self) -> &[Tensor<S>] {
        &self.slots
    }

    pub fn global_norm(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| {
                let v = v.as_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: S) {
        for t in &mut self.slots {
            t.data.iter_mut().for_each(|v| *v = *v * k);
        }
    }
}

/// Named trainable arrays with gradient slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<S> {
    layout: Layout,
    values: Vec<Tensor<S>>,
    grads: Grads<S>,
    trainable: Vec<bool>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParameterStore<S> {
    /// Materializes a layout. Weights are drawn in declaration order from a
    /// ChaCha8 stream, so a seed fully determines the store.
    pub fn init(layout: &Layout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = layout
            .specs
            .iter()
            .map(|spec| {
                let mut t = Tensor::zeros(&spec.shape);
                match spec.init {
                    Init::Uniform { fan_in } => {
                        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                        for v in &mut t.data {
                            *v = S::lit(rng.random_range(-bound..bound));
                        }
                    }
                    Init::Zeros => {}
                    Init::Ones => t.data.iter_mut().for_each(|v| *v = S::one()),
                    Init::ForgetBias { hidden } => {
                        for v in &mut t.data[hidden..2 * hidden] {
                            *v = S::one();
                        }
                    }
                }
                t
            })
            .collect();
        Self::from_values(layout, values).expect("layout-shaped values")
    }

    pub fn from_values(layout: &Layout, values: Vec<Tensor<S>>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape(format!(
                "store expects {} tensors, got {}",
                layout.len(),
                values.len()
            )));
        }
        for (spec, v) in layout.specs.iter().zip(&values) {
            if spec.shape != v.shape {
                return Err(Error::Shape(format!(
                    "tensor {}: expected shape {:?}, got {:?}",
                    spec.name, spec.shape, v.shape
                )));
            }
        }
        let index = layout
            .specs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        Ok(ParameterStore {
            grads: Grads::zeros_for(layout),
            trainable: vec![true; values.len()],
            layout: layout.clone(),
            values,
            index,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.layout.specs[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, S> {
        self.values[id.0].mat()
    }

    pub fn values(&self) -> &[Tensor<S>] {
        &self.values
    }

    pub fn grads(&self) -> &Grads<S> {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Grads<S> {
        &mut self.grads
    }

    /// Moves the gradient buffer out so it can be filled while the values are
    /// borrowed immutably; pair with [`ParameterStore::put_grads`].
    pub fn take_grads(&mut self) -> Grads<S> {
        let empty = Grads { slots: Vec::new() };
        std::mem::replace(&mut self.grads, empty)
    }

    pub fn put_grads(&mut self, grads: Grads<S>) {
        assert_eq!(grads.slots.len(), self.values.len(), "gradient layout mismatch");
        self.grads = grads;
    }

    pub fn zero_grads(&mut self) {
        self.grads.zero();
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, on: bool) {
        self.trainable[id.0] = on;
    }

    pub fn freeze(&mut self) {
        self.trainable.iter_mut().for_each(|t| *t = false);
    }

    pub fn num_elements(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParameterStore<T> {
        let values = self.values.iter().map(Tensor::cast).collect();
        let mut out = ParameterStore::from_values(&self.layout, values).expect("same layout");
        out.trainable = self.trainable.clone();
        out
    }

    /// Flat view of all parameter values in declaration order.
    pub fn flatten(&self) -> Vec<S> {
        self.values.iter().flat_map(|t| t.data.iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Layout {
        let mut l = Layout::new();
        l.add("w", &[100, 100], Init::Uniform { fan_in: 100 });
        l.add("b", &[12], Init::ForgetBias { hidden: 3 });
        l.add("g", &[4], Init::Ones);
        l
    }

    #[test]
    fn same_seed_same_store() {
        let a = ParameterStore::<f32>::init(&layout(), 11);
        let b = ParameterStore::<f32>::init(&layout(), 11);
        assert_eq!(a.flatten(), b.flatten());
        let c = ParameterStore::<f32>::init(&layout(), 12);
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn forget_bias_block_is_one() {
        let s = ParameterStore::<f64>::init(&layout(), 0);
        let b = &s.value(s.id("b").unwrap()).data;
        assert_eq!(b, &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn uniform_std_matches_theory() {
        let s = ParameterStore::<f64>::init(&layout(), 3);
        let w = &s.value(s.id("w").unwrap()).data;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        // uniform(-a, a) has std a/√3
        let theory = 0.1 / 3f64.sqrt();
        assert!((std - theory).abs() < 0.2 * theory, "std {std} vs {theory}");
        assert!(w.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let l = layout();
        let mut vals: Vec<Tensor<f32>> = l.specs().iter().map(|s| Tensor::zeros(&s.shape)).collect();
        vals[1] = Tensor::zeros(&[11]);
        let err = ParameterStore::from_values(&l, vals).unwrap_err();
        assert!(err.to_string().contains("tensor b"));
    }

    #[test]
    fn grads_match_value_shapes() {
        let s = ParameterStore::<f32>::init(&layout(), 0);
        for id in s.ids() {
            assert_eq!(s.grads().get(id).shape, s.value(id).shape);
        }
    }
}
