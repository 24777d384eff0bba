use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, OptimizerState};
use super::TrainConfig;
use crate::container::TensorFile;
use crate::error::{Error, Result};
use crate::generator::GenerationConfig;
use crate::motion::NormalizationStats;
use crate::nn::{Layout, ParameterStore, Tensor};
use crate::style::StyleEncoderConfig;

pub const STYLE_KIND: &str = "style_encoder";
pub const GENERATOR_KIND: &str = "generator";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub style: Option<StyleEncoderConfig>,
    pub generator: Option<GenerationConfig>,
    pub stats: NormalizationStats,
    pub train: TrainConfig,
    pub seed: u64,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Epochs completed.
    pub epoch: usize,
    pub precision: String,
}

/// Named `f32` tensors plus the configuration needed to rebuild the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: CheckpointMeta,
    pub file: TensorFile,
}

const ADAM_M: &str = "adam.m/";
const ADAM_V: &str = "adam.v/";

impl Checkpoint {
    pub fn new(kind: &str, meta: CheckpointMeta) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            meta,
            file: TensorFile::new(kind, serde_json::Value::Null),
        }
    }

    pub fn add_store(&mut self, store: &ParameterStore<f32>) {
        for id in store.ids() {
            let t = store.value(id);
            self.file
                .push(store.name(id), t.shape.clone(), t.data.clone(), store.is_trainable(id));
        }
    }

    pub fn add_optimizer(&mut self, store: &ParameterStore<f32>, state: &OptimizerState<f32>) {
        for (i, id) in store.ids().enumerate() {
            let name = store.name(id);
            self.file
                .push(&format!("{ADAM_M}{name}"), state.m[i].shape.clone(), state.m[i].data.clone(), false);
            self.file
                .push(&format!("{ADAM_V}{name}"), state.v[i].shape.clone(), state.v[i].data.clone(), false);
        }
    }

    fn tensor(&self, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
        let t = self
            .file
            .get(name)
            .ok_or_else(|| Error::Format(format!("tensor {name} missing from checkpoint")))?;
        if t.shape != shape {
            return Err(Error::Shape(format!(
                "tensor {name}: checkpoint shape {:?}, model expects {:?}",
                t.shape, shape
            )));
        }
        Tensor::from_vec(&t.shape, t.data.clone())
    }

    /// Rebuilds the parameters named in `layout`, keeping stored trainable flags.
    pub fn restore_store(&self, layout: &Layout) -> Result<ParameterStore<f32>> {
        let values = layout
            .specs()
            .iter()
            .map(|s| self.tensor(&s.name, &s.shape))
            .collect::<Result<Vec<_>>>()?;
        let mut store = ParameterStore::from_values(layout, values)?;
        for id in store.ids().collect::<Vec<_>>() {
            let trainable = self.file.get(store.name(id)).map(|t| t.trainable).unwrap_or(true);
            store.set_trainable(id, trainable);
        }
        Ok(store)
    }

    /// Optimizer moments for `store`, if the checkpoint carries them.
    pub fn restore_optimizer(&self, store: &ParameterStore<f32>, cfg: AdamConfig) -> Result<Option<OptimizerState<f32>>> {
        let first = store.ids().next().map(|id| format!("{ADAM_M}{}", store.name(id)));
        if first.is_none_or(|n| self.file.get(&n).is_none()) {
            return Ok(None);
        }
        let mut state = OptimizerState::new(store, cfg);
        state.step = self.meta.step;
        for (i, id) in store.ids().enumerate() {
            let name = store.name(id);
            let shape = &store.value(id).shape;
            state.m[i] = self.tensor(&format!("{ADAM_M}{name}"), shape)?;
            state.v[i] = self.tensor(&format!("{ADAM_V}{name}"), shape)?;
        }
        Ok(Some(state))
    }

    pub fn to_file(&self) -> Result<TensorFile> {
        let mut f = self.file.clone();
        f.kind = self.kind.clone();
        f.meta = serde_json::to_value(&self.meta)?;
        Ok(f)
    }

    pub fn from_file(file: TensorFile) -> Result<Self> {
        if file.kind != STYLE_KIND && file.kind != GENERATOR_KIND {
            return Err(Error::Format(format!("not a checkpoint (kind {:?})", file.kind)));
        }
        let meta: CheckpointMeta = serde_json::from_value(file.meta.clone())?;
        Ok(Checkpoint {
            kind: file.kind.clone(),
            meta,
            file,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_file()?.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_file(TensorFile::from_bytes(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_file()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(TensorFile::load(path)?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::ConfigMismatch(format!("expected a {kind} checkpoint, got {}", self.kind)));
        }
        Ok(())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
