//! Named parameters, their gradients, Adam with decoupled weight decay and
//! global-norm clipping, and the JSON parameter checkpoint.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Matrix;

/// Schema tag written into every parameter checkpoint.
pub const CHECKPOINT_SCHEMA: &str = "point-set-diffusion/params/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a parameter is initialized by [`ParameterStore::init`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Glorot-uniform over (fan_in, fan_out) = (rows, cols).
    Glorot,
    Uniform(f64),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Parameter {
    name: String,
    value: Matrix,
    init: Init,
    m: Matrix,
    v: Matrix,
}

/// All trainable parameters of a model plus Adam moment state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; its value starts at the init's constant (or 0).
    pub fn add(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
    ) -> ParamId {
        let fill = match init {
            Init::Constant(c) => c,
            _ => 0.0,
        };
        self.params.push(Parameter {
            name: name.into(),
            value: Matrix::filled(rows, cols, fill),
            init,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
        });
        ParamId(self.params.len() - 1)
    }

    /// Draw fresh values for every parameter and reset optimizer state.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for p in &mut self.params {
            let (rows, cols) = p.value.shape();
            match p.init {
                Init::Glorot => {
                    let a = (6.0 / (rows + cols) as f64).sqrt();
                    p.value
                        .data_mut()
                        .iter_mut()
                        .for_each(|v| *v = rng.random_range(-a..a));
                }
                Init::Uniform(a) => {
                    p.value
                        .data_mut()
                        .iter_mut()
                        .for_each(|v| *v = rng.random_range(-a..a));
                }
                Init::Constant(c) => p.value.data_mut().iter_mut().for_each(|v| *v = c),
            }
            p.m = Matrix::zeros(rows, cols);
            p.v = Matrix::zeros(rows, cols);
        }
        self.step = 0;
    }

    /// Add U(-scale, scale) noise to every value, including zero-initialized
    /// ones. Used to make gradient checks exercise every path.
    pub fn perturb<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: f64) {
        for p in &mut self.params {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-scale..scale));
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn first_moment(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].m
    }

    pub fn second_moment(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].v
    }

    /// Number of Adam updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.to_string(),
            params: self
                .params
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        CheckpointEntry {
                            shape: [p.value.rows(), p.value.cols()],
                            values: p.value.data().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Overwrite parameter values from a checkpoint with matching names and
    /// shapes. Optimizer state is reset.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.validate()?;
        if ckpt.params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} parameters, model has {}",
                ckpt.params.len(),
                self.params.len()
            )));
        }
        for p in &mut self.params {
            let entry = ckpt
                .params
                .get(&p.name)
                .ok_or_else(|| Error::Shape(format!("checkpoint lacks parameter {:?}", p.name)))?;
            if entry.shape != [p.value.rows(), p.value.cols()] {
                return Err(Error::Shape(format!(
                    "parameter {:?}: checkpoint shape {:?}, model shape {:?}",
                    p.name,
                    entry.shape,
                    p.value.shape()
                )));
            }
            p.value = Matrix::from_vec(entry.shape[0], entry.shape[1], entry.values.clone())?;
            p.m = Matrix::zeros(entry.shape[0], entry.shape[1]);
            p.v = Matrix::zeros(entry.shape[0], entry.shape[1]);
        }
        self.step = 0;
        Ok(())
    }
}

/// Per-parameter gradients, shape-matched to a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Gradients {
            grads: store
                .params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Matrix) {
        self.grads[id.0].add_assign(g);
    }

    /// self += other, parameter by parameter.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Euclidean norm over all parameters jointly.
    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Matrix::sum_sq).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads
            .iter()
            .all(|g| g.data().iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            weight_decay: 1e-4,
            clip_norm: 2.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    pub clip_scale: f64,
}

/// One Adam update: clip the global gradient norm to `clip_norm`, apply
/// decoupled weight decay, then the bias-corrected Adam step.
pub fn adam_step(
    store: &mut ParameterStore,
    grads: &Gradients,
    cfg: &AdamConfig,
) -> Result<StepStats> {
    if grads.grads.len() != store.params.len()
        || grads
            .grads
            .iter()
            .zip(&store.params)
            .any(|(g, p)| g.shape() != p.value.shape())
    {
        return Err(Error::Shape(
            "gradients do not match the parameter store".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let norm = grads.global_norm();
    let clip_scale = if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
        cfg.clip_norm / norm
    } else {
        1.0
    };
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (p, g) in store.params.iter_mut().zip(&grads.grads) {
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        let (value, m, v) = (p.value.data_mut(), p.m.data_mut(), p.v.data_mut());
        for i in 0..value.len() {
            let gi = g.data()[i] * clip_scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] = value[i] * decay - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(StepStats {
        grad_norm: norm,
        clip_scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Parameter checkpoint: `{"schema": ..., "params": {name: {shape, values}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema: String,
    pub params: BTreeMap<String, CheckpointEntry>,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        if self.schema != CHECKPOINT_SCHEMA {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint schema {:?}",
                self.schema
            )));
        }
        for (name, e) in &self.params {
            if e.shape[0].checked_mul(e.shape[1]) != Some(e.values.len()) {
                return Err(Error::Shape(format!(
                    "parameter {name:?}: shape {:?} but {} values",
                    e.shape,
                    e.values.len()
                )));
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {name:?}")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }
}
