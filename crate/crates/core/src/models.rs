//! Parametric heuristics `h(s, theta)`.
//!
//! * Tabular: one parameter per `(instance_id, state)` seen in training;
//!   unseen states evaluate to 0.
//! * Linear: `w . x + b` over the domain's hand features.
//! * MLP: fully connected layers with softplus or ReLU hidden units and a
//!   scalar output.
//!
//! Gradients go through [`HeuristicModel::forward`], which caches
//! activations, and [`HeuristicModel::backprop`], which refuses a cache built
//! from older parameters.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains::{ProblemInstance, StateId};
use crate::losses::{sigmoid, softplus};
use crate::search::{Heuristic, HeuristicError};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("expected {expected} features, got {found}")]
    FeatureDim { expected: usize, found: usize },
    #[error("activation cache is stale (built for version {cache}, model is at {model})")]
    StaleCache { cache: u64, model: u64 },
    #[error("state {0} was not part of the forward pass")]
    NotInCache(StateId),
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tabular,
    Linear,
    Mlp,
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" => Ok(ModelKind::Tabular),
            "linear" => Ok(ModelKind::Linear),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(ModelError::InvalidSpec(format!(
                "unknown model kind `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Softplus,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => softplus(z),
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => sigmoid(z),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Input size for linear and MLP models; ignored by tabular ones.
    #[serde(default)]
    pub feature_dim: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Pass the output through softplus so that `h >= 0`.
    #[serde(default)]
    pub output_softplus: bool,
}

impl ModelSpec {
    pub fn tabular() -> Self {
        ModelSpec {
            kind: ModelKind::Tabular,
            feature_dim: 0,
            hidden: Vec::new(),
            activation: Activation::default(),
            output_softplus: false,
        }
    }

    pub fn linear(feature_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Linear,
            feature_dim,
            ..Self::tabular()
        }
    }

    pub fn mlp(feature_dim: usize, hidden: Vec<usize>, activation: Activation) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            feature_dim,
            hidden,
            activation,
            output_softplus: false,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match self.kind {
            ModelKind::Tabular => Ok(()),
            ModelKind::Linear | ModelKind::Mlp if self.feature_dim == 0 => Err(
                ModelError::InvalidSpec("feature_dim must be positive".into()),
            ),
            ModelKind::Mlp if self.hidden.iter().any(|&h| h == 0) => Err(ModelError::InvalidSpec(
                "hidden layers must be non-empty".into(),
            )),
            _ => Ok(()),
        }
    }

    /// `(inputs, outputs)` of each dense layer.
    fn layers(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![self.feature_dim];
        if self.kind == ModelKind::Mlp {
            sizes.extend(&self.hidden);
        }
        sizes.push(1);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn dense_param_count(&self) -> usize {
        self.layers().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// A tabular parameter slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub instance_id: String,
    pub state: StateId,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeuristicModel {
    spec: ModelSpec,
    seed: u64,
    params: Vec<f64>,
    table: HashMap<String, HashMap<StateId, usize>>,
    version: u64,
}

/// Activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    /// `h` per state.
    pub values: HashMap<StateId, f64>,
    rows: HashMap<StateId, Row>,
}

#[derive(Clone, Debug)]
enum Row {
    Slot(usize),
    /// Layer inputs (`acts[0]` is the feature vector) and pre-activations.
    Dense {
        acts: Vec<Vec<f64>>,
        pre: Vec<Vec<f64>>,
    },
}

/// Serialized model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub seed: u64,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<TableEntry>,
}

impl HeuristicModel {
    /// Zero parameters for tabular and linear models; uniform weights in
    /// `+-1/sqrt(fan_in)` and zero biases for MLPs.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let params = match spec.kind {
            ModelKind::Tabular => Vec::new(),
            ModelKind::Linear => vec![0.0; spec.dense_param_count()],
            ModelKind::Mlp => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = Vec::with_capacity(spec.dense_param_count());
                for (fan_in, out) in spec.layers() {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    p.extend((0..fan_in * out).map(|_| rng.gen_range(-bound..bound)));
                    p.extend(std::iter::repeat(0.0).take(out));
                }
                p
            }
        };
        Ok(HeuristicModel {
            spec,
            seed,
            params,
            table: HashMap::new(),
            version: 0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Bumped whenever the parameters change.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), ModelError> {
        if params.len() != self.params.len() {
            return Err(ModelError::ParamCount {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params = params;
        self.version += 1;
        Ok(())
    }

    /// Applies `f` to the parameter vector in place.
    pub fn update_params(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.params);
        self.version += 1;
    }

    /// Allocates zero-initialized table slots for unseen states.
    /// No-op for non-tabular models.
    pub fn register_states(
        &mut self,
        instance_id: &str,
        states: impl IntoIterator<Item = StateId>,
    ) {
        if self.spec.kind != ModelKind::Tabular {
            return;
        }
        let slots = self.table.entry(instance_id.to_string()).or_default();
        let before = self.params.len();
        for s in states {
            slots.entry(s).or_insert_with(|| {
                self.params.push(0.0);
                self.params.len() - 1
            });
        }
        if self.params.len() != before {
            self.version += 1;
        }
    }

    fn slot(&self, instance_id: &str, s: StateId) -> Option<usize> {
        self.table.get(instance_id).and_then(|m| m.get(&s)).copied()
    }

    fn check_dim(&self, features: &[f64]) -> Result<(), ModelError> {
        if features.len() != self.spec.feature_dim {
            return Err(ModelError::FeatureDim {
                expected: self.spec.feature_dim,
                found: features.len(),
            });
        }
        Ok(())
    }

    fn dense(&self, features: &[f64]) -> Row {
        let mut acts = vec![features.to_vec()];
        let mut pre = Vec::new();
        let layers = self.spec.layers();
        let last = layers.len() - 1;
        let mut off = 0;
        for (k, &(n_in, n_out)) in layers.iter().enumerate() {
            let (w, b) = self.params[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
            off += n_in * n_out + n_out;
            let x = acts.last().expect("non-empty");
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if k < last {
                acts.push(z.iter().map(|&v| self.spec.activation.apply(v)).collect());
            }
            pre.push(z);
        }
        Row::Dense { acts, pre }
    }

    fn output(&self, row: &Row) -> f64 {
        match row {
            Row::Slot(i) => self.params[*i],
            Row::Dense { pre, .. } => {
                let z = pre.last().expect("output layer")[0];
                if self.spec.output_softplus {
                    softplus(z)
                } else {
                    z
                }
            }
        }
    }

    /// `h(s)` from precomputed features (ignored by tabular models).
    pub fn evaluate_features(
        &self,
        instance_id: &str,
        s: StateId,
        features: &[f64],
    ) -> Result<f64, ModelError> {
        match self.spec.kind {
            ModelKind::Tabular => Ok(self.slot(instance_id, s).map_or(0.0, |i| self.params[i])),
            _ => {
                self.check_dim(features)?;
                Ok(self.output(&self.dense(features)))
            }
        }
    }

    /// `h(s)` on a live instance.
    pub fn evaluate(&self, instance: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError> {
        match self.spec.kind {
            ModelKind::Tabular => Ok(self.evaluate_features(&instance.instance_id, s, &[])?),
            _ => {
                let x = instance.features(s)?;
                Ok(self.evaluate_features(&instance.instance_id, s, &x)?)
            }
        }
    }

    /// Evaluates every state and keeps what [`backprop`](Self::backprop) needs.
    /// Tabular models must have the states registered.
    pub fn forward<'a>(
        &self,
        instance_id: &str,
        states: impl IntoIterator<Item = (StateId, &'a [f64])>,
    ) -> Result<ForwardCache, ModelError> {
        let mut values = HashMap::new();
        let mut rows = HashMap::new();
        for (s, x) in states {
            if rows.contains_key(&s) {
                continue;
            }
            let row = match self.spec.kind {
                ModelKind::Tabular => Row::Slot(self.slot(instance_id, s).ok_or_else(|| {
                    ModelError::InvalidSpec(format!("state {s} of {instance_id} is not registered"))
                })?),
                _ => {
                    self.check_dim(x)?;
                    self.dense(x)
                }
            };
            values.insert(s, self.output(&row));
            rows.insert(s, row);
        }
        Ok(ForwardCache {
            version: self.version,
            values,
            rows,
        })
    }

    /// `d loss / d theta` given `d loss / d h` for states of `cache`.
    pub fn backprop(
        &self,
        cache: &ForwardCache,
        d_loss_d_h: &HashMap<StateId, f64>,
    ) -> Result<Vec<f64>, ModelError> {
        if cache.version != self.version {
            return Err(ModelError::StaleCache {
                cache: cache.version,
                model: self.version,
            });
        }
        let mut grad = vec![0.0; self.params.len()];
        let layers = self.spec.layers();
        // Parameter offsets of each layer.
        let offsets: Vec<usize> = layers
            .iter()
            .scan(0, |acc, &(i, o)| {
                let start = *acc;
                *acc += i * o + o;
                Some(start)
            })
            .collect();
        // Fixed order keeps float summation reproducible.
        let mut order: Vec<(StateId, f64)> = d_loss_d_h.iter().map(|(&s, &d)| (s, d)).collect();
        order.sort_unstable_by_key(|&(s, _)| s);
        for (s, dh) in order {
            if dh == 0.0 {
                continue;
            }
            let row = cache.rows.get(&s).ok_or(ModelError::NotInCache(s))?;
            match row {
                Row::Slot(i) => grad[*i] += dh,
                Row::Dense { acts, pre } => {
                    let z_out = pre.last().expect("output")[0];
                    let mut delta = vec![if self.spec.output_softplus {
                        dh * sigmoid(z_out)
                    } else {
                        dh
                    }];
                    for k in (0..layers.len()).rev() {
                        let (n_in, n_out) = layers[k];
                        let off = offsets[k];
                        let x = &acts[k];
                        for o in 0..n_out {
                            let d = delta[o];
                            for j in 0..n_in {
                                grad[off + o * n_in + j] += d * x[j];
                            }
                            grad[off + n_in * n_out + o] += d;
                        }
                        if k == 0 {
                            break;
                        }
                        let w = &self.params[off..off + n_in * n_out];
                        delta = (0..n_in)
                            .map(|j| {
                                let back: f64 =
                                    (0..n_out).map(|o| w[o * n_in + j] * delta[o]).sum();
                                back * self.spec.activation.derivative(pre[k - 1][j])
                            })
                            .collect();
                    }
                }
            }
        }
        Ok(grad)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut table: Vec<TableEntry> = self
            .table
            .iter()
            .flat_map(|(id, m)| {
                m.iter().map(move |(&state, &index)| TableEntry {
                    instance_id: id.clone(),
                    state,
                    index,
                })
            })
            .collect();
        table.sort_by_key(|e| e.index);
        Checkpoint {
            format_version: FORMAT_VERSION,
            kind: self.spec.kind,
            spec: self.spec.clone(),
            seed: self.seed,
            params: self.params.clone(),
            table,
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self, ModelError> {
        if c.format_version != FORMAT_VERSION {
            return Err(ModelError::FormatVersion {
                expected: FORMAT_VERSION,
                found: c.format_version,
            });
        }
        if c.kind != c.spec.kind {
            return Err(ModelError::Checkpoint("kind disagrees with spec".into()));
        }
        c.spec.validate()?;
        let expected = match c.kind {
            ModelKind::Tabular => c.table.len(),
            _ => c.spec.dense_param_count(),
        };
        if c.params.len() != expected {
            return Err(ModelError::ParamCount {
                expected,
                found: c.params.len(),
            });
        }
        let mut table: HashMap<String, HashMap<StateId, usize>> = HashMap::new();
        for e in c.table {
            if e.index >= c.params.len() {
                return Err(ModelError::Checkpoint(format!(
                    "slot {} out of range",
                    e.index
                )));
            }
            table
                .entry(e.instance_id)
                .or_default()
                .insert(e.state, e.index);
        }
        Ok(HeuristicModel {
            spec: c.spec,
            seed: c.seed,
            params: c.params,
            table,
            version: 0,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoints serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let c: Checkpoint =
            serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(c)
    }
}

impl From<ModelError> for HeuristicError {
    fn from(e: ModelError) -> Self {
        HeuristicError(e.to_string())
    }
}

impl Heuristic for HeuristicModel {
    fn h(&self, instance: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError> {
        self.evaluate(instance, s)
    }
}
