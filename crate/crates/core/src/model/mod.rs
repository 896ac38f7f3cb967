//! Navigation model forward pass.
//!
//! Per step: two memory units read the pooled observation and the previous
//! action; the high-level memory attends over sub-instruction features and the
//! low-level memory over word features; a linear layer fuses both attention
//! outputs; the fused feature queries the spatial grid; a recurrent decoder
//! consumes everything and emits the action distribution and a progress
//! estimate.
//!
//! Every method records on a caller-supplied [`Graph`], so the same code
//! serves training (one graph per episode) and rollout (one graph per step).

mod config;

use serde::{Deserialize, Serialize};

pub use config::ModelConfig;

use crate::error::{Error, Result};
use crate::harness::Pose;
use crate::num::{BiGru, Graph, Gru, Linear, MultiHeadAttention, ParamId, ParamStore, Rng, Tensor, Var};

/// Discrete actions. The index order is part of the checkpoint contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stop = 0,
    Forward = 1,
    TurnLeft = 2,
    TurnRight = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Stop, Action::Forward, Action::TurnLeft, Action::TurnRight];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or(Error::Index { index: i, len: 4 })
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Pre-extracted visual features for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub rgb_pooled: Tensor,
    pub depth_pooled: Tensor,
    pub rgb_spatial: Tensor,
    pub depth_spatial: Tensor,
}

impl Observation {
    pub fn grid_cells(&self) -> usize {
        self.rgb_spatial.rows()
    }

    fn check(&self, feature_dim: usize) -> Result<()> {
        let pooled_ok = self.rgb_pooled.shape() == [feature_dim] && self.depth_pooled.shape() == [feature_dim];
        let grid_ok = matches!(self.rgb_spatial.shape(), [g, f] if *g >= 1 && *f == feature_dim)
            && self.depth_spatial.shape() == self.rgb_spatial.shape();
        if !(pooled_ok && grid_ok) {
            return Err(Error::shape(format!(
                "observation shapes {:?}/{:?}/{:?}/{:?} do not match feature width {feature_dim}",
                self.rgb_pooled.shape(),
                self.depth_pooled.shape(),
                self.rgb_spatial.shape(),
                self.depth_spatial.shape()
            )));
        }
        Ok(())
    }
}

/// Observation bound into a graph.
#[derive(Clone, Copy, Debug)]
pub struct ObservationVars {
    /// Pooled RGB followed by pooled depth.
    pub pooled: Var,
    /// RGB grid rows followed by depth grid rows, `[2G, feature_dim]`.
    pub spatial: Var,
}

/// Word-level and sub-instruction-level features with their attention
/// keys and values already projected.
#[derive(Clone, Copy, Debug)]
pub struct InstructionFeatures {
    pub low: Var,
    pub high: Var,
    low_keys: Var,
    low_values: Var,
    high_keys: Var,
    high_values: Var,
}

impl InstructionFeatures {
    pub fn word_count(&self, g: &Graph) -> usize {
        g.shape(self.low)[0]
    }

    pub fn sub_count(&self, g: &Graph) -> usize {
        g.shape(self.high)[0]
    }
}

/// Plain-tensor snapshot of [`InstructionFeatures`], reusable across graphs.
#[derive(Clone, Debug)]
pub struct InstructionTensors {
    pub low: Tensor,
    pub high: Tensor,
    low_keys: Tensor,
    low_values: Tensor,
    high_keys: Tensor,
    high_values: Tensor,
}

impl InstructionTensors {
    pub fn capture(g: &Graph, f: &InstructionFeatures) -> Self {
        Self {
            low: g.value(f.low).clone(),
            high: g.value(f.high).clone(),
            low_keys: g.value(f.low_keys).clone(),
            low_values: g.value(f.low_values).clone(),
            high_keys: g.value(f.high_keys).clone(),
            high_values: g.value(f.high_values).clone(),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> Result<InstructionFeatures> {
        Ok(InstructionFeatures {
            low: g.constant(self.low.clone())?,
            high: g.constant(self.high.clone())?,
            low_keys: g.constant(self.low_keys.clone())?,
            low_values: g.constant(self.low_values.clone())?,
            high_keys: g.constant(self.high_keys.clone())?,
            high_values: g.constant(self.high_values.clone())?,
        })
    }
}

/// Recurrent state inside a graph.
#[derive(Clone, Copy, Debug)]
pub struct StepState {
    pub h_high: Var,
    pub h_low: Var,
    pub h_action: Var,
    /// Row of the action embedding table; `action_count` means "no previous action".
    pub prev_action: usize,
}

/// Recurrent state as plain tensors, carried between per-step graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub h_high: Tensor,
    pub h_low: Tensor,
    pub h_action: Tensor,
    pub prev_action: Option<Action>,
    pub step: usize,
    pub pose: Pose,
}

impl EpisodeState {
    pub fn bind(&self, g: &mut Graph, action_count: usize) -> Result<StepState> {
        Ok(StepState {
            h_high: g.constant(self.h_high.clone())?,
            h_low: g.constant(self.h_low.clone())?,
            h_action: g.constant(self.h_action.clone())?,
            prev_action: self.prev_action.map_or(action_count, Action::index),
        })
    }
}

/// Output of the fusion block.
#[derive(Clone, Copy, Debug)]
pub struct MlaOutput {
    pub fused: Var,
    /// Head-averaged sub-instruction scores, `[N]`.
    pub alpha: Var,
    /// Head-averaged word scores, `[L]`.
    pub alpha_low: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct Decoded {
    pub h_action: Var,
    pub logits: Var,
    pub dist: Var,
    pub progress: Var,
    /// Index of the largest probability, lowest index on ties.
    pub action: Action,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub state: StepState,
    pub mla: MlaOutput,
    pub visual: Var,
    pub decoded: Decoded,
}

/// Feature dropout. Off at evaluation; during training each entry is kept
/// with probability `1 - rate` and rescaled by `1 / (1 - rate)`.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Dropout {
    Off,
    On { rate: f64, rng: Rng },
}

impl Dropout {
    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Dropout::Off => Ok(x),
            Dropout::On { rate, .. } if *rate <= 0.0 => Ok(x),
            Dropout::On { rate, rng } => {
                let keep = 1.0 - *rate;
                let shape = g.shape(x).to_vec();
                let n: usize = shape.iter().product();
                let mask = (0..n)
                    .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = g.constant(Tensor::new(&shape, mask)?)?;
                g.mul(x, mask)
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Layers {
    word_embed: ParamId,
    word_rnn: BiGru,
    word_proj: Linear,
    sub_embed: ParamId,
    sub_proj: Linear,
    action_embed: ParamId,
    memory_high: Gru,
    memory_low: Gru,
    attend_high: MultiHeadAttention,
    attend_low: MultiHeadAttention,
    fuse: Linear,
    spatial: MultiHeadAttention,
    decoder: Gru,
    action_head: Linear,
    progress_head: Linear,
}

/// Model parameters plus the layer layout that reads them.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    vocab_size: usize,
    params: ParamStore,
    layers: Layers,
}

impl Model {
    /// Initialises every parameter from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(Error::invalid("vocabulary size must be positive"));
        }
        let mut rng = Rng::new(seed);
        let mut p = ParamStore::new();
        let (f, h, a) = (config.feature_dim, config.hidden_dim, config.action_embed_dim);
        let word_hidden = (f / 2).max(1);
        let layers = Layers {
            word_embed: p.init_uniform("word.embed", &[vocab_size, f], f, &mut rng)?,
            word_rnn: BiGru::init(&mut p, "word.rnn", f, word_hidden, &mut rng)?,
            word_proj: Linear::init(&mut p, "word.proj", 2 * word_hidden, f, &mut rng)?,
            sub_embed: p.init_uniform("sub.embed", &[vocab_size, f], f, &mut rng)?,
            sub_proj: Linear::init(&mut p, "sub.proj", f, f, &mut rng)?,
            action_embed: p.init_uniform("action.embed", &[config.action_count + 1, a], a, &mut rng)?,
            memory_high: Gru::init(&mut p, "memory.high", config.memory_input_dim(), h, &mut rng)?,
            memory_low: Gru::init(&mut p, "memory.low", config.memory_input_dim(), h, &mut rng)?,
            attend_high: MultiHeadAttention::init(&mut p, "mla.high", h, f, h, config.heads, &mut rng)?,
            attend_low: MultiHeadAttention::init(&mut p, "mla.low", h, f, h, config.heads, &mut rng)?,
            fuse: Linear::init(&mut p, "mla.fuse", 2 * h, h, &mut rng)?,
            spatial: MultiHeadAttention::init(&mut p, "spatial", h, f, h, 1, &mut rng)?,
            decoder: Gru::init(&mut p, "decoder", config.decoder_input_dim(), h, &mut rng)?,
            action_head: Linear::init(&mut p, "head.action", h, config.action_count, &mut rng)?,
            progress_head: Linear::init(&mut p, "head.progress", h, 1, &mut rng)?,
        };
        Ok(Self {
            config,
            vocab_size,
            params: p,
            layers,
        })
    }

    /// Same layout with every parameter set to zero.
    pub fn zeroed(config: ModelConfig, vocab_size: usize) -> Result<Self> {
        let mut m = Self::new(config, vocab_size, 0)?;
        m.params.fill(0.0);
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn graph(&self) -> Graph<'_> {
        Graph::with_params(&self.params)
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|&t| {
                let t = t as usize;
                if t >= self.vocab_size {
                    Err(Error::Index { index: t, len: self.vocab_size })
                } else {
                    Ok(t)
                }
            })
            .collect()
    }

    /// Word features `[L, feature_dim]`: embedding, bidirectional recurrent
    /// encoding, projection.
    pub fn encode_low(&self, g: &mut Graph, tokens: &[u32]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::invalid("cannot encode an empty instruction"));
        }
        let ids = self.check_tokens(tokens)?;
        let table = g.param(self.layers.word_embed)?;
        let emb = g.gather_rows(table, &ids)?;
        let enc = self.layers.word_rnn.encode(g, emb)?;
        self.layers.word_proj.forward(g, enc)
    }

    /// Sub-instruction features `[N, feature_dim]`: mean of token
    /// embeddings, then projection.
    pub fn encode_high(&self, g: &mut Graph, subs: &[Vec<u32>]) -> Result<Var> {
        if subs.is_empty() {
            return Err(Error::invalid("cannot encode an empty sub-instruction list"));
        }
        let table = g.param(self.layers.sub_embed)?;
        let mut rows = Vec::with_capacity(subs.len());
        for (i, sub) in subs.iter().enumerate() {
            if sub.is_empty() {
                return Err(Error::invalid(format!("sub-instruction {i} has no tokens")));
            }
            let ids = self.check_tokens(sub)?;
            let emb = g.gather_rows(table, &ids)?;
            rows.push(g.mean_rows(emb)?);
        }
        let pooled = g.stack(&rows)?;
        self.layers.sub_proj.forward(g, pooled)
    }

    /// Encodes both instruction levels and projects their attention keys and values.
    pub fn encode_instruction(
        &self,
        g: &mut Graph,
        tokens: &[u32],
        subs: &[Vec<u32>],
        dropout: &mut Dropout,
    ) -> Result<InstructionFeatures> {
        let low = self.encode_low(g, tokens)?;
        let low = dropout.apply(g, low)?;
        let high = self.encode_high(g, subs)?;
        let high = dropout.apply(g, high)?;
        let (low_keys, low_values) = self.layers.attend_low.project_memory(g, low, low)?;
        let (high_keys, high_values) = self.layers.attend_high.project_memory(g, high, high)?;
        Ok(InstructionFeatures {
            low,
            high,
            low_keys,
            low_values,
            high_keys,
            high_values,
        })
    }

    pub fn initial_state(&self, g: &mut Graph) -> Result<StepState> {
        let h = self.config.hidden_dim;
        Ok(StepState {
            h_high: g.constant(Tensor::zeros(&[h]))?,
            h_low: g.constant(Tensor::zeros(&[h]))?,
            h_action: g.constant(Tensor::zeros(&[h]))?,
            prev_action: self.config.action_count,
        })
    }

    pub fn initial_episode_state(&self, pose: Pose) -> EpisodeState {
        let h = self.config.hidden_dim;
        EpisodeState {
            h_high: Tensor::zeros(&[h]),
            h_low: Tensor::zeros(&[h]),
            h_action: Tensor::zeros(&[h]),
            prev_action: None,
            step: 0,
            pose,
        }
    }

    /// Embedding row for the previous action, or the start row when there is none.
    pub fn prev_action_embedding(&self, prev: Option<Action>) -> Result<Tensor> {
        let row = prev.map_or(self.config.action_count, Action::index);
        Tensor::vector(self.params.get(self.layers.action_embed).row(row)?.to_vec())
    }

    pub fn bind_observation(&self, g: &mut Graph, obs: &Observation) -> Result<ObservationVars> {
        obs.check(self.config.feature_dim)?;
        let rgb = g.constant(obs.rgb_pooled.clone())?;
        let depth = g.constant(obs.depth_pooled.clone())?;
        let pooled = g.concat(&[rgb, depth])?;
        let rgb_grid = g.constant(obs.rgb_spatial.clone())?;
        let depth_grid = g.constant(obs.depth_spatial.clone())?;
        let spatial = g.concat_rows(&[rgb_grid, depth_grid])?;
        Ok(ObservationVars { pooled, spatial })
    }

    fn prev_action_embed(&self, g: &mut Graph, prev: usize) -> Result<Var> {
        let table = g.param(self.layers.action_embed)?;
        g.row(table, prev)
    }

    /// Advances both memory units on `[pooled obs; previous action embedding]`.
    pub fn memory_step(
        &self,
        g: &mut Graph,
        state: &StepState,
        obs: &ObservationVars,
        dropout: &mut Dropout,
    ) -> Result<(Var, Var)> {
        let visual = dropout.apply(g, obs.pooled)?;
        let prev = self.prev_action_embed(g, state.prev_action)?;
        let input = g.concat(&[visual, prev])?;
        let h_high = self.layers.memory_high.step(g, input, state.h_high)?;
        let h_low = self.layers.memory_low.step(g, input, state.h_low)?;
        Ok((h_high, h_low))
    }

    /// High-level memory attends over sub-instructions, low-level memory over
    /// words; the two outputs are concatenated and fused by a linear layer.
    pub fn mla_fuse(&self, g: &mut Graph, h_high: Var, h_low: Var, feats: &InstructionFeatures) -> Result<MlaOutput> {
        let high = self
            .layers
            .attend_high
            .attend_projected(g, h_high, feats.high_keys, feats.high_values)?;
        let low = self
            .layers
            .attend_low
            .attend_projected(g, h_low, feats.low_keys, feats.low_values)?;
        let both = g.concat(&[high.output, low.output])?;
        let fused = self.layers.fuse.forward(g, both)?;
        let alpha = head_mean(g, &high.scores)?;
        let alpha_low = head_mean(g, &low.scores)?;
        Ok(MlaOutput { fused, alpha, alpha_low })
    }

    /// Single-head attention from the fused feature over the `2G` grid cells.
    pub fn spatial_attend(&self, g: &mut Graph, fused: Var, obs: &ObservationVars) -> Result<Var> {
        let out = self.layers.spatial.forward(g, fused, obs.spatial, obs.spatial)?;
        Ok(out.output)
    }

    /// Spatial attention scores over the `2G` cells, for inspection.
    pub fn spatial_scores(&self, g: &mut Graph, fused: Var, obs: &ObservationVars) -> Result<Var> {
        let out = self.layers.spatial.forward(g, fused, obs.spatial, obs.spatial)?;
        Ok(out.scores[0])
    }

    pub fn decode_action(
        &self,
        g: &mut Graph,
        state: &StepState,
        h_high: Var,
        h_low: Var,
        fused: Var,
        visual: Var,
    ) -> Result<Decoded> {
        let prev = self.prev_action_embed(g, state.prev_action)?;
        let input = g.concat(&[h_high, h_low, prev, fused, visual])?;
        let h_action = self.layers.decoder.step(g, input, state.h_action)?;
        let logits = self.layers.action_head.forward(g, h_action)?;
        let dist = g.softmax(logits)?;
        let progress_logit = self.layers.progress_head.forward(g, h_action)?;
        let progress = g.sigmoid(progress_logit)?;
        let action = Action::from_index(argmax(g.value(dist).values()))?;
        Ok(Decoded {
            h_action,
            logits,
            dist,
            progress,
            action,
        })
    }

    /// One full step. The returned state's `prev_action` is left for the
    /// caller to set (teacher or predicted action).
    pub fn step(
        &self,
        g: &mut Graph,
        state: &StepState,
        obs: &Observation,
        feats: &InstructionFeatures,
        dropout: &mut Dropout,
    ) -> Result<StepOutput> {
        let obs = self.bind_observation(g, obs)?;
        let (h_high, h_low) = self.memory_step(g, state, &obs, dropout)?;
        let mla = self.mla_fuse(g, h_high, h_low, feats)?;
        let visual = self.spatial_attend(g, mla.fused, &obs)?;
        let decoded = self.decode_action(g, state, h_high, h_low, mla.fused, visual)?;
        Ok(StepOutput {
            state: StepState {
                h_high,
                h_low,
                h_action: decoded.h_action,
                prev_action: state.prev_action,
            },
            mla,
            visual,
            decoded,
        })
    }

    /// Loads parameter values from a checkpoint written by [`ParamStore::save`].
    pub fn load_params(&mut self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let other = ParamStore::load(path)?;
        self.params.load_values_from(&other)
    }
}

fn head_mean(g: &mut Graph, scores: &[Var]) -> Result<Var> {
    let mut acc = scores[0];
    for &s in &scores[1..] {
        acc = g.add(acc, s)?;
    }
    g.scale(acc, 1.0 / scores.len() as f64)
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
