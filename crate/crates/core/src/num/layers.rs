//! Parameterised building blocks recorded on a [`Graph`].

use crate::error::{Error, Result};
use crate::num::{Graph, ParamId, ParamStore, Rng, Tensor, Var};

/// Affine map `x · w + b` with `w: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.init_uniform(format!("{prefix}.weight"), &[input, output], input, rng)?,
            bias: store.init_uniform(format!("{prefix}.bias"), &[output], input, rng)?,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        linear(g, x, self.weight, self.bias)
    }
}

/// Affine map over bound parameters; `x` may be a vector or a row matrix.
pub fn linear(g: &mut Graph, x: Var, weight: ParamId, bias: ParamId) -> Result<Var> {
    let w = g.param(weight)?;
    let b = g.param(bias)?;
    g.linear(x, w, Some(b))
}

/// Gated recurrent unit. Gate order inside the stacked weights is
/// reset, update, candidate.
#[derive(Clone, Debug)]
pub struct Gru {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            w_input: store.init_uniform(format!("{prefix}.w_input"), &[input, 3 * hidden], input, rng)?,
            w_hidden: store.init_uniform(format!("{prefix}.w_hidden"), &[hidden, 3 * hidden], hidden, rng)?,
            b_input: store.init_uniform(format!("{prefix}.b_input"), &[3 * hidden], input, rng)?,
            b_hidden: store.init_uniform(format!("{prefix}.b_hidden"), &[3 * hidden], hidden, rng)?,
            input,
            hidden,
        })
    }

    /// One recurrent update:
    /// r = σ(W_ir x + b_ir + W_hr h + b_hr), z = σ(W_iz x + b_iz + W_hz h + b_hz),
    /// n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn)), h' = (1 − z) ⊙ n + z ⊙ h.
    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var> {
        if g.shape(x) != [self.input] || g.shape(h) != [self.hidden] {
            return Err(Error::shape(format!(
                "gru expects input [{}] and state [{}], got {:?} and {:?}",
                self.input,
                self.hidden,
                g.shape(x),
                g.shape(h)
            )));
        }
        let hid = self.hidden;
        let gi = linear(g, x, self.w_input, self.b_input)?;
        let gh = linear(g, h, self.w_hidden, self.b_hidden)?;

        let (ir, hr) = (g.slice(gi, 0, hid)?, g.slice(gh, 0, hid)?);
        let pre_r = g.add(ir, hr)?;
        let reset = g.sigmoid(pre_r)?;

        let (iz, hz) = (g.slice(gi, hid, hid)?, g.slice(gh, hid, hid)?);
        let pre_z = g.add(iz, hz)?;
        let update = g.sigmoid(pre_z)?;

        let (inn, hn) = (g.slice(gi, 2 * hid, hid)?, g.slice(gh, 2 * hid, hid)?);
        let gated = g.mul(reset, hn)?;
        let pre_n = g.add(inn, gated)?;
        let candidate = g.tanh(pre_n)?;

        let diff = g.sub(h, candidate)?;
        let keep = g.mul(update, diff)?;
        g.add(candidate, keep)
    }

    pub fn zero_state(&self, g: &mut Graph) -> Result<Var> {
        g.constant(Tensor::zeros(&[self.hidden]))
    }
}

/// Bidirectional recurrent encoder over the rows of a sequence matrix.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub forward: Gru,
    pub backward: Gru,
}

impl BiGru {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            forward: Gru::init(store, &format!("{prefix}.fwd"), input, hidden, rng)?,
            backward: Gru::init(store, &format!("{prefix}.bwd"), input, hidden, rng)?,
        })
    }

    /// Encodes `seq: [L, in]` into `[L, 2 * hidden]`; row `t` is the forward
    /// state after `t` followed by the backward state after `t`.
    pub fn encode(&self, g: &mut Graph, seq: Var) -> Result<Var> {
        let len = match g.shape(seq) {
            [0, _] => return Err(Error::invalid("bidirectional encode of an empty sequence")),
            [l, _] => *l,
            s => return Err(Error::shape(format!("sequence must be a matrix, got {s:?}"))),
        };
        let rows: Vec<Var> = (0..len).map(|t| g.row(seq, t)).collect::<Result<_>>()?;

        let mut fwd = Vec::with_capacity(len);
        let mut h = self.forward.zero_state(g)?;
        for &x in &rows {
            h = self.forward.step(g, x, h)?;
            fwd.push(h);
        }
        let mut bwd = vec![h; len];
        let mut h = self.backward.zero_state(g)?;
        for t in (0..len).rev() {
            h = self.backward.step(g, rows[t], h)?;
            bwd[t] = h;
        }
        let joined: Vec<Var> = fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, b)| g.concat(&[f, b]))
            .collect::<Result<_>>()?;
        g.stack(&joined)
    }
}

/// Multi-head scaled dot-product attention with input and output projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

/// Attention result: the projected output and one score row per head.
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub output: Var,
    pub scores: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        query_dim: usize,
        memory_dim: usize,
        dim: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::invalid(format!(
                "attention width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::init(store, &format!("{prefix}.query"), query_dim, dim, rng)?,
            key: Linear::init(store, &format!("{prefix}.key"), memory_dim, dim, rng)?,
            value: Linear::init(store, &format!("{prefix}.value"), memory_dim, dim, rng)?,
            output: Linear::init(store, &format!("{prefix}.output"), dim, dim, rng)?,
            heads,
            dim,
        })
    }

    /// Projects a `[m, memory_dim]` memory into keys and values. The result
    /// can be reused across queries.
    pub fn project_memory(&self, g: &mut Graph, keys: Var, values: Var) -> Result<(Var, Var)> {
        for v in [keys, values] {
            match g.shape(v) {
                [m, _] if *m >= 1 => {}
                s => return Err(Error::shape(format!("attention memory must be [m >= 1, d], got {s:?}"))),
            }
        }
        Ok((self.key.forward(g, keys)?, self.value.forward(g, values)?))
    }

    /// Attends with a single query vector over pre-projected keys and values.
    pub fn attend_projected(&self, g: &mut Graph, query: Var, keys: Var, values: Var) -> Result<AttentionOutput> {
        let q = self.query.forward(g, query)?;
        let head_dim = self.dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut scores = Vec::with_capacity(self.heads);
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice(q, h * head_dim, head_dim)?;
            let kh = g.col_slice(keys, h * head_dim, head_dim)?;
            let vh = g.col_slice(values, h * head_dim, head_dim)?;
            let logits = g.matvec(kh, qh)?;
            let logits = g.scale(logits, scale)?;
            let p = g.softmax(logits)?;
            outs.push(g.linear(p, vh, None)?);
            scores.push(p);
        }
        let joined = g.concat(&outs)?;
        let output = self.output.forward(g, joined)?;
        Ok(AttentionOutput { output, scores })
    }

    /// Full attention: `query: [query_dim]`, `keys`/`values: [m, memory_dim]`.
    pub fn forward(&self, g: &mut Graph, query: Var, keys: Var, values: Var) -> Result<AttentionOutput> {
        let (k, v) = self.project_memory(g, keys, values)?;
        self.attend_projected(g, query, k, v)
    }
}

/// Free-function form of [`Gru::step`].
pub fn gru_step(g: &mut Graph, gru: &Gru, x: Var, h: Var) -> Result<Var> {
    gru.step(g, x, h)
}

/// Free-function form of [`BiGru::encode`].
pub fn birnn_encode(g: &mut Graph, enc: &BiGru, seq: Var) -> Result<Var> {
    enc.encode(g, seq)
}

/// Free-function form of [`MultiHeadAttention::forward`].
pub fn multi_head_attention(
    g: &mut Graph,
    attn: &MultiHeadAttention,
    query: Var,
    keys: Var,
    values: Var,
) -> Result<AttentionOutput> {
    attn.forward(g, query, keys, values)
}
