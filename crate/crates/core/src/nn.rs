//! The section-adaptive policy network and its baselines.
//!
//! The full architecture factorises the n x 4 bus state into four per-factor
//! streams (P, Q, Vm, Va), propagates key/value representations through
//! per-factor GIN stacks, encodes the target section into a query vector, and
//! gates each value stream with a softmax over the four factor attention
//! scores before a mean-pool readout and dueling Q heads.
//!
//! Baselines: `Concat` (MLP over flattened state plus section encoding) and
//! `SoftAttention` (section-conditioned mixture over per-factor GIN
//! embeddings). Ablations: `PowerformerE` (plain GIN, no factorisation, no
//! section input), `PowerformerS` (factorised value streams only),
//! `PowerformerM` (no factorisation, section query kept).

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::powerflow::StateMatrix;
use crate::rng::Rng;
use crate::store::ParameterStore;
use crate::tensor::{Adjacency, NodeId, Tape, Tensor, TensorError};

/// Number of electrical factors: active power, reactive power, voltage
/// magnitude, phase angle.
pub const FACTORS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Powerformer,
    Concat,
    SoftAttention,
    PowerformerE,
    PowerformerS,
    PowerformerM,
}

impl NetworkKind {
    pub fn name(&self) -> &'static str {
        match self {
            NetworkKind::Powerformer => "powerformer",
            NetworkKind::Concat => "concat",
            NetworkKind::SoftAttention => "soft_attention",
            NetworkKind::PowerformerE => "powerformer_E",
            NetworkKind::PowerformerS => "powerformer_S",
            NetworkKind::PowerformerM => "powerformer_M",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "powerformer" => Some(NetworkKind::Powerformer),
            "concat" => Some(NetworkKind::Concat),
            "soft_attention" => Some(NetworkKind::SoftAttention),
            "powerformer_E" | "powerformer_e" => Some(NetworkKind::PowerformerE),
            "powerformer_S" | "powerformer_s" => Some(NetworkKind::PowerformerS),
            "powerformer_M" | "powerformer_m" => Some(NetworkKind::PowerformerM),
            _ => None,
        }
    }
}

/// Section-encoding layout: four values per branch, or active power only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionEncodingMode {
    FourFactor,
    ActiveOnly,
}

#[derive(Clone, Copy, Debug)]
pub struct NetConfig {
    pub kind: NetworkKind,
    pub layers: usize,
    /// Hidden dimension d.
    pub d: usize,
    /// Section-encoder hidden width (first MLP layer).
    pub enc_hidden: usize,
    /// Dueling value-head width (two hidden layers of this size).
    pub value_hidden: usize,
    /// Dueling advantage-head width (one hidden layer).
    pub adv_hidden: usize,
    /// Fixed GIN self-loop weight offset.
    pub gin_eps: f64,
    pub z_mode: SectionEncodingMode,
}

impl NetConfig {
    pub fn defaults(kind: NetworkKind) -> Self {
        NetConfig {
            kind,
            layers: 2,
            d: 64,
            enc_hidden: 128,
            value_hidden: 128,
            adv_hidden: 128,
            gin_eps: 0.0,
            z_mode: SectionEncodingMode::FourFactor,
        }
    }

    /// Small configuration for fast experiments and tests.
    pub fn small(kind: NetworkKind, d: usize) -> Self {
        NetConfig {
            kind,
            layers: 2,
            d,
            enc_hidden: 2 * d,
            value_hidden: 2 * d,
            adv_hidden: 2 * d,
            gin_eps: 0.0,
            z_mode: SectionEncodingMode::FourFactor,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NnError {
    Tensor(TensorError),
    Input(String),
}

impl From<TensorError> for NnError {
    fn from(e: TensorError) -> Self {
        NnError::Tensor(e)
    }
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::Tensor(e) => write!(f, "{e}"),
            NnError::Input(what) => write!(f, "bad network input: {what}"),
        }
    }
}

/// Observation pieces a forward pass consumes.
#[derive(Clone, Copy)]
pub struct ObsInputs<'a> {
    pub h: &'a StateMatrix,
    pub z: &'a [f64],
    pub adj: &'a Arc<Adjacency>,
}

/// Key nodes of one forward pass.
pub struct ForwardNodes {
    /// Q-values, (n_actions, 1).
    pub q: NodeId,
    /// Graph-level embedding, (d, 1).
    pub embedding: NodeId,
    /// Factor attention of the final layer, (n, k); present for kinds that
    /// compute it.
    pub attention: Option<NodeId>,
}

/// A policy network: configuration, expected input sizes, and parameters.
pub struct PolicyNet {
    pub cfg: NetConfig,
    pub n_nodes: usize,
    pub z_len: usize,
    pub n_actions: usize,
    pub store: ParameterStore,
}

impl PolicyNet {
    /// Expected section-encoding length for a case with `branches` branches.
    pub fn z_len_for(mode: SectionEncodingMode, branches: usize) -> usize {
        match mode {
            SectionEncodingMode::FourFactor => 4 * branches,
            SectionEncodingMode::ActiveOnly => branches,
        }
    }

    pub fn new(cfg: NetConfig, n_nodes: usize, z_len: usize, n_actions: usize, seed: u64) -> Self {
        let mut net = PolicyNet {
            cfg,
            n_nodes,
            z_len,
            n_actions,
            store: ParameterStore::new(),
        };
        let mut rng = Rng::seed_from(seed);
        net.register_params(&mut rng);
        net
    }

    fn register_affine(&mut self, rng: &mut Rng, name: &str, fan_in: usize, fan_out: usize) {
        let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut w = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out * fan_in {
            w.push(rng.uniform(-limit, limit));
        }
        self.store
            .insert(&format!("{name}.w"), Tensor::from_vec(fan_out, fan_in, w))
            .expect("unique parameter names");
        self.store
            .insert(&format!("{name}.b"), Tensor::zeros(fan_out, 1))
            .expect("unique parameter names");
    }

    fn register_params(&mut self, rng: &mut Rng) {
        let d = self.cfg.d;
        let kind = self.cfg.kind;
        let factored = matches!(
            kind,
            NetworkKind::Powerformer | NetworkKind::PowerformerS | NetworkKind::SoftAttention
        );
        let has_query = matches!(kind, NetworkKind::Powerformer | NetworkKind::PowerformerM);
        let has_keys = has_query;

        match kind {
            NetworkKind::Concat => {
                self.register_affine(rng, "concat.0", 4 * self.n_nodes + self.z_len, self.cfg.enc_hidden);
                self.register_affine(rng, "concat.1", self.cfg.enc_hidden, d);
            }
            _ => {
                if factored {
                    for t in 0..FACTORS {
                        self.register_affine(rng, &format!("embed.f{t}"), 1, d);
                    }
                } else {
                    self.register_affine(rng, "embed.joint", FACTORS, d);
                }
                for l in 0..self.cfg.layers {
                    if factored {
                        for t in 0..FACTORS {
                            if has_keys {
                                self.register_affine(rng, &format!("l{l}.f{t}.key.0"), d, d);
                                self.register_affine(rng, &format!("l{l}.f{t}.key.1"), d, d);
                            }
                            self.register_affine(rng, &format!("l{l}.f{t}.val.0"), d, d);
                            self.register_affine(rng, &format!("l{l}.f{t}.val.1"), d, d);
                        }
                    } else if kind == NetworkKind::PowerformerM {
                        self.register_affine(rng, &format!("l{l}.key.0"), d, d);
                        self.register_affine(rng, &format!("l{l}.key.1"), d, d);
                        self.register_affine(rng, &format!("l{l}.val.0"), d, d);
                        self.register_affine(rng, &format!("l{l}.val.1"), d, d);
                    } else {
                        // PowerformerE: one GIN stack per layer
                        self.register_affine(rng, &format!("l{l}.gin.0"), d, d);
                        self.register_affine(rng, &format!("l{l}.gin.1"), d, d);
                    }
                }
                if has_query {
                    self.register_affine(rng, "query.0.0", self.z_len, self.cfg.enc_hidden);
                    self.register_affine(rng, "query.0.1", self.cfg.enc_hidden, d);
                    for l in 1..self.cfg.layers {
                        self.register_affine(rng, &format!("query.{l}.0"), d, d);
                        self.register_affine(rng, &format!("query.{l}.1"), d, d);
                    }
                }
                if kind == NetworkKind::SoftAttention {
                    self.register_affine(rng, "mix", self.z_len, FACTORS);
                }
            }
        }

        self.register_affine(rng, "value.0", d, self.cfg.value_hidden);
        self.register_affine(rng, "value.1", self.cfg.value_hidden, self.cfg.value_hidden);
        self.register_affine(rng, "value.2", self.cfg.value_hidden, 1);
        self.register_affine(rng, "adv.0", d, self.cfg.adv_hidden);
        self.register_affine(rng, "adv.1", self.cfg.adv_hidden, self.n_actions);
    }

    // -- forward building blocks ---------------------------------------------

    fn affine(&self, tape: &mut Tape, name: &str, x: NodeId) -> Result<NodeId, TensorError> {
        let w = tape.param(&self.store, &format!("{name}.w"))?;
        let b = tape.param(&self.store, &format!("{name}.b"))?;
        let wx = tape.matmul(w, x)?;
        tape.add_col_vec(wx, b)
    }

    fn mlp2(&self, tape: &mut Tape, prefix: &str, x: NodeId) -> Result<NodeId, TensorError> {
        let a = self.affine(tape, &format!("{prefix}.0"), x)?;
        let r = tape.relu(a);
        self.affine(tape, &format!("{prefix}.1"), r)
    }

    /// One GIN propagation: aggregate neighborhood then apply the stack's MLP.
    fn gin(
        &self,
        tape: &mut Tape,
        prefix: &str,
        h: NodeId,
        adj: &Arc<Adjacency>,
    ) -> Result<NodeId, TensorError> {
        let agg = tape.neighbor_sum(h, adj, self.cfg.gin_eps)?;
        self.mlp2(tape, prefix, agg)
    }

    /// Lift the n x 4 state into four d x n factor streams via per-factor
    /// affine maps.
    fn factorize_and_embed(
        &self,
        tape: &mut Tape,
        h: &StateMatrix,
    ) -> Result<Vec<NodeId>, TensorError> {
        let mut streams = Vec::with_capacity(FACTORS);
        for t in 0..FACTORS {
            let row = Tensor::from_vec(1, h.n, h.column(t));
            let x = tape.input(row);
            streams.push(self.affine(tape, &format!("embed.f{t}"), x)?);
        }
        Ok(streams)
    }

    /// Joint 4 -> d embedding for the unfactorised variants.
    fn joint_embed(&self, tape: &mut Tape, h: &StateMatrix) -> Result<NodeId, TensorError> {
        let n = h.n;
        let mut data = Vec::with_capacity(4 * n);
        for t in 0..FACTORS {
            for r in 0..n {
                data.push(h.at(r, t));
            }
        }
        let x = tape.input(Tensor::from_vec(FACTORS, n, data));
        self.affine(tape, "embed.joint", x)
    }

    /// Query vector of layer `l` from the section encoding chain.
    fn query_chain(
        &self,
        tape: &mut Tape,
        z: &[f64],
        layers: usize,
    ) -> Result<Vec<NodeId>, TensorError> {
        let mut out = Vec::with_capacity(layers);
        let z_node = tape.input(Tensor::column(z.to_vec()));
        let mut q = self.mlp2(tape, "query.0", z_node)?;
        out.push(q);
        for l in 1..layers {
            q = self.mlp2(tape, &format!("query.{l}"), q)?;
            out.push(q);
        }
        Ok(out)
    }

    /// One multi-factor section-adaptive attention layer: per-factor key/value
    /// GIN propagation, attention scores against the layer query, factor-wise
    /// softmax gating. Returns the gated streams, their sum, and the n x k
    /// attention matrix.
    pub fn mfsa_layer(
        &self,
        tape: &mut Tape,
        layer: usize,
        streams: &[NodeId],
        q: NodeId,
        adj: &Arc<Adjacency>,
    ) -> Result<(NodeId, Vec<NodeId>, NodeId), TensorError> {
        let mut keys = Vec::with_capacity(FACTORS);
        let mut vals = Vec::with_capacity(FACTORS);
        for (t, &h_t) in streams.iter().enumerate() {
            keys.push(self.gin(tape, &format!("l{layer}.f{t}.key"), h_t, adj)?);
            vals.push(self.gin(tape, &format!("l{layer}.f{t}.val"), h_t, adj)?);
        }
        let (attn, gates) = factor_attention(tape, &keys, q, self.cfg.d)?;
        let mut next = Vec::with_capacity(FACTORS);
        for t in 0..FACTORS {
            next.push(tape.broadcast_hadamard(vals[t], gates[t])?);
        }
        let mut fused = next[0];
        for &s in &next[1..] {
            fused = tape.add(fused, s)?;
        }
        Ok((fused, next, attn))
    }

    fn dueling(&self, tape: &mut Tape, emb: NodeId) -> Result<NodeId, TensorError> {
        let v0 = self.affine(tape, "value.0", emb)?;
        let v0 = tape.relu(v0);
        let v1 = self.affine(tape, "value.1", v0)?;
        let v1 = tape.relu(v1);
        let v = self.affine(tape, "value.2", v1)?;
        let a0 = self.affine(tape, "adv.0", emb)?;
        let a0 = tape.relu(a0);
        let adv = self.affine(tape, "adv.1", a0)?;
        let mean_adv = tape.mean_all(adv);
        let centered = tape.sub_scalar(adv, mean_adv)?;
        tape.add_scalar(centered, v)
    }

    fn check_inputs(&self, obs: &ObsInputs<'_>) -> Result<(), NnError> {
        if obs.h.n != obs.adj.n {
            return Err(NnError::Input(format!(
                "state has {} nodes but graph has {}",
                obs.h.n, obs.adj.n
            )));
        }
        if obs.z.len() != self.z_len {
            return Err(NnError::Input(format!(
                "section encoding has length {}, expected {}",
                obs.z.len(),
                self.z_len
            )));
        }
        if self.cfg.kind == NetworkKind::Concat && obs.h.n != self.n_nodes {
            return Err(NnError::Input(format!(
                "concat network was built for {} nodes, got {}",
                self.n_nodes, obs.h.n
            )));
        }
        Ok(())
    }

    /// Build the full forward pass on `tape`.
    pub fn forward_on(&self, tape: &mut Tape, obs: ObsInputs<'_>) -> Result<ForwardNodes, NnError> {
        self.check_inputs(&obs)?;
        let layers = self.cfg.layers;
        let (embedding, attention) = match self.cfg.kind {
            NetworkKind::Powerformer => {
                let mut streams = self.factorize_and_embed(tape, obs.h)?;
                let queries = self.query_chain(tape, obs.z, layers)?;
                let mut fused = None;
                let mut attn = None;
                for l in 0..layers {
                    let (f, next, a) = self.mfsa_layer(tape, l, &streams, queries[l], obs.adj)?;
                    streams = next;
                    fused = Some(f);
                    attn = Some(a);
                }
                (tape.mean_cols(fused.expect("at least one layer")), attn)
            }
            NetworkKind::PowerformerS => {
                let mut streams = self.factorize_and_embed(tape, obs.h)?;
                for l in 0..layers {
                    let mut next = Vec::with_capacity(FACTORS);
                    for (t, &h_t) in streams.iter().enumerate() {
                        next.push(self.gin(tape, &format!("l{l}.f{t}.val"), h_t, obs.adj)?);
                    }
                    streams = next;
                }
                let mut fused = streams[0];
                for &s in &streams[1..] {
                    fused = tape.add(fused, s)?;
                }
                (tape.mean_cols(fused), None)
            }
            NetworkKind::PowerformerM => {
                let mut stream = self.joint_embed(tape, obs.h)?;
                let queries = self.query_chain(tape, obs.z, layers)?;
                let scale = 1.0 / math::sqrt(self.cfg.d as f64);
                for l in 0..layers {
                    let key = self.gin(tape, &format!("l{l}.key"), stream, obs.adj)?;
                    let val = self.gin(tape, &format!("l{l}.val"), stream, obs.adj)?;
                    let kt = tape.transpose(key);
                    let score = tape.matmul(kt, queries[l])?;
                    // single stream: the factor softmax degenerates, so the
                    // raw section-adaptive score gates the value stream
                    let gate = tape.scale(score, scale);
                    stream = tape.broadcast_hadamard(val, gate)?;
                }
                (tape.mean_cols(stream), None)
            }
            NetworkKind::PowerformerE => {
                let mut stream = self.joint_embed(tape, obs.h)?;
                for l in 0..layers {
                    stream = self.gin(tape, &format!("l{l}.gin"), stream, obs.adj)?;
                }
                (tape.mean_cols(stream), None)
            }
            NetworkKind::Concat => {
                let n = obs.h.n;
                let mut data = Vec::with_capacity(4 * n + obs.z.len());
                data.extend_from_slice(&obs.h.values);
                data.extend_from_slice(obs.z);
                let x = tape.input(Tensor::column(data));
                let h0 = self.affine(tape, "concat.0", x)?;
                let h0 = tape.relu(h0);
                (self.affine(tape, "concat.1", h0)?, None)
            }
            NetworkKind::SoftAttention => {
                let mut streams = self.factorize_and_embed(tape, obs.h)?;
                for l in 0..layers {
                    let mut next = Vec::with_capacity(FACTORS);
                    for (t, &h_t) in streams.iter().enumerate() {
                        next.push(self.gin(tape, &format!("l{l}.f{t}.val"), h_t, obs.adj)?);
                    }
                    streams = next;
                }
                let z_node = tape.input(Tensor::column(obs.z.to_vec()));
                let mix_logits = self.affine(tape, "mix", z_node)?;
                let weights = tape.softmax_cols(mix_logits);
                let mut emb = None;
                for (t, &s) in streams.iter().enumerate() {
                    let pooled = tape.mean_cols(s);
                    let w_t = tape.pick(weights, t)?;
                    let term = tape.mul_scalar(pooled, w_t)?;
                    emb = Some(match emb {
                        None => term,
                        Some(acc) => tape.add(acc, term)?,
                    });
                }
                (emb.expect("k factors"), None)
            }
        };
        let q = self.dueling(tape, embedding)?;
        Ok(ForwardNodes {
            q,
            embedding,
            attention,
        })
    }

    /// Q-values without gradient bookkeeping.
    pub fn q_values(&self, obs: ObsInputs<'_>) -> Result<Vec<f64>, NnError> {
        let mut tape = Tape::new();
        let nodes = self.forward_on(&mut tape, obs)?;
        Ok(tape.value(nodes.q).data.clone())
    }

    /// Graph-level embedding (d values).
    pub fn embedding(&self, obs: ObsInputs<'_>) -> Result<Vec<f64>, NnError> {
        let mut tape = Tape::new();
        let nodes = self.forward_on(&mut tape, obs)?;
        Ok(tape.value(nodes.embedding).data.clone())
    }
}

/// Section-adaptive attention across factors: score each key stream against
/// the query (`K_t^T q / sqrt(d)`), stack the k scores per node, and apply a
/// softmax over the factor dimension. Returns the (n, k) attention matrix and
/// the k per-factor gate columns (n, 1).
pub fn factor_attention(
    tape: &mut Tape,
    keys: &[NodeId],
    q: NodeId,
    d: usize,
) -> Result<(NodeId, Vec<NodeId>), TensorError> {
    let k = keys.len();
    let scale = 1.0 / math::sqrt(d as f64);
    let mut scores = Vec::with_capacity(k);
    for &key in keys {
        let kt = tape.transpose(key);
        let s = tape.matmul(kt, q)?;
        scores.push(tape.scale(s, scale));
    }
    let n = tape.value(scores[0]).rows;
    let stacked = tape.concat_rows(&scores)?; // (k*n, 1)
    let factors_by_nodes = tape.reshape(stacked, k, n)?; // row t = factor t
    let soft = tape.softmax_cols(factors_by_nodes); // softmax over factors
    let mut gates = Vec::with_capacity(k);
    for t in 0..k {
        let row = tape.slice_rows(soft, t, 1)?; // (1, n)
        gates.push(tape.transpose(row)); // (n, 1)
    }
    let attn = tape.transpose(soft); // (n, k)
    Ok((attn, gates))
}
