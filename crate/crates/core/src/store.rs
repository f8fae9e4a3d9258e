//! Named parameter storage: gradients, Adam state, and the binary checkpoint
//! format.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum StoreError {
    DuplicateName(String),
    MissingGrad(String),
    /// Checkpoint bytes are not a valid archive.
    BadCheckpoint(&'static str),
    /// Checkpoint disagrees with the store's parameter names or shapes.
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::DuplicateName(n) => write!(f, "parameter `{n}` registered twice"),
            StoreError::MissingGrad(n) => write!(f, "parameter `{n}` has no gradient"),
            StoreError::BadCheckpoint(what) => write!(f, "invalid checkpoint: {what}"),
            StoreError::ShapeMismatch {
                name,
                expected,
                found,
            } => write!(
                f,
                "checkpoint shape mismatch for `{name}`: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
        }
    }
}

struct Param {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Ordered map of named learnable tensors. Iteration follows registration
/// order, which is deterministic for a given network construction.
pub struct ParameterStore {
    params: Vec<Param>,
    index: alloc::collections::BTreeMap<String, usize>,
    /// Optimizer step counter.
    pub step: u64,
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore {
            params: Vec::new(),
            index: alloc::collections::BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<(), StoreError> {
        if self.index.contains_key(name) {
            return Err(StoreError::DuplicateName(name.to_string()));
        }
        let len = value.len();
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: vec![0.0; len],
            m: vec![0.0; len],
            v: vec![0.0; len],
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.params[i].value)
    }

    pub fn grad_of(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.params[i].grad.as_slice())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Names in registration order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn add_grad(&mut self, name: &str, grad: &[f64]) {
        if let Some(&i) = self.index.get(name) {
            for (g, &d) in self.params[i].grad.iter_mut().zip(grad) {
                *g += d;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Deep copy of the parameter values (fresh optimizer state); used for
    /// target networks and snapshots.
    pub fn clone_values(&self) -> ParameterStore {
        let mut out = ParameterStore::new();
        for p in &self.params {
            out.insert(&p.name, p.value.clone()).expect("names unique");
        }
        out.step = self.step;
        out
    }

    /// Overwrite values from another store with identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParameterStore) {
        for p in &mut self.params {
            if let Some(src) = other.get(&p.name) {
                p.value.data.copy_from_slice(&src.data);
            }
        }
    }
}

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParameterStore {
    /// One Adam update over all parameters (registration order), then clear
    /// gradients and bump the step counter.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), StoreError> {
        for p in &self.params {
            if p.grad.len() != p.value.len() {
                return Err(StoreError::MissingGrad(p.name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(cfg.beta1, t);
        let bc2 = 1.0 - libm::pow(cfg.beta2, t);
        for p in &mut self.params {
            for i in 0..p.value.data.len() {
                let g = p.grad[i];
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                p.value.data[i] -= cfg.lr * m_hat / (math::sqrt(v_hat) + cfg.eps);
            }
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------
//
// Flat archive, little-endian:
//   magic  "SFCKPT01"      8 bytes
//   step   u64
//   count  u32
//   repeat count times:
//     name_len u16, name bytes (UTF-8)
//     rows u32, cols u32
//     rows*cols f64 values
//
// Round trips are bit-exact.

const MAGIC: &[u8; 8] = b"SFCKPT01";

pub fn serialize_store(store: &ParameterStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.total_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&store.step.to_le_bytes());
    out.extend_from_slice(&(store.params.len() as u32).to_le_bytes());
    for p in &store.params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols as u32).to_le_bytes());
        for v in &p.value.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.pos + n > self.bytes.len() {
            return Err(StoreError::BadCheckpoint("truncated archive"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse a checkpoint archive into a fresh store (values only, zero optimizer
/// state).
pub fn deserialize_store(bytes: &[u8]) -> Result<ParameterStore, StoreError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(StoreError::BadCheckpoint("bad magic / unsupported version"));
    }
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| StoreError::BadCheckpoint("non-UTF8 name"))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let raw = r.take(rows * cols * 8)?;
        let mut data = Vec::with_capacity(rows * cols);
        for chunk in raw.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        store
            .insert(&name, Tensor::from_vec(rows, cols, data))
            .map_err(|_| StoreError::BadCheckpoint("duplicate parameter name"))?;
    }
    if r.pos != bytes.len() {
        return Err(StoreError::BadCheckpoint("trailing bytes"));
    }
    store.step = step;
    Ok(store)
}

/// Load checkpointed values into an existing store, verifying names and
/// shapes.
pub fn load_into(store: &mut ParameterStore, bytes: &[u8]) -> Result<(), StoreError> {
    let loaded = deserialize_store(bytes)?;
    for p in &mut store.params {
        let src = loaded.get(&p.name).ok_or_else(|| StoreError::ShapeMismatch {
            name: p.name.clone(),
            expected: p.value.shape(),
            found: (0, 0),
        })?;
        if src.shape() != p.value.shape() {
            return Err(StoreError::ShapeMismatch {
                name: p.name.clone(),
                expected: p.value.shape(),
                found: src.shape(),
            });
        }
        p.value.data.copy_from_slice(&src.data);
    }
    store.step = loaded.step;
    Ok(())
}
