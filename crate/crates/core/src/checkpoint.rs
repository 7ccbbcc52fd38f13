//! Model checkpoints.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic "SICN" | version u32 | order u32 | blocks u32
//! per block:  layers u32, per layer: input_dim u32, output_dim u32, activation u8
//! params u64 | params × f64
//! ```
//!
//! A meta-learning checkpoint appends the outer optimizer state:
//!
//! ```text
//! magic "OPTS" | kind u8 (0 sgd, 1 adam) | step_size f64 | beta1 f64 | beta2 f64
//! epsilon f64 | step u64 | moments u64 | m × f64 | v × f64 | trace u64 | trace × f64
//! ```
//!
//! A JSON sidecar carries the same header fields in readable form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::MetaState;
use crate::numerics::{Activation, LayerSpec, MlpLayout, OptimizerKind, OptimizerState};
use crate::sicnet::{SicNetArch, SicNetModel};

const MODEL_MAGIC: &[u8; 4] = b"SICN";
const OPT_MAGIC: &[u8; 4] = b"OPTS";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub constellation_order: usize,
    pub blocks: Vec<Vec<LayerSpec>>,
    pub param_count: usize,
    pub has_optimizer: bool,
}

impl CheckpointMeta {
    fn for_model(model: &SicNetModel, has_optimizer: bool) -> Self {
        Self {
            format: "sicnet-checkpoint".into(),
            version: VERSION,
            constellation_order: model.arch.order(),
            blocks: model
                .arch
                .blocks()
                .iter()
                .map(|b| b.layers().to_vec())
                .collect(),
            param_count: model.param_count(),
            has_optimizer,
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    put_u64(out, vs.len() as u64);
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Checkpoint(format!("vector length {n} exceeds remaining bytes")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn encode_model(model: &SicNetModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.param_count());
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, model.arch.order() as u32);
    put_u32(&mut out, model.arch.devices() as u32);
    for b in model.arch.blocks() {
        put_u32(&mut out, b.layers().len() as u32);
        for s in b.layers() {
            put_u32(&mut out, s.input_dim as u32);
            put_u32(&mut out, s.output_dim as u32);
            out.push(s.activation.code());
        }
    }
    put_f64s(&mut out, &model.theta);
    out
}

fn decode_model_from(c: &mut Cursor<'_>) -> Result<SicNetModel> {
    if c.take(4)? != MODEL_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let order = c.u32()? as usize;
    let n_blocks = c.u32()? as usize;
    let mut blocks = Vec::with_capacity(n_blocks.min(64));
    for _ in 0..n_blocks {
        let n_layers = c.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let i = c.u32()? as usize;
            let o = c.u32()? as usize;
            let code = c.u8()?;
            let act = Activation::from_code(code)
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation code {code}")))?;
            layers.push(LayerSpec::new(i, o, act));
        }
        blocks.push(MlpLayout::new(layers)?);
    }
    let arch = SicNetArch::from_blocks(order, blocks)?;
    let theta = c.f64s()?;
    SicNetModel::from_theta(arch, theta)
}

pub fn decode_model(bytes: &[u8]) -> Result<SicNetModel> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let m = decode_model_from(&mut c)?;
    if !c.done() {
        return Err(Error::Checkpoint("trailing bytes after model".into()));
    }
    Ok(m)
}

pub fn encode_meta_state(state: &MetaState) -> Vec<u8> {
    let mut out = encode_model(&state.model);
    let o = &state.optimizer;
    out.extend_from_slice(OPT_MAGIC);
    out.push(match o.kind {
        OptimizerKind::Sgd => 0,
        OptimizerKind::Adam => 1,
    });
    for v in [o.step_size, o.beta1, o.beta2, o.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_u64(&mut out, o.step);
    put_u64(&mut out, o.m.len() as u64);
    for v in o.m.iter().chain(&o.v) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_f64s(&mut out, &state.loss_trace);
    out
}

pub fn decode_meta_state(bytes: &[u8]) -> Result<MetaState> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let model = decode_model_from(&mut c)?;
    if c.take(4)? != OPT_MAGIC {
        return Err(Error::Checkpoint("missing optimizer appendix".into()));
    }
    let kind = match c.u8()? {
        0 => OptimizerKind::Sgd,
        1 => OptimizerKind::Adam,
        k => return Err(Error::Checkpoint(format!("unknown optimizer kind {k}"))),
    };
    let step_size = c.f64()?;
    let beta1 = c.f64()?;
    let beta2 = c.f64()?;
    let epsilon = c.f64()?;
    let step = c.u64()?;
    let n = c.u64()? as usize;
    if n > (bytes.len() - c.pos) / 16 {
        return Err(Error::Checkpoint("moment vectors exceed remaining bytes".into()));
    }
    let m = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let v = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let loss_trace = c.f64s()?;
    if !c.done() {
        return Err(Error::Checkpoint("trailing bytes after optimizer state".into()));
    }
    Ok(MetaState {
        model,
        optimizer: OptimizerState {
            kind,
            step_size,
            beta1,
            beta2,
            epsilon,
            step,
            m,
            v,
        },
        loss_trace,
    })
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Writes `<path>` (binary) and `<path>.json` (metadata).
pub fn save_model(model: &SicNetModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model))?;
    let meta = CheckpointMeta::for_model(model, false);
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SicNetModel> {
    decode_model(&fs::read(path)?)
}

pub fn save_meta_state(state: &MetaState, path: &Path) -> Result<()> {
    fs::write(path, encode_meta_state(state))?;
    let meta = CheckpointMeta::for_model(&state.model, true);
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_meta_state(path: &Path) -> Result<MetaState> {
    decode_meta_state(&fs::read(path)?)
}
