//! Binary checkpoint container (all integers and floats little-endian):
//!
//! ```text
//! magic          8 bytes  "SIMLCKPT"
//! version        u32      = 1
//! spec_len       u32      followed by the model spec as UTF-8 JSON
//! epochs_done    u64
//! n_params       u32      followed by n_params array records
//! has_optimizer  u8       0 or 1; when 1:
//!   kind         u8       0 = sgd, 1 = adagrad
//!   lr, eps      f64, f64
//!   steps        u64
//!   n_acc        u32      followed by n_acc array records
//!
//! array record:
//!   name_len u16, name (UTF-8), ndim u8, dims u64 x ndim, values f64 x prod(dims)
//! ```
//!
//! Parameter arrays are named `layer<i>.weight` / `layer<i>.bias` and appear
//! in layer order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LayerParams, Model, ModelSpec, ParameterStore};
use crate::tensor::Tensor;
use crate::train::optim::{OptimizerKind, OptimizerState};

pub const MAGIC: &[u8; 8] = b"SIMLCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<OptimizerState>,
    pub epochs_completed: usize,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn put_array(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(t.rank() as u8);
    for d in t.shape() {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let spec = serde_json::to_vec(ckpt.model.spec()).map_err(|e| fmt_err(e.to_string()))?;
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    out.extend_from_slice(&(ckpt.epochs_completed as u64).to_le_bytes());
    let named = ckpt.model.params().named();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in &named {
        put_array(&mut out, name, t);
    }
    match &ckpt.optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            out.push(match opt.kind {
                OptimizerKind::Sgd => 0,
                OptimizerKind::Adagrad => 1,
            });
            out.extend_from_slice(&opt.learning_rate.to_le_bytes());
            out.extend_from_slice(&opt.epsilon.to_le_bytes());
            out.extend_from_slice(&opt.steps.to_le_bytes());
            let acc = opt.accumulators.as_ref().map(|a| a.named()).unwrap_or_default();
            out.extend_from_slice(&(acc.len() as u32).to_le_bytes());
            for (name, t) in &acc {
                put_array(&mut out, name, t);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| fmt_err(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
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

    fn array(&mut self) -> Result<(String, Tensor)> {
        let name_len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| fmt_err("array name is not UTF-8"))?
            .to_owned();
        let ndim = self.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| fmt_err(format!("array {name} does not fit in the file")))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok((name, Tensor::new(shape, data)?))
    }
}

/// Rebuilds a parameter store for `spec` from named arrays.
fn store_from_arrays(spec: &ModelSpec, arrays: Vec<(String, Tensor)>) -> Result<ParameterStore> {
    let mut slots: Vec<Option<LayerParams>> = vec![None; spec.layers.len()];
    let mut iter = arrays.into_iter();
    for (i, layer) in spec.layers.iter().enumerate() {
        if !layer.is_trainable() {
            continue;
        }
        let mut next = |suffix: &str| -> Result<Tensor> {
            let (name, t) = iter
                .next()
                .ok_or_else(|| fmt_err(format!("missing arrays for layer {i}")))?;
            let expected = format!("layer{i}.{suffix}");
            if name != expected {
                return Err(fmt_err(format!("expected {expected}, found {name}")));
            }
            Ok(t)
        };
        let weight = next("weight")?;
        let bias = next("bias")?;
        slots[i] = Some(LayerParams { weight, bias });
    }
    if iter.next().is_some() {
        return Err(fmt_err("unexpected extra parameter arrays"));
    }
    let store = ParameterStore::new(slots);
    store
        .check_against(spec)
        .map_err(|e| fmt_err(e.to_string()))?;
    Ok(store)
}

pub fn decode(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8).ok() != Some(MAGIC.as_slice()) {
        return Err(fmt_err("bad magic, not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(fmt_err(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let spec_len = r.u32()? as usize;
    let spec: ModelSpec =
        serde_json::from_slice(r.take(spec_len)?).map_err(|e| fmt_err(format!("model spec: {e}")))?;
    spec.validate().map_err(|e| fmt_err(e.to_string()))?;
    let epochs_completed = r.u64()? as usize;
    let n_params = r.u32()?;
    let arrays = (0..n_params)
        .map(|_| r.array())
        .collect::<Result<Vec<_>>>()?;
    let params = store_from_arrays(&spec, arrays)?;
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let kind = match r.u8()? {
                0 => OptimizerKind::Sgd,
                1 => OptimizerKind::Adagrad,
                k => return Err(fmt_err(format!("unknown optimizer kind {k}"))),
            };
            let learning_rate = r.f64()?;
            let epsilon = r.f64()?;
            let steps = r.u64()?;
            let n_acc = r.u32()?;
            let arrays = (0..n_acc)
                .map(|_| r.array())
                .collect::<Result<Vec<_>>>()?;
            let accumulators = match kind {
                OptimizerKind::Sgd if arrays.is_empty() => None,
                OptimizerKind::Sgd => return Err(fmt_err("sgd state with accumulators")),
                OptimizerKind::Adagrad => Some(store_from_arrays(&spec, arrays)?),
            };
            Some(OptimizerState {
                kind,
                learning_rate,
                epsilon,
                steps,
                accumulators,
            })
        }
        f => return Err(fmt_err(format!("bad optimizer flag {f}"))),
    };
    if r.pos != buf.len() {
        return Err(fmt_err(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(Checkpoint {
        model: Model::from_parts(spec, params)?,
        optimizer,
        epochs_completed,
    })
}

pub fn checkpoint_save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
