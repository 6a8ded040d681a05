//! Binary checkpoint archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "T2VCKPT1"
//! u32 len, JSON config snapshot {variant, model, train}
//! u32 len, vocabulary file contents
//! u64 seed, u64 step
//! u32 count, then per tensor: name, u8 kind, u32 rank, u32 dims..., f32 values
//! generator optimizer, critic optimizer:
//!     u64 steps, u32 count, then per entry: name, f32 first moment, f32 second moment
//! ```
//!
//! Names are `u32` length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use t2v_autograd::{Adam, ParamId, ParamKind, ParamStore, Tensor};

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{io_err, Error, Result};
use crate::text_encoder::Vocabulary;
use crate::training::{TrainState, VariantKind};

const MAGIC: &[u8; 8] = b"T2VCKPT1";

#[derive(Serialize, Deserialize)]
struct Snapshot {
    variant: VariantKind,
    model: ModelConfig,
    train: TrainConfig,
}

fn write_name<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn write_values<W: Write>(w: &mut W, t: &Tensor<f32>) -> std::io::Result<()> {
    for &v in t.data() {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

fn write_optimizer<W: Write>(w: &mut W, opt: &Adam<f32>, ps: &ParamStore<f32>) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(opt.steps())?;
    let moments: Vec<_> = opt.moments().collect();
    w.write_u32::<LittleEndian>(moments.len() as u32)?;
    for (id, m, v) in moments {
        write_name(w, &ps.entry(id).name)?;
        write_values(w, m)?;
        write_values(w, v)?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(state: &TrainState, mut w: W) -> Result<()> {
    let snapshot = Snapshot {
        variant: state.kind(),
        model: state.model.cfg.clone(),
        train: state.train.clone(),
    };
    let json = serde_json::to_vec(&snapshot).expect("config snapshot serializes");
    let mut vocab = Vec::new();
    state.vocab.write(&mut vocab).expect("in-memory write");
    let io = |e| Error::Io {
        context: "writing checkpoint".into(),
        source: e,
    };
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(json.len() as u32)?;
        w.write_all(&json)?;
        w.write_u32::<LittleEndian>(vocab.len() as u32)?;
        w.write_all(&vocab)?;
        w.write_u64::<LittleEndian>(state.seed)?;
        w.write_u64::<LittleEndian>(state.step)?;
        w.write_u32::<LittleEndian>(state.params.len() as u32)?;
        for (_, e) in state.params.iter() {
            write_name(&mut w, &e.name)?;
            w.write_u8(match e.kind {
                ParamKind::Weight => 0,
                ParamKind::Buffer => 1,
            })?;
            let shape = e.value().shape();
            w.write_u32::<LittleEndian>(shape.len() as u32)?;
            for &d in shape {
                w.write_u32::<LittleEndian>(d as u32)?;
            }
            write_values(&mut w, e.value())?;
        }
        write_optimizer(&mut w, &state.generator_opt, &state.params)?;
        write_optimizer(&mut w, &state.critic_opt, &state.params)?;
        w.flush()
    })()
    .map_err(io)
}

struct Reader<'p, R> {
    r: R,
    path: &'p Path,
}

impl<R: Read> Reader<'_, R> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            what: "checkpoint",
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        self.r.read_u32::<LittleEndian>().map_err(|e| self.fail(e.to_string()))
    }

    fn u64(&mut self) -> Result<u64> {
        self.r.read_u64::<LittleEndian>().map_err(|e| self.fail(e.to_string()))
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.r.read_exact(&mut buf).map_err(|e| self.fail(e.to_string()))?;
        Ok(buf)
    }

    fn blob(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        self.bytes(n)
    }

    fn name(&mut self) -> Result<String> {
        let b = self.blob()?;
        String::from_utf8(b).map_err(|_| self.fail("name is not UTF-8"))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut v = vec![0f32; n];
        self.r
            .read_f32_into::<LittleEndian>(&mut v)
            .map_err(|e| self.fail(e.to_string()))?;
        Ok(v)
    }

    fn optimizer(&mut self, ps: &ParamStore<f32>) -> Result<(u64, Vec<(ParamId, Tensor<f32>, Tensor<f32>)>)> {
        let steps = self.u64()?;
        let count = self.u32()? as usize;
        let mut moments = Vec::with_capacity(count);
        for _ in 0..count {
            let name = self.name()?;
            let id = ps
                .id(&name)
                .ok_or_else(|| self.fail(format!("optimizer state for unknown parameter {name}")))?;
            let shape = ps.get(id).shape().to_vec();
            let n = ps.get(id).len();
            let m = Tensor::from_vec(&shape, self.values(n)?);
            let v = Tensor::from_vec(&shape, self.values(n)?);
            moments.push((id, m, v));
        }
        Ok((steps, moments))
    }
}

pub fn read_checkpoint<R: Read>(r: R, path: &Path) -> Result<TrainState> {
    let mut rd = Reader { r, path };
    if rd.bytes(8)? != MAGIC {
        return Err(rd.fail("not a checkpoint (bad magic)"));
    }
    let json = rd.blob()?;
    let snapshot: Snapshot = serde_json::from_slice(&json).map_err(|e| rd.fail(format!("config snapshot: {e}")))?;
    let vocab_bytes = rd.blob()?;
    let vocab = Vocabulary::read(&vocab_bytes[..], path)?;
    let seed = rd.u64()?;
    let step = rd.u64()?;
    let mut train = snapshot.train;
    train.seed = seed;
    let mut state = TrainState::new(snapshot.variant, &snapshot.model, &train, vocab)?;
    state.step = step;

    let count = rd.u32()? as usize;
    let mut loaded: BTreeMap<String, (ParamKind, Tensor<f32>)> = BTreeMap::new();
    for _ in 0..count {
        let name = rd.name()?;
        let kind = match rd.r.read_u8().map_err(|e| rd.fail(e.to_string()))? {
            0 => ParamKind::Weight,
            1 => ParamKind::Buffer,
            k => return Err(rd.fail(format!("bad parameter kind {k} for {name}"))),
        };
        let rank = rd.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(rd.u32()? as usize);
        }
        let n = shape.iter().product();
        let t = Tensor::from_vec(&shape, rd.values(n)?);
        loaded.insert(name, (kind, t));
    }
    if loaded.len() != state.params.len() {
        return Err(rd.fail(format!(
            "{} tensors stored, the {} model has {}",
            loaded.len(),
            snapshot.variant,
            state.params.len()
        )));
    }
    let ids: Vec<(ParamId, String, ParamKind, Vec<usize>)> = state
        .params
        .iter()
        .map(|(id, e)| (id, e.name.clone(), e.kind, e.value().shape().to_vec()))
        .collect();
    for (id, name, kind, shape) in ids {
        let (k, t) = loaded
            .remove(&name)
            .ok_or_else(|| rd.fail(format!("missing tensor {name}")))?;
        if k != kind || t.shape() != shape.as_slice() {
            return Err(rd.fail(format!("tensor {name} has the wrong kind or shape {:?}", t.shape())));
        }
        state.params.set(id, t);
    }
    let (gs, gm) = rd.optimizer(&state.params)?;
    state.generator_opt.restore(gs, gm);
    let (cs, cm) = rd.optimizer(&state.params)?;
    state.critic_opt.restore(cs, cm);
    let mut rest = [0u8; 1];
    if rd.r.read(&mut rest).map_err(|e| rd.fail(e.to_string()))? != 0 {
        return Err(rd.fail("trailing bytes"));
    }
    Ok(state)
}

impl TrainState {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        write_checkpoint(self, &mut buf)?;
        std::fs::write(path, buf).map_err(io_err(format!("writing {}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(format!("reading {}", path.display())))?;
        read_checkpoint(&bytes[..], path)
    }
}
