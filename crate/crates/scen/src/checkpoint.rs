//! Model checkpoint file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      8 bytes  "SCENCKPT"
//! version    u32      1
//! dims       7 x u32  feature_dim embed_dim hidden proto_dim n_states n_objects classifier_depth
//! count      u32      number of tensors that follow
//! tensors             fc.weight fc.bias, then e_s, e_o, c_a, c_o layer by layer (weight, bias)
//! stm magic  4 bytes  "STM1"
//! stm ver    u32      1
//! stm hidden u32
//! count      u32
//! tensors             g then d, layer by layer (weight, bias)
//! ```
//!
//! Each tensor is `u32 rank`, `rank x u32` shape, then f64 values row-major.

use scen_core::model::{ModelDims, ScenParams};
use scen_core::stm::StmParams;
use scen_core::train::Model;
use scen_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SCENCKPT";
pub const VERSION: u32 = 1;
pub const STM_MAGIC: &[u8; 4] = b"STM1";
pub const STM_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensors<'a>(out: &mut Vec<u8>, ts: impl ExactSizeIterator<Item = &'a Tensor>) {
    put_u32(out, ts.len());
    for t in ts {
        put_u32(out, t.rank());
        for &d in t.shape() {
            put_u32(out, d);
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode(model: &Model) -> Vec<u8> {
    let d = model.scen.dims();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    for v in [d.feature_dim, d.embed_dim, d.hidden, d.proto_dim, d.n_states, d.n_objects, d.classifier_depth] {
        put_u32(&mut out, v);
    }
    put_tensors(&mut out, model.scen.tensors().into_iter());
    out.extend_from_slice(STM_MAGIC);
    put_u32(&mut out, STM_VERSION as usize);
    put_u32(&mut out, model.stm.hidden());
    put_tensors(&mut out, model.stm.tensors().into_iter());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Checkpoint {
            offset: self.at,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn expect(&mut self, magic: &[u8], what: &str) -> Result<()> {
        let start = self.at;
        if self.take(magic.len())? != magic {
            self.at = start;
            return Err(self.err(format!("missing {what} magic")));
        }
        Ok(())
    }

    fn version(&mut self, want: u32) -> Result<()> {
        let start = self.at;
        let v = self.u32()?;
        if v != want as usize {
            self.at = start;
            return Err(self.err(format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn tensors(&mut self, into: Vec<&mut Tensor>) -> Result<()> {
        let start = self.at;
        let n = self.u32()?;
        if n != into.len() {
            self.at = start;
            return Err(self.err(format!("{n} tensors stored, architecture needs {}", into.len())));
        }
        for (i, t) in into.into_iter().enumerate() {
            let start = self.at;
            let rank = self.u32()?;
            let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
            if shape != t.shape() {
                self.at = start;
                return Err(self.err(format!("tensor {i} has shape {shape:?}, expected {:?}", t.shape())));
            }
            for v in t.data_mut() {
                *v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
            }
        }
        Ok(())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, at: 0 };
    r.expect(MAGIC, "SCENCKPT")?;
    r.version(VERSION)?;
    let dims_at = r.at;
    let mut d = [0usize; 7];
    for v in &mut d {
        *v = r.u32()?;
    }
    let dims = ModelDims {
        feature_dim: d[0],
        embed_dim: d[1],
        hidden: d[2],
        proto_dim: d[3],
        n_states: d[4],
        n_objects: d[5],
        classifier_depth: d[6],
    };
    let mut scen = ScenParams::zeros(&dims).map_err(|e| Error::Checkpoint {
        offset: dims_at,
        msg: e.to_string(),
    })?;
    r.tensors(scen.tensors_mut())?;
    r.expect(STM_MAGIC, "STM section")?;
    r.version(STM_VERSION)?;
    let hidden_at = r.at;
    let hidden = r.u32()?;
    let mut stm = StmParams::zeros(dims.proto_dim, dims.feature_dim, hidden).map_err(|e| Error::Checkpoint {
        offset: hidden_at,
        msg: e.to_string(),
    })?;
    r.tensors(stm.tensors_mut())?;
    if r.at != bytes.len() {
        return Err(r.err("trailing bytes after the STM section"));
    }
    Ok(Model { scen, stm })
}
