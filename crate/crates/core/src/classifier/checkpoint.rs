//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `TWMD`, `u16` version, `u8` variant id,
//! `u8` flags (bit 0: ReLUs bypassed), `u32` tensor count, then per tensor
//! a `u32` rank and its `u32` dimensions, then every parameter as `f32` in
//! tensor order (weights before bias, layer by layer).

use super::model::{CnnModel, Variant};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TWMD";
pub const VERSION: u16 = 1;

fn tensor_shapes(model: &CnnModel<f32>) -> Vec<Vec<usize>> {
    model
        .layers()
        .iter()
        .filter_map(|l| l.shapes())
        .flat_map(|(w, b)| [w, vec![b]])
        .collect()
}

pub fn to_bytes(model: &CnnModel<f32>) -> Vec<u8> {
    let shapes = tensor_shapes(model);
    let mut out = Vec::with_capacity(16 + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(model.variant.id());
    out.push(model.bypass_relu as u8);
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for s in &shapes {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        for &d in s {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or("truncated checkpoint")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8], origin: &str) -> Result<CnnModel<f32>> {
    let fail = |reason: String| Error::format(origin, reason);
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(fail)? != MAGIC {
        return Err(fail("not a model checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(r.take(2).map_err(fail)?.try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported checkpoint version {version}")));
    }
    let head = r.take(2).map_err(fail)?;
    let variant =
        Variant::from_id(head[0]).ok_or_else(|| fail(format!("unknown variant id {}", head[0])))?;
    let bypass_relu = head[1] & 1 == 1;
    let n_tensors = r.u32().map_err(fail)? as usize;
    let mut shapes = Vec::new();
    for _ in 0..n_tensors.min(1024) {
        let rank = r.u32().map_err(fail)? as usize;
        let dims = (0..rank.min(8))
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(fail)?;
        shapes.push(dims);
    }
    let count: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    let body = r.take(count * 4).map_err(fail)?;
    if r.pos != buf.len() {
        return Err(fail("trailing bytes after parameters".into()));
    }
    let params = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut model = CnnModel::from_params(variant, params)?;
    if tensor_shapes(&model) != shapes {
        return Err(fail("layer shapes do not match the variant".into()));
    }
    model.bypass_relu = bypass_relu;
    Ok(model)
}
