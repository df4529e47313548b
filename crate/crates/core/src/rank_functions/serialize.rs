//! Binary checkpoint format for rank functions.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic b"RKFN"
//! 4       4     u32 format_version (= 1)
//! 8       4     u32 model_kind (0 = linear, 1 = highway)
//! 12      8     u64 p  (input feature dimension)
//! 20      8     u64 K  (hidden units; 0 for linear)
//! 28      8     u64 L  (layers; 0 for linear)
//! 36      ...   f64 tensors, row-major
//! ```
//!
//! Linear tensors: `w[p]`, `b`.
//! Highway tensors: `W_x[K*p]`, `b_x[K]`, `W_h[K*K]`, `b_h[K]`, `W_t[K*K]`,
//! `b_t[K]`, `w[K]`. Row `k` of each matrix is the incoming weight vector of
//! hidden unit `k`. The activation is always ReLU for the transform and the
//! logistic sigmoid for the gate.

use super::{HighwayParams, LinearParams, RankModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"RKFN";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const KIND_LINEAR: u32 = 0;
const KIND_HIGHWAY: u32 = 1;

pub(crate) struct ByteWriter(pub Vec<u8>);

impl ByteWriter {
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size overflows usize".into()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Format(format!("tensor of {n} floats exceeds file size")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_model(model: &RankModel) -> Vec<u8> {
    let mut w = ByteWriter(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_FORMAT_VERSION);
    match model {
        RankModel::Linear(m) => {
            w.u32(KIND_LINEAR);
            w.u64(m.w.len() as u64);
            w.u64(0);
            w.u64(0);
            w.f64s(&m.w);
            w.f64(m.b);
        }
        RankModel::Highway(m) => {
            w.u32(KIND_HIGHWAY);
            w.u64(m.input_dim as u64);
            w.u64(m.hidden as u64);
            w.u64(m.layers as u64);
            for t in m.tensors() {
                w.f64s(t);
            }
        }
    }
    w.0
}

pub fn decode_model(bytes: &[u8]) -> Result<RankModel> {
    let mut r = ByteReader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let kind = r.u32()?;
    let p = r.usize()?;
    let k = r.usize()?;
    let l = r.usize()?;
    let model = match kind {
        KIND_LINEAR => {
            let w = r.f64s(p)?;
            let b = r.f64()?;
            RankModel::Linear(LinearParams { w, b })
        }
        KIND_HIGHWAY => {
            if p == 0 || k == 0 || l == 0 {
                return Err(Error::Format("highway model with zero dimension".into()));
            }
            let kp = k.checked_mul(p).ok_or_else(|| Error::Format("shape overflow".into()))?;
            let kk = k.checked_mul(k).ok_or_else(|| Error::Format("shape overflow".into()))?;
            let m = HighwayParams {
                input_dim: p,
                hidden: k,
                layers: l,
                w_x: r.f64s(kp)?,
                b_x: r.f64s(k)?,
                w_h: r.f64s(kk)?,
                b_h: r.f64s(k)?,
                w_t: r.f64s(kk)?,
                b_t: r.f64s(k)?,
                w_out: r.f64s(k)?,
            };
            debug_assert!(m.shape_is_consistent());
            RankModel::Highway(m)
        }
        other => return Err(Error::Format(format!("unknown model kind {other}"))),
    };
    r.finish()?;
    Ok(model)
}
