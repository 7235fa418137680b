//! Versioned binary records.
//!
//! A container file is `MAGIC (8 bytes) | version: u32 | count: u32` followed
//! by `count` records, each `name_len: u32 | name | payload_len: u64 |
//! payload`. All integers and floats are little-endian; matrices are written
//! row-major as `rows: u64 | cols: u64 | f64…`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Adam, AdamConfig, Layer, Mlp, MlpSpec, OutputActivation, ParameterSet};
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"HIGLCKPT";
pub const CONTAINER_VERSION: u32 = 1;
const MLP_MAGIC: &[u8; 4] = b"HGNN";

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.bytes(s.as_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for &x in v {
            self.f64(x);
        }
    }

    pub fn matrix(&mut self, m: &Array2<f64>) {
        self.usize(m.nrows());
        self.usize(m.ncols());
        for &x in m.iter() {
            self.f64(x);
        }
    }

    pub fn put<T: Codec + ?Sized>(&mut self, v: &T) {
        v.encode(self);
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Decoder { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated record: need {n} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("invalid bool byte {b}"))),
        }
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }

    /// A length that must be payable from the remaining bytes at `unit` bytes each.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.checked_mul(unit).is_none_or(|b| b > self.remaining()) {
            return Err(Error::Format(format!("declared length {n} exceeds remaining data")));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid utf-8".into()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix size overflow".into()))?;
        if n.checked_mul(8).is_none_or(|b| b > self.remaining()) {
            return Err(Error::Format(format!("matrix {rows}x{cols} exceeds remaining data")));
        }
        let data: Vec<f64> = (0..n).map(|_| self.f64()).collect::<Result<_>>()?;
        Ok(Array2::from_shape_vec((rows, cols), data).unwrap())
    }

    pub fn get<T: Codec>(&mut self) -> Result<T> {
        T::decode(self)
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", self.remaining())))
        }
    }
}

pub trait Codec: Sized {
    fn encode(&self, e: &mut Encoder);
    fn decode(d: &mut Decoder) -> Result<Self>;
}

impl Codec for MlpSpec {
    fn encode(&self, e: &mut Encoder) {
        e.usize(self.layer_sizes.len());
        for &n in &self.layer_sizes {
            e.usize(n);
        }
        match &self.output_activation {
            OutputActivation::Identity => e.u8(0),
            OutputActivation::TanhScaled(s) => {
                e.u8(1);
                e.f64s(s);
            }
        }
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let n = d.len(8)?;
        let sizes = (0..n).map(|_| d.usize()).collect::<Result<Vec<_>>>()?;
        let out = match d.u8()? {
            0 => OutputActivation::Identity,
            1 => OutputActivation::TanhScaled(d.f64s()?),
            k => return Err(Error::Format(format!("unknown output activation tag {k}"))),
        };
        MlpSpec::new(sizes, out).map_err(|e| Error::Format(format!("bad network spec: {e}")))
    }
}

impl Codec for ParameterSet {
    fn encode(&self, e: &mut Encoder) {
        e.usize(self.layers.len());
        for l in &self.layers {
            e.matrix(&l.weight);
            e.f64s(l.bias.as_slice().unwrap());
        }
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let n = d.len(16)?;
        let layers = (0..n)
            .map(|_| {
                let weight = d.matrix()?;
                let bias = Array1::from(d.f64s()?);
                if bias.len() != weight.ncols() {
                    return Err(Error::Format("bias length does not match weight columns".into()));
                }
                Ok(Layer { weight, bias })
            })
            .collect::<Result<_>>()?;
        Ok(ParameterSet { layers })
    }
}

impl Codec for Mlp {
    fn encode(&self, e: &mut Encoder) {
        e.bytes(MLP_MAGIC);
        e.put(self.spec());
        e.put(&self.params);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        if d.take(4)? != MLP_MAGIC {
            return Err(Error::Format("bad network magic".into()));
        }
        let spec: MlpSpec = d.get()?;
        let params: ParameterSet = d.get()?;
        Mlp::from_parts(spec, params).map_err(|e| Error::Format(format!("network shape: {e}")))
    }
}

impl Codec for Adam {
    fn encode(&self, e: &mut Encoder) {
        let c = self.config;
        for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
            e.f64(v);
        }
        e.u64(self.step);
        e.put(&self.first_moment);
        e.put(&self.second_moment);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let config = AdamConfig { learning_rate: d.f64()?, beta1: d.f64()?, beta2: d.f64()?, epsilon: d.f64()? };
        let step = d.u64()?;
        let first_moment: ParameterSet = d.get()?;
        let second_moment: ParameterSet = d.get()?;
        if !first_moment.same_shape(&second_moment) {
            return Err(Error::Format("adam moment shapes differ".into()));
        }
        Ok(Adam { config, step, first_moment, second_moment })
    }
}

impl Codec for Vec<f64> {
    fn encode(&self, e: &mut Encoder) {
        e.f64s(self);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        d.f64s()
    }
}

/// Named binary records written as one file.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Container {
    pub records: Vec<(String, Vec<u8>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, payload: Vec<u8>) {
        self.records.push((name.to_string(), payload));
    }

    pub fn push_with(&mut self, name: &str, f: impl FnOnce(&mut Encoder)) {
        let mut e = Encoder::new();
        f(&mut e);
        self.push(name, e.finish());
    }

    pub fn get(&self, name: &str) -> Result<&[u8]> {
        self.records
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
            .ok_or_else(|| Error::Format(format!("missing record '{name}'")))
    }

    /// Decodes record `name` with `f`, requiring it to consume the whole payload.
    pub fn decode_with<T>(&self, name: &str, f: impl FnOnce(&mut Decoder) -> Result<T>) -> Result<T> {
        let mut d = Decoder::new(self.get(name)?);
        let v = f(&mut d).map_err(|e| Error::Format(format!("record '{name}': {e}")))?;
        d.expect_end().map_err(|e| Error::Format(format!("record '{name}': {e}")))?;
        Ok(v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(CONTAINER_MAGIC);
        e.u32(CONTAINER_VERSION);
        e.u32(self.records.len() as u32);
        for (name, payload) in &self.records {
            e.u32(name.len() as u32);
            e.bytes(name.as_bytes());
            e.u64(payload.len() as u64);
            e.bytes(payload);
        }
        e.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(data);
        if d.take(8).map_err(|_| Error::Format("file too short for header".into()))? != CONTAINER_MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = d.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version} (expected {CONTAINER_VERSION})"
            )));
        }
        let count = d.u32()?;
        let mut records = Vec::with_capacity(count.min(1024) as usize);
        for _ in 0..count {
            let name_len = d.u32()? as usize;
            let name = String::from_utf8(d.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("record name is not utf-8".into()))?;
            let len = d.u64()? as usize;
            let payload = d.take(len)?.to_vec();
            records.push((name, payload));
        }
        d.expect_end()?;
        Ok(Container { records })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Standalone single-network checkpoint.
pub fn mlp_to_bytes(net: &Mlp) -> Vec<u8> {
    let mut c = Container::new();
    c.push_with("mlp", |e| e.put(net));
    c.to_bytes()
}

pub fn mlp_from_bytes(data: &[u8]) -> Result<Mlp> {
    Container::from_bytes(data)?.decode_with("mlp", |d| d.get())
}
