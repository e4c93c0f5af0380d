//! Binary checkpoint format. All integers and floats are little-endian.
//!
//! | field | encoding |
//! |---|---|
//! | magic | 8 bytes `TDANCKPT` |
//! | version | u32 (currently 1) |
//! | variant | u8 (0 tdan, 1 mfsr, 2 sisr) |
//! | k1, k2, channels, depth, radius, scale | 6 x u32 |
//! | dtype | u8 (0 f32, 1 f64) |
//! | epoch, step, seed | 3 x u64 |
//! | adam step | u64 |
//! | adam beta1, beta2, eps | 3 x f64 |
//! | parameter count P | u32 |
//! | per parameter | u32 name length, UTF-8 name, 4 x u32 shape, values |
//! | first moments | values of every parameter, registry order |
//! | second moments | values of every parameter, registry order |
//!
//! Values are stored in the checkpoint's dtype. The run's random state is
//! fully determined by `seed` and `step`.

use std::path::Path;

use tdan_tensor::{DType, Float, ParamStore, Shape, Tensor};

use super::adam::{Adam, AdamConfig};
use crate::config::{ModelConfig, Variant};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TDANCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Float> {
    pub config: ModelConfig,
    pub epoch: u64,
    pub step: u64,
    pub seed: u64,
    pub params: ParamStore<T>,
    pub adam: Adam<T>,
}

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::F32 => 0,
        DType::F64 => 1,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn values<T: Float>(&mut self, t: &Tensor<T>) {
        for &v in t.data() {
            match T::DTYPE {
                DType::F32 => self.0.extend_from_slice(&(v.to_f64() as f32).to_le_bytes()),
                DType::F64 => self.0.extend_from_slice(&v.to_f64().to_le_bytes()),
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "file is truncated or corrupt: needed {n} bytes at offset {}, {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn values<T: Float>(&mut self, shape: Shape) -> Result<Tensor<T>> {
        let n = shape.numel();
        let width = T::DTYPE.size_of();
        let raw = self.take(n.checked_mul(width).ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?)?;
        let data = raw
            .chunks_exact(width)
            .map(|b| match T::DTYPE {
                DType::F32 => T::from_f64(f32::from_le_bytes(b.try_into().unwrap()) as f64),
                DType::F64 => T::from_f64(f64::from_le_bytes(b.try_into().unwrap())),
            })
            .collect();
        Ok(Tensor::from_vec(shape, data)?)
    }
}

impl<T: Float> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        let c = &self.config;
        w.u8(c.variant.code());
        for v in [c.k1, c.k2, c.channels, c.depth, c.radius, c.scale] {
            w.u32(v);
        }
        w.u8(dtype_code(T::DTYPE));
        w.u64(self.epoch);
        w.u64(self.step);
        w.u64(self.seed);
        w.u64(self.adam.step);
        w.f64(self.adam.config.beta1);
        w.f64(self.adam.config.beta2);
        w.f64(self.adam.config.eps);
        w.u32(self.params.len());
        for (_, p) in self.params.iter() {
            w.u32(p.name().len());
            w.0.extend_from_slice(p.name().as_bytes());
            for d in p.shape().dims() {
                w.u32(d);
            }
            w.values(p.value());
        }
        for t in self.adam.m.iter().chain(&self.adam.v) {
            w.values(t);
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8).map_err(|_| Error::Checkpoint("file too short to be a checkpoint".into()))? != MAGIC {
            return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
        }
        let version = r.u32()? as u32;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version} (expected {VERSION})")));
        }
        let code = r.u8()?;
        let variant = Variant::from_code(code).ok_or_else(|| Error::Checkpoint(format!("unknown variant code {code}")))?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()?;
        }
        let [k1, k2, channels, depth, radius, scale] = dims;
        let config = ModelConfig { variant, k1, k2, channels, depth, radius, scale };
        let dtype = r.u8()?;
        if dtype != dtype_code(T::DTYPE) {
            return Err(Error::Checkpoint(format!("checkpoint dtype code {dtype} does not match the requested precision")));
        }
        let (epoch, step, seed) = (r.u64()?, r.u64()?, r.u64()?);
        let adam_step = r.u64()?;
        let adam_config = AdamConfig { beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
        let count = r.u32()?;
        let mut params = ParamStore::new();
        let mut shapes = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let shape = Shape::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            let value = r.values(shape)?;
            params.register(name, value).map_err(|e| Error::Checkpoint(e.to_string()))?;
            shapes.push(shape);
        }
        let m = shapes.iter().map(|&s| r.values(s)).collect::<Result<Vec<_>>>()?;
        let v = shapes.iter().map(|&s| r.values(s)).collect::<Result<Vec<_>>>()?;
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes after checkpoint data", buf.len() - r.pos)));
        }
        Ok(Self { config, epoch, step, seed, params, adam: Adam { config: adam_config, step: adam_step, m, v } })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint; with `expected`, any difference from the stored
    /// model configuration is an error.
    pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck = Self::from_bytes(&bytes)?;
        if let Some(want) = expected {
            check_config(want, &ck.config)?;
        }
        Ok(ck)
    }
}

pub fn check_config(expected: &ModelConfig, found: &ModelConfig) -> Result<()> {
    if expected != found {
        return Err(Error::Checkpoint(format!("model configuration mismatch: run uses {expected:?}, checkpoint holds {found:?}")));
    }
    Ok(())
}
