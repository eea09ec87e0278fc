//! Named parameter tensors, deterministic initialization and the binary
//! weight-file format.
//!
//! File layout: the 8-byte magic `DLNSWGT\0`, a little-endian `u32` format
//! version, a little-endian `u64` manifest length, the JSON manifest (dims
//! plus per-tensor name, shape, dtype, byte offset and length), then the flat
//! little-endian `f64` payload.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::Linear;
use crate::error::{Error, Result};
use crate::grid::NUM_ACTIONS;

const MAGIC: &[u8; 8] = b"DLNSWGT\0";
const FORMAT_VERSION: u32 = 1;

/// Architecture sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub hidden: usize,
    pub heads: usize,
    pub blocks: usize,
    pub scales: usize,
    pub points: usize,
    pub window: usize,
    pub anchor_stride: usize,
    pub pyramid_channels: usize,
    pub bias_hidden: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            hidden: 128,
            heads: 4,
            blocks: 4,
            scales: 3,
            points: 8,
            window: 32,
            anchor_stride: 16,
            pyramid_channels: 32,
            bias_hidden: 16,
        }
    }
}

impl Dims {
    /// A narrow configuration for fast tests; structure is unchanged.
    pub fn small() -> Self {
        Self {
            hidden: 16,
            heads: 2,
            blocks: 2,
            pyramid_channels: 8,
            bias_hidden: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.hidden,
            self.heads,
            self.blocks,
            self.points,
            self.window,
            self.anchor_stride,
            self.pyramid_channels,
            self.bias_hidden,
        ];
        if positive.contains(&0) {
            return Err(Error::Params("all dimensions must be positive".into()));
        }
        if self.hidden % self.heads != 0 || self.hidden % 2 != 0 {
            return Err(Error::Params("hidden size must be even and divisible by heads".into()));
        }
        if self.scales != 3 {
            return Err(Error::Params("the map pyramid has exactly 3 scales".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    bytes: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    dims: Dims,
    tensors: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams {
    dims: Dims,
    tensors: BTreeMap<String, Tensor>,
}

/// Every parameter's name and shape for `dims`.
fn layout(d: &Dims) -> Vec<(String, Vec<usize>)> {
    let h = d.hidden;
    let f = d.pyramid_channels;
    let mut out = Vec::new();
    let mut linear = |name: &str, input: usize, output: usize| {
        out.push((format!("{name}.weight"), vec![output, input]));
        out.push((format!("{name}.bias"), vec![output]));
    };
    linear("embed.action", NUM_ACTIONS, h);
    linear("embed.start", 2, h);
    linear("embed.goal", 2, h);
    linear("embed.relative", 2, h);
    linear("embed.step", h, h);
    linear("embed.size", 2, h);
    linear("embed.density", 1, h);
    linear("global.0", 2 * h, h);
    linear("global.1", h, h);
    linear("agent.0", 4 * h, h);
    linear("agent.1", h, h);
    linear("scale_gate", h, d.scales);
    linear("pyramid.conv0", 3 * 9, f);
    linear("pyramid.conv1", f * 9, f);
    linear("pyramid.conv2", f * 9, f);
    for s in 0..d.scales {
        linear(&format!("pyramid.film{s}"), h, 2 * f);
        linear(&format!("pyramid.proj{s}"), f, h);
    }
    for b in 0..d.blocks {
        let p = format!("block{b}");
        linear(&format!("{p}.ada"), h, 8 * h);
        for m in ["temporal", "social"] {
            for proj in ["q", "k", "v", "o"] {
                linear(&format!("{p}.{m}.{proj}"), h, h);
            }
        }
        linear(&format!("{p}.social.bias.0"), 2, d.bias_hidden);
        linear(&format!("{p}.social.bias.1"), d.bias_hidden, d.heads);
        linear(&format!("{p}.env.offset"), h, 2 * d.points);
        linear(&format!("{p}.env.weight"), h, d.scales * d.points);
        linear(&format!("{p}.env.out"), h, h);
        linear(&format!("{p}.ffn.0"), h, 4 * h);
        linear(&format!("{p}.ffn.1"), 4 * h, h);
    }
    linear("head", h, NUM_ACTIONS);
    out.push(("env.radius".into(), vec![1]));
    out
}

impl DenoiserParams {
    /// Scaled-Gaussian initialization: weights `N(0, 1/fan_in)`, biases
    /// `N(0, 0.02^2)`, base sensing radius 0.1.
    pub fn init(seed: u64, dims: Dims) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape) in layout(&dims) {
            let len: usize = shape.iter().product();
            let data = if name == "env.radius" {
                vec![0.1]
            } else {
                let std = if name.ends_with(".weight") {
                    (1.0 / shape[1] as f64).sqrt()
                } else {
                    0.02
                };
                let normal = Normal::new(0.0, std).expect("positive std");
                (0..len).map(|_| normal.sample(&mut rng)).collect()
            };
            tensors.insert(name, Tensor { shape, data });
        }
        Ok(Self { dims, tensors })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Params(format!("missing tensor {name}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Params(format!("missing tensor {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn linear(&self, name: &str) -> Result<Linear<'_>> {
        let w = self.tensor(&format!("{name}.weight"))?;
        let b = self.tensor(&format!("{name}.bias"))?;
        Ok(Linear {
            weight: &w.data,
            bias: &b.data,
            in_dim: w.shape[1],
            out_dim: w.shape[0],
        })
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.tensor(name)?.data[0])
    }

    /// Checks the tensor set and shapes against `dims` and that every value
    /// is finite.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let expected = layout(&self.dims);
        if expected.len() != self.tensors.len() {
            return Err(Error::Params(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in expected {
            let t = self.tensor(&name)?;
            if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape(format!("{name}: expected {shape:?}, got {:?}", t.shape)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Params(format!("{name} has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            let bytes = (t.data.len() * 8) as u64;
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                dtype: "f64".into(),
                offset,
                bytes,
            });
            offset += bytes;
        }
        let manifest = serde_json::to_vec(&Manifest {
            dims: self.dims,
            tensors: entries,
        })?;
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(manifest.len() as u64).to_le_bytes())?;
        out.write_all(&manifest)?;
        for t in self.tensors.values() {
            for v in &t.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Params("not a weight file".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::Params(format!("unsupported weight format version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut manifest = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut manifest)?;
        let manifest: Manifest = serde_json::from_slice(&manifest)?;
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;

        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            if e.dtype != "f64" {
                return Err(Error::Params(format!("{}: unsupported dtype {}", e.name, e.dtype)));
            }
            let (start, end) = (e.offset as usize, (e.offset + e.bytes) as usize);
            let count: usize = e.shape.iter().product();
            if end > payload.len() || e.bytes as usize != count * 8 {
                return Err(Error::Params(format!("{}: bad byte range", e.name)));
            }
            let data = payload[start..end]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            tensors.insert(e.name, Tensor { shape: e.shape, data });
        }
        let params = Self {
            dims: manifest.dims,
            tensors,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let a = DenoiserParams::init(1, Dims::small()).unwrap();
        let b = DenoiserParams::init(1, Dims::small()).unwrap();
        let c = DenoiserParams::init(2, Dims::small()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tensor("head.weight").unwrap(), c.tensor("head.weight").unwrap());
        a.validate().unwrap();
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = DenoiserParams::init(9, Dims::small()).unwrap();
        let mut bytes = Vec::new();
        params.write_to(&mut bytes).unwrap();
        let back = DenoiserParams::read_from(bytes.as_slice()).unwrap();
        for name in params.names() {
            let (x, y) = (params.tensor(name).unwrap(), back.tensor(name).unwrap());
            assert_eq!(x.shape, y.shape);
            assert!(x.data.iter().zip(&y.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let params = DenoiserParams::init(3, Dims::small()).unwrap();
        let mut bytes = Vec::new();
        params.write_to(&mut bytes).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(DenoiserParams::read_from(bad_magic.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 8];
        assert!(DenoiserParams::read_from(truncated).is_err());

        let mut broken = params.clone();
        broken.tensor_mut("head.bias").unwrap().data[0] = f64::NAN;
        assert!(broken.validate().is_err());
    }
}
