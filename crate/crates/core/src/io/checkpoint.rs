//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GANW0001"                      8 bytes
//! version                         u32 (= 1)
//! tensor count                    u32
//! per tensor:
//!   name length                   u16
//!   name                          UTF-8
//!   rank                          u8
//!   dims                          rank x u32
//!   values                        f64 x product(dims)
//! CRC-32 of all preceding bytes   u32
//! ```
//!
//! Tensor names are `generator/<layer>/kernel`, `generator/<layer>/bias` and
//! the same under `discriminator/`.

use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::model::{ModelSpec, Network};
use crate::nn::LayerParams;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 8] = *b"GANW0001";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

pub fn encode(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Checkpoint("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Checkpoint(format!("tensor name too long: {}", t.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        let rank = u8::try_from(t.tensor.shape().len())
            .map_err(|_| Error::Checkpoint(format!("rank of {} exceeds 255", t.name)))?;
        out.push(rank);
        for &d in t.tensor.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("dim of {} exceeds u32", t.name)))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { offset: self.bytes.len(), what });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Decodes and validates a checkpoint. Checks run in order: magic, version,
/// record structure (truncation), CRC, then tensor shapes.
pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic.try_into().expect("8 bytes") });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32("tensor count")?;

    struct Raw<'a> {
        name: &'a [u8],
        dims: Vec<usize>,
        values: &'a [u8],
    }
    let mut raw = Vec::new();
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = r.take(len, "name")?;
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(8usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?;
        let values = r.take(n, "values")?;
        raw.push(Raw { name, dims, values });
    }
    let body_end = r.pos;
    let stored = r.u32("crc")?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }
    ensure!(r.pos == bytes.len(), Checkpoint, "{} trailing bytes after CRC", bytes.len() - r.pos);

    raw.into_iter()
        .map(|t| {
            let name = String::from_utf8(t.name.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let values = t.values.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let tensor = Tensor::new(t.dims, values).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            Ok(NamedTensor { name, tensor })
        })
        .collect()
}

/// Named tensors of a network under `prefix`, in layer order.
pub fn network_tensors(prefix: &str, net: &Network) -> Vec<NamedTensor> {
    net.named_params()
        .flat_map(|(layer, p)| {
            [
                NamedTensor { name: format!("{prefix}/{layer}/kernel"), tensor: p.weight.clone() },
                NamedTensor { name: format!("{prefix}/{layer}/bias"), tensor: p.bias.clone() },
            ]
        })
        .collect()
}

fn network_from(prefix: &str, spec: &ModelSpec, tensors: &[NamedTensor]) -> Result<Network> {
    let find = |name: String| -> Result<Tensor> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.tensor.clone())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    };
    let params = spec
        .layers
        .iter()
        .map(|l| {
            if !l.kind.has_params() {
                return Ok(None);
            }
            Ok(Some(LayerParams {
                weight: find(format!("{prefix}/{}/kernel", l.name))?,
                bias: find(format!("{prefix}/{}/bias", l.name))?,
            }))
        })
        .collect::<Result<_>>()?;
    Network::from_params(spec.clone(), params).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn encode_gan(g: &Network, d: &Network) -> Result<Vec<u8>> {
    let mut tensors = network_tensors("generator", g);
    tensors.extend(network_tensors("discriminator", d));
    encode(&tensors)
}

/// Rebuilds both networks for the given architectures. Every tensor in the
/// file must be consumed.
pub fn decode_gan(bytes: &[u8], g: &ModelSpec, d: &ModelSpec) -> Result<(Network, Network)> {
    let tensors = decode(bytes)?;
    let gen = network_from("generator", g, &tensors)?;
    let disc = network_from("discriminator", d, &tensors)?;
    let used = gen.named_params().count() * 2 + disc.named_params().count() * 2;
    ensure!(
        used == tensors.len(),
        Checkpoint,
        "checkpoint holds {} tensors but the architecture uses {used}",
        tensors.len()
    );
    Ok((gen, disc))
}

pub fn write_checkpoint(path: &Path, g: &Network, d: &Network) -> Result<()> {
    super::write_atomic(path, &encode_gan(g, d)?)
}

pub fn read_checkpoint(path: &Path, g: &ModelSpec, d: &ModelSpec) -> Result<(Network, Network)> {
    decode_gan(&super::read_bytes(path)?, g, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedTensor> {
        vec![
            NamedTensor { name: "a".into(), tensor: Tensor::new(vec![2, 2], vec![1.5, -0.0, f64::MIN_POSITIVE, 3.0]).unwrap() },
            NamedTensor { name: "b/ü".into(), tensor: Tensor::new(vec![1], vec![-7.25]).unwrap() },
        ]
    }

    #[test]
    fn byte_layout() {
        let t = vec![NamedTensor { name: "w".into(), tensor: Tensor::new(vec![1], vec![1.0]).unwrap() }];
        let bytes = encode(&t).unwrap();
        let mut want = b"GANW0001".to_vec();
        want.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0]);
        want.extend_from_slice(&[1, 0, b'w', 1, 1, 0, 0, 0]);
        want.extend_from_slice(&1.0f64.to_le_bytes());
        let crc = crc32fast::hash(&want);
        want.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let t = sample();
        let back = decode(&encode(&t).unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in t.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.tensor.shape(), b.tensor.shape());
            let bits = |x: &Tensor| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.tensor), bits(&b.tensor));
        }
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[8] = 2;
        assert!(matches!(decode(&bad), Err(Error::UnsupportedVersion(2))));
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 10] ^= 0x01;
        assert!(matches!(decode(&bad), Err(Error::CrcMismatch { .. })));
        assert!(matches!(decode(&bytes[..bytes.len() - 6]), Err(Error::Truncated { .. })));
        assert!(matches!(decode(&bytes[..5]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn every_single_byte_flip_is_rejected() {
        let bytes = encode(&sample()).unwrap();
        for i in 0..bytes.len() {
            for bit in [0x01u8, 0x80] {
                let mut bad = bytes.clone();
                bad[i] ^= bit;
                assert!(decode(&bad).is_err(), "flip at byte {i} accepted");
            }
        }
    }
}
