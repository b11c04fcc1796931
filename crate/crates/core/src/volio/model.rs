//! Model file layout (all integers `u32`, all floats `f32`, little-endian):
//!
//! ```text
//! "FLXC" | version | num_contrasts
//! | contrast depth | (filters, kernel) × depth
//! | fusion depth   | (filters, kernel) × depth
//! | head kernel
//! | per layer, canonical order: weights (c_out·c_in·k·k), bias (c_out)
//! | SHA-256 of every preceding byte
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{FilterBank, Network, NetworkConfig, PathwayConfig};
use crate::numerics::{Conv2DLayer, Tensor4};

pub const MODEL_MAGIC: [u8; 4] = *b"FLXC";
pub const MODEL_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;
const MAX_FILTERS: u32 = 1 << 14;
const MAX_KERNEL: u32 = 63;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_model(net: &Network<f32>) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION as usize);
    put_u32(&mut out, cfg.num_contrasts);
    for pathway in [&cfg.contrast_pathway, &cfg.fusion_pathway] {
        put_u32(&mut out, pathway.depth());
        for b in &pathway.banks {
            put_u32(&mut out, b.filters);
            put_u32(&mut out, b.kernel);
        }
    }
    put_u32(&mut out, cfg.head_kernel);
    for layer in net.layers() {
        for v in layer.weights().as_slice().iter().chain(layer.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n.checked_mul(4).ok_or_else(|| Error::Header("parameter block too large".into()))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn pathway(&mut self) -> Result<PathwayConfig> {
        let depth = self.u32()?;
        if depth > 64 {
            return Err(Error::Header(format!("pathway depth {depth} is implausible")));
        }
        let mut banks = Vec::with_capacity(depth as usize);
        for _ in 0..depth {
            let filters = self.u32()?;
            let kernel = self.u32()?;
            if filters > MAX_FILTERS || kernel > MAX_KERNEL {
                return Err(Error::Header(format!("bank ({filters} filters, kernel {kernel}) out of range")));
            }
            banks.push(FilterBank {
                filters: filters as usize,
                kernel: kernel as usize,
            });
        }
        Ok(PathwayConfig { banks })
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Network<f32>> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            found: bytes.len(),
        });
    }
    if bytes[..4] != MODEL_MAGIC {
        return Err(Error::BadMagic {
            kind: "model",
            found: bytes[..4].to_vec(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::ModelVersion {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    if bytes.len() < 8 + CHECKSUM_LEN {
        return Err(Error::Truncated {
            expected: 8 + CHECKSUM_LEN,
            found: bytes.len(),
        });
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Checksum);
    }

    let mut r = Reader { bytes: body, pos: 8 };
    let num_contrasts = r.u32()?;
    if num_contrasts == 0 || num_contrasts > 64 {
        return Err(Error::Header(format!("contrast count {num_contrasts} out of range")));
    }
    let contrast_pathway = r.pathway()?;
    let fusion_pathway = r.pathway()?;
    let head_kernel = r.u32()?;
    if head_kernel > MAX_KERNEL {
        return Err(Error::Header(format!("head kernel {head_kernel} out of range")));
    }
    let config = NetworkConfig {
        num_contrasts: num_contrasts as usize,
        contrast_pathway,
        fusion_pathway,
        head_kernel: head_kernel as usize,
    };
    config.validate()?;
    let mut layers = Vec::new();
    for (c_in, c_out, k) in config.layer_shapes() {
        let weights = r.f32s(c_out * c_in * k * k)?;
        let bias = r.f32s(c_out)?;
        layers.push(Conv2DLayer::new(Tensor4::from_vec([c_out, c_in, k, k], weights)?, bias)?);
    }
    if r.pos != body.len() {
        return Err(Error::Header(format!(
            "{} trailing bytes after parameter blocks",
            body.len() - r.pos
        )));
    }
    Network::from_layers(config, layers)
}

pub fn save_model(net: &Network<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Network<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Network<f32> {
        Network::build(NetworkConfig::with_depth(2, 2, 2).unwrap(), 17).unwrap()
    }

    #[test]
    fn layout_prefix() {
        let bytes = encode_model(&tiny());
        assert_eq!(&bytes[..4], b"FLXC");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes()); // contrast depth
        assert_eq!(&bytes[16..24], &[4, 0, 0, 0, 3, 0, 0, 0]);
        let params = tiny().count_parameters();
        let descriptor = 4 * (3 + 1 + 4 + 1 + 4 + 1);
        assert_eq!(bytes.len(), descriptor + 4 * (params.weights + params.biases) + 32);
    }

    #[test]
    fn roundtrip_is_canonical() {
        let net = tiny();
        let bytes = encode_model(&net);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(encode_model(&back), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_model(&tiny());
        for at in [30, bytes.len() / 2, bytes.len() - 40, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[at] ^= 0x10;
            assert!(matches!(decode_model(&bad), Err(Error::Checksum)), "byte {at}");
        }
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_model(&bad), Err(Error::ModelVersion { found: 9, .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::BadMagic { .. })));
        assert!(decode_model(&bytes[..6]).is_err());
    }
}
