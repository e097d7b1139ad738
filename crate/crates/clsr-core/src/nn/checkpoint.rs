//! Binary checkpoint format for trained encoders.
//!
//! Layout (all integers little-endian u32, all floats little-endian f32):
//!
//! ```text
//! magic "CLSR" | version | steps channels conv_blocks conv_channels
//! kernel_size embed_dim | dropout_rate bn_momentum bn_epsilon
//! | norm_fitted (u8) | norm mean [C] | norm std [C]
//! | tensor_count | tensors…
//! ```
//!
//! Each tensor is `ndim | dims… | data…`. Tensors appear in the fixed
//! declared order: per conv block kernel, bias, gamma, beta, running mean,
//! running variance; then the time-distributed dense weight/bias and the
//! output dense weight/bias. Round-trips are bit-exact.

use super::{ArchConfig, Encoder, Tensor};
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"CLSR";
pub const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.f32(*v);
        }
    }
    fn tensor(&mut self, t: &Tensor<f32>) {
        self.u32(t.shape().len() as u32);
        for d in t.shape() {
            self.u32(*d as u32);
        }
        self.f32s(t.data());
    }
    fn vec_as_tensor(&mut self, v: &[f32]) {
        self.u32(1);
        self.u32(v.len() as u32);
        self.f32s(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn tensor(&mut self, expected_shape: &[usize]) -> Result<Tensor<f32>> {
        let ndim = self.u32()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(self.u32()? as usize);
        }
        if dims != expected_shape {
            return Err(Error::Checkpoint(format!(
                "tensor shape {dims:?} does not match expected {expected_shape:?}"
            )));
        }
        let len = dims.iter().product();
        Tensor::from_vec(&dims, self.f32s(len)?)
    }
    fn vec_from_tensor(&mut self, expected_len: usize) -> Result<Vec<f32>> {
        Ok(self.tensor(&[expected_len])?.into_data())
    }
}

pub fn to_bytes(enc: &Encoder<f32>) -> Vec<u8> {
    let mut w = Writer {
        buf: Vec::with_capacity(1 << 20),
    };
    w.buf.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    let a = &enc.arch;
    for d in [
        a.steps,
        a.channels,
        a.conv_blocks,
        a.conv_channels,
        a.kernel_size,
        a.embed_dim,
    ] {
        w.u32(d as u32);
    }
    w.f32(a.dropout_rate);
    w.f32(a.bn_momentum);
    w.f32(a.bn_epsilon);
    w.buf.push(u8::from(enc.norm.fitted));
    w.f32s(&enc.norm.mean);
    w.f32s(&enc.norm.std);

    let tensor_count = enc.blocks.len() * 6 + 4;
    w.u32(tensor_count as u32);
    for b in &enc.blocks {
        w.tensor(&b.conv.kernel);
        w.tensor(&b.conv.bias);
        w.tensor(&b.bn.gamma);
        w.tensor(&b.bn.beta);
        w.vec_as_tensor(&b.bn.running_mean);
        w.vec_as_tensor(&b.bn.running_var);
    }
    w.tensor(&enc.time_dense.weight);
    w.tensor(&enc.time_dense.bias);
    w.tensor(&enc.out_dense.weight);
    w.tensor(&enc.out_dense.bias);
    w.buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<Encoder<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            supported: VERSION,
        });
    }
    let arch = ArchConfig {
        steps: r.u32()? as usize,
        channels: r.u32()? as usize,
        conv_blocks: r.u32()? as usize,
        conv_channels: r.u32()? as usize,
        kernel_size: r.u32()? as usize,
        embed_dim: r.u32()? as usize,
        dropout_rate: r.f32()?,
        bn_momentum: r.f32()?,
        bn_epsilon: r.f32()?,
    };
    arch.validate()
        .map_err(|e| Error::Checkpoint(format!("invalid architecture header: {e}")))?;

    let mut enc = Encoder::<f32>::new(arch.clone(), 0)?;
    enc.norm.fitted = r.take(1)?[0] != 0;
    enc.norm.mean = r.f32s(arch.channels)?;
    enc.norm.std = r.f32s(arch.channels)?;

    let tensor_count = r.u32()? as usize;
    let expected = arch.conv_blocks * 6 + 4;
    if tensor_count != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint lists {tensor_count} tensors, architecture needs {expected}"
        )));
    }
    for (i, b) in enc.blocks.iter_mut().enumerate() {
        let cin = if i == 0 { arch.channels } else { arch.conv_channels };
        let w = arch.conv_channels;
        b.conv.kernel = r.tensor(&[arch.kernel_size, cin, w])?;
        b.conv.bias = r.tensor(&[w])?;
        b.bn.gamma = r.tensor(&[w])?;
        b.bn.beta = r.tensor(&[w])?;
        b.bn.running_mean = r.vec_from_tensor(w)?;
        b.bn.running_var = r.vec_from_tensor(w)?;
    }
    let w = arch.conv_channels;
    enc.time_dense.weight = r.tensor(&[w, w])?;
    enc.time_dense.bias = r.tensor(&[w])?;
    enc.out_dense.weight = r.tensor(&[w, arch.embed_dim])?;
    enc.out_dense.bias = r.tensor(&[arch.embed_dim])?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(enc)
}

pub fn save(enc: &Encoder<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(enc))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Encoder<f32>> {
    from_bytes(&std::fs::read(path)?)
}

/// Hex SHA-256 of the checkpoint bytes; stored in index files so a query can
/// confirm it is scoring embeddings from the same model.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_encoder() -> Encoder<f32> {
        let arch = ArchConfig {
            steps: 6,
            channels: 1,
            conv_blocks: 2,
            conv_channels: 4,
            kernel_size: 3,
            embed_dim: 3,
            ..ArchConfig::default()
        };
        let mut enc = Encoder::new(arch, 42).unwrap();
        enc.norm.fit(&[0.0, 2.0], 1).unwrap();
        enc
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let enc = small_encoder();
        let bytes = to_bytes(&enc);
        let loaded = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&loaded), bytes);

        let x: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
        let a = enc.forward_eval(&x, 2).unwrap();
        let b = loaded.forward_eval(&x, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normalization_behavior_survives_round_trip() {
        let enc = small_encoder();
        let loaded = from_bytes(&to_bytes(&enc)).unwrap();
        assert_eq!(enc.norm.mean, loaded.norm.mean);
        assert_eq!(enc.norm.std, loaded.norm.std);
        assert!(loaded.norm.fitted);
    }

    #[test]
    fn bad_magic_and_version_are_distinct_errors() {
        let enc = small_encoder();
        let mut bytes = to_bytes(&enc);
        bytes[0] = b'X';
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::Checkpoint(_))
        ));

        let mut bytes = to_bytes(&enc);
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::CheckpointVersion { found: 99, .. })
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let enc = small_encoder();
        let bytes = to_bytes(&enc);
        let err = from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn fingerprint_is_stable_and_content_sensitive() {
        let enc = small_encoder();
        let bytes = to_bytes(&enc);
        assert_eq!(fingerprint(&bytes), fingerprint(&bytes));
        let mut other = bytes.clone();
        let last = other.len() - 1;
        other[last] ^= 1;
        assert_ne!(fingerprint(&bytes), fingerprint(&other));
    }
}
