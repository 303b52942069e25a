//! Model file format.
//!
//! ```text
//! magic    8 bytes  "AMZNMODL"
//! version  u32 LE
//! arch     u32 LE × 3   (gat input, gat heads, gat head dim)
//! blocks   u32 LE count, then per block:
//!            u16 name length, name (utf-8), u32 rows, u32 cols,
//!            rows·cols f64 LE values (row-major)
//! checksum 32 bytes, SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::gat::{GatArch, GatNetwork};
use super::{Autoencoder, Matrix, NeuralError, ScoredAutoencoder, Trainable, ValueHead};

pub const MAGIC: &[u8; 8] = b"AMZNMODL";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_RECONSTRUCTION_WEIGHT: f64 = 0.1;

/// Every learned parameter of the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    /// AE₁ with W₁, scoring the movement part of an action.
    pub movement: ScoredAutoencoder,
    /// AE₂ with W₂, scoring the arrow placement.
    pub placement: ScoredAutoencoder,
    pub gat: GatNetwork,
}

impl ModelBundle {
    pub fn zeros(arch: GatArch) -> ModelBundle {
        let ae = || ScoredAutoencoder::new(Autoencoder::zeros(), ValueHead::zeros(), DEFAULT_RECONSTRUCTION_WEIGHT);
        ModelBundle {
            movement: ae(),
            placement: ae(),
            gat: GatNetwork::zeros(arch),
        }
    }

    pub fn random<R: rand::RngCore>(arch: GatArch, rng: &mut R) -> ModelBundle {
        let mut ae = || {
            ScoredAutoencoder::new(
                Autoencoder::random(&mut *rng),
                ValueHead::random(&mut *rng),
                DEFAULT_RECONSTRUCTION_WEIGHT,
            )
        };
        let movement = ae();
        let placement = ae();
        ModelBundle {
            movement,
            placement,
            gat: GatNetwork::random(arch, rng),
        }
    }

    pub fn named_parameters(&self) -> Vec<(String, &Matrix)> {
        const AE_NAMES: [&str; 6] = ["enc.w", "enc.b", "dec.w", "dec.b", "head.w", "head.b"];
        let mut out = Vec::new();
        for (prefix, m) in [("movement", &self.movement), ("placement", &self.placement)] {
            for (name, p) in AE_NAMES.iter().zip(m.parameters()) {
                out.push((format!("{prefix}.{name}"), p));
            }
        }
        let l1 = self.gat.layer1.heads.len();
        for (i, p) in self.gat.parameters().into_iter().enumerate() {
            let head = i / 3;
            let part = ["w", "a_src", "a_dst"][i % 3];
            let name = if head < l1 {
                format!("gat.l1.h{head}.{part}")
            } else {
                format!("gat.l2.h{}.{part}", head - l1)
            };
            out.push((name, p));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.movement.parameters_mut();
        out.extend(self.placement.parameters_mut());
        out.extend(self.gat.parameters_mut());
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let arch = self.gat.arch;
        for v in [arch.input, arch.heads, arch.head_dim] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let params = self.named_parameters();
        buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (name, m) in params {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8], expected: GatArch) -> Result<ModelBundle, NeuralError> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(NeuralError::ChecksumMismatch);
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(NeuralError::ChecksumMismatch);
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NeuralError::VersionMismatch("not a model file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NeuralError::VersionMismatch(format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let arch = GatArch {
            input: r.u32()? as usize,
            heads: r.u32()? as usize,
            head_dim: r.u32()? as usize,
        };
        if arch != expected {
            return Err(NeuralError::VersionMismatch(format!("file architecture {arch:?}, expected {expected:?}")));
        }
        let mut bundle = ModelBundle::zeros(expected);
        let names: Vec<String> = bundle.named_parameters().into_iter().map(|(n, _)| n).collect();
        let count = r.u32()? as usize;
        if count != names.len() {
            return Err(NeuralError::VersionMismatch(format!("{count} parameter blocks, expected {}", names.len())));
        }
        for (expected_name, slot) in names.iter().zip(bundle.parameters_mut()) {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| NeuralError::VersionMismatch("block name is not utf-8".into()))?;
            if name != expected_name {
                return Err(NeuralError::VersionMismatch(format!("block {name:?} where {expected_name:?} expected")));
            }
            let shape = (r.u32()? as usize, r.u32()? as usize);
            if shape != slot.shape() {
                return Err(NeuralError::VersionMismatch(format!("block {name} has shape {shape:?}, expected {:?}", slot.shape())));
            }
            for v in slot.data_mut() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if r.pos != body.len() {
            return Err(NeuralError::VersionMismatch("trailing bytes after parameter blocks".into()));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        fs::write(path, self.to_bytes()).map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<ModelBundle, NeuralError> {
        Self::load_expecting(path, GatArch::default())
    }

    pub fn load_expecting(path: &Path, arch: GatArch) -> Result<ModelBundle, NeuralError> {
        let bytes = fs::read(path).map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes, arch)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(NeuralError::VersionMismatch("unexpected end of file".into()));
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self) -> Result<u16, NeuralError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}
