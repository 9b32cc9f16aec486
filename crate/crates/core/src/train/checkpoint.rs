//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes  "NCTCKPT1"
//! version      u32
//! fingerprint  u64      hash of the training and model configuration
//! stage        u8       1, 2 or 3 (tags M1, M2, M3)
//! step         u64      steps completed within that stage
//! meta         u32 length + JSON (model configuration, vocabulary hash,
//!              stage budget, mode)
//! params       u32 count + blocks
//! adam         t u64, beta1 f64, beta2 f64, eps f64, base_lr f64,
//!              warmup u64, model_dim u64
//! first moment u32 count + blocks
//! second moment u32 count + blocks
//!
//! block        u32 name length, name bytes (UTF-8), u32 rank,
//!              rank × u64 extents, f64 values
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{FlatNct, ModelConfig};
use crate::optim::AdamState;
use crate::params::ParamSet;
use crate::tensor::Tensor;

use super::{Mode, Stage};

const MAGIC: &[u8; 8] = b"NCTCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab_size: usize,
    pub vocab_fingerprint: String,
    /// Step budget of the stage that produced the checkpoint.
    pub stage_steps: u64,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub step: u64,
    pub fingerprint: u64,
    pub meta: CheckpointMeta,
    pub params: ParamSet,
    pub adam: AdamState,
}

/// First eight bytes of the SHA-256 of `value`'s JSON encoding.
pub(crate) fn fingerprint_of<T: Serialize>(value: &T) -> u64 {
    let json = serde_json::to_vec(value).expect("configuration serialises");
    let digest = Sha256::digest(&json);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

impl Checkpoint {
    pub fn tag(&self) -> &'static str {
        self.stage.tag()
    }

    /// The producing stage ran its whole budget.
    pub fn is_complete(&self) -> bool {
        self.step >= self.meta.stage_steps
    }

    pub fn model(&self) -> Result<FlatNct> {
        FlatNct::from_params(self.meta.model.clone(), self.meta.vocab_size, self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.push(self.stage.number());
        out.extend_from_slice(&self.step.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("metadata serialises");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        write_set(&mut out, &self.params);
        let a = &self.adam;
        out.extend_from_slice(&a.t.to_le_bytes());
        for x in [a.beta1, a.beta2, a.eps, a.base_lr] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&a.warmup_steps.to_le_bytes());
        out.extend_from_slice(&(a.model_dim as u64).to_le_bytes());
        write_set(&mut out, &a.m);
        write_set(&mut out, &a.v);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let fingerprint = r.u64()?;
        let stage_no = r.take(1)?[0];
        let stage = Stage::from_number(stage_no)
            .ok_or_else(|| Error::Checkpoint(format!("unknown stage tag {stage_no}")))?;
        let step = r.u64()?;
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let params = r.set()?;
        let t = r.u64()?;
        let beta1 = r.f64()?;
        let beta2 = r.f64()?;
        let eps = r.f64()?;
        let base_lr = r.f64()?;
        let warmup_steps = r.u64()?;
        let model_dim = r.u64()? as usize;
        let m = r.set()?;
        let v = r.set()?;
        if r.at != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        params.check_layout(&m, "first moment")?;
        params.check_layout(&v, "second moment")?;
        Ok(Checkpoint {
            stage,
            step,
            fingerprint,
            meta,
            params,
            adam: AdamState {
                m,
                v,
                t,
                beta1,
                beta2,
                eps,
                base_lr,
                warmup_steps,
                model_dim,
            },
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::file(&tmp, e))?;
        f.sync_all().map_err(|e| Error::file(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn write_set(out: &mut Vec<u8>, set: &ParamSet) {
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for (name, t) in set.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn set(&mut self) -> Result<ParamSet> {
        let n = self.u32()?;
        let mut set = ParamSet::new();
        for _ in 0..n {
            let len = self.u32()? as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = self.u32()? as usize;
            let shape = (0..rank)
                .map(|_| self.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            if count.checked_mul(8).map_or(true, |b| b > self.bytes.len() - self.at) {
                return Err(Error::Checkpoint(format!("truncated block `{name}`")));
            }
            let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
            if set.index_of(&name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate block `{name}`")));
            }
            set.push(name, t);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::AdamConfig;
    use crate::rng::stream;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig {
            hidden: 8,
            ff: 8,
            heads: 2,
            ..ModelConfig::default()
        };
        let m = FlatNct::new(cfg.clone(), 9, &mut stream(5, &[])).unwrap();
        let mut adam = AdamState::new(m.params(), &AdamConfig::default(), 8);
        adam.t = 17;
        adam.m.get_mut(0).data_mut()[3] = f64::MIN_POSITIVE;
        adam.v.get_mut(1).data_mut()[0] = -0.0;
        Checkpoint {
            stage: Stage::Monolingual,
            step: 42,
            fingerprint: 0xdead_beef_1234,
            meta: CheckpointMeta {
                model: cfg,
                vocab_size: 9,
                vocab_fingerprint: "abc".into(),
                stage_steps: 100,
                mode: Mode::Mmt,
            },
            params: m.params().clone(),
            adam,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, c);
        assert!(back.adam.v.get(1).data()[0].is_sign_negative());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m2.ckpt");
        let c = sample();
        c.save(&p).unwrap();
        assert!(!dir.path().join("m2.tmp").exists());
        assert_eq!(Checkpoint::load(&p).unwrap().to_bytes(), c.to_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[20] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
