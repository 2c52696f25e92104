//! Binary model container.
//!
//! Layout: the 8-byte magic, a little-endian `u32` format version, a `u64`
//! header length and a JSON header (config, vocabulary, fingerprint,
//! parameter names and shapes, norm settings). Then every parameter as
//! little-endian `f64` in store order, the running mean and variance of each
//! norm, and finally an FNV-1a `u64` checksum over all preceding bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::RelatednessModel;
use crate::error::{Error, Result};
use crate::layers::Vocabulary;
use crate::seed::fnv1a;

pub const MAGIC: &[u8; 8] = b"CTXRANK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vec<String>,
    fingerprint: u64,
    params: Vec<ParamEntry>,
    norms: Vec<NormEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct NormEntry {
    features: usize,
    eps: f64,
    momentum: f64,
}

impl RelatednessModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config().clone(),
            vocabulary: self.vocab().words().to_vec(),
            fingerprint: self.fingerprint(),
            params: self
                .store()
                .iter()
                .map(|(_, name, t)| ParamEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    trainable: t.requires_grad(),
                })
                .collect(),
            norms: self
                .norms()
                .iter()
                .map(|n| NormEntry {
                    features: n.features,
                    eps: n.eps,
                    momentum: n.momentum,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 8 * self.num_parameters() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, t) in self.store().iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for n in self.norms() {
            for v in n.running_mean.iter().chain(&n.running_var) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::ModelFormat(msg.to_string());
        if bytes.len() < MAGIC.len() + 4 + 8 + 8 {
            return Err(bad("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("not a ctxrank model file (bad magic)"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a(body) != stored {
            return Err(bad("checksum mismatch; the file is corrupted or truncated"));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;

        let vocab = Vocabulary::from_words(header.vocabulary)?;
        if vocab.fingerprint(header.config.embedding_dim) != header.fingerprint {
            return Err(bad("vocabulary fingerprint does not match the header"));
        }
        let mut model = RelatednessModel::skeleton(header.config, vocab)?;
        let expected: Vec<(String, Vec<usize>)> = model
            .store()
            .iter()
            .map(|(_, n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        if expected.len() != header.params.len() {
            return Err(Error::ModelFormat(format!(
                "header lists {} parameters, the config implies {}",
                header.params.len(),
                expected.len()
            )));
        }
        for ((name, shape), entry) in expected.iter().zip(&header.params) {
            if *name != entry.name || *shape != entry.shape {
                if name == "embedding" && shape.first() == entry.shape.first() {
                    return Err(Error::EmbeddingDim {
                        expected: shape[1],
                        found: entry.shape.get(1).copied().unwrap_or(0),
                    });
                }
                return Err(Error::ModelFormat(format!(
                    "parameter `{}` {:?} does not match expected `{name}` {shape:?}",
                    entry.name, entry.shape
                )));
            }
        }
        let ids: Vec<_> = model.store().ids().collect();
        for (id, entry) in ids.into_iter().zip(&header.params) {
            let n = model.store().get(id).len();
            let values = r.f64s(n)?;
            let t = model.store_mut().get_mut(id);
            t.data_mut().copy_from_slice(&values);
            t.set_requires_grad(entry.trainable);
        }
        if header.norms.len() != model.norms().len() {
            return Err(bad("norm count does not match the config"));
        }
        for (norm, entry) in model.norms_mut().iter_mut().zip(&header.norms) {
            if norm.features != entry.features {
                return Err(bad("norm width does not match the config"));
            }
            norm.eps = entry.eps;
            norm.momentum = entry.momentum;
            norm.running_mean = r.f64s(entry.features)?;
            norm.running_var = r.f64s(entry.features)?;
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes after the parameter blocks"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::ModelFormat("unexpected end of file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
