use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::Stage;
use crate::diffcore::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::retrieval::EmbeddingMatrix;
use crate::scalar::Real;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"XVEM";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XVMC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Little-endian reader that reports how many bytes a short read needed.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: u64) -> Result<&'a [u8]> {
        let end = (self.pos as u64).checked_add(n).ok_or_else(|| Error::Data("length field overflows".into()))?;
        if end > self.buf.len() as u64 {
            return Err(Error::Truncated { expected: end, actual: self.buf.len() as u64 });
        }
        let s = &self.buf[self.pos..end as usize];
        self.pos = end as usize;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(u64::from(n))?.to_vec()).map_err(|_| Error::Data("string field is not utf-8".into()))
    }

    fn f32s(&mut self, count: u64) -> Result<Vec<f32>> {
        let bytes = count.checked_mul(4).ok_or_else(|| Error::Data(format!("{count} floats overflow the file length")))?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4).map_err(|_| Error::Data("file too short for a magic number".into()))?;
        if got != want {
            return Err(Error::Data(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Data(format!("{} trailing bytes after payload", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Data(format!("{v} does not fit a u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_f32s<T: Real>(out: &mut Vec<u8>, values: &[T]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_embeddings<T: Real>(m: &EmbeddingMatrix<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(EMBEDDING_MAGIC);
    put_u32(&mut out, m.len())?;
    put_u32(&mut out, m.dim())?;
    for id in m.ids() {
        put_str(&mut out, id)?;
    }
    put_f32s(&mut out, m.data());
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix<f32>> {
    let mut c = Cursor::new(bytes);
    c.magic(EMBEDDING_MAGIC)?;
    let n = c.u32()?;
    let e = c.u32()?;
    let ids = (0..n).map(|_| c.string()).collect::<Result<Vec<_>>>()?;
    let data = c.f32s(u64::from(n) * u64::from(e))?;
    c.finish()?;
    EmbeddingMatrix::new(ids, e as usize, data)
}

pub fn write_embeddings<T: Real>(path: impl AsRef<Path>, m: &EmbeddingMatrix<T>) -> Result<()> {
    write_file(path.as_ref(), &encode_embeddings(m)?)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix<f32>> {
    let path = path.as_ref();
    decode_embeddings(&read_file(path)?).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn config_digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Trained parameters of one stage together with the resolved config
/// that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub seed: u64,
    pub config_text: String,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

impl Checkpoint {
    pub fn from_store<T: Real>(stage: Stage, seed: u64, config_text: String, store: &ParamStore<T>) -> Self {
        let tensors = store.iter().map(|(n, p)| (n.to_string(), p.value.cast::<f32>())).collect();
        Self { stage, seed, config_text, tensors }
    }

    pub fn digest(&self) -> [u8; 32] {
        config_digest(&self.config_text)
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_store<T: Real>(&self) -> ParamStore<T> {
        let mut store = ParamStore::new();
        for (name, t) in &self.tensors {
            store.insert(name.clone(), t.cast::<T>());
        }
        store
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Resuming the same stage requires the identical resolved config.
    pub fn check_resume(&self, stage: Stage, config_text: &str) -> Result<()> {
        if self.stage == stage && self.digest() != config_digest(config_text) {
            return Err(Error::Checkpoint(format!(
                "config digest {} of the {stage} checkpoint does not match the current config",
                self.digest_hex()
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, self.stage.name())?;
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.digest());
        put_str(&mut out, &self.config_text)?;
        put_u32(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_str(&mut out, name)?;
            put_u32(&mut out, t.rank())?;
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            put_f32s(&mut out, t.data());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(bytes);
        c.magic(CHECKPOINT_MAGIC)?;
        let version = c.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let stage: Stage = c.string()?.parse()?;
        let seed = c.u64()?;
        let digest: [u8; 32] = c.take(32)?.try_into().unwrap();
        let config_text = c.string()?;
        if digest != config_digest(&config_text) {
            return Err(Error::Checkpoint("stored digest does not match the embedded config".into()));
        }
        let count = c.u32()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name = c.string()?;
            let rank = c.u32()?;
            let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| Error::Data(format!("shape {shape:?} of `{name}` overflows")))?;
            let data = c.f32s(numel)?;
            let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("tensor `{name}` appears twice")));
            }
        }
        c.finish()?;
        Ok(Self { stage, seed, config_text, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&read_file(path.as_ref())?)
    }
}
