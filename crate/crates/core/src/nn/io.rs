//! Binary weight files and their JSON sidecar.
//!
//! Layout (little-endian): magic `AVNW`, format version `u32 = 1`, tensor
//! count `u32`, then per tensor: name length `u16`, UTF-8 name, rank `u8`,
//! dims as `u32` each, raw `f32` payload. The sidecar lives next to the file
//! as `<file>.meta.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NnError, ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"AVNW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightMeta {
    pub architecture: String,
    pub hyperparameters: serde_json::Value,
    /// Token lists by role (e.g. "instruction", "advice"); a token's id is
    /// its index.
    pub vocab: BTreeMap<String, Vec<String>>,
    pub seed: u64,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<Vec<u8>, NnError> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let nb = name.as_bytes();
        let len = u16::try_from(nb.len())
            .map_err(|_| NnError::Format(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(nb);
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| NnError::Format(format!("rank too large for {name}")))?;
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| NnError::Format(format!("dim too large in {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Format(format!(
                "truncated at byte {} while reading {what}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a whole weight file; nothing is returned unless every tensor
/// decodes.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, NnError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(NnError::Format("bad magic, not an AVNW weight file".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(NnError::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let count = r.u32("tensor count")? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let nlen = r.take(2, "name length")?;
        let nlen = u16::from_le_bytes([nlen[0], nlen[1]]) as usize;
        let name = std::str::from_utf8(r.take(nlen, "name")?)
            .map_err(|_| NnError::Format(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| NnError::Format(format!("dims overflow in {name}")))?;
        let payload = r.take(
            n.checked_mul(4)
                .ok_or_else(|| NnError::Format(format!("payload overflow in {name}")))?,
            &format!("payload of {name}"),
        )?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(out)
}

pub fn save_weights(store: &ParamStore, path: &Path, meta: &WeightMeta) -> Result<(), NnError> {
    let bytes = encode_tensors(store.iter().map(|p| (p.name.as_str(), &p.value)))?;
    fs::write(path, bytes)?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| NnError::Format(e.to_string()))?;
    fs::write(meta_path(path), json + "\n")?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<WeightMeta, NnError> {
    let text = fs::read_to_string(meta_path(path))?;
    serde_json::from_str(&text).map_err(|e| NnError::Format(format!("sidecar: {e}")))
}

/// Loads tensors into a store that already has the expected architecture.
/// Every name must exist in `store` with the same shape and every store
/// parameter must be present in the file; on any mismatch `store` is left
/// untouched.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<(), NnError> {
    let bytes = fs::read(path)?;
    load_from_bytes(store, &bytes)
}

pub fn load_from_bytes(store: &mut ParamStore, bytes: &[u8]) -> Result<(), NnError> {
    let tensors = decode_tensors(bytes)?;
    let mut seen = vec![false; store.len()];
    let mut staged = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let id = store
            .id(&name)
            .ok_or_else(|| NnError::Load(format!("unknown tensor `{name}`")))?;
        let expected = store.value(id).shape();
        if expected != t.shape() {
            return Err(NnError::Load(format!(
                "tensor `{name}` has shape {:?}, architecture expects {:?}",
                t.shape(),
                expected
            )));
        }
        seen[id.0] = true;
        staged.push((id, t));
    }
    if let Some(missing) = store.iter().zip(&seen).find(|(_, s)| !**s) {
        return Err(NnError::Load(format!("missing tensor `{}`", missing.0.name)));
    }
    for (id, t) in staged {
        store.set_value(id, t)?;
    }
    Ok(())
}

/// Loads weights and checks the sidecar names the expected architecture.
pub fn load_weights(store: &mut ParamStore, path: &Path, architecture: &str) -> Result<WeightMeta, NnError> {
    let meta = read_meta(path)?;
    if meta.architecture != architecture {
        return Err(NnError::Load(format!(
            "architecture `{}` in sidecar, expected `{architecture}`",
            meta.architecture
        )));
    }
    load_into(store, path)?;
    Ok(meta)
}

/// Saves several stores (with disjoint names) as one weight file.
pub fn save_stores(stores: &[&ParamStore], path: &Path, meta: &WeightMeta) -> Result<(), NnError> {
    let bytes = encode_tensors(stores.iter().flat_map(|s| s.iter().map(|p| (p.name.as_str(), &p.value))))?;
    fs::write(path, bytes)?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| NnError::Format(e.to_string()))?;
    fs::write(meta_path(path), json + "\n")?;
    Ok(())
}

/// Counterpart of [`save_stores`]: the file must hold exactly the union of
/// the stores' tensors. Nothing is modified unless everything loads.
pub fn load_stores(stores: &mut [&mut ParamStore], path: &Path, architecture: &str) -> Result<WeightMeta, NnError> {
    let meta = read_meta(path)?;
    if meta.architecture != architecture {
        return Err(NnError::Load(format!(
            "architecture `{}` in sidecar, expected `{architecture}`",
            meta.architecture
        )));
    }
    let mut merged = ParamStore::new();
    for s in stores.iter() {
        for p in s.iter() {
            merged.add(&p.name, p.value.clone())?;
        }
    }
    load_from_bytes(&mut merged, &fs::read(path)?)?;
    for s in stores.iter_mut() {
        s.copy_matching(&merged)?;
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a.w", Tensor::new(vec![2, 3], vec![1., -2., 3.5, f32::MIN_POSITIVE, -0.0, 7.]).unwrap())
            .unwrap();
        s.add("a.b", Tensor::from_vec(vec![0.25, -0.125])).unwrap();
        s
    }

    #[test]
    fn header_layout() {
        let s = sample_store();
        let bytes = encode_tensors(s.iter().map(|p| (p.name.as_str(), &p.value))).unwrap();
        assert_eq!(&bytes[..4], b"AVNW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 3);
        assert_eq!(&bytes[14..17], b"a.w");
        assert_eq!(bytes[17], 2);
        // 12 header + (2+3+1+8+24) + (2+3+1+4+8)
        assert_eq!(bytes.len(), 12 + 38 + 18);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let s = sample_store();
        let bytes = encode_tensors(s.iter().map(|p| (p.name.as_str(), &p.value))).unwrap();
        for cut in [3, 11, 20, bytes.len() - 1] {
            let mut target = sample_store();
            target.iter_mut().for_each(|p| p.value.fill(9.0));
            let err = load_from_bytes(&mut target, &bytes[..cut]).unwrap_err();
            assert!(matches!(err, NnError::Format(_)), "{err}");
            assert!(target.iter().all(|p| p.value.data().iter().all(|&v| v == 9.0)));
        }
    }

    #[test]
    fn unknown_tensor_is_named() {
        let mut other = ParamStore::new();
        other.add("mystery", Tensor::from_vec(vec![1.0])).unwrap();
        let bytes = encode_tensors(other.iter().map(|p| (p.name.as_str(), &p.value))).unwrap();
        let mut target = sample_store();
        let err = load_from_bytes(&mut target, &bytes).unwrap_err();
        assert!(err.to_string().contains("mystery"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut other = ParamStore::new();
        other.add("a.w", Tensor::zeros(&[3, 2])).unwrap();
        other.add("a.b", Tensor::zeros(&[2])).unwrap();
        let bytes = encode_tensors(other.iter().map(|p| (p.name.as_str(), &p.value))).unwrap();
        let err = load_from_bytes(&mut sample_store(), &bytes).unwrap_err();
        assert!(matches!(err, NnError::Load(_)));
    }

    #[test]
    fn bad_magic_and_version() {
        let s = sample_store();
        let mut bytes = encode_tensors(s.iter().map(|p| (p.name.as_str(), &p.value))).unwrap();
        bytes[0] = b'X';
        assert!(decode_tensors(&bytes).is_err());
        bytes[0] = b'A';
        bytes[4] = 2;
        assert!(decode_tensors(&bytes).unwrap_err().to_string().contains("version"));
    }
}
