//! Binary checkpoint container: magic, format version, architecture
//! fingerprint, then named little-endian `f32` arrays.

use std::fs;
use std::path::Path;

use uda_autograd::Tensor;

use crate::data::NetParams;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"UDACKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(fingerprint: &str, params: &NetParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_values() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_str(&mut out, fingerprint);
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params.iter() {
        put_str(&mut out, name);
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid utf-8 name".to_string())
    }
}

pub fn decode(bytes: &[u8], expected_fingerprint: &str) -> std::result::Result<NetParams, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let fp = r.string()?;
    if fp != expected_fingerprint {
        return Err(format!("architecture fingerprint `{fp}` does not match `{expected_fingerprint}`"));
    }
    let count = r.u32()?;
    let mut params = NetParams::new();
    for _ in 0..count {
        let name = r.string()?;
        let nd = r.u32()? as usize;
        let shape = (0..nd).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or("array too large")?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        params.insert(name, Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?);
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok(params)
}

pub fn save_params(path: &Path, fingerprint: &str, params: &NetParams) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(fingerprint, params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path, expected_fingerprint: &str) -> Result<NetParams> {
    if !path.exists() {
        return Err(Error::Prerequisite(format!("checkpoint {} not found", path.display())));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected_fingerprint).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> NetParams {
        let mut p = NetParams::new();
        p.insert("a.w", Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-7, -9.0]).unwrap());
        p.insert("b", Tensor::full(&[4], 0.25));
        p
    }

    #[test]
    fn round_trip() {
        let bytes = encode("net/v1", &sample());
        assert_eq!(decode(&bytes, "net/v1").unwrap(), sample());
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let bytes = encode("net/v1", &sample());
        assert!(decode(&bytes, "net/v2").unwrap_err().contains("fingerprint"));
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = encode("net/v1", &sample());
        assert!(decode(&bytes[..bytes.len() - 1], "net/v1").is_err());
        assert!(decode(b"garbage!", "net/v1").is_err());
    }

    #[test]
    fn missing_file_is_a_prerequisite_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_params(&dir.path().join("none.ckpt"), "x").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
