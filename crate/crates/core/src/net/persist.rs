use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NetArch;
use crate::error::{Error, Result};

pub const MANIFEST_MAGIC: &str = "WTA-MANIFEST";
pub const MANIFEST_VERSION: u32 = 1;

/// A named row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Contents of a weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub arch: NetArch,
    /// Free-form metadata such as training provenance.
    pub meta: serde_json::Value,
    pub tensors: Vec<ManifestTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    m_max: usize,
    n_max: usize,
    #[serde(default)]
    meta: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

/// Layout: a magic line with the format version, one line of JSON header
/// (architecture, metadata, tensor names and shapes), then every tensor's
/// values as little-endian `f64` in header order.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let header = Header {
        version: MANIFEST_VERSION,
        m_max: manifest.arch.m_max,
        n_max: manifest.arch.n_max,
        meta: manifest.meta.clone(),
        tensors: manifest
            .tensors
            .iter()
            .map(|t| TensorHeader { name: t.name.clone(), shape: t.shape.clone() })
            .collect(),
    };
    for t in &manifest.tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::ShapeMismatch(format!("tensor `{}` data does not match shape {:?}", t.name, t.shape)));
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{MANIFEST_MAGIC} {MANIFEST_VERSION}")?;
    serde_json::to_writer(&mut out, &header)?;
    writeln!(out)?;
    for t in &manifest.tensors {
        for v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let err = |msg: String| Error::Manifest { path: path.to_path_buf(), msg };
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingWeights(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut input = BufReader::new(file);
    let mut magic = String::new();
    input.read_line(&mut magic)?;
    let version = magic
        .trim_end()
        .strip_prefix(MANIFEST_MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| err("not a weight manifest".into()))?;
    if version != MANIFEST_VERSION {
        return Err(err(format!("unsupported manifest version {version}, this build reads {MANIFEST_VERSION}")));
    }
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: Header = serde_json::from_str(&line).map_err(|e| err(format!("bad header: {e}")))?;
    let arch = NetArch::new(header.m_max, header.n_max).map_err(|e| err(e.to_string()))?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for t in header.tensors {
        let len: usize = t.shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            input
                .read_exact(&mut buf)
                .map_err(|_| err(format!("truncated data in tensor `{}`", t.name)))?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push(ManifestTensor { name: t.name, shape: t.shape, data });
    }
    if input.read(&mut buf)? != 0 {
        return Err(err("trailing bytes after last tensor".into()));
    }
    Ok(Manifest { arch, meta: header.meta, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{EngagementTensor, PolicyValueNet};
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let arch = NetArch::new(6, 4).unwrap();
        let mut rng = stream(1, Purpose::Policy, 0);
        let net = PolicyValueNet::new(arch, &mut rng);
        net.save(&path, serde_json::json!({"note": "test"})).unwrap();
        let (loaded, meta) = PolicyValueNet::load(&path, Some(arch)).unwrap();
        assert_eq!(meta["note"], "test");
        assert_eq!(loaded, net);
        for _ in 0..100 {
            let data = (0..arch.input_len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let e = EngagementTensor::from_data(6, 4, data).unwrap();
            assert_eq!(net.policy_forward(&e).unwrap(), loaded.policy_forward(&e).unwrap());
            assert_eq!(net.value_forward(&e).unwrap().to_bits(), loaded.value_forward(&e).unwrap().to_bits());
        }
    }

    #[test]
    fn mismatches_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let net = PolicyValueNet::zeros(NetArch::new(6, 4).unwrap());
        net.save(&path, serde_json::Value::Null).unwrap();
        let err = PolicyValueNet::load(&path, Some(NetArch::new(7, 4).unwrap())).unwrap_err();
        assert!(err.to_string().contains("architecture mismatch"), "{err}");

        let missing = dir.path().join("none.bin");
        assert!(matches!(PolicyValueNet::load(&missing, None), Err(Error::MissingWeights(_))));

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Manifest { .. })));

        std::fs::write(&path, b"WTA-MANIFEST 9\n{}\n").unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
    }
}
