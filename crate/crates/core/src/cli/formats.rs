//! On-disk formats: voxel blobs, checkpoints, hashed JSON, atomic writes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{ParamStore, Tensor};
use crate::models::{ArchSpec, Checkpoint, CheckpointModel, Predictor, PredictorSpec, ReconModel};
use crate::{Error, Result};

pub const BLOB_MAGIC: &[u8; 4] = b"THVX";
pub const BLOB_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"THCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const BLOB_HEADER: usize = 4 + 4 + 4 + 12;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Read a file, mapping a missing one to [`Error::MissingArtifact`].
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.to_path_buf())),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Write through a sibling temporary file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| format_err(path, e.to_string()))
}

/// Read a file and check it against an expected SHA-256.
pub fn read_verified(path: &Path, expected: &str) -> Result<Vec<u8>> {
    let bytes = read_bytes(path)?;
    let found = sha256_hex(&bytes);
    if found != expected {
        return Err(Error::HashMismatch {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(bytes)
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlobData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl BlobData {
    pub fn code(&self) -> u32 {
        match self {
            BlobData::F32(_) => 1,
            BlobData::U8(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BlobData::F32(v) => v.len(),
            BlobData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            BlobData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            BlobData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// Dense 3-D array, row-major with the last dimension fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelBlob {
    /// W, L, H.
    pub dims: [u32; 3],
    pub data: BlobData,
}

impl VoxelBlob {
    pub fn new(dims: [usize; 3], data: BlobData) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape("voxel blob", format!("dims {dims:?} hold {n} values, got {}", data.len())));
        }
        let dims = dims.map(|d| u32::try_from(d).expect("blob dimension fits in u32"));
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: [usize; 3], data: &[f64]) -> Result<Self> {
        Self::new(dims, BlobData::F32(data.iter().map(|&v| v as f32).collect()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOB_HEADER + self.data.len() * 4);
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&self.data.code().to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            BlobData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BlobData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Parse a blob; `path` only labels errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < BLOB_HEADER || &bytes[..4] != BLOB_MAGIC {
            return Err(format_err(path, "not a THVX voxel blob"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != BLOB_VERSION {
            return Err(format_err(path, format!("unsupported blob version {version}")));
        }
        let code = word(8);
        let dims = [word(12), word(16), word(20)];
        let n = dims.iter().map(|&d| d as usize).product::<usize>();
        let payload = &bytes[BLOB_HEADER..];
        let size = match code {
            1 => 4,
            2 => 1,
            other => return Err(format_err(path, format!("unknown dtype code {other}"))),
        };
        if payload.len() != n * size {
            return Err(format_err(
                path,
                format!("payload has {} bytes, dims {dims:?} need {}", payload.len(), n * size),
            ));
        }
        let data = match code {
            1 => BlobData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            _ => BlobData::U8(payload.to_vec()),
        };
        Ok(Self { dims, data })
    }

    pub fn dims_usize(&self) -> [usize; 3] {
        self.dims.map(|d| d as usize)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    seed: u64,
    stats_ref: String,
    arch: Option<ArchSpec>,
    predictor: Option<PredictorSpec>,
    tensors: Vec<TensorEntry>,
}

const ENCODER_PREFIX: &str = "encoder/";
const TARGET_MEAN: &str = "meta/target_mean";
const TARGET_STD: &str = "meta/target_std";

/// Serialize a checkpoint: magic, version, header length (u64), JSON
/// header, then every tensor as little-endian f64 in header order.
pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    let mut extra = Vec::new();
    let (arch, predictor) = match &ck.model {
        CheckpointModel::Recon(m) => {
            tensors.extend(m.params.iter().map(|(k, t)| (k.clone(), t)));
            (Some(m.arch.clone()), None)
        }
        CheckpointModel::Predictor(p) => {
            tensors.extend(p.params.iter().map(|(k, t)| (k.clone(), t)));
            if let Some(e) = &p.encoder {
                tensors.extend(e.params.iter().map(|(k, t)| (format!("{ENCODER_PREFIX}{k}"), t)));
            }
            extra.push((TARGET_MEAN.to_string(), Tensor::vector(&p.target_mean)));
            extra.push((TARGET_STD.to_string(), Tensor::vector(&p.target_std)));
            (p.encoder.as_ref().map(|e| e.arch.clone()), Some(p.spec.clone()))
        }
    };
    tensors.extend(extra.iter().map(|(k, t)| (k.clone(), t)));
    let header = CheckpointHeader {
        seed: ck.seed,
        stats_ref: ck.stats_ref.clone(),
        arch,
        predictor,
        tensors: tensors
            .iter()
            .map(|(k, t)| TensorEntry {
                name: k.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(format_err(path, "not a THCK checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(format_err(path, format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(format_err(path, "truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..hlen]).map_err(|e| format_err(path, format!("header: {e}")))?;
    let mut payload = &body[hlen..];
    let mut params = ParamStore::new();
    let mut encoder = ParamStore::new();
    let mut meta = ParamStore::new();
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        if payload.len() < n * 8 {
            return Err(format_err(path, format!("payload ends inside tensor `{}`", entry.name)));
        }
        let data = payload[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        payload = &payload[n * 8..];
        let t = Tensor::new(entry.shape, data)?;
        if let Some(k) = entry.name.strip_prefix(ENCODER_PREFIX) {
            encoder.insert(k, t);
        } else if entry.name.starts_with("meta/") {
            meta.insert(entry.name, t);
        } else {
            params.insert(entry.name, t);
        }
    }
    if !payload.is_empty() {
        return Err(format_err(path, format!("{} trailing payload bytes", payload.len())));
    }
    let model = match (header.predictor, header.arch) {
        (None, Some(arch)) => CheckpointModel::Recon(ReconModel { arch, params }),
        (Some(spec), arch) => {
            let encoder = arch.map(|arch| ReconModel { arch, params: encoder });
            let four = |name: &str| -> Result<[f64; 4]> {
                meta.get(name)
                    .and_then(|t| t.data().try_into().ok())
                    .ok_or_else(|| format_err(path, format!("missing `{name}`")))
            };
            CheckpointModel::Predictor(Predictor {
                spec,
                params,
                encoder,
                target_mean: four(TARGET_MEAN)?,
                target_std: four(TARGET_STD)?,
                stats_ref: header.stats_ref.clone(),
            })
        }
        (None, None) => return Err(format_err(path, "header names neither an architecture nor a predictor")),
    };
    Ok(Checkpoint {
        seed: header.seed,
        stats_ref: header.stats_ref,
        model,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_bytes(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_predictor, build_recon_model, ModelVariant, PartInput, ReconKind};

    #[test]
    fn blob_round_trip_and_layout() {
        let b = VoxelBlob::new([2, 1, 3], BlobData::F32(vec![1.0, 2.0, 3.0, 4.0, 5.0, -6.5])).unwrap();
        let bytes = b.encode();
        assert_eq!(&bytes[..4], b"THVX");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 24 + 6 * 4);
        assert_eq!(VoxelBlob::decode(&bytes, Path::new("x")).unwrap(), b);

        let g = VoxelBlob::new([1, 2, 2], BlobData::U8(vec![0, 255, 0, 255])).unwrap();
        let bytes = g.encode();
        assert_eq!(bytes.len(), 24 + 4);
        assert_eq!(VoxelBlob::decode(&bytes, Path::new("x")).unwrap(), g);
    }

    #[test]
    fn blob_rejects_bad_payloads() {
        assert!(VoxelBlob::new([2, 2, 2], BlobData::U8(vec![0; 7])).is_err());
        let mut bytes = VoxelBlob::new([1, 1, 2], BlobData::U8(vec![1, 2])).unwrap().encode();
        bytes.pop();
        assert!(VoxelBlob::decode(&bytes, Path::new("x")).is_err());
        bytes[0] = b'X';
        assert!(VoxelBlob::decode(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn recon_checkpoint_is_bit_exact() {
        let m = build_recon_model(ArchSpec::thermal(ReconKind::Vae3d, 5), 9).unwrap();
        let ck = Checkpoint::recon(m, 9, "abc");
        let back = decode_checkpoint(&encode_checkpoint(&ck), Path::new("m")).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn predictor_checkpoint_is_bit_exact() {
        let enc = build_recon_model(ArchSpec::thermal(ReconKind::Ae, 4), 1).unwrap();
        let mut p = build_predictor(ModelVariant::LatentThermal, Some(enc), 6, 8, 2).unwrap();
        p.target_mean = [10.0, 7.0, 5.0, 0.1 + 0.2];
        p.target_std = [0.3, 1.0 / 3.0, 0.0, 1e-300];
        p.stats_ref = "deadbeef".into();
        let ck = Checkpoint::predictor(p, 2);
        let back = decode_checkpoint(&encode_checkpoint(&ck), Path::new("p")).unwrap();
        assert_eq!(back, ck);

        let feats = vec![0.25; 6];
        let vol = vec![150.0; 4410];
        let input = [PartInput {
            features: &feats,
            volume: &vol,
        }];
        let a = ck.into_predictor().unwrap().predict(&input).unwrap();
        let b = back.into_predictor().unwrap().predict(&input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hash_check_catches_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.thvx");
        let bytes = VoxelBlob::from_f64([1, 1, 3], &[1.0, 2.0, 3.0]).unwrap().encode();
        write_atomic(&path, &bytes).unwrap();
        let h = sha256_hex(&bytes);
        assert!(read_verified(&path, &h).is_ok());
        let mut bad = bytes.clone();
        bad[30] ^= 1;
        fs::write(&path, &bad).unwrap();
        assert!(matches!(read_verified(&path, &h), Err(Error::HashMismatch { .. })));
        assert!(matches!(
            read_bytes(&dir.path().join("nope")),
            Err(Error::MissingArtifact(_))
        ));
    }
}
