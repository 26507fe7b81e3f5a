//! Checkpoint archive: a tar file with a JSON manifest, the architecture
//! descriptor and one little-endian binary member per parameter array and
//! momentum buffer. Every member's SHA-256 is recorded in the manifest.

use std::collections::HashMap;
use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ArchSpec, ParamSet, ParamTensor};
use crate::scalar::Scalar;
use crate::spl::SplState;

pub const SCHEMA_VERSION: u32 = 1;
pub const META_MEMBER: &str = "meta.json";
pub const ARCH_MEMBER: &str = "arch.json";

/// Training state at the end of an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    /// Completed epochs.
    pub epoch: usize,
    pub arch: ArchSpec,
    pub params: ParamSet<T>,
    pub momentum: ParamSet<T>,
    pub spl: SplState,
    pub config: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberEntry {
    member: String,
    tensor: String,
    shape: Vec<usize>,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    schema_version: u32,
    dtype: String,
    epoch: usize,
    seed: u64,
    /// Learning rate the next epoch will use.
    next_lr: f64,
    config: TrainConfig,
    spl: SplState,
    arch_sha256: String,
    params: Vec<MemberEntry>,
    momentum: Vec<MemberEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode_tensor<T: Scalar>(t: &ParamTensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.data.len() * T::BYTES);
    for &v in &t.data {
        v.write_le(&mut out);
    }
    out
}

fn member_name(group: &str, tensor: &str) -> String {
    format!("{group}/{tensor}.bin")
}

fn append(builder: &mut tar::Builder<Vec<u8>>, name: &str, bytes: &[u8]) -> Result<()> {
    let mut header = tar::Header::new_gnu();
    header.set_size(bytes.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_cksum();
    builder
        .append_data(&mut header, name, bytes)
        .map_err(|e| Error::io(format!("writing checkpoint member {name}"), e))
}

fn checkpoint_err(member: &str, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        member: member.to_string(),
        detail: detail.into(),
    }
}

impl<T: Scalar> Checkpoint<T> {
    /// Serializes to an in-memory tar archive. Output is byte-for-byte
    /// reproducible for equal checkpoints.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arch_json = serde_json::to_vec_pretty(&self.arch)?;
        let mut blobs: Vec<(String, Vec<u8>)> = Vec::new();
        let mut entries = |group: &str, set: &ParamSet<T>| {
            set.tensors()
                .iter()
                .map(|t| {
                    let bytes = encode_tensor(t);
                    let member = member_name(group, &t.name);
                    let entry = MemberEntry {
                        member: member.clone(),
                        tensor: t.name.clone(),
                        shape: t.shape.clone(),
                        sha256: sha256_hex(&bytes),
                    };
                    blobs.push((member, bytes));
                    entry
                })
                .collect::<Vec<_>>()
        };
        let params = entries("params", &self.params);
        let momentum = entries("momentum", &self.momentum);
        let meta = Meta {
            schema_version: SCHEMA_VERSION,
            dtype: T::DTYPE.to_string(),
            epoch: self.epoch,
            seed: self.config.seed,
            next_lr: self.config.lr_at(self.epoch),
            config: self.config.clone(),
            spl: self.spl.clone(),
            arch_sha256: sha256_hex(&arch_json),
            params,
            momentum,
        };
        let meta_json = serde_json::to_vec_pretty(&meta)?;

        let mut builder = tar::Builder::new(Vec::new());
        append(&mut builder, META_MEMBER, &meta_json)?;
        append(&mut builder, ARCH_MEMBER, &arch_json)?;
        for (name, bytes) in &blobs {
            append(&mut builder, name, bytes)?;
        }
        builder
            .into_inner()
            .map_err(|e| Error::io("finishing checkpoint archive", e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut members: HashMap<String, Vec<u8>> = HashMap::new();
        let mut archive = tar::Archive::new(Cursor::new(bytes));
        let entries = archive
            .entries()
            .map_err(|e| checkpoint_err("<archive>", format!("unreadable archive: {e}")))?;
        for entry in entries {
            let mut entry =
                entry.map_err(|e| checkpoint_err("<archive>", format!("corrupted archive: {e}")))?;
            let name = entry
                .path()
                .map_err(|e| checkpoint_err("<archive>", format!("bad member path: {e}")))?
                .to_string_lossy()
                .into_owned();
            let mut buf = Vec::new();
            entry
                .read_to_end(&mut buf)
                .map_err(|e| checkpoint_err(&name, format!("truncated: {e}")))?;
            members.insert(name, buf);
        }

        let meta_bytes = members
            .get(META_MEMBER)
            .ok_or_else(|| checkpoint_err(META_MEMBER, "missing"))?;
        let meta: Meta = serde_json::from_slice(meta_bytes)
            .map_err(|e| checkpoint_err(META_MEMBER, format!("invalid: {e}")))?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(checkpoint_err(
                META_MEMBER,
                format!(
                    "schema version {} (expected {SCHEMA_VERSION})",
                    meta.schema_version
                ),
            ));
        }
        if meta.dtype != T::DTYPE {
            return Err(checkpoint_err(
                META_MEMBER,
                format!("dtype {} but {} was requested", meta.dtype, T::DTYPE),
            ));
        }

        let arch_bytes = members
            .get(ARCH_MEMBER)
            .ok_or_else(|| checkpoint_err(ARCH_MEMBER, "missing"))?;
        if sha256_hex(arch_bytes) != meta.arch_sha256 {
            return Err(checkpoint_err(ARCH_MEMBER, "checksum mismatch"));
        }
        let arch: ArchSpec = serde_json::from_slice(arch_bytes)
            .map_err(|e| checkpoint_err(ARCH_MEMBER, format!("invalid: {e}")))?;
        arch.validate()
            .map_err(|e| checkpoint_err(ARCH_MEMBER, e.to_string()))?;

        let read_set = |entries: &[MemberEntry]| -> Result<ParamSet<T>> {
            entries
                .iter()
                .map(|e| {
                    let bytes = members
                        .get(&e.member)
                        .ok_or_else(|| checkpoint_err(&e.member, "missing"))?;
                    if sha256_hex(bytes) != e.sha256 {
                        return Err(checkpoint_err(&e.member, "checksum mismatch"));
                    }
                    let len: usize = e.shape.iter().product();
                    if bytes.len() != len * T::BYTES {
                        return Err(checkpoint_err(
                            &e.member,
                            format!("{} bytes for shape {:?}", bytes.len(), e.shape),
                        ));
                    }
                    Ok(ParamTensor {
                        name: e.tensor.clone(),
                        shape: e.shape.clone(),
                        data: bytes.chunks_exact(T::BYTES).map(T::read_le).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(ParamSet::new)
        };
        let params = read_set(&meta.params)?;
        let momentum = read_set(&meta.momentum)?;
        if !params.same_layout(&momentum) {
            return Err(checkpoint_err(META_MEMBER, "momentum layout differs from parameters"));
        }
        meta.config
            .validate()
            .map_err(|e| checkpoint_err(META_MEMBER, e.to_string()))?;
        Ok(Self {
            epoch: meta.epoch,
            arch,
            params,
            momentum,
            spl: meta.spl,
            config: meta.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Reads only the dtype recorded in an archive, to pick the scalar type.
pub fn checkpoint_dtype(path: &Path) -> Result<String> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut archive = tar::Archive::new(file);
    let entries = archive
        .entries()
        .map_err(|e| checkpoint_err("<archive>", format!("unreadable archive: {e}")))?;
    for entry in entries {
        let mut entry =
            entry.map_err(|e| checkpoint_err("<archive>", format!("corrupted archive: {e}")))?;
        let is_meta = entry
            .path()
            .map(|p| p.to_string_lossy() == META_MEMBER)
            .unwrap_or(false);
        if is_meta {
            let mut buf = Vec::new();
            entry
                .read_to_end(&mut buf)
                .map_err(|e| checkpoint_err(META_MEMBER, format!("truncated: {e}")))?;
            let v: serde_json::Value = serde_json::from_slice(&buf)
                .map_err(|e| checkpoint_err(META_MEMBER, format!("invalid: {e}")))?;
            return v
                .get("dtype")
                .and_then(|d| d.as_str())
                .map(str::to_string)
                .ok_or_else(|| checkpoint_err(META_MEMBER, "no dtype"));
        }
    }
    Err(checkpoint_err(META_MEMBER, "missing"))
}
