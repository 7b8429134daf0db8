//! `FPFC` teacher feature caches.
//!
//! Little-endian layout:
//!
//! ```text
//! magic                b"FPFC"
//! version              u32 (= 1)
//! dataset fingerprint  32 bytes
//! teacher fingerprint  32 bytes
//! groups               u32
//! per group            id u32, rows u64, width u32, f32 × rows·width (row-major)
//! ```
//!
//! Rows are in dataset order. Values are held in memory at `f32` precision,
//! so writing and reading back is lossless.

use std::path::Path;

use super::{Dataset, Fingerprint};
use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader};
use crate::linalg::Matrix;

pub const CACHE_MAGIC: &[u8; 4] = b"FPFC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGroup {
    pub id: u32,
    pub values: Matrix,
}

impl FeatureGroup {
    pub fn width(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    groups: Vec<FeatureGroup>,
    dataset_fingerprint: Fingerprint,
    teacher_fingerprint: Fingerprint,
}

impl FeatureCache {
    pub fn new(
        groups: Vec<FeatureGroup>,
        dataset_fingerprint: Fingerprint,
        teacher_fingerprint: Fingerprint,
    ) -> Result<Self> {
        if let Some(first) = groups.first() {
            let n = first.values.rows();
            if let Some(g) = groups.iter().find(|g| g.values.rows() != n) {
                return Err(Error::BatchMismatch(format!(
                    "feature group {} has {} rows, group {} has {n}",
                    g.id,
                    g.values.rows(),
                    first.id
                )));
            }
        }
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.id == g.id) {
                return Err(Error::InvalidConfig(format!("duplicate feature group id {}", g.id)));
            }
        }
        let groups = groups
            .into_iter()
            .map(|g| FeatureGroup {
                id: g.id,
                values: g.values.map(|v| v as f32 as f64),
            })
            .collect();
        Ok(Self {
            groups,
            dataset_fingerprint,
            teacher_fingerprint,
        })
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn group(&self, id: u32) -> Option<&FeatureGroup> {
        self.groups.iter().find(|g| g.id == id)
    }

    /// Rows per group (0 for an empty cache).
    pub fn rows(&self) -> usize {
        self.groups.first().map_or(0, |g| g.values.rows())
    }

    pub fn dataset_fingerprint(&self) -> &Fingerprint {
        &self.dataset_fingerprint
    }

    pub fn teacher_fingerprint(&self) -> &Fingerprint {
        &self.teacher_fingerprint
    }

    pub fn verify(&self, dataset: &Fingerprint, teacher: &Fingerprint) -> Result<()> {
        if &self.dataset_fingerprint != dataset {
            return Err(Error::FingerprintMismatch("dataset"));
        }
        if &self.teacher_fingerprint != teacher {
            return Err(Error::FingerprintMismatch("teacher"));
        }
        Ok(())
    }

    /// Checks that the cache was built from exactly this dataset.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        if self.dataset_fingerprint != dataset.fingerprint() {
            return Err(Error::FingerprintMismatch("dataset"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.dataset_fingerprint);
        out.extend_from_slice(&self.teacher_fingerprint);
        out.extend_from_slice(&(self.groups.len() as u32).to_le_bytes());
        for g in &self.groups {
            out.extend_from_slice(&g.id.to_le_bytes());
            out.extend_from_slice(&(g.values.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(g.values.cols() as u32).to_le_bytes());
            for v in g.values.as_slice() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |e: Error| match e {
            Error::TruncatedFile(m) => Error::CorruptFile(m),
            other => other,
        };
        let mut r = Reader::new(bytes, "feature cache");
        let parse = |r: &mut Reader| -> Result<Self> {
            if r.take(4)? != CACHE_MAGIC {
                return Err(Error::CorruptFile("feature cache does not start with FPFC".into()));
            }
            let version = r.u32()?;
            if version != CACHE_VERSION {
                return Err(Error::CorruptFile(format!("unsupported cache version {version}")));
            }
            let dataset = r.array32()?;
            let teacher = r.array32()?;
            let count = r.u32()? as usize;
            let mut groups = Vec::with_capacity(count.min(1024));
            for _ in 0..count {
                let id = r.u32()?;
                let rows = usize::try_from(r.u64()?).map_err(|_| Error::CorruptFile("row count overflows".into()))?;
                let width = r.u32()? as usize;
                let len = rows
                    .checked_mul(width)
                    .ok_or_else(|| Error::CorruptFile("group size overflows".into()))?;
                let values = Matrix::new(rows, width, r.f32s(len)?).map_err(|e| Error::CorruptFile(e.to_string()))?;
                groups.push(FeatureGroup { id, values });
            }
            if !r.is_empty() {
                return Err(Error::CorruptFile(format!(
                    "{} trailing bytes after last group",
                    r.remaining().len()
                )));
            }
            FeatureCache::new(groups, dataset, teacher).map_err(|e| Error::CorruptFile(e.to_string()))
        };
        parse(&mut r).map_err(corrupt)
    }
}

pub fn write_cache(path: &Path, cache: &FeatureCache) -> Result<()> {
    write_atomic(path, &cache.to_bytes())
}

/// Reads a cache, checking only its structure.
pub fn read_cache(path: &Path) -> Result<FeatureCache> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureCache::from_bytes(&bytes)
}

/// Reads a cache and rejects it unless both fingerprints match.
pub fn read_cache_verified(path: &Path, dataset: &Fingerprint, teacher: &Fingerprint) -> Result<FeatureCache> {
    let cache = read_cache(path)?;
    cache.verify(dataset, teacher)?;
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureCache {
        let a = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4], vec![1.0, -1.0, 0.5, 2.0]]);
        let b = Matrix::from_rows(&[vec![1.0 / 3.0; 8], vec![-7.25; 8]]);
        FeatureCache::new(
            vec![FeatureGroup { id: 0, values: a }, FeatureGroup { id: 5, values: b }],
            [1; 32],
            [2; 32],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.fpfc");
        let c = sample();
        write_cache(&p, &c).unwrap();
        let back = read_cache_verified(&p, &[1; 32], &[2; 32]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.group(0).unwrap().width(), 4);
        assert_eq!(back.group(5).unwrap().width(), 8);
        assert_eq!(back.rows(), 2);
    }

    #[test]
    fn tampered_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.fpfc");
        let mut bytes = sample().to_bytes();
        bytes[8] ^= 0xff; // first byte of the dataset fingerprint
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            read_cache_verified(&p, &[1; 32], &[2; 32]),
            Err(Error::FingerprintMismatch("dataset"))
        ));
        assert!(matches!(
            sample().verify(&[1; 32], &[3; 32]),
            Err(Error::FingerprintMismatch("teacher"))
        ));
    }

    #[test]
    fn corrupt_files() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            FeatureCache::from_bytes(&bytes[..bytes.len() - 2]),
            Err(Error::CorruptFile(_))
        ));
        assert!(matches!(FeatureCache::from_bytes(b"NOPE"), Err(Error::CorruptFile(_))));
        let mut extra = bytes;
        extra.push(1);
        assert!(matches!(FeatureCache::from_bytes(&extra), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn groups_must_share_rows() {
        let r = FeatureCache::new(
            vec![
                FeatureGroup {
                    id: 0,
                    values: Matrix::zeros(2, 1),
                },
                FeatureGroup {
                    id: 1,
                    values: Matrix::zeros(3, 1),
                },
            ],
            [0; 32],
            [0; 32],
        );
        assert!(matches!(r, Err(Error::BatchMismatch(_))));
    }
}
