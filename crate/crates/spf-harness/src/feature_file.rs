//! Binary descriptor-set file format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SPF1"
//! 4       4     d (u32), descriptor dimension
//! 8       4     n (u32), descriptor count
//! 12      4     element type tag (u32): element size in bytes, 4 | 8
//! 16      d*n*  payload, column-major (descriptor j is contiguous)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ipccp::LocalFeatureSet;

pub const MAGIC: [u8; 4] = *b"SPF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u32 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            4 => Ok(Dtype::F32),
            8 => Ok(Dtype::F64),
            other => bail!("unknown element type tag {other} (expected 4 or 8)"),
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        })
    }
}

/// In-memory descriptor file; values are held as f64 regardless of the
/// on-disk element type.
#[derive(Debug, Clone)]
pub struct FeatureFile {
    pub d: u32,
    pub n: u32,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

impl FeatureFile {
    pub fn new(d: u32, n: u32, dtype: Dtype, data: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            bail!("dimensions must be positive (d = {d}, n = {n})");
        }
        if data.len() != (d * n) as usize {
            bail!("payload length {} does not match d*n = {}", data.len(), d * n);
        }
        Ok(Self { d, n, dtype, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes =
            Vec::with_capacity(16 + self.data.len() * self.dtype.tag() as usize);
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&self.d.to_le_bytes());
        bytes.extend_from_slice(&self.n.to_le_bytes());
        bytes.extend_from_slice(&self.dtype.tag().to_le_bytes());
        match self.dtype {
            Dtype::F32 => {
                for &v in &self.data {
                    bytes.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Dtype::F64 => {
                for &v in &self.data {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let mut file = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        file.write_all(&bytes)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        if bytes.len() < 16 {
            bail!("{}: truncated header", path.display());
        }
        if bytes[0..4] != MAGIC {
            bail!("{}: not an SPF feature file (bad magic)", path.display());
        }
        let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let tag = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let dtype = Dtype::from_tag(tag)?;
        if d == 0 || n == 0 {
            bail!("{}: degenerate dimensions d = {d}, n = {n}", path.display());
        }
        let count = (d as usize) * (n as usize);
        let expected = 16 + count * tag as usize;
        if bytes.len() != expected {
            bail!(
                "{}: payload length mismatch (got {} bytes, expected {expected})",
                path.display(),
                bytes.len()
            );
        }
        let payload = &bytes[16..];
        let data: Vec<f64> = match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        if !data.iter().all(|v| v.is_finite()) {
            bail!("{}: payload contains non-finite values", path.display());
        }
        Ok(Self { d, n, dtype, data })
    }

    pub fn to_feature_set(&self) -> Result<LocalFeatureSet> {
        Ok(LocalFeatureSet::new(
            self.d as usize,
            self.n as usize,
            self.data.clone(),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f64() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.spf");
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.25 - 1.0).collect();
        let f = FeatureFile::new(4, 3, Dtype::F64, data.clone()).unwrap();
        f.write(&path).unwrap();
        let back = FeatureFile::read(&path).unwrap();
        assert_eq!(back.d, 4);
        assert_eq!(back.n, 3);
        assert_eq!(back.data, data);
    }

    #[test]
    fn f64_file_size_matches_format_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.spf");
        let f = FeatureFile::new(4, 6, Dtype::F64, vec![0.5; 24]).unwrap();
        f.write(&path).unwrap();
        // magic + d + n + tag + payload
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            4 + 4 + 4 + 4 + 4 * 6 * 8
        );
    }

    #[test]
    fn f32_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.spf");
        let f = FeatureFile::new(2, 2, Dtype::F32, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        f.write(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 4 * 4);
        let back = FeatureFile::read(&path).unwrap();
        for (a, b) in back.data.iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.spf");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x08\x00\x00\x00").unwrap();
        assert!(FeatureFile::read(&path).is_err());

        let short = dir.path().join("short.spf");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&8u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes()); // one value instead of four
        std::fs::write(&short, &bytes).unwrap();
        assert!(FeatureFile::read(&short).is_err());
    }

    #[test]
    fn rejects_non_finite_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.spf");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&8u32.to_le_bytes());
        bytes.extend_from_slice(&f64::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(FeatureFile::read(&path).is_err());
    }
}
