//! The PSZD tensor file.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "PSZD"
//! 4       4           u32 schema version (1)
//! 8       4           u32 number of dimensions n
//! 12      8 * n       u64 dimensions, slowest axis first
//! 12+8n   8 * prod    complex values as interleaved (re, im) f32
//! ```
//!
//! All integers and floats are little-endian and values are row-major.
//! Computation happens in f64; values are rounded to f32 on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{PszError, Result};

pub const MAGIC: &[u8; 4] = b"PSZD";
pub const SCHEMA_VERSION: u32 = 1;
const VALUE_BYTES: u64 = 8;

pub fn header_len(ndims: usize) -> u64 {
    12 + 8 * ndims as u64
}

pub fn encode_header(dims: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(header_len(dims.len()) as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

fn encode_values(values: &[Complex64], out: &mut Vec<u8>) {
    out.reserve(values.len() * VALUE_BYTES as usize);
    for z in values {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
}

fn decode_values(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(VALUE_BYTES as usize)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect()
}

/// Streams a tensor to disk, hashing as it goes.
pub struct TensorWriter {
    path: PathBuf,
    out: BufWriter<File>,
    hasher: Sha256,
    remaining: u64,
    buf: Vec<u8>,
}

impl TensorWriter {
    pub fn create(path: &Path, dims: &[u64]) -> Result<Self> {
        let file = File::create(path).map_err(|e| PszError::io(path, e))?;
        let mut w = TensorWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            hasher: Sha256::new(),
            remaining: dims.iter().product(),
            buf: Vec::new(),
        };
        let header = encode_header(dims);
        w.emit(&header)?;
        Ok(w)
    }

    fn emit(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.out
            .write_all(bytes)
            .map_err(|e| PszError::io(&self.path, e))
    }

    pub fn write(&mut self, values: &[Complex64]) -> Result<()> {
        if values.len() as u64 > self.remaining {
            return Err(PszError::SizeMismatch {
                path: self.path.clone(),
                expected: self.remaining * VALUE_BYTES,
                found: values.len() as u64 * VALUE_BYTES,
            });
        }
        self.remaining -= values.len() as u64;
        let mut buf = std::mem::take(&mut self.buf);
        buf.clear();
        encode_values(values, &mut buf);
        let res = self.emit(&buf);
        self.buf = buf;
        res
    }

    /// Flushes the file and returns its SHA-256 as lowercase hex.
    pub fn finish(mut self) -> Result<String> {
        if self.remaining != 0 {
            return Err(PszError::SizeMismatch {
                path: self.path.clone(),
                expected: 0,
                found: self.remaining * VALUE_BYTES,
            });
        }
        self.out.flush().map_err(|e| PszError::io(&self.path, e))?;
        Ok(hex::encode(self.hasher.finalize()))
    }
}

/// Writes a whole tensor in one go and returns its SHA-256.
pub fn write_tensor(path: &Path, dims: &[u64], values: &[Complex64]) -> Result<String> {
    let expected: u64 = dims.iter().product();
    if values.len() as u64 != expected {
        return Err(PszError::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected * VALUE_BYTES,
            found: values.len() as u64 * VALUE_BYTES,
        });
    }
    let mut w = TensorWriter::create(path, dims)?;
    w.write(values)?;
    w.finish()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = BufReader::new(File::open(path).map_err(|e| PszError::io(path, e))?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| PszError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// An opened PSZD file whose header and size have been checked. Values are
/// read on demand.
#[derive(Debug, Clone)]
pub struct TensorFile {
    path: PathBuf,
    dims: Vec<u64>,
}

impl TensorFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(|e| PszError::io(path, e))?;
        let file_len = file.metadata().map_err(|e| PszError::io(path, e))?.len();
        let format_err = |reason: &str| PszError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut fixed = [0u8; 12];
        file.read_exact(&mut fixed)
            .map_err(|_| format_err("file shorter than the fixed header"))?;
        if &fixed[0..4] != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
        if version != SCHEMA_VERSION {
            return Err(PszError::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let ndims = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
        if ndims > 16 {
            return Err(format_err("implausible dimension count"));
        }
        let mut raw = vec![0u8; 8 * ndims];
        file.read_exact(&mut raw)
            .map_err(|_| format_err("truncated dimension list"))?;
        let dims: Vec<u64> = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| format_err("dimension product overflows"))?;
        let expected = header_len(ndims) + count * VALUE_BYTES;
        if file_len != expected {
            return Err(PszError::SizeMismatch {
                path: path.to_path_buf(),
                expected,
                found: file_len,
            });
        }
        Ok(TensorFile {
            path: path.to_path_buf(),
            dims,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn len(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn read_range(&self, start: u64, count: u64) -> Result<Vec<Complex64>> {
        let mut file = File::open(&self.path).map_err(|e| PszError::io(&self.path, e))?;
        file.seek(SeekFrom::Start(
            header_len(self.dims.len()) + start * VALUE_BYTES,
        ))
        .map_err(|e| PszError::io(&self.path, e))?;
        let mut bytes = vec![0u8; (count * VALUE_BYTES) as usize];
        file.read_exact(&mut bytes)
            .map_err(|e| PszError::io(&self.path, e))?;
        Ok(decode_values(&bytes))
    }

    pub fn read_all(&self) -> Result<Vec<Complex64>> {
        self.read_range(0, self.len())
    }

    /// The `i`-th slice along the slowest axis.
    pub fn read_outer(&self, i: u64) -> Result<Vec<Complex64>> {
        let (&outer, rest) = self.dims.split_first().ok_or_else(|| PszError::Format {
            path: self.path.clone(),
            reason: "scalar tensor has no outer axis".into(),
        })?;
        if i >= outer {
            return Err(PszError::InvalidInput(format!(
                "{}: index {i} out of range for {outer} entries",
                self.path.display()
            )));
        }
        let stride: u64 = rest.iter().product();
        self.read_range(i * stride, stride)
    }

    pub fn sha256(&self) -> Result<String> {
        file_sha256(&self.path)
    }
}
