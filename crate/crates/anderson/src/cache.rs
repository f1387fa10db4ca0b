//! Binary caches for noise fields (`ANDF`) and spectral decompositions (`ANDS`).
//!
//! Both formats are little-endian, start with a four-byte magic and a `u32`
//! format version, and end with the SHA-256 digest of every preceding byte.
//! Loading verifies magic, version, sizes and digest before decoding.

use crate::basis::RealBasis;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::TorusGrid;
use crate::spectral::{OperatorMeta, SpectralDecomposition};
use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Format version written by this library.
pub const FORMAT_VERSION: u32 = 1;
const FIELD_MAGIC: &[u8; 4] = b"ANDF";
const SPECTRAL_MAGIC: &[u8; 4] = b"ANDS";
const DIGEST_LEN: usize = 32;

/// A cached field with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCache {
    /// Grid size.
    pub n: u32,
    /// Side length.
    pub l: f64,
    /// Noise seed.
    pub seed: u64,
    /// Regularization time.
    pub r: f64,
    /// `N^2` coefficients in row-major `k` order.
    pub coeffs: Vec<Complex64>,
}

/// A cached spectral decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCache {
    /// Grid size.
    pub n: u32,
    /// Side length.
    pub l: f64,
    /// Regularization time.
    pub r: f64,
    /// Shift parameter used in assembly.
    pub z0: f64,
    /// Noise seed.
    pub seed: u64,
    /// `M` ascending eigenvalues.
    pub values: Vec<f64>,
    /// `M x N^2` eigenvector coefficients, vector after vector.
    pub vectors: Vec<Complex64>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn complex(&mut self, v: &[Complex64]) {
        for c in v {
            self.f64(c.re);
            self.f64(c.im);
        }
    }
    fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.0);
        self.0.extend_from_slice(&digest);
        self.0
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Check magic, digest and version; position after the version.
    fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 8 + DIGEST_LEN {
            return Err(Error::Format("file too short".into()));
        }
        if &bytes[..4] != magic {
            return Err(Error::Format(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let mut r = Self { bytes: body, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version} (expected {FORMAT_VERSION})")));
        }
        Ok(r)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
    fn complex(&mut self, count: usize) -> Result<Vec<Complex64>> {
        (0..count).map(|_| Ok(Complex64::new(self.f64()?, self.f64()?))).collect()
    }
    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn grid_len(n: u32) -> Result<usize> {
    (n as usize).checked_mul(n as usize).filter(|&p| p > 0).ok_or_else(|| Error::Format(format!("bad grid size {n}")))
}

impl FieldCache {
    /// Cache entry for a field.
    pub fn from_field(field: &SpectralField, seed: u64, r: f64) -> Self {
        let g = field.grid();
        Self { n: g.n() as u32, l: g.l(), seed, r, coeffs: field.coeffs().to_vec() }
    }

    /// Field on its grid.
    pub fn to_field(&self) -> Result<SpectralField> {
        SpectralField::from_coeffs(TorusGrid::new(self.l, self.n as usize)?, self.coeffs.clone())
    }

    /// Encode.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(40 + 16 * self.coeffs.len() + DIGEST_LEN));
        w.0.extend_from_slice(FIELD_MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.n);
        w.f64(self.l);
        w.u64(self.seed);
        w.f64(self.r);
        w.complex(&self.coeffs);
        w.finish()
    }

    /// Decode, verifying magic, version and checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, FIELD_MAGIC)?;
        let n = r.u32()?;
        let l = r.f64()?;
        let seed = r.u64()?;
        let rr = r.f64()?;
        let coeffs = r.complex(grid_len(n)?)?;
        r.done()?;
        Ok(Self { n, l, seed, r: rr, coeffs })
    }

    /// Write atomically to `path`.
    pub fn store(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// Read from `path`.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl SpectralCache {
    /// Cache entry for a decomposition with eigenvectors.
    pub fn from_decomposition(spec: &SpectralDecomposition) -> Result<Self> {
        if !spec.has_vectors() {
            return Err(Error::InvalidArgument("only decompositions with eigenvectors can be cached".into()));
        }
        let g = spec.grid();
        let mut vectors = Vec::with_capacity(spec.len() * g.len());
        for n in 0..spec.len() {
            vectors.extend_from_slice(spec.eigenfield(n).coeffs());
        }
        Ok(Self {
            n: g.n() as u32,
            l: g.l(),
            r: spec.meta.r,
            z0: spec.meta.z0,
            seed: spec.meta.seed,
            values: spec.values().to_vec(),
            vectors,
        })
    }

    /// Decomposition in the real basis of the cached grid.
    pub fn to_decomposition(&self) -> Result<SpectralDecomposition> {
        let grid = TorusGrid::new(self.l, self.n as usize)?;
        let basis = RealBasis::new(grid);
        let p = grid.len();
        let mut coords = Vec::with_capacity(self.values.len() * basis.dim());
        for v in self.vectors.chunks(p) {
            coords.extend(basis.coordinates(&SpectralField::from_coeffs(grid, v.to_vec())?));
        }
        let meta = OperatorMeta { r: self.r, z0: self.z0, seed: self.seed, h: 1.0 };
        SpectralDecomposition::new(basis, meta, self.values.clone(), coords)
    }

    /// Encode.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(52 + 8 * self.values.len() + 16 * self.vectors.len() + DIGEST_LEN));
        w.0.extend_from_slice(SPECTRAL_MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.n);
        w.f64(self.l);
        w.f64(self.r);
        w.f64(self.z0);
        w.u64(self.seed);
        w.u32(self.values.len() as u32);
        self.values.iter().for_each(|&v| w.f64(v));
        w.complex(&self.vectors);
        w.finish()
    }

    /// Decode, verifying magic, version and checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, SPECTRAL_MAGIC)?;
        let n = r.u32()?;
        let l = r.f64()?;
        let rr = r.f64()?;
        let z0 = r.f64()?;
        let seed = r.u64()?;
        let m = r.u32()? as usize;
        let values = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let vectors = r.complex(m * grid_len(n)?)?;
        r.done()?;
        Ok(Self { n, l, r: rr, z0, seed, values, vectors })
    }

    /// Write atomically to `path`.
    pub fn store(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// Read from `path`.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Write `bytes` to a sibling temporary file and rename it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = std::fs::write(&tmp, bytes).and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_white_noise;
    use crate::paracontrolled::EnhancedNoise;
    use crate::spectral::OperatorMatrix;

    #[test]
    fn field_round_trip_is_bitwise() {
        let g = TorusGrid::new(1.5, 8).unwrap();
        let noise = sample_white_noise(g, 42);
        let c = FieldCache::from_field(&noise.field, 42, 0.0);
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"ANDF");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 8 + 8 + 16 * 64 + 32);
        let back = FieldCache::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_field().unwrap().coeffs(), noise.field.coeffs());
    }

    #[test]
    fn corrupted_and_wrong_version_rejected() {
        let g = TorusGrid::new(1.0, 4).unwrap();
        let c = FieldCache::from_field(&sample_white_noise(g, 1).field, 1, 0.0);
        let mut bytes = c.to_bytes();
        bytes[30] ^= 1;
        assert!(FieldCache::from_bytes(&bytes).unwrap_err().to_string().contains("checksum"));
        // A different version with a valid digest is still rejected.
        let mut body = c.to_bytes();
        body.truncate(body.len() - DIGEST_LEN);
        body[4..8].copy_from_slice(&2u32.to_le_bytes());
        let digest = Sha256::digest(&body);
        body.extend_from_slice(&digest);
        assert!(FieldCache::from_bytes(&body).unwrap_err().to_string().contains("version 2"));
        assert!(SpectralCache::from_bytes(&c.to_bytes()).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn spectral_round_trip() {
        let g = TorusGrid::new(1.0, 8).unwrap();
        let e = EnhancedNoise::new(&sample_white_noise(g, 5), 0.01, 1.0).unwrap();
        let spec = OperatorMatrix::assemble(&e).eigendecompose(true).unwrap().truncated(6);
        let c = SpectralCache::from_decomposition(&spec).unwrap();
        let back = SpectralCache::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        let dec = back.to_decomposition().unwrap();
        assert_eq!(dec.values(), spec.values());
        let worst = dec
            .all_coordinates()
            .iter()
            .zip(spec.all_coordinates())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-14);
        assert_eq!(dec.meta.seed, 5);
    }

    #[test]
    fn atomic_store_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new(1.0, 4).unwrap();
        let c = FieldCache::from_field(&sample_white_noise(g, 3).field, 3, 0.0);
        let path = dir.path().join("sub").join("noise.andf");
        c.store(&path).unwrap();
        assert_eq!(FieldCache::load(&path).unwrap(), c);
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
