//! Binary file formats for embeddings (HBEM), labels (HBLB), models (HBMD)
//! and codes (HBCD).
//!
//! All integers are little-endian and all reals are IEEE-754 binary32
//! little-endian. Every header is validated before the payload is touched,
//! and the payload length must match the header exactly.
//!
//! ```text
//! HBEM  "HBEM" ver:u32 n:u64 d:u32 dtype:u8 0[3]           payload n·d f32
//! HBLB  "HBLB" ver:u32 n:u64 c:u32 enc:u8   0[3]           payload (see LabelEncoding)
//! HBMD  "HBMD" ver:u32 d:u32 k:u32 flags:u8 0[7] seed:u64  mean[d] V[d·k] R[k·k]
//! HBCD  "HBCD" ver:u32 n:u64 k:u32 0[4]                    payload n·⌈k/64⌉ u64
//! ```

use std::io::Write;
use std::path::Path;

use crate::data::EmbeddingMatrix;
use crate::error::{Error, FormatError, Result};
use crate::eval::LabelSet;
use crate::hasher::{HashModel, PreprocessFlags};
use crate::index::{words_for, CodeDatabase};
use crate::linalg::DenseMatrix;

pub const VERSION: u32 = 1;
pub const HBEM_MAGIC: [u8; 4] = *b"HBEM";
pub const HBLB_MAGIC: [u8; 4] = *b"HBLB";
pub const HBMD_MAGIC: [u8; 4] = *b"HBMD";
pub const HBCD_MAGIC: [u8; 4] = *b"HBCD";

pub const HBEM_HEADER: usize = 24;
pub const HBLB_HEADER: usize = 24;
pub const HBMD_HEADER: usize = 32;
pub const HBCD_HEADER: usize = 24;

/// Load-time orthonormality tolerance for the stored PCA basis.
pub const BASIS_TOLERANCE: f64 = 1e-6;
/// Load-time orthonormality tolerance for the stored rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-5;

/// Payload layout of an HBLB file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelEncoding {
    /// One row of ⌈c/8⌉ bytes per item, class `j` at bit `j % 8` of byte `j / 8`.
    MultiHot = 0,
    /// One u32 class id per item.
    ClassId = 1,
}

impl LabelEncoding {
    /// Class ids for single-label sets, multi-hot otherwise.
    pub fn for_labels(labels: &LabelSet) -> Self {
        if labels.is_single_label() {
            Self::ClassId
        } else {
            Self::MultiHot
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn reserved(&mut self, count: usize) -> Result<(), FormatError> {
        for _ in 0..count {
            let offset = self.pos;
            let value = self.u8();
            if value != 0 {
                return Err(FormatError::Reserved { offset, value });
            }
        }
        Ok(())
    }

    fn f32s(&mut self, count: usize) -> Vec<f32> {
        let end = self.pos + count * 4;
        let out = self.bytes[self.pos..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos = end;
        out
    }
}

fn check_header(
    bytes: &[u8],
    magic: [u8; 4],
    header_len: usize,
) -> Result<Reader<'_>, FormatError> {
    if bytes.len() < header_len {
        return Err(FormatError::ShortHeader {
            expected: header_len,
            actual: bytes.len(),
        });
    }
    let mut r = Reader::new(bytes);
    let found = r.take::<4>();
    if found != magic {
        return Err(FormatError::BadMagic {
            expected: magic,
            found,
        });
    }
    let version = r.u32();
    if version != VERSION {
        return Err(FormatError::Version {
            expected: VERSION,
            found: version,
        });
    }
    Ok(r)
}

/// Header-declared payload size, rejecting products that overflow.
fn payload_size(field: &'static str, factors: &[u64]) -> Result<u64, FormatError> {
    factors
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f))
        .ok_or(FormatError::InvalidField {
            field,
            value: factors[0],
        })
}

fn check_payload(bytes: &[u8], header_len: usize, expected: u64) -> Result<(), FormatError> {
    let actual = (bytes.len() - header_len) as u64;
    if actual < expected {
        return Err(FormatError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(FormatError::TrailingData { expected, actual });
    }
    Ok(())
}

fn push_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

// ---------------------------------------------------------------- HBEM

pub fn encode_hbem(x: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HBEM_HEADER + x.n() * x.d() * 4);
    out.extend_from_slice(&HBEM_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(x.n() as u64).to_le_bytes());
    out.extend_from_slice(&(x.d() as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in x.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_hbem(bytes: &[u8]) -> Result<EmbeddingMatrix, FormatError> {
    let mut r = check_header(bytes, HBEM_MAGIC, HBEM_HEADER)?;
    let n = r.u64();
    let d = r.u32();
    let dtype = r.u8();
    if d == 0 {
        return Err(FormatError::InvalidField {
            field: "d",
            value: 0,
        });
    }
    if dtype != 0 {
        return Err(FormatError::InvalidField {
            field: "dtype",
            value: dtype as u64,
        });
    }
    r.reserved(3)?;
    let expected = payload_size("n", &[n, d as u64, 4])?;
    check_payload(bytes, HBEM_HEADER, expected)?;
    let (n, d) = (n as usize, d as usize);
    let data = r.f32s(n * d);
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite { row: pos / d });
    }
    Ok(EmbeddingMatrix::new(n, d, data).expect("validated"))
}

// ---------------------------------------------------------------- HBLB

pub fn encode_hblb(labels: &LabelSet, encoding: LabelEncoding) -> Result<Vec<u8>> {
    let c = labels.classes();
    let mut out = Vec::with_capacity(HBLB_HEADER + labels.len() * 4);
    out.extend_from_slice(&HBLB_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    out.push(encoding as u8);
    out.extend_from_slice(&[0u8; 3]);
    match encoding {
        LabelEncoding::ClassId => {
            for (i, row) in labels.rows().iter().enumerate() {
                if row.len() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "item {i} has {} labels; class-id encoding needs exactly one",
                        row.len()
                    )));
                }
                out.extend_from_slice(&row[0].to_le_bytes());
            }
        }
        LabelEncoding::MultiHot => {
            let width = (c as usize).div_ceil(8);
            for row in labels.rows() {
                let mut bytes = vec![0u8; width];
                for &class in row {
                    bytes[class as usize / 8] |= 1 << (class % 8);
                }
                out.extend_from_slice(&bytes);
            }
        }
    }
    Ok(out)
}

pub fn decode_hblb(bytes: &[u8]) -> Result<(LabelSet, LabelEncoding), FormatError> {
    let mut r = check_header(bytes, HBLB_MAGIC, HBLB_HEADER)?;
    let n = r.u64();
    let c = r.u32();
    let enc = r.u8();
    if c == 0 {
        return Err(FormatError::InvalidField {
            field: "c",
            value: 0,
        });
    }
    let encoding = match enc {
        0 => LabelEncoding::MultiHot,
        1 => LabelEncoding::ClassId,
        other => {
            return Err(FormatError::InvalidField {
                field: "encoding",
                value: other as u64,
            })
        }
    };
    r.reserved(3)?;
    let width = match encoding {
        LabelEncoding::MultiHot => (c as u64).div_ceil(8),
        LabelEncoding::ClassId => 4,
    };
    let expected = payload_size("n", &[n, width])?;
    check_payload(bytes, HBLB_HEADER, expected)?;
    let n = n as usize;
    let mut rows = Vec::with_capacity(n);
    for item in 0..n {
        let row = match encoding {
            LabelEncoding::ClassId => {
                let class = r.u32();
                if class >= c {
                    return Err(FormatError::LabelRange {
                        item,
                        class: class as u64,
                        classes: c,
                    });
                }
                vec![class]
            }
            LabelEncoding::MultiHot => {
                let mut row = Vec::new();
                for byte in 0..width as usize {
                    let b = r.u8();
                    for bit in 0..8 {
                        if b >> bit & 1 == 1 {
                            let class = (byte * 8 + bit) as u64;
                            if class >= c as u64 {
                                return Err(FormatError::LabelRange {
                                    item,
                                    class,
                                    classes: c,
                                });
                            }
                            row.push(class as u32);
                        }
                    }
                }
                if row.is_empty() {
                    return Err(FormatError::EmptyLabel { item });
                }
                row
            }
        };
        rows.push(row);
    }
    Ok((LabelSet::new(c, rows).expect("validated"), encoding))
}

// ---------------------------------------------------------------- HBMD

pub fn encode_hbmd(model: &HashModel) -> Vec<u8> {
    let (d, k) = (model.d(), model.k());
    let mut out = Vec::with_capacity(HBMD_HEADER + 4 * (d + d * k + k * k));
    out.extend_from_slice(&HBMD_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.push(model.flags().to_bits());
    out.extend_from_slice(&[0u8; 7]);
    out.extend_from_slice(&model.seed().to_le_bytes());
    push_f32s(&mut out, model.mean().iter().copied());
    push_f32s(&mut out, model.basis().as_slice().iter().copied());
    push_f32s(&mut out, model.rotation().as_slice().iter().copied());
    out
}

pub fn decode_hbmd(bytes: &[u8]) -> Result<HashModel, FormatError> {
    let mut r = check_header(bytes, HBMD_MAGIC, HBMD_HEADER)?;
    let d = r.u32();
    let k = r.u32();
    let flags = r.u8();
    if d == 0 {
        return Err(FormatError::InvalidField {
            field: "d",
            value: 0,
        });
    }
    if k == 0 || k > d {
        return Err(FormatError::InvalidField {
            field: "k",
            value: k as u64,
        });
    }
    if flags & !0b11 != 0 {
        return Err(FormatError::InvalidField {
            field: "flags",
            value: flags as u64,
        });
    }
    r.reserved(7)?;
    let seed = r.u64();
    let (d64, k64) = (d as u64, k as u64);
    let count = d64 + d64 * k64 + k64 * k64;
    check_payload(bytes, HBMD_HEADER, count * 4)?;
    let (d, k) = (d as usize, k as usize);
    let to_f64 = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    let mean = to_f64(r.f32s(d));
    let basis = to_f64(r.f32s(d * k));
    let rotation = to_f64(r.f32s(k * k));
    for (row, block) in [(0usize, &mean), (1, &basis), (1 + d, &rotation)] {
        let width = if row == 0 { d } else { k };
        if let Some(pos) = block.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite {
                row: row + pos / width,
            });
        }
    }
    let flags = PreprocessFlags::from_bits(flags);
    if !flags.mean_center {
        if let Some(index) = mean.iter().position(|&v| v != 0.0) {
            return Err(FormatError::NonZeroMean { index });
        }
    }
    let basis = DenseMatrix::new(d, k, basis).expect("validated");
    let rotation = DenseMatrix::new(k, k, rotation).expect("validated");
    for (which, m, tolerance) in [
        ("basis V", &basis, BASIS_TOLERANCE),
        ("rotation R", &rotation, ROTATION_TOLERANCE),
    ] {
        let deviation = m.orthonormality_error();
        if deviation > tolerance {
            return Err(FormatError::NotOrthogonal {
                which,
                deviation,
                tolerance,
            });
        }
    }
    Ok(HashModel::from_parts(flags, mean, basis, rotation, seed).expect("validated"))
}

// ---------------------------------------------------------------- HBCD

pub fn encode_hbcd(db: &CodeDatabase) -> Vec<u8> {
    let mut out = Vec::with_capacity(HBCD_HEADER + db.as_words().len() * 8);
    out.extend_from_slice(&HBCD_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(db.len() as u64).to_le_bytes());
    out.extend_from_slice(&(db.k() as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for w in db.as_words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_hbcd(bytes: &[u8]) -> Result<CodeDatabase, FormatError> {
    let mut r = check_header(bytes, HBCD_MAGIC, HBCD_HEADER)?;
    let n = r.u64();
    let k = r.u32();
    if k == 0 {
        return Err(FormatError::InvalidField {
            field: "k",
            value: 0,
        });
    }
    r.reserved(4)?;
    let w = words_for(k as usize) as u64;
    let expected = payload_size("n", &[n, w, 8])?;
    check_payload(bytes, HBCD_HEADER, expected)?;
    let words: Vec<u64> = bytes[HBCD_HEADER..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    CodeDatabase::from_words(k as usize, n as usize, words)
        .map_err(|item| FormatError::Padding { item })
}

// ---------------------------------------------------------------- files

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Write through a temporary file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let wrap = |source| Error::File {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

pub fn read_hbem(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    Ok(decode_hbem(&read_file(path.as_ref())?)?)
}

pub fn write_hbem(x: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_hbem(x))
}

pub fn read_hblb(path: impl AsRef<Path>) -> Result<LabelSet> {
    Ok(decode_hblb(&read_file(path.as_ref())?)?.0)
}

/// Writes class ids when every item has one label, multi-hot rows otherwise.
pub fn write_hblb(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(
        path.as_ref(),
        &encode_hblb(labels, LabelEncoding::for_labels(labels))?,
    )
}

pub fn read_hbmd(path: impl AsRef<Path>) -> Result<HashModel> {
    Ok(decode_hbmd(&read_file(path.as_ref())?)?)
}

pub fn write_hbmd(model: &HashModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_hbmd(model))
}

pub fn read_hbcd(path: impl AsRef<Path>) -> Result<CodeDatabase> {
    Ok(decode_hbcd(&read_file(path.as_ref())?)?)
}

pub fn write_hbcd(db: &CodeDatabase, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_hbcd(db))
}
