//! File formats: the binary k-space container, CSV tables, and 16-bit PGM images.
//!
//! K-space container, little-endian throughout:
//!
//! | field | type |
//! |---|---|
//! | magic | `ACSK` |
//! | version | u32, currently 1 |
//! | n1, n2, L, C, k | u32 each |
//! | flags | u8, bit 0 set when B follows |
//! | Omega | L x u32 |
//! | Y | L*C complex128 as (re, im) f64 pairs, column-major |
//! | B | N*k complex128, column-major, only with flag bit 0 |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use accs_core::transforms::{GridShape, SamplingPattern};
use accs_core::Complex64;
use nalgebra::DMatrix;

use crate::error::{io_err, HarnessError, Result};

pub const KSPACE_MAGIC: &[u8; 4] = b"ACSK";
pub const KSPACE_VERSION: u32 = 1;
const FLAG_BASIS: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KspaceData {
    pub shape: GridShape,
    pub k: usize,
    pub pattern: SamplingPattern,
    /// `L x C`
    pub y: DMatrix<Complex64>,
    /// `N x k`, when stored.
    pub basis: Option<DMatrix<Complex64>>,
}

impl KspaceData {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let (l, c) = self.y.shape();
        let n = self.shape.len();
        if l != self.pattern.len() {
            return Err(HarnessError::io(format!("Y has {l} rows but Omega has {} entries", self.pattern.len())));
        }
        if let Some(b) = &self.basis {
            if b.shape() != (n, self.k) {
                return Err(HarnessError::io(format!("B is {}x{}, expected {n}x{}", b.nrows(), b.ncols(), self.k)));
            }
        }
        let u32_of = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| HarnessError::io(format!("{what} = {v} does not fit in u32")))
        };
        let mut out = Vec::with_capacity(25 + 4 * l + 16 * (l * c + n * self.k));
        out.extend_from_slice(KSPACE_MAGIC);
        out.extend_from_slice(&KSPACE_VERSION.to_le_bytes());
        for (v, what) in [(self.shape.n1(), "n1"), (self.shape.n2(), "n2"), (l, "L"), (c, "C"), (self.k, "k")] {
            out.extend_from_slice(&u32_of(v, what)?.to_le_bytes());
        }
        out.push(if self.basis.is_some() { FLAG_BASIS } else { 0 });
        for &idx in self.pattern.indices() {
            out.extend_from_slice(&u32_of(idx, "Omega index")?.to_le_bytes());
        }
        let mut push_complex = |v: &Complex64| {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        };
        self.y.iter().for_each(&mut push_complex);
        if let Some(b) = &self.basis {
            b.iter().for_each(&mut push_complex);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != KSPACE_MAGIC {
            return Err(HarnessError::io(format!("bad magic bytes {magic:?} at offset 0, expected \"ACSK\"")));
        }
        let version = r.u32("version")?;
        if version != KSPACE_VERSION {
            return Err(HarnessError::io(format!("unsupported k-space version {version} at offset 4")));
        }
        let n1 = r.u32("header (n1)")? as usize;
        let n2 = r.u32("header (n2)")? as usize;
        let l = r.u32("header (L)")? as usize;
        let c = r.u32("header (C)")? as usize;
        let k = r.u32("header (k)")? as usize;
        let flags = r.take(1, "header (flags)")?[0];
        if flags & !FLAG_BASIS != 0 {
            return Err(HarnessError::io(format!("unknown flag bits {flags:#04x} at offset 24")));
        }
        let shape = GridShape::new(n1, n2).map_err(|e| HarnessError::io(format!("header: {e}")))?;
        if c == 0 || k == 0 {
            return Err(HarnessError::io("header: C and k must be positive"));
        }
        let omega_at = r.pos;
        let mut idx = Vec::with_capacity(l);
        for _ in 0..l {
            idx.push(r.u32("Omega")? as usize);
        }
        let pattern = SamplingPattern::new(idx, shape.len())
            .map_err(|e| HarnessError::io(format!("Omega section at offset {omega_at}: {e}")))?;
        let y = DMatrix::from_vec(l, c, r.complex_vec(l * c, "Y")?);
        let basis = if flags & FLAG_BASIS != 0 {
            Some(DMatrix::from_vec(shape.len(), k, r.complex_vec(shape.len() * k, "B")?))
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(HarnessError::io(format!("{} trailing bytes after offset {}", bytes.len() - r.pos, r.pos)));
        }
        Ok(KspaceData { shape, k, pattern, y, basis })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            HarnessError::io(format!(
                "truncated file: section {section} needs {len} bytes at offset {}, only {} remain",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().expect("4 bytes")))
    }

    fn complex_vec(&mut self, count: usize, section: &str) -> Result<Vec<Complex64>> {
        let raw = self.take(count.saturating_mul(16), section)?;
        Ok(raw
            .chunks_exact(16)
            .map(|ch| {
                let re = f64::from_le_bytes(ch[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(ch[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect())
    }
}

pub fn write_kspace(path: &Path, data: &KspaceData) -> Result<()> {
    fs::write(path, data.encode()?).map_err(|e| io_err(path, e))
}

pub fn read_kspace(path: &Path) -> Result<KspaceData> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    KspaceData::decode(&bytes).map_err(|e| HarnessError::io(format!("{}: {e}", path.display())))
}

/// A CSV table with a fixed header. Cells are written verbatim, so callers
/// format numbers themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| io_err(path, e))
    }
}

/// Binary PGM (`P5`, maxval 65535): rows are the first grid index, columns
/// the second. Values are scaled linearly so the largest maps to 65535; an
/// all-zero image stays zero.
pub fn pgm_bytes(shape: GridShape, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != shape.len() {
        return Err(HarnessError::io(format!("image has {} values for a {shape} grid", values.len())));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(HarnessError::io("image values must be finite and non-negative"));
    }
    let (rows, cols) = (shape.n1(), shape.n2());
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    for r in 0..rows {
        for c in 0..cols {
            let v = values[shape.index(r, c)];
            let q = if max > 0.0 { (v / max * 65535.0).round() as u16 } else { 0 };
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, shape: GridShape, values: &[f64]) -> Result<()> {
    fs::write(path, pgm_bytes(shape, values)?).map_err(|e| io_err(path, e))
}

/// Read a binary (`P5`) or ASCII (`P2`) PGM into a grid with rows as the first
/// index. Samples are returned as read, without rescaling.
pub fn decode_pgm(bytes: &[u8]) -> Result<(GridShape, Vec<f64>)> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(HarnessError::io(format!("truncated PGM header at offset {pos}")));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let magic = tokens[0].as_str();
    if magic != "P5" && magic != "P2" {
        return Err(HarnessError::io(format!("bad PGM magic '{magic}', expected P5 or P2")));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| HarnessError::io(format!("bad PGM {what} '{s}'")))
    };
    let cols = num(&tokens[1], "width")?;
    let rows = num(&tokens[2], "height")?;
    let maxval = num(&tokens[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(HarnessError::io(format!("PGM maxval {maxval} out of range")));
    }
    let shape = GridShape::new(rows, cols).map_err(|e| HarnessError::io(format!("PGM size: {e}")))?;
    let mut values = vec![0.0; shape.len()];
    let count = rows * cols;
    if magic == "P5" {
        pos += 1; // single whitespace after maxval
        let width = if maxval < 256 { 1 } else { 2 };
        let need = count * width;
        if bytes.len() < pos + need {
            return Err(HarnessError::io(format!(
                "truncated PGM raster: need {need} bytes at offset {pos}, have {}",
                bytes.len().saturating_sub(pos)
            )));
        }
        for i in 0..count {
            let v = if width == 1 {
                bytes[pos + i] as f64
            } else {
                u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]) as f64
            };
            values[shape.index(i / cols, i % cols)] = v;
        }
    } else {
        let text = String::from_utf8_lossy(&bytes[pos..]);
        let mut it = text.split_ascii_whitespace();
        for i in 0..count {
            let t = it
                .next()
                .ok_or_else(|| HarnessError::io(format!("truncated PGM raster: {i} of {count} samples")))?;
            values[shape.index(i / cols, i % cols)] = num(t, "sample")? as f64;
        }
    }
    Ok((shape, values))
}

pub fn read_pgm(path: &Path) -> Result<(GridShape, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_pgm(&bytes).map_err(|e| HarnessError::io(format!("{}: {e}", path.display())))
}

/// `key=value` lines in the given order.
pub fn key_values(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}
