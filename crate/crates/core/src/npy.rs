//! Reader/writer for the subset of the NumPy `.npy`/`.npz` formats the value
//! documents use: little-endian (or byte-order-free) numeric and boolean
//! dtypes, fixed-width `U`/`S` strings, C or Fortran order on read, C order
//! on write.

use std::fs::File;
use std::io::{self, Read, Seek, Write};
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Error)]
pub enum NpyError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not an npy stream (bad magic)")]
    BadMagic,
    #[error("unsupported npy version {0}.{1}")]
    Version(u8, u8),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported dtype {0:?}")]
    Dtype(String),
    #[error("data length mismatch: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("archive: {0}")]
    Zip(#[from] zip::result::ZipError),
}

/// Element storage. Numeric dtypes are widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub enum Elements {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

impl Elements {
    pub fn len(&self) -> usize {
        match self {
            Elements::Numeric(v) => v.len(),
            Elements::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An n-dimensional array in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    /// dtype descriptor as written in the header, e.g. `<f8`.
    pub descr: String,
    pub shape: Vec<usize>,
    pub elements: Elements,
}

impl NpyArray {
    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self { descr: "<f8".into(), shape, elements: Elements::Numeric(data) }
    }

    pub fn from_i64(shape: Vec<usize>, data: Vec<i64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self {
            descr: "<i8".into(),
            shape,
            elements: Elements::Numeric(data.into_iter().map(|v| v as f64).collect()),
        }
    }

    pub fn from_strings(data: Vec<String>) -> Self {
        let width = data.iter().map(|s| s.chars().count()).max().unwrap_or(0).max(1);
        Self { descr: format!("<U{width}"), shape: vec![data.len()], elements: Elements::Text(data) }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn numeric(&self) -> Option<&[f64]> {
        match &self.elements {
            Elements::Numeric(v) => Some(v),
            Elements::Text(_) => None,
        }
    }

    pub fn text(&self) -> Option<&[String]> {
        match &self.elements {
            Elements::Text(v) => Some(v),
            Elements::Numeric(_) => None,
        }
    }

    /// Numeric elements converted to `T`.
    pub fn as_scalars<T: Scalar>(&self) -> Option<Vec<T>> {
        self.numeric().map(|v| v.iter().map(|&x| T::lit(x)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Float,
    Int,
    Uint,
    Bool,
    Unicode,
    Bytes,
}

#[derive(Debug, Clone, Copy)]
struct Dtype {
    kind: Kind,
    size: usize,
    big_endian: bool,
}

fn parse_dtype(descr: &str) -> Result<Dtype, NpyError> {
    let bad = || NpyError::Dtype(descr.to_string());
    let mut chars = descr.chars();
    let order = chars.next().ok_or_else(bad)?;
    let big_endian = match order {
        '<' | '|' | '=' => false,
        '>' => true,
        _ => return Err(bad()),
    };
    let kind = match chars.next().ok_or_else(bad)? {
        'f' => Kind::Float,
        'i' => Kind::Int,
        'u' => Kind::Uint,
        'b' => Kind::Bool,
        'U' => Kind::Unicode,
        'S' | 'a' => Kind::Bytes,
        _ => return Err(bad()),
    };
    let n: usize = chars.as_str().parse().map_err(|_| bad())?;
    let size = match kind {
        Kind::Unicode => n * 4,
        _ => n,
    };
    let ok = match kind {
        Kind::Float => matches!(n, 4 | 8),
        Kind::Int | Kind::Uint => matches!(n, 1 | 2 | 4 | 8),
        Kind::Bool => n == 1,
        Kind::Unicode | Kind::Bytes => true,
    };
    if !ok {
        return Err(bad());
    }
    Ok(Dtype { kind, size, big_endian })
}

/// Minimal reader for the Python-literal dict in the header.
struct HeaderParser<'a> {
    s: &'a [u8],
    pos: usize,
}

#[derive(Debug)]
enum Lit {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl<'a> HeaderParser<'a> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, what: &str) -> NpyError {
        NpyError::Header(format!("{what} at byte {}", self.pos))
    }

    fn string(&mut self) -> Result<String, NpyError> {
        self.ws();
        let q = *self.s.get(self.pos).ok_or_else(|| self.err("expected string"))?;
        if q != b'\'' && q != b'"' {
            return Err(self.err("expected quote"));
        }
        let start = self.pos + 1;
        let end = start
            + self.s[start..]
                .iter()
                .position(|&c| c == q)
                .ok_or_else(|| self.err("unterminated string"))?;
        self.pos = end + 1;
        Ok(String::from_utf8_lossy(&self.s[start..end]).into_owned())
    }

    fn value(&mut self) -> Result<Lit, NpyError> {
        self.ws();
        match self.s.get(self.pos) {
            Some(b'\'') | Some(b'"') => Ok(Lit::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.eat(b')') {
                        break;
                    }
                    self.ws();
                    let start = self.pos;
                    while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    // numpy may write `3L` on old Python 2 files
                    let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                    let d = digits.parse().map_err(|_| self.err("expected dimension"))?;
                    if self.s.get(self.pos) == Some(&b'L') {
                        self.pos += 1;
                    }
                    dims.push(d);
                    if !self.eat(b',') {
                        if !self.eat(b')') {
                            return Err(self.err("expected , or )"));
                        }
                        break;
                    }
                }
                Ok(Lit::Tuple(dims))
            }
            _ => {
                let rest = &self.s[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Lit::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Lit::Bool(false))
                } else {
                    Err(self.err("unexpected value"))
                }
            }
        }
    }
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn parse_header(text: &[u8]) -> Result<Header, NpyError> {
    let mut p = HeaderParser { s: text, pos: 0 };
    if !p.eat(b'{') {
        return Err(p.err("expected {"));
    }
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    loop {
        if p.eat(b'}') {
            break;
        }
        let key = p.string()?;
        if !p.eat(b':') {
            return Err(p.err("expected :"));
        }
        match (key.as_str(), p.value()?) {
            ("descr", Lit::Str(s)) => descr = Some(s),
            ("fortran_order", Lit::Bool(b)) => fortran = Some(b),
            ("shape", Lit::Tuple(t)) => shape = Some(t),
            (k, v) => return Err(NpyError::Header(format!("unexpected entry {k:?}: {v:?}"))),
        }
        if !p.eat(b',') {
            if !p.eat(b'}') {
                return Err(p.err("expected , or }"));
            }
            break;
        }
    }
    Ok(Header {
        descr: descr.ok_or_else(|| NpyError::Header("missing descr".into()))?,
        fortran_order: fortran.ok_or_else(|| NpyError::Header("missing fortran_order".into()))?,
        shape: shape.ok_or_else(|| NpyError::Header("missing shape".into()))?,
    })
}

fn decode_numeric(bytes: &[u8], dt: Dtype) -> Vec<f64> {
    macro_rules! conv {
        ($t:ty) => {
            bytes
                .chunks_exact(dt.size)
                .map(|c| {
                    let arr: [u8; std::mem::size_of::<$t>()] = c.try_into().unwrap();
                    (if dt.big_endian { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
                })
                .collect()
        };
    }
    match (dt.kind, dt.size) {
        (Kind::Float, 4) => conv!(f32),
        (Kind::Float, 8) => conv!(f64),
        (Kind::Int, 1) => conv!(i8),
        (Kind::Int, 2) => conv!(i16),
        (Kind::Int, 4) => conv!(i32),
        (Kind::Int, 8) => conv!(i64),
        (Kind::Uint, 1) => conv!(u8),
        (Kind::Uint, 2) => conv!(u16),
        (Kind::Uint, 4) => conv!(u32),
        (Kind::Uint, 8) => conv!(u64),
        (Kind::Bool, 1) => bytes.iter().map(|&b| if b != 0 { 1.0 } else { 0.0 }).collect(),
        _ => unreachable!("dtype validated on parse"),
    }
}

fn decode_text(bytes: &[u8], dt: Dtype) -> Vec<String> {
    bytes
        .chunks_exact(dt.size.max(1))
        .map(|c| match dt.kind {
            Kind::Unicode => c
                .chunks_exact(4)
                .map(|u| {
                    let a: [u8; 4] = u.try_into().unwrap();
                    if dt.big_endian { u32::from_be_bytes(a) } else { u32::from_le_bytes(a) }
                })
                .take_while(|&cp| cp != 0)
                .filter_map(char::from_u32)
                .collect(),
            _ => {
                let end = c.iter().position(|&b| b == 0).unwrap_or(c.len());
                String::from_utf8_lossy(&c[..end]).into_owned()
            }
        })
        .collect()
}

/// Reorders Fortran-order data into C order.
fn fortran_to_c<T: Clone>(data: &[T], shape: &[usize]) -> Vec<T> {
    let n = data.len();
    if shape.len() < 2 {
        return data.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        // Fortran offset of the current C-order multi-index
        let mut off = 0;
        let mut stride = 1;
        for (d, &i) in idx.iter().enumerate() {
            off += i * stride;
            stride *= shape[d];
        }
        out.push(data[off].clone());
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Reads one `.npy` stream.
pub fn read_npy<R: Read>(mut r: R) -> Result<NpyArray, NpyError> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)?;
    let header_len = match ver[0] {
        1 => {
            let mut b = [0u8; 2];
            r.read_exact(&mut b)?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            u32::from_le_bytes(b) as usize
        }
        _ => return Err(NpyError::Version(ver[0], ver[1])),
    };
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let h = parse_header(&header)?;
    let dt = parse_dtype(&h.descr)?;
    let count: usize = h.shape.iter().product();
    let expected = count * dt.size;
    let mut data = Vec::with_capacity(expected);
    r.read_to_end(&mut data)?;
    if data.len() < expected {
        return Err(NpyError::Truncated { expected, found: data.len() });
    }
    data.truncate(expected);
    let mut elements = match dt.kind {
        Kind::Unicode | Kind::Bytes => Elements::Text(decode_text(&data, dt)),
        _ => Elements::Numeric(decode_numeric(&data, dt)),
    };
    if h.fortran_order {
        elements = match elements {
            Elements::Numeric(v) => Elements::Numeric(fortran_to_c(&v, &h.shape)),
            Elements::Text(v) => Elements::Text(fortran_to_c(&v, &h.shape)),
        };
    }
    Ok(NpyArray { descr: h.descr, shape: h.shape, elements })
}

/// Header bytes (magic through the trailing newline) for a C-order array.
pub fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_txt = match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => format!("({})", shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_txt}, }}");
    // version 1.0 prefix is 10 bytes; pad so the data starts on a 64-byte boundary
    let mut v1 = true;
    let mut prefix = 10;
    let mut total = prefix + dict.len() + 1;
    let mut padded = total.div_ceil(64) * 64;
    if padded - prefix > u16::MAX as usize {
        v1 = false;
        prefix = 12;
        total = prefix + dict.len() + 1;
        padded = total.div_ceil(64) * 64;
    }
    let hlen = padded - prefix;
    let mut out = Vec::with_capacity(padded);
    out.extend_from_slice(MAGIC);
    if v1 {
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(hlen as u16).to_le_bytes());
    } else {
        out.extend_from_slice(&[2, 0]);
        out.extend_from_slice(&(hlen as u32).to_le_bytes());
    }
    out.extend_from_slice(dict.as_bytes());
    out.resize(padded - 1, b' ');
    out.push(b'\n');
    out
}

/// Writes one `.npy` stream (`<f8`, `<i8`, `|b1`, `<U*` supported).
pub fn write_npy<W: Write>(mut w: W, a: &NpyArray) -> Result<(), NpyError> {
    let dt = parse_dtype(&a.descr)?;
    w.write_all(&header_bytes(&a.descr, &a.shape))?;
    match (&a.elements, dt.kind, dt.size) {
        (Elements::Numeric(v), Kind::Float, 8) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        (Elements::Numeric(v), Kind::Int, 8) => {
            for x in v {
                w.write_all(&(*x as i64).to_le_bytes())?;
            }
        }
        (Elements::Numeric(v), Kind::Bool, 1) => {
            for x in v {
                w.write_all(&[u8::from(*x != 0.0)])?;
            }
        }
        (Elements::Text(v), Kind::Unicode, size) => {
            let width = size / 4;
            for s in v {
                let mut n = 0;
                for ch in s.chars().take(width) {
                    w.write_all(&(ch as u32).to_le_bytes())?;
                    n += 1;
                }
                for _ in n..width {
                    w.write_all(&[0; 4])?;
                }
            }
        }
        _ => return Err(NpyError::Dtype(format!("{} (write)", a.descr))),
    }
    Ok(())
}

/// Named arrays of an `.npz` archive, in archive order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NpzArchive {
    pub members: Vec<(String, NpyArray)>,
}

impl NpzArchive {
    pub fn get(&self, name: &str) -> Option<&NpyArray> {
        self.members.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn push(&mut self, name: impl Into<String>, a: NpyArray) {
        self.members.push((name.into(), a));
    }
}

pub fn read_npz_from<R: Read + Seek>(r: R) -> Result<NpzArchive, NpyError> {
    let mut zip = zip::ZipArchive::new(r)?;
    let mut out = NpzArchive::default();
    for i in 0..zip.len() {
        let mut f = zip.by_index(i)?;
        if f.is_dir() {
            continue;
        }
        let name = f.name().to_string();
        let key = name.strip_suffix(".npy").unwrap_or(&name).to_string();
        let mut buf = Vec::with_capacity(f.size() as usize);
        f.read_to_end(&mut buf)?;
        out.members.push((key, read_npy(&buf[..])?));
    }
    Ok(out)
}

pub fn read_npz(path: &Path) -> Result<NpzArchive, NpyError> {
    read_npz_from(File::open(path)?)
}

/// Writes an uncompressed archive, one `<name>.npy` member per array.
pub fn write_npz_to<W: Write + Seek>(w: W, archive: &NpzArchive) -> Result<(), NpyError> {
    let mut zip = zip::ZipWriter::new(w);
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Stored);
    for (name, a) in &archive.members {
        zip.start_file(format!("{name}.npy"), opts)?;
        write_npy(&mut zip, a)?;
    }
    zip.finish()?;
    Ok(())
}

pub fn write_npz(path: &Path, archive: &NpzArchive) -> Result<(), NpyError> {
    write_npz_to(File::create(path)?, archive)
}
