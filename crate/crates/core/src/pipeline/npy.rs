//! Reader and writer for `.npy` array files (little-endian float32/float64,
//! C order). float32 data is widened to f64 on read; writes are always f64.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Mat, Tensor4};

const MAGIC: &[u8] = b"\x93NUMPY";

/// An n-dimensional array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// What a tensor file holds: a 4-way kernel or a matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Array {
    Tensor(Tensor4),
    Matrix(Mat),
}

fn npy_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Npy {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}'");
    let start = header.find(&pat)? + pat.len();
    let rest = header[start..].trim_start().strip_prefix(':')?.trim_start();
    Some(rest)
}

fn parse_header(path: &Path, header: &str) -> Result<(bool, Vec<usize>)> {
    let descr =
        header_value(header, "descr").ok_or_else(|| npy_err(path, "header has no descr"))?;
    let quote = descr.chars().next().filter(|c| *c == '\'' || *c == '"');
    let descr = match quote {
        Some(q) => descr[1..].split(q).next().unwrap_or(""),
        None => return Err(npy_err(path, "malformed descr")),
    };
    let is_f64 = match descr {
        "<f8" => true,
        "<f4" => false,
        other => {
            return Err(npy_err(
                path,
                format!("unsupported dtype `{other}`, expected <f8 or <f4"),
            ))
        }
    };
    let fortran = header_value(header, "fortran_order")
        .ok_or_else(|| npy_err(path, "header has no fortran_order"))?;
    if fortran.starts_with("True") {
        return Err(npy_err(
            path,
            "fortran_order=True is not supported; save the array in C order",
        ));
    }
    if !fortran.starts_with("False") {
        return Err(npy_err(path, "malformed fortran_order"));
    }
    let shape =
        header_value(header, "shape").ok_or_else(|| npy_err(path, "header has no shape"))?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| npy_err(path, "malformed shape"))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| npy_err(path, format!("bad shape entry `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((is_f64, dims))
}

pub fn decode_npy(path: &Path, bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(npy_err(path, "bad magic bytes"));
    }
    let (header_len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(npy_err(path, "truncated header"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(npy_err(path, format!("unsupported format version {v}"))),
    };
    let end = start + header_len;
    if bytes.len() < end {
        return Err(npy_err(path, "truncated header"));
    }
    let header =
        std::str::from_utf8(&bytes[start..end]).map_err(|_| npy_err(path, "header is not text"))?;
    let (is_f64, shape) = parse_header(path, header)?;
    let count: usize = shape.iter().product();
    let width = if is_f64 { 8 } else { 4 };
    let body = &bytes[end..];
    if body.len() != count * width {
        return Err(npy_err(
            path,
            format!(
                "expected {} data bytes for shape {shape:?}, found {}",
                count * width,
                body.len()
            ),
        ));
    }
    let data = if is_f64 {
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        body.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    };
    Ok(NpyArray { shape, data })
}

pub fn encode_npy(shape: &[usize], data: &[f64]) -> Vec<u8> {
    let shape_str = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape_str}, }}");
    // pad so the data starts on a 64-byte boundary, newline last
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + 8 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_npy(path, &bytes)
}

pub fn write_npy(path: impl AsRef<Path>, shape: &[usize], data: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::shape(format!(
            "shape {shape:?} does not hold {} values",
            data.len()
        )));
    }
    fs::write(path, encode_npy(shape, data)).map_err(|e| Error::io(path, e))
}

fn row_major_to_mat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, data)
}

fn mat_to_row_major(m: &Mat) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Load a 4-way tensor or a matrix.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Array> {
    let path = path.as_ref();
    let a = read_npy(path)?;
    match a.shape.len() {
        4 => Ok(Array::Tensor(Tensor4::new(
            [a.shape[0], a.shape[1], a.shape[2], a.shape[3]],
            a.data,
        )?)),
        2 => Ok(Array::Matrix(row_major_to_mat(
            a.shape[0], a.shape[1], &a.data,
        ))),
        n => Err(npy_err(
            path,
            format!("expected a 2-d or 4-d array, found {n}-d"),
        )),
    }
}

pub fn write_tensor(path: impl AsRef<Path>, value: &Array) -> Result<()> {
    match value {
        Array::Tensor(t) => write_npy(path, &t.dims(), t.data()),
        Array::Matrix(m) => write_npy(path, &[m.nrows(), m.ncols()], &mat_to_row_major(m)),
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    match read_tensor(path)? {
        Array::Matrix(m) => Ok(m),
        Array::Tensor(t) => Err(npy_err(
            path,
            format!("expected a matrix, found a tensor of shape {:?}", t.dims()),
        )),
    }
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    write_tensor(path, &Array::Matrix(m.clone()))
}
