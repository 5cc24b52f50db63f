//! Binary matrix files (`KBMT` header) and binary PGM images.
//!
//! Matrix layout: magic `KBMT`, one precision byte (4 = `f32`, 8 = `f64`,
//! i.e. the element width), three reserved zero bytes, `u32` rows, `u32`
//! cols, then the row-major little-endian elements.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorla::{Mat, Precision, Scalar};

const MAGIC: &[u8; 4] = b"KBMT";
const HEADER: usize = 16;

/// A matrix read from disk in whatever precision it was stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyMat {
    Single(Mat<f32>),
    Double(Mat<f64>),
}

impl AnyMat {
    pub fn precision(&self) -> Precision {
        match self {
            AnyMat::Single(_) => Precision::Single,
            AnyMat::Double(_) => Precision::Double,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            AnyMat::Single(m) => m.shape(),
            AnyMat::Double(m) => m.shape(),
        }
    }

    pub fn to_f64(&self) -> Mat<f64> {
        match self {
            AnyMat::Single(m) => m.cast(),
            AnyMat::Double(m) => m.clone(),
        }
    }
}

pub fn encode_mtx<T: Scalar>(m: &Mat<T>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Format("row count exceeds u32".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Format("column count exceeds u32".into()))?;
    let width = T::PRECISION.bytes();
    let mut out = Vec::with_capacity(HEADER + m.data().len() * width);
    out.extend_from_slice(MAGIC);
    out.push(width as u8);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode_mtx(bytes: &[u8]) -> Result<AnyMat> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing KBMT header".into()));
    }
    let code = bytes[4];
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[HEADER..];
    fn parse<T: Scalar>(body: &[u8], rows: usize, cols: usize) -> Result<Mat<T>> {
        let width = T::PRECISION.bytes();
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        if body.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} bytes, header promises {expected}",
                body.len()
            )));
        }
        let data = body.chunks_exact(width).map(T::read_le).collect();
        Mat::new(rows, cols, data)
    }
    match code {
        4 => Ok(AnyMat::Single(parse(body, rows, cols)?)),
        8 => Ok(AnyMat::Double(parse(body, rows, cols)?)),
        other => Err(Error::Format(format!("unknown precision code {other}"))),
    }
}

pub fn write_mtx<T: Scalar>(path: impl AsRef<Path>, m: &Mat<T>) -> Result<()> {
    fs::write(path, encode_mtx(m)?)?;
    Ok(())
}

pub fn read_mtx(path: impl AsRef<Path>) -> Result<AnyMat> {
    decode_mtx(&fs::read(path)?)
}

/// Reads a matrix and converts it to `f64`.
pub fn read_mtx_f64(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    Ok(read_mtx(path)?.to_f64())
}

/// Bit depth of a written PGM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PgmDepth {
    Eight,
    Sixteen,
}

impl PgmDepth {
    fn maxval(self) -> u32 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad number in PGM header".into()))
}

/// Decodes a binary (P5) PGM into an `height×width` matrix scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Mat<f64>> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::Format("only binary P5 PGM is supported".into()));
    }
    let width = header_number(bytes, &mut pos)?;
    let height = header_number(bytes, &mut pos)?;
    let maxval = header_number(bytes, &mut pos)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let body = bytes.get(pos..).unwrap_or(&[]);
    let count = width * height;
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if maxval < 256 {
        if body.len() < count {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        body[..count].iter().map(|&v| v as f64 * scale).collect()
    } else {
        if body.len() < 2 * count {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        body[..2 * count].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale).collect()
    };
    Mat::new(height, width, data)
}

/// Encodes an image with values clamped to `[0, 1]`.
pub fn encode_pgm(img: &Mat<f64>, depth: PgmDepth) -> Vec<u8> {
    let maxval = depth.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", img.cols(), img.rows(), maxval).into_bytes();
    for &v in img.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        match depth {
            PgmDepth::Eight => out.push(q as u8),
            PgmDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Mat<f64>, depth: PgmDepth) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_pgm(img, depth))?;
    w.flush()?;
    Ok(())
}
