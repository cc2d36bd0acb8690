//! File formats: `KHT1` tensors and binary PGM (P5) previews.
//!
//! A `KHT1` file is the magic `KHT1`, a little-endian `u32` rank, `rank`
//! little-endian `u32` dimensions, then the row-major `f32` payload in
//! little-endian order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub const KHT1_MAGIC: &[u8; 4] = b"KHT1";

/// Row-major tensor with `f32` storage semantics.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("{n} values for {dims:?}"), data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn from_image(image: &Image) -> Self {
        Self {
            dims: vec![image.height(), image.width()],
            data: image.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    /// Stacks equal-length rows into a rank-2 tensor.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape(cols, row.len()));
            }
            data.extend(row.iter().map(|&v| v as f32));
        }
        Ok(Self {
            dims: vec![rows.len(), cols],
            data,
        })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn to_image(&self) -> Result<Image> {
        match self.dims.as_slice() {
            &[h, w] => Image::from_vec(h, w, self.to_f64()),
            other => Err(Error::Format(format!(
                "expected a rank-2 tensor, got dims {other:?}"
            ))),
        }
    }

    pub fn to_rows(&self) -> Result<Vec<Vec<f64>>> {
        match self.dims.as_slice() {
            &[_, cols] if cols > 0 => Ok(self
                .data
                .chunks(cols)
                .map(|c| c.iter().map(|&v| v as f64).collect())
                .collect()),
            &[rows, 0] => Ok(vec![Vec::new(); rows]),
            other => Err(Error::Format(format!(
                "expected a rank-2 tensor, got dims {other:?}"
            ))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(KHT1_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut magic = [0u8; 4];
        cursor
            .read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &magic != KHT1_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let rank = read_u32(&mut cursor)? as usize;
        if rank > 16 {
            return Err(Error::Format(format!("implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut cursor)? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        if cursor.len() != n * 4 {
            return Err(Error::Format(format!(
                "payload has {} bytes, dims {dims:?} need {}",
                cursor.len(),
                n * 4
            )));
        }
        let data = cursor
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

fn read_u32(cursor: &mut &[u8]) -> Result<u32> {
    let mut buf = [0u8; 4];
    cursor
        .read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(buf))
}

/// Encodes an image as 8-bit P5, mapping `[0, max]` to `[0, 255]`.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let max = image.max();
    let scale = if max > 0.0 && max.is_finite() {
        255.0 / max
    } else {
        0.0
    };
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .as_slice()
            .iter()
            .map(|&v| (v.max(0.0) * scale).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_pgm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}

/// Decodes a binary PGM into values in `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!(
            "unsupported PGM magic {}",
            fields[0]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("bad PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < width * height * bytes_per {
        return Err(Error::Format("truncated PGM raster".into()));
    }
    let data = (0..width * height)
        .map(|i| {
            let v = if bytes_per == 1 {
                raster[i] as f64
            } else {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
            };
            v / maxval as f64
        })
        .collect();
    Image::from_vec(height, width, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pgm(&fs::read(path)?)
}
