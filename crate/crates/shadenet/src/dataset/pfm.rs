//! Portable float map reader/writer (1- or 3-channel, 32-bit float).
//!
//! Header: `PF` (color) or `Pf` (gray), then `width height`, then a scale
//! whose sign encodes endianness (we always write `-1.0`, little-endian).
//! Pixel rows follow bottom-up, left-to-right, channels interleaved.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Writes a 1- or 3-channel tensor as a PFM file.
pub fn write_pfm(path: &Path, t: &Tensor) -> Result<()> {
    let header = match t.channels() {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::invalid(format!(
                "PFM stores 1 or 3 channels, tensor has {c}"
            )))
        }
    };
    let (c, h, w) = t.shape();
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "{header}\n{w} {h}\n-1.0\n")?;
    let plane = h * w;
    // Bottom row first.
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                let v = t.data()[ch * plane + y * w + x];
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn read_token(reader: &mut impl Read, path: &Path) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            return Err(format_err(path, "unexpected end of header"));
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
    }
    String::from_utf8(token).map_err(|_| format_err(path, "non-ASCII header token"))
}

/// Reads a PFM file into a channel-major tensor.
pub fn read_pfm(path: &Path) -> Result<Tensor> {
    let mut reader = BufReader::new(File::open(path)?);
    let magic = read_token(&mut reader, path)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format_err(path, format!("bad magic `{other}`"))),
    };
    let w: usize = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| format_err(path, "bad width"))?;
    let h: usize = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| format_err(path, "bad height"))?;
    let scale: f32 = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| format_err(path, "bad scale"))?;
    let little_endian = scale < 0.0;

    let count = channels * h * w;
    let mut buf = vec![0u8; count * 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| format_err(path, "truncated pixel data"))?;

    let plane = h * w;
    let mut data = vec![0.0f32; count];
    let mut i = 0;
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..channels {
                let b = [buf[i], buf[i + 1], buf[i + 2], buf[i + 3]];
                i += 4;
                let v = if little_endian {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                };
                data[ch * plane + y * w + x] = v;
            }
        }
    }
    Tensor::from_vec(channels, h, w, data)
        .map_err(|_| format_err(path, "non-finite pixel values"))
}
