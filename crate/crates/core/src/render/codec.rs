//! Binary image formats.
//!
//! * PPM `P6`, 8 bits per sample. Encoding maps `v` in `[0, 1]` to
//!   `floor(255 v + 0.5)` (round half up).
//! * PGM `P5`, 16 bits per sample big-endian, scaled so the heatmap maximum
//!   maps to 65535 (an all-zero map stays zero).
//! * Raw planes: little-endian `u32` header followed by little-endian `f32`
//!   values. Heatmaps use a `(H, W)` header, plane stacks `(C, H, W)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Heatmap, Image, Planes, RenderError};

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn encode_ppm<W: Write>(img: &Image, mut w: W) -> Result<(), RenderError> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let n = img.height * img.width;
    let mut buf = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            buf.push(quantize(img.data[c * n + i]));
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_token<R: Read>(r: &mut R) -> Result<String, RenderError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return if tok.is_empty() {
                Err(RenderError::Decode("unexpected end of header".into()))
            } else {
                Ok(tok)
            };
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            while r.read(&mut byte)? == 1 && byte[0] != b'\n' {}
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(b as char);
    }
}

fn read_header<R: Read>(r: &mut R, magic: &str) -> Result<(usize, usize, usize), RenderError> {
    let m = read_token(r)?;
    if m != magic {
        return Err(RenderError::Decode(format!("expected {magic}, found {m:?}")));
    }
    let mut nums = [0usize; 3];
    for n in &mut nums {
        let t = read_token(r)?;
        *n = t
            .parse()
            .map_err(|_| RenderError::Decode(format!("bad header field {t:?}")))?;
    }
    Ok((nums[0], nums[1], nums[2]))
}

pub fn decode_ppm<R: Read>(mut r: R) -> Result<Image, RenderError> {
    let (width, height, maxval) = read_header(&mut r, "P6")?;
    if maxval != 255 {
        return Err(RenderError::Decode(format!("unsupported maxval {maxval}")));
    }
    let n = width * height;
    let mut buf = vec![0u8; 3 * n];
    r.read_exact(&mut buf)
        .map_err(|e| RenderError::Decode(format!("truncated pixel data: {e}")))?;
    let mut img = Image::filled(height, width, [0.0; 3]);
    for i in 0..n {
        for c in 0..3 {
            img.data[c * n + i] = buf[3 * i + c] as f64 / 255.0;
        }
    }
    Ok(img)
}

pub fn write_ppm(img: &Image, path: &Path) -> Result<(), RenderError> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_ppm(img, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<Image, RenderError> {
    decode_ppm(BufReader::new(File::open(path)?))
}

pub fn encode_pgm16<W: Write>(hm: &Heatmap, mut w: W) -> Result<(), RenderError> {
    write!(w, "P5\n{} {}\n65535\n", hm.width, hm.height)?;
    let max = hm.data.iter().copied().fold(0.0f64, f64::max);
    let mut buf = Vec::with_capacity(2 * hm.data.len());
    for &v in &hm.data {
        let q = if max > 0.0 {
            (v.max(0.0) / max * 65535.0 + 0.5).floor() as u16
        } else {
            0
        };
        buf.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Decodes a 16-bit PGM into values in `[0, 1]` (the original scale is lost).
pub fn decode_pgm16<R: Read>(mut r: R) -> Result<Heatmap, RenderError> {
    let (width, height, maxval) = read_header(&mut r, "P5")?;
    if maxval != 65535 {
        return Err(RenderError::Decode(format!("unsupported maxval {maxval}")));
    }
    let mut buf = vec![0u8; 2 * width * height];
    r.read_exact(&mut buf)
        .map_err(|e| RenderError::Decode(format!("truncated pixel data: {e}")))?;
    let data = buf
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
        .collect();
    Ok(Heatmap { height, width, data })
}

fn write_f32s<W: Write>(values: &[f64], w: &mut W) -> Result<(), RenderError> {
    let mut buf = Vec::with_capacity(4 * values.len());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32s<R: Read, const N: usize>(r: &mut R) -> Result<[usize; N], RenderError> {
    let mut out = [0usize; N];
    for o in &mut out {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| RenderError::Decode("truncated raw header".into()))?;
        *o = u32::from_le_bytes(b) as usize;
    }
    Ok(out)
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, RenderError> {
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf)
        .map_err(|_| RenderError::Decode("truncated raw payload".into()))?;
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(RenderError::Decode("trailing bytes after raw payload".into()));
    }
    Ok(buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

pub fn encode_heatmap_raw<W: Write>(hm: &Heatmap, mut w: W) -> Result<(), RenderError> {
    w.write_all(&(hm.height as u32).to_le_bytes())?;
    w.write_all(&(hm.width as u32).to_le_bytes())?;
    write_f32s(&hm.data, &mut w)
}

pub fn decode_heatmap_raw<R: Read>(mut r: R) -> Result<Heatmap, RenderError> {
    let [height, width] = read_u32s::<_, 2>(&mut r)?;
    let data = read_f32s(&mut r, height * width)?;
    Ok(Heatmap { height, width, data })
}

pub fn encode_planes_raw<W: Write>(p: &Planes, mut w: W) -> Result<(), RenderError> {
    for d in [p.channels, p.height, p.width] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    write_f32s(&p.data, &mut w)
}

pub fn decode_planes_raw<R: Read>(mut r: R) -> Result<Planes, RenderError> {
    let [channels, height, width] = read_u32s::<_, 3>(&mut r)?;
    let data = read_f32s(&mut r, channels * height * width)?;
    Ok(Planes {
        channels,
        height,
        width,
        data,
    })
}
