//! PPM (P6, 8-bit) and PGM (P5, 8- or 16-bit) read/write for the scene
//! images, depth maps and attention exports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Write a `3 x H x W` image with values in `[0, 1]` as binary PPM.
pub fn write_ppm(path: &Path, image: &[f64], h: usize, w: usize) -> Result<()> {
    if image.len() != 3 * h * w {
        return Err(Error::Shape(format!("write_ppm: expected 3x{h}x{w} values, got {}", image.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{w} {h}\n255\n")?;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = (image[c * h * w + y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
                out.write_all(&[v])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a binary PPM into a `3 x H x W` plane layout with values in `[0, 1]`.
pub fn read_ppm(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    let (magic, w, h, maxval) = read_header(&mut r, path)?;
    if magic != "P6" || maxval != 255 {
        return Err(Error::Data(format!("{}: expected 8-bit P6 ppm", path.display())));
    }
    let mut raw = vec![0u8; 3 * h * w];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Data(format!("{}: truncated pixel data", path.display())))?;
    let mut img = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                img[c * h * w + y * w + x] = raw[(y * w + x) * 3 + c] as f64 / 255.0;
            }
        }
    }
    Ok((img, h, w))
}

/// Write a `H x W` plane of meters as 16-bit P5 PGM in millimeters
/// (big-endian sample order, per the netpbm convention).
pub fn write_depth_pgm(path: &Path, depth_m: &[f64], h: usize, w: usize) -> Result<()> {
    if depth_m.len() != h * w {
        return Err(Error::Shape(format!("write_depth_pgm: expected {h}x{w} values, got {}", depth_m.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n65535\n")?;
    for &d in depth_m {
        let mm = (d * 1000.0).round().clamp(0.0, 65535.0) as u16;
        out.write_all(&mm.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a 16-bit P5 PGM of millimeters back into meters.
pub fn read_depth_pgm(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    let (magic, w, h, maxval) = read_header(&mut r, path)?;
    if magic != "P5" || maxval != 65535 {
        return Err(Error::Data(format!("{}: expected 16-bit P5 pgm", path.display())));
    }
    let mut raw = vec![0u8; 2 * h * w];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Data(format!("{}: truncated pixel data", path.display())))?;
    let depth = raw
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0)
        .collect();
    Ok((depth, h, w))
}

/// Write a `H x W` grayscale plane in `[0, 1]` as 8-bit P5 PGM.
pub fn write_gray_pgm(path: &Path, gray: &[f64], h: usize, w: usize) -> Result<()> {
    if gray.len() != h * w {
        return Err(Error::Shape(format!("write_gray_pgm: expected {h}x{w} values, got {}", gray.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    for &v in gray {
        out.write_all(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8])?;
    }
    out.flush()?;
    Ok(())
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<(String, usize, usize, u32)> {
    // magic, width, height, maxval separated by whitespace; '#' starts a comment
    let mut tokens = Vec::new();
    let mut tok = String::new();
    let mut in_comment = false;
    let mut byte = [0u8; 1];
    while tokens.len() < 4 {
        r.read_exact(&mut byte)
            .map_err(|_| Error::Data(format!("{}: truncated header", path.display())))?;
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
        } else if c.is_whitespace() {
            if !tok.is_empty() {
                tokens.push(std::mem::take(&mut tok));
            }
        } else {
            tok.push(c);
        }
    }
    let parse = |s: &String| {
        s.parse::<u32>()
            .map_err(|_| Error::Data(format!("{}: bad header token '{s}'", path.display())))
    };
    Ok((tokens[0].clone(), parse(&tokens[1])? as usize, parse(&tokens[2])? as usize, parse(&tokens[3])?))
}
