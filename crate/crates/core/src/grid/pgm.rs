//! Binary portable graymap (`P5`), 8- and 16-bit.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }
}

/// Integer samples of a graymap as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Header(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Header(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap> {
    if bytes.is_empty() {
        return Err(Error::Header("empty file".into()));
    }
    if !bytes.starts_with(b"P5") {
        return Err(Error::Header("not a binary graymap (expected P5)".into()));
    }
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::ZeroSize);
    }
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::Header(format!("maxval {maxval} not in 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(rd.pos) {
        Some(c) if c.is_ascii_whitespace() => rd.pos += 1,
        _ => return Err(Error::Header("missing separator after maxval".into())),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Header("dimensions overflow".into()))?;
    let raster = &bytes[rd.pos..];
    let pixels: Vec<u16> = if maxval <= 255 {
        if raster.len() < n {
            return Err(Error::Header(format!("raster has {} of {n} bytes", raster.len())));
        }
        raster[..n].iter().map(|&b| u16::from(b)).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::Header(format!(
                "raster has {} of {} bytes",
                raster.len(),
                2 * n
            )));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(p) = pixels.iter().find(|&&p| usize::from(p) > maxval) {
        return Err(Error::InvalidData(format!("sample {p} exceeds maxval {maxval}")));
    }
    Ok(Graymap {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn encode_pgm(gm: &Graymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", gm.width, gm.height, gm.maxval).into_bytes();
    if gm.maxval <= 255 {
        out.extend(gm.pixels.iter().map(|&p| p as u8));
    } else {
        for p in &gm.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

/// Writes class indices verbatim as an 8-bit graymap.
pub fn write_labels(labels: &[u8], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if width == 0 || height == 0 {
        return Err(Error::ZeroSize);
    }
    if labels.len() != width * height {
        return Err(Error::InvalidData("label count does not match dimensions".into()));
    }
    let gm = Graymap {
        width,
        height,
        maxval: 255,
        pixels: labels.iter().map(|&l| u16::from(l)).collect(),
    };
    std::fs::write(path, encode_pgm(&gm)).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit graymap of class indices without scaling.
pub fn read_labels(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let gm = decode_pgm(&bytes)?;
    if gm.maxval > 255 {
        return Err(Error::InvalidData("label map must be 8-bit".into()));
    }
    Ok((gm.width, gm.height, gm.pixels.iter().map(|&p| p as u8).collect()))
}
