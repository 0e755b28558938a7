//! Binary PGM (P5) frame I/O, plus P6 colour ingestion via Rec. 601 luma.
//!
//! Only `maxval` 255 is supported; anything else is a format error rather
//! than a silent rescale. Headers may contain `#` comments anywhere tokens
//! are expected, and exactly one whitespace byte separates the `maxval`
//! token from the pixel payload.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// An 8-bit grayscale frame, pixels row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} frame needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(GrayFrame { height, width, pixels })
    }
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderParser { bytes, pos: 0 }
    }

    /// Advance past whitespace and `#` comments to the next token start.
    fn skip_separators(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> std::result::Result<&'a [u8], String> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            Err("truncated header".into())
        } else {
            Ok(&self.bytes[start..self.pos])
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| format!("bad {what} token"))
    }
}

fn parse_pnm(bytes: &[u8]) -> std::result::Result<GrayFrame, String> {
    let mut parser = HeaderParser::new(bytes);
    let magic = parser.token()?;
    let color = match magic {
        b"P5" => false,
        b"P6" => true,
        other => {
            return Err(format!(
                "unsupported magic {:?}, expected P5 or P6",
                String::from_utf8_lossy(other)
            ))
        }
    };
    let width = parser.number("width")?;
    let height = parser.number("height")?;
    let maxval = parser.number("maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, expected 255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if parser.pos >= bytes.len() || !bytes[parser.pos].is_ascii_whitespace() {
        return Err("missing separator after maxval".into());
    }
    let data = &bytes[parser.pos + 1..];
    if width == 0 || height == 0 {
        return Err("zero frame dimension".into());
    }
    let n = height
        .checked_mul(width)
        .ok_or_else(|| "dimensions overflow".to_string())?;
    let per_pixel = if color { 3 } else { 1 };
    if data.len() != n * per_pixel {
        return Err(format!(
            "expected {} payload bytes for {width}x{height}, found {}",
            n * per_pixel,
            data.len()
        ));
    }
    let pixels = if color {
        data.chunks_exact(3)
            .map(|rgb| {
                let y = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
                y.round().clamp(0.0, 255.0) as u8
            })
            .collect()
    } else {
        data.to_vec()
    };
    GrayFrame::new(height, width, pixels).map_err(|e| e.to_string())
}

/// Read a P5 (grayscale) or P6 (colour, converted to luma) frame.
pub fn read_frame(path: &Path) -> Result<GrayFrame> {
    let bytes = fs::read(path)?;
    parse_pnm(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Write a frame as binary PGM (P5, maxval 255), atomically.
pub fn write_frame(path: &Path, frame: &GrayFrame) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend_from_slice(&frame.pixels);
    write_atomic(path, &bytes)
}

/// List the PGM/PPM files in a directory in lexicographic filename order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no .pgm/.ppm files in {}",
            dir.display()
        )));
    }
    Ok(paths)
}
