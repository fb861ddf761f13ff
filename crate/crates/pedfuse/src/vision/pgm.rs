//! Binary PGM (P5) frame files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{GrayFrame, VisionError};

/// Writes a frame as binary PGM with maxval 255.
pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<(), VisionError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", frame.width, frame.height)?;
    out.write_all(&frame.pixels)?;
    out.flush()?;
    Ok(())
}

/// Reads a binary PGM. The frame timestamp is not part of the format and
/// comes back as 0.
pub fn read_pgm(path: &Path) -> Result<GrayFrame, VisionError> {
    let bytes = fs::read(path)?;
    let bad = |what: &str| VisionError::Pgm {
        path: path.display().to_string(),
        what: what.to_string(),
    };

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, VisionError> {
        while pos < bytes.len() {
            match bytes[pos] {
                b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(VisionError::Pgm {
                path: path.display().to_string(),
                what: "truncated header".to_string(),
            });
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P5" {
        return Err(bad("not a P5 file"));
    }
    let width: u32 = token(&bytes)?.parse().map_err(|_| bad("bad width"))?;
    let height: u32 = token(&bytes)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: u32 = token(&bytes)?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 supported"));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width as usize * height as usize;
    if bytes.len() < pos + need {
        return Err(bad("truncated pixel data"));
    }
    Ok(GrayFrame {
        width,
        height,
        pixels: bytes[pos..pos + need].to_vec(),
        t_s: 0.0,
    })
}
