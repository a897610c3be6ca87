//! Binary (P5) 8-bit PGM images.

use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use pgtk_core::data::GrayImage;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed PGM: {0}")]
    Format(String),
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), PgmError> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_pgm(img))?;
    f.flush()?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, PgmError> {
    decode_pgm(BufReader::new(std::fs::File::open(path)?))
}

/// Header tokens are separated by whitespace; `#` starts a comment that
/// runs to the end of the line.
fn header_token<R: BufRead>(r: &mut R) -> Result<String, PgmError> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(PgmError::Format("truncated header".into()));
        }
        match byte[0] {
            b'#' if tok.is_empty() => {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
            }
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    break;
                }
            }
            c => tok.push(c),
        }
    }
    String::from_utf8(tok).map_err(|_| PgmError::Format("non-ASCII header".into()))
}

pub fn decode_pgm<R: BufRead>(mut r: R) -> Result<GrayImage, PgmError> {
    if header_token(&mut r)? != "P5" {
        return Err(PgmError::Format("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize, PgmError> {
        header_token(&mut r)?
            .parse()
            .map_err(|_| PgmError::Format(format!("bad {what}")))
    };
    let (width, height, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval != 255 {
        return Err(PgmError::Format(format!(
            "maxval {maxval}, only 8-bit images are supported"
        )));
    }
    let mut pixels = vec![0u8; width * height];
    r.read_exact(&mut pixels)
        .map_err(|_| PgmError::Format("truncated pixel data".into()))?;
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}
