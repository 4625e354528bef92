//! Binary PPM (P6) and PGM (P5) with 8-bit samples.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image8 {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB), interleaved.
    pub channels: usize,
    pub pixels: Vec<u8>,
}

pub fn encode(image: &Image8) -> Vec<u8> {
    let magic = if image.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write(path: &std::path::Path, image: &Image8) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(image))?;
    Ok(())
}

/// Parses P5/P6 data. Header comments are accepted; only maxval 255 is.
pub fn decode(bytes: &[u8]) -> Result<Image8> {
    let bad = |m: &str| Error::UnsupportedFormat(m.to_string());
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated netpbm header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("netpbm magic `{other}`"))),
    };
    let mut number = || -> Result<usize> { token()?.parse().map_err(|_| bad("non-numeric netpbm header field")) };
    let width = number()?;
    let height = number()?;
    let maxval = number()?;
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval}; only 8-bit (255) is supported")));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero image extent"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let len = width * height * channels;
    let pixels = bytes.get(start..start + len).ok_or_else(|| bad("truncated netpbm raster"))?.to_vec();
    Ok(Image8 { width, height, channels, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes_are_exact() {
        let img = Image8 { width: 2, height: 1, channels: 3, pixels: vec![1, 2, 3, 4, 5, 6] };
        let bytes = encode(&img);
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(decode(&bytes).unwrap(), img);
    }

    #[test]
    fn comments_and_errors() {
        let bytes = b"P5\n# made by hand\n2 2\n255\n\x00\x01\x02\x03";
        let img = decode(bytes).unwrap();
        assert_eq!(img.pixels, vec![0, 1, 2, 3]);
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
    }
}
