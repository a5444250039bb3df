use std::path::Path;

use crate::das::DasImage;
use crate::error::{Error, Result};

pub const MAXVAL: u16 = 65535;

/// 16-bit binary PGM bytes, min-max mapped to `[0, 65535]`.
/// A constant image maps to mid-gray 32768.
pub fn encode_pgm(image: &DasImage) -> Result<Vec<u8>> {
    if image.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "image contains non-finite values".into(),
        ));
    }
    let (lo, hi) = image
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let mut out = format!("P5\n{} {}\n{}\n", image.width, image.height, MAXVAL).into_bytes();
    out.reserve(image.values.len() * 2);
    for &v in &image.values {
        let s = if hi > lo {
            ((v - lo) / (hi - lo) * MAXVAL as f64).round() as u16
        } else {
            32768
        };
        out.extend_from_slice(&s.to_be_bytes());
    }
    Ok(out)
}

pub fn export_pgm(image: &DasImage, path: &Path) -> Result<()> {
    let bytes = encode_pgm(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parse a binary PGM following the netpbm grammar (whitespace-separated
/// header fields, `#` comments, exactly one whitespace byte before the
/// raster). Returns width, height, maxval and samples.
pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, u16, Vec<u16>), String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("header ended early".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("expected a number at byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("{e}"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err("invalid dimensions or maxval".into());
    }
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let raster = &bytes[pos..];
    if raster.len() != width * height * sample_bytes {
        return Err(format!(
            "raster has {} bytes, expected {}",
            raster.len(),
            width * height * sample_bytes
        ));
    }
    let samples: Vec<u16> = if sample_bytes == 2 {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    if samples.iter().any(|&s| s as usize > maxval) {
        return Err("sample exceeds maxval".into());
    }
    Ok((width, height, maxval as u16, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let bytes = encode_pgm(&DasImage::new(1, 2, vec![0.0, 1.0]).unwrap()).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        let (w, h, max, s) = parse_pgm(&bytes).unwrap();
        assert_eq!((w, h, max), (2, 1, 65535));
        assert_eq!(s, vec![0, 65535]);
    }

    #[test]
    fn constant_is_mid_gray() {
        let bytes = encode_pgm(&DasImage::new(2, 3, vec![-4.0; 6]).unwrap()).unwrap();
        assert_eq!(parse_pgm(&bytes).unwrap().3, vec![32768; 6]);
    }

    #[test]
    fn big_endian_samples() {
        let bytes = encode_pgm(&DasImage::new(1, 3, vec![0.0, 0.5, 1.0]).unwrap()).unwrap();
        let raster = &bytes[bytes.len() - 6..];
        assert_eq!(raster, &[0, 0, 0x80, 0x00, 0xff, 0xff]);
    }

    #[test]
    fn parser_rejects_malformed() {
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 1\n65535\n\0\0").is_err());
        assert!(parse_pgm(b"P5 # c\n1 1\n255\n\x07").is_ok());
    }

    #[test]
    fn writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        export_pgm(&DasImage::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap(), &p).unwrap();
        let (w, h, _, s) = parse_pgm(&std::fs::read(&p).unwrap()).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(s[0], 0);
        assert_eq!(s[3], 65535);
        assert!(export_pgm(
            &DasImage::new(1, 1, vec![0.0]).unwrap(),
            &dir.path().join("no/such/x.pgm")
        )
        .is_err());
    }
}
