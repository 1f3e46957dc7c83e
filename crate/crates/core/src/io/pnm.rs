//! Binary netpbm images: 16-bit PGM (P5) for masks, PPM (P6) for color.

use crate::error::{Error, Result};
use crate::image::{BinaryMask, InstanceMask, RgbImage};

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2], context: &str) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::parse(
            context,
            0,
            format!("expected magic `{}`", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let name = ["width", "height", "maxval"][k];
        if start == pos {
            return Err(Error::parse(context, start, format!("expected {name}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::parse(context, start, format!("{name} out of range")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::parse(context, pos, "expected whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::parse(context, 2, "image size must be positive"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::parse(context, pos, format!("maxval {maxval} out of range")));
    }
    Ok(Header {
        width: usize::try_from(width).map_err(|_| Error::parse(context, 2, "width too large"))?,
        height: usize::try_from(height).map_err(|_| Error::parse(context, 2, "height too large"))?,
        maxval: maxval as u32,
        data_offset: pos + 1,
    })
}

fn payload<'a>(bytes: &'a [u8], h: &Header, channels: usize, context: &str) -> Result<&'a [u8]> {
    let sample = if h.maxval > 255 { 2 } else { 1 };
    let expected = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels * sample))
        .ok_or_else(|| Error::parse(context, 2, "image too large"))?;
    let actual = bytes.len() - h.data_offset;
    if actual != expected {
        let what = if actual < expected {
            "truncated payload"
        } else {
            "payload size mismatch"
        };
        return Err(Error::parse(
            context,
            bytes.len().min(h.data_offset + expected),
            format!("{what}: expected {expected} bytes, got {actual}"),
        ));
    }
    Ok(&bytes[h.data_offset..])
}

fn pgm_samples(bytes: &[u8], context: &str) -> Result<(usize, usize, Vec<u16>)> {
    let h = parse_header(bytes, b"P5", context)?;
    if h.maxval != 65535 {
        return Err(Error::parse(
            context,
            h.data_offset - 1,
            format!("maxval must be 65535, got {}", h.maxval),
        ));
    }
    let data = payload(bytes, &h, 1, context)?;
    let samples = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((h.width, h.height, samples))
}

fn encode_pgm(width: usize, height: usize, samples: impl Iterator<Item = u16>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn encode_mask(mask: &InstanceMask) -> Result<Vec<u8>> {
    if let Some(&id) = mask.ids.iter().find(|&&i| i > u16::MAX as u32) {
        return Err(Error::InvalidInput(format!("instance ID {id} does not fit in 16 bits")));
    }
    Ok(encode_pgm(mask.width, mask.height, mask.ids.iter().map(|&i| i as u16)))
}

pub fn decode_mask(bytes: &[u8]) -> Result<InstanceMask> {
    let (width, height, samples) = pgm_samples(bytes, "mask PGM")?;
    Ok(InstanceMask {
        width,
        height,
        ids: samples.into_iter().map(u32::from).collect(),
    })
}

/// Prompt masks use values {0, 1}.
pub fn encode_binary_mask(mask: &BinaryMask) -> Vec<u8> {
    encode_pgm(mask.width, mask.height, mask.bits.iter().map(|&b| b as u16))
}

/// Any nonzero sample is inside the mask.
pub fn decode_binary_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let (width, height, samples) = pgm_samples(bytes, "prompt mask PGM")?;
    Ok(BinaryMask {
        width,
        height,
        bits: samples.into_iter().map(|s| s != 0).collect(),
    })
}

/// 16-bit PPM; channels are clamped to [0, 1].
pub fn encode_image(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n65535\n", image.width, image.height).into_bytes();
    for px in &image.pixels {
        for v in px {
            let s = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

/// Reads 8-bit or 16-bit PPM into [0, 1] channels.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    const CONTEXT: &str = "image PPM";
    let h = parse_header(bytes, b"P6", CONTEXT)?;
    let data = payload(bytes, &h, 3, CONTEXT)?;
    let max = h.maxval as f64;
    let samples: Vec<f64> = if h.maxval > 255 {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / max)
            .collect()
    } else {
        data.iter().map(|&b| b as f64 / max).collect()
    };
    if samples.iter().any(|&s| s > 1.0) {
        return Err(Error::parse(CONTEXT, h.data_offset, "sample exceeds maxval"));
    }
    Ok(RgbImage {
        width: h.width,
        height: h.height,
        pixels: samples.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_mask() -> InstanceMask {
        InstanceMask {
            width: 5,
            height: 3,
            ids: vec![0, 1, 2, 3, 65535, 0, 0, 7, 7, 7, 1, 1, 0, 0, 300],
        }
    }

    #[test]
    fn mask_round_trip() {
        let m = sample_mask();
        let bytes = encode_mask(&m).unwrap();
        assert_eq!(bytes.len(), "P5\n5 3\n65535\n".len() + 30);
        assert_eq!(decode_mask(&bytes).unwrap(), m);
        let mut too_big = m.clone();
        too_big.ids[0] = 70000;
        assert!(encode_mask(&too_big).is_err());
    }

    #[test]
    fn binary_mask_round_trip() {
        let b = sample_mask().binary(7);
        assert_eq!(decode_binary_mask(&encode_binary_mask(&b)).unwrap(), b);
    }

    #[test]
    fn mask_errors() {
        let bytes = encode_mask(&sample_mask()).unwrap();
        let err = decode_mask(&bytes[..bytes.len() - 4]).unwrap_err().to_string();
        assert!(err.contains("expected 30 bytes, got 26"), "{err}");
        let eight_bit = b"P5\n2 1\n255\n\x01\x02";
        assert!(decode_mask(eight_bit)
            .unwrap_err()
            .to_string()
            .contains("maxval must be 65535"));
        assert!(decode_mask(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(decode_mask(b"P5\n0 1\n65535\n").is_err());
    }

    #[test]
    fn header_comments_allowed() {
        let bytes = b"P5 # made by hand\n2 1\n# max\n65535\n\x00\x01\x00\x02";
        assert_eq!(decode_mask(bytes).unwrap().ids, vec![1, 2]);
    }

    #[test]
    fn image_round_trip_within_quantization() {
        let img = RgbImage {
            width: 2,
            height: 2,
            pixels: vec![[0.0, 0.5, 1.0], [0.25, 0.125, 0.9], [1.2, -0.1, 0.3], [0.7, 0.7, 0.7]],
        };
        let back = decode_image(&encode_image(&img)).unwrap();
        for (a, b) in img.pixels.iter().flatten().zip(back.pixels.iter().flatten()) {
            assert!((a.clamp(0.0, 1.0) - b).abs() <= 0.5 / 65535.0);
        }
        let eight = b"P6\n1 1\n255\n\xff\x00\x80";
        assert_eq!(decode_image(eight).unwrap().pixels[0], [1.0, 0.0, 128.0 / 255.0]);
        assert!(decode_image(b"P6\n1 1\n100\n\xff\x00\x80").is_err());
    }

    proptest! {
        #[test]
        fn never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_mask(&bytes);
            let _ = decode_binary_mask(&bytes);
            let _ = decode_image(&bytes);
        }

        #[test]
        fn never_panics_with_valid_magic(tail in proptest::collection::vec(any::<u8>(), 0..200), ppm in any::<bool>()) {
            let mut bytes = if ppm { b"P6\n".to_vec() } else { b"P5 3 ".to_vec() };
            bytes.extend(tail);
            let _ = decode_mask(&bytes);
            let _ = decode_image(&bytes);
        }
    }
}
