//! Binary PGM (P5) images, 8 or 16 bits per sample.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Samples and declared maximum of a PGM file.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub samples: Array2<u16>,
    pub maxval: u16,
}

impl Pgm {
    /// Samples rescaled to `[0, range_max]`.
    pub fn normalized(&self, range_max: f64) -> Array2<f64> {
        let scale = range_max / self.maxval as f64;
        self.samples.mapv(|v| v as f64 * scale)
    }

    /// Quantizes `values / range_max` onto `maxval` levels, clamping to the range.
    pub fn from_values(values: &Array2<f64>, range_max: f64, maxval: u16) -> Self {
        let samples = values.mapv(|v| {
            let t = (v / range_max).clamp(0.0, 1.0);
            (t * maxval as f64).round() as u16
        });
        Pgm { samples, maxval }
    }

    pub fn encode(&self) -> Vec<u8> {
        let (h, w) = self.samples.dim();
        let mut out = format!("P5\n{w} {h}\n{}\n", self.maxval).into_bytes();
        for &v in self.samples.iter() {
            if self.maxval < 256 {
                out.push(v as u8);
            } else {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Malformed("PGM header truncated".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(Error::BadMagic(format!("PGM ({})", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Malformed(format!("PGM header field '{s}'")))
        };
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 65535 || w == 0 || h == 0 {
            return Err(Error::Malformed("PGM dimensions or maxval out of range".into()));
        }
        pos += 1; // single whitespace byte after maxval
        let bpp = if maxval < 256 { 1 } else { 2 };
        let data = bytes
            .get(pos..pos + w * h * bpp)
            .ok_or_else(|| Error::Malformed("PGM payload truncated".into()))?;
        let samples: Vec<u16> = if bpp == 1 {
            data.iter().map(|&b| b as u16).collect()
        } else {
            data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        };
        Ok(Pgm {
            samples: Array2::from_shape_vec((h, w), samples).expect("sized payload"),
            maxval: maxval as u16,
        })
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Pgm> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Pgm::decode(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, pgm: &Pgm) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, pgm.encode()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_and_sixteen_bit() {
        for maxval in [255u16, 1023, 65535] {
            let samples = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as u32 * 17 % (maxval as u32 + 1)) as u16);
            let p = Pgm { samples, maxval };
            assert_eq!(Pgm::decode(&p.encode()).unwrap(), p);
        }
    }

    #[test]
    fn comments_in_header() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let p = Pgm::decode(bytes).unwrap();
        assert_eq!(p.samples.iter().copied().collect::<Vec<_>>(), vec![0, 255]);
        assert_eq!(p.normalized(10.0)[[0, 1]], 10.0);
    }

    #[test]
    fn rejects_ascii_and_truncation() {
        assert!(Pgm::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(Pgm::decode(b"P5\n2 2\n255\n\x00").is_err());
    }
}
