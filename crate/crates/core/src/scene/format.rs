//! Binary split container.
//!
//! Little-endian layout: magic `SARD`, `u32` version, `u32` record count,
//! `u32` height, `u32` width, then per record `u32` class id, `f32` azimuth,
//! `f32` depression, `H×W×2` `f32` (real, imaginary interleaved) and `H×W`
//! `u8` shadow mask.

use std::io::Write;

use num_complex::Complex32;

use crate::error::{Error, Result};

pub const SPLIT_MAGIC: &[u8; 4] = b"SARD";
pub const SPLIT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord {
    pub class_id: u32,
    pub azimuth_deg: f32,
    pub depression_deg: f32,
    pub image: Vec<Complex32>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub height: usize,
    pub width: usize,
    pub records: Vec<SplitRecord>,
}

fn record_len(height: usize, width: usize) -> Option<usize> {
    let px = height.checked_mul(width)?;
    px.checked_mul(9)?.checked_add(12)
}

/// Streams a split to `out`; failures carry the index of the record being
/// written.
pub fn write_split<W: Write>(out: &mut W, data: &SplitData) -> Result<()> {
    let header_err = |e| Error::RecordIo { index: 0, source: e };
    let count = u32::try_from(data.records.len())
        .map_err(|_| Error::Validation("too many records for the split format".into()))?;
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(SPLIT_MAGIC);
    header.extend_from_slice(&SPLIT_VERSION.to_le_bytes());
    header.extend_from_slice(&count.to_le_bytes());
    header.extend_from_slice(&(data.height as u32).to_le_bytes());
    header.extend_from_slice(&(data.width as u32).to_le_bytes());
    out.write_all(&header).map_err(header_err)?;

    let px = data.height * data.width;
    let mut buf = Vec::with_capacity(record_len(data.height, data.width).unwrap_or(0));
    for (index, rec) in data.records.iter().enumerate() {
        if rec.image.len() != px || rec.mask.len() != px {
            return Err(Error::Validation(format!(
                "record {index} has {} pixels, expected {px}",
                rec.image.len()
            )));
        }
        buf.clear();
        buf.extend_from_slice(&rec.class_id.to_le_bytes());
        buf.extend_from_slice(&rec.azimuth_deg.to_le_bytes());
        buf.extend_from_slice(&rec.depression_deg.to_le_bytes());
        for z in &rec.image {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        buf.extend(rec.mask.iter().map(|&m| m as u8));
        out.write_all(&buf)
            .map_err(|source| Error::RecordIo { index, source })?;
    }
    out.flush().map_err(|source| Error::RecordIo {
        index: data.records.len().saturating_sub(1),
        source,
    })
}

pub fn encode_split(data: &SplitData) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_split(&mut out, data)?;
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take(4).try_into().unwrap())
    }
}

/// Parses and validates a split container. Never panics on malformed input.
pub fn decode_split(bytes: &[u8]) -> Result<SplitData> {
    let bad = |reason: String| Error::format("split file", reason);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != SPLIT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32();
    if version != SPLIT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = cur.u32() as usize;
    let height = cur.u32() as usize;
    let width = cur.u32() as usize;
    if height == 0 || width == 0 {
        return Err(bad("zero image dimension".into()));
    }
    let expected = record_len(height, width)
        .and_then(|r| r.checked_mul(count))
        .and_then(|r| r.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("size overflow".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "length {} does not match {count} records of {height}x{width} ({expected})",
            bytes.len()
        )));
    }

    let px = height * width;
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        let class_id = cur.u32();
        let azimuth_deg = cur.f32();
        let depression_deg = cur.f32();
        if !(0.0..360.0).contains(&azimuth_deg) {
            return Err(bad(format!("record {index}: azimuth {azimuth_deg} out of range")));
        }
        if !(depression_deg > 0.0 && depression_deg <= 90.0) {
            return Err(bad(format!(
                "record {index}: depression {depression_deg} out of range"
            )));
        }
        let mut image = Vec::with_capacity(px);
        for _ in 0..px {
            let z = Complex32::new(cur.f32(), cur.f32());
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(bad(format!("record {index}: non-finite pixel")));
            }
            image.push(z);
        }
        let mask = cur
            .take(px)
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(bad(format!("record {index}: mask byte {other}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        records.push(SplitRecord {
            class_id,
            azimuth_deg,
            depression_deg,
            image,
            mask,
        });
    }
    Ok(SplitData {
        height,
        width,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(count: usize, h: usize, w: usize) -> SplitData {
        SplitData {
            height: h,
            width: w,
            records: (0..count)
                .map(|i| SplitRecord {
                    class_id: i as u32 % 3,
                    azimuth_deg: (i * 10) as f32,
                    depression_deg: 17.0,
                    image: (0..h * w)
                        .map(|p| Complex32::new(p as f32 * 0.5, -(i as f32)))
                        .collect(),
                    mask: (0..h * w).map(|p| p % 3 == 0).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_split(&sample(2, 3, 4)).unwrap();
        assert_eq!(&bytes[..4], b"SARD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 4);
        assert_eq!(bytes.len(), 20 + 2 * (12 + 12 * 8 + 12));
    }

    #[test]
    fn rejects_truncation_bad_magic_and_mask_bytes() {
        let bytes = encode_split(&sample(2, 3, 4)).unwrap();
        assert!(decode_split(&bytes[..bytes.len() - 1]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(decode_split(&b).is_err());
        let mut b = bytes.clone();
        let last = b.len() - 1;
        b[last] = 7;
        assert!(decode_split(&b).is_err());
        // absurd record count cannot trigger a huge allocation
        let mut b = bytes;
        b[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_split(&b).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(count in 0usize..4, h in 1usize..6, w in 1usize..6) {
            let data = sample(count, h, w);
            let bytes = encode_split(&data).unwrap();
            prop_assert_eq!(decode_split(&bytes).unwrap(), data);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_split(&bytes);
        }
    }
}
