//! `CINE` dataset container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CINE" | version u16 | count u32
//! count x ( T u32 | H u32 | W u32 | label u8 | origin u8 | T*H*W f32 )
//! crc32 u32 over every record byte
//! ```
//!
//! Labels: 0 good, 1 artefact. Origins: 0 real, 1 synthetic, 2 translated.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::augment::{Label, LabeledSample, Origin};
use crate::numerics::{CineSequence, RealVolume};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"CINE";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 10;

fn origin_code(o: Origin) -> u8 {
    match o {
        Origin::Real => 0,
        Origin::SyntheticCorruption => 1,
        Origin::Translated => 2,
    }
}

pub fn encode(samples: &[LabeledSample]) -> Result<Vec<u8>> {
    let count = u32::try_from(samples.len()).map_err(|_| Error::Format("too many sequences".into()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for s in samples {
        let (t, h, w) = s.seq.dims();
        for d in [t, h, w] {
            buf.extend_from_slice(&u32::try_from(d).map_err(|_| Error::Format("dimension overflow".into()))?.to_le_bytes());
        }
        buf.push(s.label.index() as u8);
        buf.push(origin_code(s.origin));
        for &v in s.seq.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf[HEADER_LEN..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::Format("truncated dataset".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<LabeledSample>> {
    if bytes.len() < HEADER_LEN + 4 || &bytes[..4] != DATASET_MAGIC {
        return Err(Error::Format("not a CINE dataset".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&body[HEADER_LEN..]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut cur = Cursor { buf: body, pos: 6 };
    let count = cur.u32()? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let (t, h, w) = (cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize);
        let label = Label::from_index(cur.u8()? as usize).ok_or_else(|| Error::Format(format!("record {i}: bad label")))?;
        let origin = match cur.u8()? {
            0 => Origin::Real,
            1 => Origin::SyntheticCorruption,
            2 => Origin::Translated,
            o => return Err(Error::Format(format!("record {i}: bad origin {o}"))),
        };
        let n = t.checked_mul(h).and_then(|v| v.checked_mul(w)).ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let raw = cur.take(n.checked_mul(4).ok_or_else(|| Error::Format("dimension overflow".into()))?)?;
        let data: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        let seq = CineSequence::new(RealVolume::new(t, h, w, data)?)
            .map_err(|e| Error::Format(format!("record {i}: {e}")))?;
        samples.push(LabeledSample { seq, label, origin });
    }
    if cur.pos != body.len() {
        return Err(Error::Format(format!("{} trailing bytes after {count} records", body.len() - cur.pos)));
    }
    Ok(samples)
}

pub fn write_dataset<W: Write>(mut out: W, samples: &[LabeledSample]) -> Result<()> {
    out.write_all(&encode(samples)?)?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut input: R) -> Result<Vec<LabeledSample>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save(path: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, samples)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Source of labeled cine sequences. Only the `CINE` container is
/// implemented; scanner formats would plug in here.
pub trait SequenceLoader {
    fn load(&self, path: &Path) -> Result<Vec<LabeledSample>>;
}

pub struct CineFileLoader;

impl SequenceLoader for CineFileLoader {
    fn load(&self, path: &Path) -> Result<Vec<LabeledSample>> {
        load(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(seed: u64, t: usize, h: usize, w: usize) -> LabeledSample {
        let data = (0..t * h * w).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 999.0).collect();
        LabeledSample {
            seq: CineSequence::new(RealVolume::new(t, h, w, data).unwrap()).unwrap(),
            label: if seed % 2 == 0 { Label::Good } else { Label::Artefact },
            origin: [Origin::Real, Origin::SyntheticCorruption, Origin::Translated][(seed % 3) as usize],
        }
    }

    #[test]
    fn empty_dataset_round_trip() {
        let bytes = encode(&[]).unwrap();
        assert_eq!(bytes.len(), 14);
        assert!(decode(&bytes).unwrap().is_empty());
    }

    #[test]
    fn write_read_write_is_bit_exact() {
        let samples = vec![sample(1, 3, 4, 5), sample(2, 2, 2, 2), sample(3, 1, 6, 1)];
        let bytes = encode(&samples).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(encode(&back).unwrap(), bytes);
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!((a.label, a.origin, a.seq.dims()), (b.label, b.origin, b.seq.dims()));
            for (x, y) in a.seq.data().iter().zip(b.seq.data()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
    }

    #[test]
    fn truncation_and_magic_detected() {
        let bytes = encode(&[sample(1, 2, 3, 3)]).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn checksum_catches_any_flipped_payload_byte(pos in 0usize..1000, bit in 0u8..8) {
            let bytes = encode(&[sample(4, 2, 5, 5), sample(5, 2, 5, 5)]).unwrap();
            let idx = HEADER_LEN + pos % (bytes.len() - HEADER_LEN - 4);
            let mut flipped = bytes.clone();
            flipped[idx] ^= 1 << bit;
            let is_checksum_error = matches!(decode(&flipped), Err(Error::ChecksumMismatch { .. }));
            prop_assert!(is_checksum_error);
        }
    }
}
