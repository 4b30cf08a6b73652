// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Binary container for a [`QuantizedTensor`]. All integers and floats are
//! little-endian.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "CQNT"
//! 4       1           format version (1)
//! 5       1           scheme: 0 affine, 1 symmetric_per_channel, 2 nf4_block
//! 6       1           bits (4 or 8)
//! 7       1           reserved (0)
//! 8       4   u32     ndim
//! 12      8·ndim u64  dims
//! ..      8   u64     block_size (0 unless nf4)
//! ..      8   u64     code count n
//! ..      4   u32     scale count, then f64 per scale
//! ..      4   u32     zero-point count, then i32 per zero point
//! ..      4   u32     absmax count, then f64 per block
//! ..      4   u32     codebook length (16 for nf4, else 0), then f64 per level
//! ..      payload     affine/symmetric: one i8 per code
//!                     nf4: ceil(n/2) bytes, element 2i in the low nibble,
//!                     element 2i+1 in the high nibble
//! ```

use super::{QuantError, QuantScheme, QuantSpec, QuantizedTensor};

pub const MAGIC: &[u8; 4] = b"CQNT";
pub const VERSION: u8 = 1;

fn scheme_tag(s: QuantScheme) -> u8 {
    match s {
        QuantScheme::Affine => 0,
        QuantScheme::SymmetricPerChannel => 1,
        QuantScheme::Nf4Block => 2,
    }
}

pub fn encode(q: &QuantizedTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + q.codes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, scheme_tag(q.spec.scheme), q.spec.bits, 0]);
    out.extend_from_slice(&(q.shape.len() as u32).to_le_bytes());
    for d in &q.shape {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(q.spec.block_size.unwrap_or(0) as u64).to_le_bytes());
    out.extend_from_slice(&(q.codes.len() as u64).to_le_bytes());
    let f64s = |out: &mut Vec<u8>, xs: &[f64]| {
        out.extend_from_slice(&(xs.len() as u32).to_le_bytes());
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    f64s(&mut out, &q.spec.scales);
    out.extend_from_slice(&(q.spec.zero_points.len() as u32).to_le_bytes());
    for z in &q.spec.zero_points {
        out.extend_from_slice(&z.to_le_bytes());
    }
    f64s(&mut out, &q.absmax);
    f64s(&mut out, q.spec.codebook.as_deref().unwrap_or(&[]));
    match q.spec.scheme {
        QuantScheme::Nf4Block => {
            for pair in q.codes.chunks(2) {
                let lo = pair[0] as u8 & 0x0f;
                let hi = pair.get(1).map_or(0, |c| *c as u8 & 0x0f);
                out.push(lo | (hi << 4));
            }
        }
        _ => out.extend(q.codes.iter().map(|c| *c as u8)),
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], QuantError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| QuantError::Artifact(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, QuantError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, QuantError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self, elem: usize) -> Result<usize, QuantError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(QuantError::Artifact("array length exceeds file size".into()));
        }
        Ok(n)
    }

    fn f64s(&mut self) -> Result<Vec<f64>, QuantError> {
        let n = self.count(8)?;
        (0..n).map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))).collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<QuantizedTensor, QuantError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(QuantError::Artifact("bad magic".into()));
    }
    let head = r.take(4)?;
    if head[0] != VERSION {
        return Err(QuantError::Artifact(format!("unsupported version {}", head[0])));
    }
    let scheme = match head[1] {
        0 => QuantScheme::Affine,
        1 => QuantScheme::SymmetricPerChannel,
        2 => QuantScheme::Nf4Block,
        t => return Err(QuantError::Artifact(format!("unknown scheme tag {t}"))),
    };
    let bits = head[2];
    let ndim = r.count(8)?;
    let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let block_size = r.u64()? as usize;
    let n = r.u64()? as usize;
    let scales = r.f64s()?;
    let nz = r.count(4)?;
    let zero_points = (0..nz)
        .map(|_| Ok(i32::from_le_bytes(r.take(4)?.try_into().unwrap())))
        .collect::<Result<Vec<_>, QuantError>>()?;
    let absmax = r.f64s()?;
    let codebook = r.f64s()?;
    let codes: Vec<i8> = match scheme {
        QuantScheme::Nf4Block => {
            let packed = r.take(n.div_ceil(2))?;
            (0..n).map(|i| ((packed[i / 2] >> (4 * (i % 2))) & 0x0f) as i8).collect()
        }
        _ => r.take(n)?.iter().map(|b| *b as i8).collect(),
    };
    if r.pos != bytes.len() {
        return Err(QuantError::Artifact("trailing bytes".into()));
    }
    let q = QuantizedTensor {
        spec: QuantSpec {
            scheme,
            bits,
            scales,
            zero_points,
            block_size: (scheme == QuantScheme::Nf4Block).then_some(block_size),
            codebook: (!codebook.is_empty()).then_some(codebook),
        },
        shape,
        codes,
        absmax,
    };
    q.validate()?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{affine_quantize, calibrate_symmetric_per_channel, nf4_quantize, Tensor};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_every_scheme(vals in proptest::collection::vec(-3.0f64..3.0, 2..120), bs in 1usize..40, z in -5i32..5) {
            let n = vals.len() - vals.len() % 2;
            let t = Tensor::new(vec![2, n / 2], vals[..n].to_vec()).unwrap();
            for q in [
                affine_quantize(&t, 0.05, z, 8).unwrap(),
                affine_quantize(&t, 0.5, z, 4).unwrap(),
                calibrate_symmetric_per_channel(&t, 8).unwrap().1,
                nf4_quantize(&t, bs).unwrap(),
            ] {
                prop_assert_eq!(decode(&encode(&q)).unwrap(), q);
            }
        }
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::vector(vec![0.1, 0.2, 0.3]).unwrap();
        let bytes = encode(&nf4_quantize(&t, 2).unwrap());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn header_layout() {
        let t = Tensor::vector(vec![0.5, -0.5]).unwrap();
        let bytes = encode(&affine_quantize(&t, 0.1, 0, 8).unwrap());
        assert_eq!(&bytes[..8], b"CQNT\x01\x00\x08\x00");
        assert_eq!(&bytes[bytes.len() - 2..], &[5u8, (-5i8) as u8]);
    }
}
