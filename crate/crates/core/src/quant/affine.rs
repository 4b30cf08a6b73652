// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use super::nf4::nf4_dequantize;
use super::{QuantError, QuantScheme, QuantSpec, QuantizedTensor, Tensor};

/// Signed code range for a bit width: `[-(2^(b-1)), 2^(b-1) - 1]`.
pub fn code_range(bits: u8) -> Result<(i32, i32), QuantError> {
    match bits {
        4 | 8 => {
            let half = 1i32 << (bits - 1);
            Ok((-half, half - 1))
        }
        other => Err(QuantError::UnsupportedBits(other)),
    }
}

/// Round half away from zero.
///
/// `v / s` with a scale that is itself a rounded quotient can land a few
/// ulps short of an exact `.5` tie (0.2 / (0.4/127) = 63.49999999999999), so
/// the argument is pushed outward by 8 ulps before rounding.
pub fn round_half_away(x: f64) -> f64 {
    let nudge = x.abs().max(1.0) * 8.0 * f64::EPSILON;
    (x + nudge.copysign(x)).round()
}

fn quantize_value(v: f64, s: f64, z: i32, lo: i32, hi: i32) -> i8 {
    let q = round_half_away(v / s) + z as f64;
    q.clamp(lo as f64, hi as f64) as i8
}

fn check_scale(s: f64) -> Result<(), QuantError> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(QuantError::NonPositiveScale(s))
    }
}

/// Per-tensor affine quantization: `clamp(round(v/s) + z, lo, hi)`.
pub fn affine_quantize(t: &Tensor, s: f64, z: i32, bits: u8) -> Result<QuantizedTensor, QuantError> {
    check_scale(s)?;
    let (lo, hi) = code_range(bits)?;
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFiniteInput);
    }
    let codes = t.values().iter().map(|v| quantize_value(*v, s, z, lo, hi)).collect();
    Ok(QuantizedTensor {
        spec: QuantSpec {
            scheme: QuantScheme::Affine,
            bits,
            scales: vec![s],
            zero_points: vec![z],
            block_size: None,
            codebook: None,
        },
        shape: t.shape().to_vec(),
        codes,
        absmax: Vec::new(),
    })
}

/// Min-max calibration for per-tensor affine quantization. The range is
/// widened to include zero so that 0.0 maps to a code exactly.
pub fn calibrate_affine(t: &Tensor, bits: u8) -> Result<(f64, i32), QuantError> {
    let (lo, hi) = code_range(bits)?;
    if t.is_empty() {
        return Err(QuantError::BadTensor("calibration needs at least one element".into()));
    }
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFiniteInput);
    }
    let min = t.values().iter().fold(0.0f64, |m, v| m.min(*v));
    let max = t.values().iter().fold(0.0f64, |m, v| m.max(*v));
    if max == min {
        return Ok((1.0, 0));
    }
    let s = (max - min) / (hi - lo) as f64;
    let z = (lo as f64 - round_half_away(min / s)).clamp(lo as f64, hi as f64) as i32;
    Ok((s, z))
}

/// Inverse of the affine/symmetric map: `(code - z) · s`, per tensor or per channel.
pub fn affine_dequantize(q: &QuantizedTensor) -> Tensor {
    let channels = q.spec.scales.len().max(1);
    let per_channel = q.codes.len() / channels;
    let values = q
        .codes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let ch = if channels == 1 { 0 } else { (i / per_channel.max(1)).min(channels - 1) };
            let z = q.spec.zero_points.get(ch).copied().unwrap_or(0);
            (*c as i32 - z) as f64 * q.spec.scales[ch]
        })
        .collect();
    Tensor::from_parts_unchecked(q.shape.clone(), values)
}

/// Scheme-dispatching dequantization.
pub fn dequantize(q: &QuantizedTensor) -> Tensor {
    match q.spec.scheme {
        QuantScheme::Affine | QuantScheme::SymmetricPerChannel => affine_dequantize(q),
        QuantScheme::Nf4Block => nf4_dequantize(q),
    }
}

/// Symmetric per-channel calibration over the leading dimension.
///
/// `s_c = max|w_c| / (2^(bits-1) - 1)`, `z_c = 0`; an all-zero channel gets `s_c = 1`.
pub fn calibrate_symmetric_per_channel(
    w: &Tensor,
    bits: u8,
) -> Result<(QuantSpec, QuantizedTensor), QuantError> {
    let (lo, hi) = code_range(bits)?;
    let channels = w.shape()[0];
    if channels == 0 || w.is_empty() {
        return Err(QuantError::BadTensor("calibration needs at least one channel and element".into()));
    }
    if w.values().iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFiniteInput);
    }
    let width = w.len() / channels;
    let qmax = hi as f64;
    let mut scales = Vec::with_capacity(channels);
    let mut codes = Vec::with_capacity(w.len());
    for row in w.values().chunks(width) {
        let absmax = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = if absmax == 0.0 { 1.0 } else { absmax / qmax };
        scales.push(s);
        codes.extend(row.iter().map(|v| quantize_value(*v, s, 0, -hi, hi)));
    }
    debug_assert!(codes.iter().all(|c| (*c as i32) >= lo));
    let spec = QuantSpec {
        scheme: QuantScheme::SymmetricPerChannel,
        bits,
        scales,
        zero_points: vec![0; channels],
        block_size: None,
        codebook: None,
    };
    let q = QuantizedTensor { spec: spec.clone(), shape: w.shape().to_vec(), codes, absmax: Vec::new() };
    Ok((spec, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> Tensor {
        Tensor::vector(values.to_vec()).unwrap()
    }

    #[test]
    fn forward_examples() {
        assert_eq!(affine_quantize(&v(&[0.5]), 0.1, 0, 8).unwrap().codes, vec![5]);
        assert_eq!(affine_quantize(&v(&[0.0]), 0.37, 3, 8).unwrap().codes, vec![3]);
        assert_eq!(affine_quantize(&v(&[100.0]), 0.1, 0, 8).unwrap().codes, vec![127]);
        assert_eq!(affine_quantize(&v(&[-100.0]), 0.1, 0, 8).unwrap().codes, vec![-128]);
        assert_eq!(affine_quantize(&v(&[100.0]), 0.1, 0, 4).unwrap().codes, vec![7]);
    }

    #[test]
    fn clamp_matches_exhaustive_range_scan() {
        // every integer multiple of s from -1000 to 1000 lands on the nearest in-range code
        for k in -1000i32..=1000 {
            let q = affine_quantize(&v(&[k as f64 * 0.1]), 0.1, 0, 8).unwrap();
            assert_eq!(q.codes[0] as i32, k.clamp(-128, 127));
        }
    }

    #[test]
    fn errors() {
        assert_eq!(affine_quantize(&v(&[1.0]), 0.0, 0, 8), Err(QuantError::NonPositiveScale(0.0)));
        assert!(matches!(affine_quantize(&v(&[1.0]), -1.0, 0, 8), Err(QuantError::NonPositiveScale(_))));
        assert_eq!(affine_quantize(&v(&[1.0]), 1.0, 0, 3), Err(QuantError::UnsupportedBits(3)));
    }

    #[test]
    fn inverse_examples() {
        let q = affine_quantize(&v(&[0.5]), 0.1, 0, 8).unwrap();
        assert!((affine_dequantize(&q).values()[0] - 0.5).abs() < 1e-12);
        let q = affine_quantize(&v(&[0.0]), 0.77, -4, 8).unwrap();
        assert_eq!(affine_dequantize(&q).values()[0], 0.0);
    }

    #[test]
    fn ties_round_away_from_zero() {
        assert_eq!(round_half_away(2.5), 3.0);
        assert_eq!(round_half_away(-2.5), -3.0);
        assert_eq!(round_half_away(63.49999999999999), 64.0);
        assert_eq!(round_half_away(2.4), 2.0);
        assert_eq!(round_half_away(0.0), 0.0);
    }

    #[test]
    fn per_channel_worked_example() {
        let w = Tensor::from_rows(&[vec![-0.4, 0.2, 0.1], vec![0.0, 0.0, 0.0]]).unwrap();
        let (spec, q) = calibrate_symmetric_per_channel(&w, 8).unwrap();
        assert_eq!(spec.scales[0], 0.4 / 127.0);
        assert_eq!(&q.codes[..3], &[-127, 64, 32]);
        assert_eq!(spec.scales[1], 1.0);
        assert_eq!(&q.codes[3..], &[0, 0, 0]);
        assert_eq!(spec.zero_points, vec![0, 0]);
        q.validate().unwrap();
    }

    proptest! {
        #[test]
        fn min_max_calibration_covers_range(v in proptest::collection::vec(-50.0f64..50.0, 1..60), bits in prop_oneof![Just(4u8), Just(8u8)]) {
            let t = Tensor::vector(v).unwrap();
            let (s, z) = calibrate_affine(&t, bits).unwrap();
            let back = affine_dequantize(&affine_quantize(&t, s, z, bits).unwrap());
            for (a, b) in t.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= s * (1.0 + 1e-9), "{a} -> {b} with s = {s}");
            }
            let zero = affine_quantize(&Tensor::vector(vec![0.0]).unwrap(), s, z, bits).unwrap();
            prop_assert_eq!(affine_dequantize(&zero).values()[0], 0.0);
        }

        #[test]
        fn absmax_element_hits_qmax(row in proptest::collection::vec(-5.0f64..5.0, 1..40), bits in prop_oneof![Just(4u8), Just(8u8)]) {
            prop_assume!(row.iter().any(|x| *x != 0.0));
            let w = Tensor::new(vec![1, row.len()], row.clone()).unwrap();
            let (_, q) = calibrate_symmetric_per_channel(&w, bits).unwrap();
            let qmax = (1i32 << (bits - 1)) - 1;
            let (idx, _) = row.iter().enumerate().fold((0, 0.0f64), |(bi, bm), (i, x)| if x.abs() > bm { (i, x.abs()) } else { (bi, bm) });
            prop_assert_eq!((q.codes[idx] as i32).abs(), qmax);
        }

        #[test]
        fn symmetric_is_odd(x in -1.0f64..1.0) {
            let s = 1.0 / 127.0;
            let a = affine_quantize(&v(&[x]), s, 0, 8).unwrap().codes[0];
            let b = affine_quantize(&v(&[-x]), s, 0, 8).unwrap().codes[0];
            prop_assert_eq!(a, -b);
        }
    }
}
