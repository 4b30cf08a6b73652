// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use super::{QuantError, QuantScheme, QuantSpec, QuantizedTensor, Tensor};

/// The 16 NormalFloat4 levels (quantiles of N(0,1) rescaled to [-1, 1]).
pub const NF4_CODEBOOK: [f64; 16] = [
    -1.0,
    -0.6961928009986877,
    -0.5250730514526367,
    -0.39491748809814453,
    -0.28444138169288635,
    -0.18477343022823334,
    -0.09105003625154495,
    0.0,
    0.07958029955625534,
    0.16093020141124725,
    0.24611230194568634,
    0.33791524171829224,
    0.44070982933044434,
    0.5626170039176941,
    0.7229568362236023,
    1.0,
];

/// Index of the 0.0 level.
pub const NF4_ZERO_INDEX: i8 = 7;

fn nearest_level(u: f64) -> i8 {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, level) in NF4_CODEBOOK.iter().enumerate() {
        let d = (u - level).abs();
        // strict comparison keeps the lower index on ties
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best as i8
}

/// Block-wise NF4: each block is normalized by its absmax and every value is
/// mapped to the nearest codebook level.
pub fn nf4_quantize(t: &Tensor, block_size: usize) -> Result<QuantizedTensor, QuantError> {
    if block_size == 0 {
        return Err(QuantError::InvalidBlockSize);
    }
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(QuantError::NonFiniteInput);
    }
    let mut codes = Vec::with_capacity(t.len());
    let mut absmax = Vec::with_capacity(t.len().div_ceil(block_size));
    for block in t.values().chunks(block_size) {
        let m = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m == 0.0 {
            absmax.push(1.0);
            codes.extend(std::iter::repeat_n(NF4_ZERO_INDEX, block.len()));
        } else {
            absmax.push(m);
            codes.extend(block.iter().map(|v| nearest_level(v / m)));
        }
    }
    Ok(QuantizedTensor {
        spec: QuantSpec {
            scheme: QuantScheme::Nf4Block,
            bits: 4,
            scales: Vec::new(),
            zero_points: Vec::new(),
            block_size: Some(block_size),
            codebook: Some(NF4_CODEBOOK.to_vec()),
        },
        shape: t.shape().to_vec(),
        codes,
        absmax,
    })
}

/// `codebook[code] · absmax_block`.
pub fn nf4_dequantize(q: &QuantizedTensor) -> Tensor {
    let bs = q.spec.block_size.unwrap_or(q.codes.len().max(1));
    let book = q.spec.codebook.as_deref().unwrap_or(&NF4_CODEBOOK);
    let values = q
        .codes
        .iter()
        .enumerate()
        .map(|(i, c)| book[*c as usize] * q.absmax[i / bs])
        .collect();
    Tensor::from_parts_unchecked(q.shape.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{affine_dequantize, affine_quantize};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn codebook_shape() {
        assert!(NF4_CODEBOOK.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(NF4_CODEBOOK[0], -1.0);
        assert_eq!(NF4_CODEBOOK[15], 1.0);
        assert_eq!(NF4_CODEBOOK[NF4_ZERO_INDEX as usize], 0.0);
    }

    #[test]
    fn endpoints_and_zero() {
        let q = nf4_quantize(&Tensor::vector(vec![1.0, -1.0, 0.0]).unwrap(), 3).unwrap();
        assert_eq!(q.absmax, vec![1.0]);
        assert_eq!(q.codes, vec![15, 0, 7]);
        q.validate().unwrap();
    }

    #[test]
    fn zero_block_sentinel() {
        let q = nf4_quantize(&Tensor::vector(vec![0.0; 5]).unwrap(), 4).unwrap();
        assert_eq!(q.absmax, vec![1.0, 1.0]);
        assert!(q.codes.iter().all(|c| *c == NF4_ZERO_INDEX));
    }

    #[test]
    fn dequantize_levels() {
        let mut q = nf4_quantize(&Tensor::vector(vec![0.0, 7.3]).unwrap(), 2).unwrap();
        assert_eq!(q.absmax, vec![7.3]);
        assert_eq!(nf4_dequantize(&q).values()[0], 0.0);
        q.absmax = vec![2.5];
        q.codes = vec![15, 15];
        assert_eq!(nf4_dequantize(&q).values(), &[2.5, 2.5]);
    }

    #[test]
    fn scaled_codebook_round_trips_exactly() {
        for absmax in [1.0, 2.5, 0.125, 7.3] {
            let vals: Vec<f64> = NF4_CODEBOOK.iter().map(|l| l * absmax).collect();
            let t = Tensor::vector(vals.clone()).unwrap();
            let q = nf4_quantize(&t, 16).unwrap();
            assert_eq!(q.codes, (0..16).collect::<Vec<i8>>());
            assert_eq!(nf4_dequantize(&q).values(), vals.as_slice());
        }
    }

    #[test]
    fn ties_pick_lower_index() {
        let mid = (NF4_CODEBOOK[8] + NF4_CODEBOOK[9]) / 2.0;
        let d_lo = (mid - NF4_CODEBOOK[8]).abs();
        let d_hi = (mid - NF4_CODEBOOK[9]).abs();
        let expected = if d_hi < d_lo { 9 } else { 8 };
        assert_eq!(nearest_level(mid), expected);
    }

    #[test]
    fn beats_four_bit_absmax_affine_on_gaussian_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4096);
        let data: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = Tensor::vector(data.clone()).unwrap();
        let nf4 = nf4_dequantize(&nf4_quantize(&t, 64).unwrap());
        let nf4_mae = nf4.values().iter().zip(&data).map(|(a, b)| (a - b).abs()).sum::<f64>() / 4096.0;

        let mut affine_err = 0.0;
        for block in data.chunks(64) {
            let m = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let bt = Tensor::vector(block.to_vec()).unwrap();
            let back = affine_dequantize(&affine_quantize(&bt, m / 7.0, 0, 4).unwrap());
            affine_err += back.values().iter().zip(block).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        let affine_mae = affine_err / 4096.0;
        assert!(nf4_mae < affine_mae, "nf4 {nf4_mae} vs affine {affine_mae}");
    }

    proptest! {
        #[test]
        fn quantize_dequantize_is_idempotent(vals in proptest::collection::vec(-10.0f64..10.0, 1..200), bs in 1usize..70) {
            let t = Tensor::vector(vals).unwrap();
            let q = nf4_quantize(&t, bs).unwrap();
            let again = nf4_quantize(&nf4_dequantize(&q), bs).unwrap();
            prop_assert_eq!(&again.codes, &q.codes);
        }
    }
}
