//! Small numeric and hashing helpers shared across the crate.

/// SplitMix64 finalizer. Cheap, well distributed, and stable across platforms.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an ordered sequence of words under a seed.
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed);
    for &w in words {
        h = mix64(h ^ w);
    }
    h
}

/// Hash a 0/1 bit string, packing 64 bits per word. The length is folded in
/// so that strings differing only by trailing zeros hash differently.
pub fn hash_bits(seed: u64, bits: &[u8]) -> u64 {
    let mut h = mix64(seed ^ (bits.len() as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    for chunk in bits.chunks(64) {
        let mut word = 0u64;
        for (i, &b) in chunk.iter().enumerate() {
            word |= u64::from(b & 1) << i;
        }
        h = mix64(h ^ word);
    }
    h
}

/// Smallest `c` with `2^c >= x` (0 for x <= 1).
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// `log2 log2 x`, with the convention that it is 0 whenever `x <= 2`.
pub fn loglog2(x: f64) -> f64 {
    if x <= 2.0 {
        0.0
    } else {
        x.log2().log2()
    }
}

/// Write `value` as `width` big-endian bits.
pub fn to_bits(value: u64, width: usize) -> Vec<u8> {
    (0..width)
        .map(|i| ((value >> (width - 1 - i)) & 1) as u8)
        .collect()
}

/// Read big-endian bits back into an integer.
pub fn from_bits(bits: &[u8]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b & 1))
}

/// Pack 0/1 bits into little-endian 64-bit words (bit i lands in word i/64).
pub fn pack(bits: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        words[i / 64] |= u64::from(b & 1) << (i % 64);
    }
    words
}

pub fn unpack(words: &[u64], len: usize) -> Vec<u8> {
    (0..len).map(|i| ((words[i / 64] >> (i % 64)) & 1) as u8).collect()
}

pub fn hamming_packed(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Multiplicative inverse of `a` modulo `m`, if it exists.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()) / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_log2_small_values() {
        assert_eq!(ceil_log2(0), 0);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(64), 6);
        assert_eq!(ceil_log2(65), 7);
        assert_eq!(ceil_log2(287), 9);
    }

    #[test]
    fn bits_round_trip() {
        for v in 0..256u64 {
            assert_eq!(from_bits(&to_bits(v, 8)), v);
        }
        assert_eq!(to_bits(5, 4), vec![0, 1, 0, 1]);
    }

    #[test]
    fn inverse_mod() {
        assert_eq!(mod_inverse(3, 64), Some(43));
        assert_eq!(mod_inverse(2, 64), None);
        for a in (1..287u64).filter(|a| gcd(*a, 287) == 1) {
            let inv = mod_inverse(a, 287).unwrap();
            assert_eq!(a * inv % 287, 1);
        }
    }

    #[test]
    fn wilson_brackets_the_point_estimate() {
        let (lo, hi) = wilson_interval(297, 300, 1.96);
        assert!(lo < 0.99 && hi > 0.99 && hi <= 1.0);
        let (lo, hi) = wilson_interval(300, 300, 1.96);
        assert!(lo > 0.98 && (hi - 1.0).abs() < 1e-12);
    }
}
