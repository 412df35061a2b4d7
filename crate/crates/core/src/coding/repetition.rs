use super::CodingError;

/// Majority of an odd-length bit string.
pub fn majority_decode(bits: &[u8]) -> Result<u8, CodingError> {
    if bits.len().is_multiple_of(2) {
        return Err(CodingError::EvenLength);
    }
    Ok(majority_or_zero(bits))
}

/// Majority with ties resolved to 0. Used where an even number of copies can
/// arise from configuration (for example an even phase-one repetition count).
pub fn majority_or_zero(bits: &[u8]) -> u8 {
    let ones = bits.iter().filter(|&&b| b != 0).count();
    u8::from(2 * ones > bits.len())
}

/// Upper bound `(2·sqrt(ε(1-ε)))^ρ` on the majority error after ρ copies.
pub fn rho_error_bound(epsilon: f64, rho: u32) -> f64 {
    (2.0 * (epsilon * (1.0 - epsilon)).sqrt()).powi(rho as i32)
}

/// Exact probability that more than half of ρ independent copies flip.
pub fn majority_error_exact(epsilon: f64, rho: u32) -> f64 {
    let n = rho as u64;
    let mut total = 0.0;
    let mut binom = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            binom = binom * (n - k + 1) as f64 / k as f64;
        }
        if 2 * k > n {
            total += binom * epsilon.powi(k as i32) * (1.0 - epsilon).powi((n - k) as i32);
        }
    }
    total
}
