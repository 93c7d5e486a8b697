use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Closed-form comparability factor: (1-η)^{-(1+Q/η)} for η > 0, e^Q for η = 0.
pub fn envelope<T: Real>(eta: T, q: T) -> Result<T> {
    check(eta, q)?;
    if eta == T::zero() {
        return Ok(q.exp());
    }
    // -(1 + Q/η)·ln(1-η), with ln_1p for small η
    Ok((-(T::one() + q / eta) * (-eta).ln_1p()).exp())
}

/// ∏_{k=1}^{n} (η + Q/k); the Theorem-style bound on k_n / k₀.
pub fn product_bound<T: Real>(eta: T, q: T, n: usize) -> T {
    (1..=n).fold(T::one(), |acc, k| acc * (eta + q / from_usize::<T>(k)))
}

/// Σ_{n>N} ∏_{k≤n}(η + Q/k), summed term by term until the terms drop
/// below 1e-16 of the running tail.
pub fn tail_sum<T: Real>(eta: T, q: T, order: usize) -> Result<T> {
    check(eta, q)?;
    let mut term = product_bound(eta, q, order);
    let mut sum = T::zero();
    let floor: T = lit(1e-16);
    let mut n = order;
    loop {
        n += 1;
        let ratio = eta + q / from_usize::<T>(n);
        term = term * ratio;
        sum = sum + term;
        if term == T::zero() || (ratio < T::one() && term <= floor * sum) {
            break;
        }
        if n > order + 1_000_000 {
            return Err(Error::numeric("tail sum did not settle"));
        }
    }
    Ok(sum)
}

fn check<T: Real>(eta: T, q: T) -> Result<()> {
    if !(eta >= T::zero()) || !(eta < T::one()) {
        return Err(Error::NoCertificate(format!("envelope needs 0 <= eta < 1, got {eta}")));
    }
    if !(q >= T::zero()) || !q.is_finite() {
        return Err(Error::Domain(format!("Q must be finite and >= 0, got {q}")));
    }
    Ok(())
}
