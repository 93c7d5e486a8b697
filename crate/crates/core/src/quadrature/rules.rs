//! Node/weight generation for Gauss–Legendre and Gauss–Jacobi rules.
//!
//! Rules are stored on the reference interval [0, 1]. A Jacobi rule with
//! exponents (a, b) integrates x^a (1-x)^b g(x) exactly for polynomial g of
//! degree < 2n.

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};
use crate::special::ln_gamma;

#[derive(Debug, Clone)]
pub struct Rule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Rule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre rule with `n` nodes on [0, 1], unit weight.
pub fn gauss_legendre<T: Real>(n: usize) -> Result<Rule<T>> {
    if n < 1 {
        return Err(Error::Domain("Gauss-Legendre needs at least one node".into()));
    }
    let nf: T = from_usize(n);
    let half: T = lit(0.5);
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let k: T = from_usize(i + 1);
        let mut x = (T::PI() * (k - lit(0.25)) / (nf + half)).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= T::epsilon() * lit(4.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = lit::<T>(2.0) / ((T::one() - x * x) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes[i] = (T::one() - x) * half;
        nodes[n - 1 - i] = (T::one() + x) * half;
        weights[i] = w * half;
        weights[n - 1 - i] = w * half;
    }
    Ok(Rule { nodes, weights })
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    if n == 0 {
        return (T::one(), T::zero());
    }
    for k in 2..=n {
        let kf: T = from_usize(k);
        let p2 = ((lit::<T>(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf: T = from_usize(n);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Gauss–Jacobi rule on [0, 1] for the weight x^a (1-x)^b, a, b > -1,
/// computed with the Golub–Welsch eigenvalue method.
pub fn gauss_jacobi<T: Real>(n: usize, a: T, b: T) -> Result<Rule<T>> {
    if n < 1 {
        return Err(Error::Domain("Gauss-Jacobi needs at least one node".into()));
    }
    let minus_one = -T::one();
    if !(a > minus_one) || !a.is_finite() {
        return Err(Error::DivergentIntegral {
            exponent: crate::scalar::to_f64(a),
        });
    }
    if !(b > minus_one) || !b.is_finite() {
        return Err(Error::DivergentIntegral {
            exponent: crate::scalar::to_f64(b),
        });
    }
    // On [-1,1] the weight is (1-ξ)^α (1+ξ)^β with x = (1+ξ)/2,
    // so the left exponent a is β and the right exponent b is α.
    let alpha = b;
    let beta = a;
    let two: T = lit(2.0);
    let ab = alpha + beta;

    let mut diag = vec![T::zero(); n];
    let mut off = vec![T::zero(); n];
    diag[0] = (beta - alpha) / (ab + two);
    for (k, d) in diag.iter_mut().enumerate().skip(1) {
        let kf: T = from_usize(k);
        let s = two * kf + ab;
        *d = (beta * beta - alpha * alpha) / (s * (s + two));
    }
    for k in 1..n {
        let kf: T = from_usize(k);
        let s = two * kf + ab;
        let sq = if k == 1 {
            // (k+α+β) cancels against (s-1) at k = 1
            lit::<T>(4.0) * (T::one() + alpha) * (T::one() + beta)
                / ((two + ab) * (two + ab) * (lit::<T>(3.0) + ab))
        } else {
            lit::<T>(4.0) * kf * (kf + alpha) * (kf + beta) * (kf + ab)
                / (s * s * (s + T::one()) * (s - T::one()))
        };
        off[k - 1] = sq.sqrt();
    }

    let (eig, first) = symmetric_tridiagonal_eigen(diag, off)?;

    // total mass of the weight on [-1,1]
    let ln_mu0 = (ab + T::one()) * two.ln() + ln_gamma(alpha + T::one()) + ln_gamma(beta + T::one())
        - ln_gamma(ab + two);
    let mu0 = ln_mu0.exp();
    // rescale to [0,1]: factor 2^{-(a+b+1)}
    let scale = mu0 * (-(ab + T::one()) * two.ln()).exp();

    let mut pairs: Vec<(T, T)> = eig
        .into_iter()
        .zip(first)
        .map(|(xi, v)| ((xi + T::one()) * lit(0.5), scale * v * v))
        .collect();
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(std::cmp::Ordering::Equal));
    let (nodes, weights) = pairs.into_iter().unzip();
    Ok(Rule { nodes, weights })
}

/// Implicit QL on a symmetric tridiagonal matrix; returns eigenvalues and the
/// first component of each normalized eigenvector.
fn symmetric_tridiagonal_eigen<T: Real>(mut d: Vec<T>, mut e: Vec<T>) -> Result<(Vec<T>, Vec<T>)> {
    let n = d.len();
    let mut z = vec![T::zero(); n];
    z[0] = T::one();
    if n == 1 {
        return Ok((d, z));
    }
    e[n - 1] = T::zero();
    let two: T = lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::numeric("tridiagonal QL iteration did not converge"));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let sign_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if deflated {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok((d, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre::<f64>(5).unwrap();
        let integral: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(9)).sum();
        assert!((integral - 0.1).abs() < 1e-15);
        let mass: f64 = r.weights.iter().sum();
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_mass_matches_beta_function() {
        let r = gauss_jacobi::<f64>(20, -0.5, -0.5).unwrap();
        let mass: f64 = r.weights.iter().sum();
        assert!((mass - std::f64::consts::PI).abs() < 1e-13);
        let r = gauss_jacobi::<f64>(7, 0.3, 1.7).unwrap();
        let mass: f64 = r.weights.iter().sum();
        let want = crate::special::beta_fn(1.3f64, 2.7);
        assert!((mass - want).abs() / want < 1e-13);
    }

    #[test]
    fn jacobi_with_zero_exponents_is_legendre() {
        let j = gauss_jacobi::<f64>(9, 0.0, 0.0).unwrap();
        let l = gauss_legendre::<f64>(9).unwrap();
        for i in 0..9 {
            assert!((j.nodes[i] - l.nodes[i]).abs() < 1e-13);
            assert!((j.weights[i] - l.weights[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobi_moments_are_exact() {
        // ∫ x^a (1-x)^b x^k dx = B(a+k+1, b+1)
        let (a, b) = (-0.75f64, 0.25f64);
        let r = gauss_jacobi::<f64>(6, a, b).unwrap();
        for k in 0..12 {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum();
            let want = crate::special::beta_fn(a + k as f64 + 1.0, b + 1.0);
            assert!((q - want).abs() / want < 1e-12, "k={k}");
        }
    }

    #[test]
    fn jacobi_rejects_divergent_exponents() {
        assert!(matches!(
            gauss_jacobi::<f64>(4, -1.0, 0.0),
            Err(Error::DivergentIntegral { .. })
        ));
        assert!(gauss_jacobi::<f64>(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn single_node_rules() {
        let r = gauss_jacobi::<f64>(1, 0.0, 0.0).unwrap();
        assert!((r.nodes[0] - 0.5).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
    }
}
