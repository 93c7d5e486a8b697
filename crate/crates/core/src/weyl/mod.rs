//! Weyl fractional integral and derivative on the real line, and the
//! left-inverse identities W^{-β} ∂^β φ = -φ and its Schrödinger-perturbed
//! counterpart ∫ κ̃(s,u) [∂^β φ(u) + q(u) φ(u)] du = -φ(s).

mod identity;
#[cfg(test)]
mod tests;

pub use identity::{
    algebraic_identity_check, default_s_grid, left_inverse_residual, perturbed_inverse_residual, Guard,
    IdentityReport, ResidualReport,
};

use crate::error::{Error, Result};
use crate::quadrature::rules::{gauss_jacobi, gauss_legendre, Rule};
use crate::quadrature::IntegrationReport;
use crate::scalar::{from_usize, lit, Real};
use crate::special::gamma;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type Func<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Fractional order β ∈ (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder<T>(T);

impl<T: Real> FracOrder<T> {
    pub fn new(beta: T) -> Result<Self> {
        if !(beta > T::zero() && beta < T::one()) {
            return Err(Error::Domain(format!("fractional order must lie in (0,1), got {beta}")));
        }
        Ok(Self(beta))
    }

    pub fn get(self) -> T {
        self.0
    }
}

/// C¹ function with compact support (a, b), carrying its derivative.
#[derive(Clone)]
pub struct TestFunction<T> {
    label: String,
    support: (T, T),
    phi: Func<T>,
    dphi: Func<T>,
    sup: T,
    dsup: T,
}

impl<T: Real> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("sup", &self.sup)
            .field("dsup", &self.dsup)
            .finish()
    }
}

impl<T: Real> TestFunction<T> {
    /// exp(-1/(1-v²)) with v the affine image of u in (-1, 1).
    pub fn bump(a: T, b: T) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("bump support needs a < b, got ({a}, {b})")));
        }
        let mid = (a + b) * lit(0.5);
        let half = (b - a) * lit(0.5);
        let phi = move |u: T| {
            let v = (u - mid) / half;
            if v.abs() >= T::one() {
                T::zero()
            } else {
                (-T::one() / (T::one() - v * v)).exp()
            }
        };
        let dphi = move |u: T| {
            let v = (u - mid) / half;
            if v.abs() >= T::one() {
                T::zero()
            } else {
                let w = T::one() - v * v;
                (-T::one() / w).exp() * (-lit::<T>(2.0) * v / (w * w)) / half
            }
        };
        // |dφ/dv| peaks where 3v⁴ = 1, i.e. v = 3^{-1/4}
        let v: T = lit::<T>(3.0).powf(lit(-0.25));
        let w = T::one() - v * v;
        let dsup = (-T::one() / w).exp() * lit::<T>(2.0) * v / (w * w) / half;
        Ok(Self {
            label: format!("bump({a}, {b})"),
            support: (a, b),
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            sup: (-T::one()).exp(),
            dsup,
        })
    }

    /// φ ≡ 0 on the given nominal support.
    pub fn zero(a: T, b: T) -> Result<Self> {
        if !(b > a) {
            return Err(Error::Domain(format!("support needs a < b, got ({a}, {b})")));
        }
        Ok(Self {
            label: "zero".into(),
            support: (a, b),
            phi: Arc::new(|_| T::zero()),
            dphi: Arc::new(|_| T::zero()),
            sup: T::zero(),
            dsup: T::zero(),
        })
    }

    /// User-supplied φ and φ'. Both must vanish outside (a, b); the sup
    /// norms are taken from a dense sample.
    pub fn custom<F, D>(label: impl Into<String>, a: T, b: T, phi: F, dphi: D) -> Result<Self>
    where
        F: Fn(T) -> T + Send + Sync + 'static,
        D: Fn(T) -> T + Send + Sync + 'static,
    {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("support needs a < b, got ({a}, {b})")));
        }
        let samples = 4096;
        let (mut sup, mut dsup) = (T::zero(), T::zero());
        for i in 0..=samples {
            let u = a + (b - a) * from_usize::<T>(i) / from_usize::<T>(samples);
            sup = sup.max(phi(u).abs());
            dsup = dsup.max(dphi(u).abs());
        }
        Ok(Self {
            label: label.into(),
            support: (a, b),
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            sup,
            dsup,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> (T, T) {
        self.support
    }

    pub fn eval(&self, u: T) -> T {
        (self.phi)(u)
    }

    pub fn derivative(&self, u: T) -> T {
        (self.dphi)(u)
    }

    /// ‖φ‖∞
    pub fn sup_norm(&self) -> T {
        self.sup
    }

    /// ‖φ'‖∞
    pub fn derivative_sup(&self) -> T {
        self.dsup
    }
}

/// Upper end of the integration range of W^{-β}ψ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upper<T> {
    /// ψ = 0 beyond this point
    Support(T),
    /// |ψ(u)| ≤ c (u - from)^{-p} for u ≥ from + 1, with p > β
    Decay { from: T, c: T, p: T },
    Unknown,
}

/// Integrand of a Weyl integral with what is known about its support.
#[derive(Clone)]
pub struct WeylInput<T> {
    f: Func<T>,
    /// ψ = 0 below this point
    pub lower: Option<T>,
    pub upper: Upper<T>,
}

impl<T: Real> fmt::Debug for WeylInput<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeylInput")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish()
    }
}

impl<T: Real> WeylInput<T> {
    pub fn new<F>(f: F, lower: Option<T>, upper: Upper<T>) -> Self
    where
        F: Fn(T) -> T + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            lower,
            upper,
        }
    }

    /// 1 on (a, b)
    pub fn indicator(a: T, b: T) -> Self {
        Self::new(move |u| if u > a && u < b { T::one() } else { T::zero() }, Some(a), Upper::Support(b))
    }

    pub fn eval(&self, u: T) -> T {
        (self.f)(u)
    }
}

/// Composite mesh for the Weyl operators: `panels` equal panels, `nodes`
/// Gauss points each; the panel at a singular endpoint uses a Jacobi rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylScheme {
    pub panels: usize,
    pub nodes: usize,
}

impl Default for WeylScheme {
    fn default() -> Self {
        Self { panels: 8, nodes: 8 }
    }
}

impl WeylScheme {
    pub fn validate(&self) -> Result<()> {
        if self.panels < 1 || self.nodes < 2 {
            return Err(Error::Domain(format!(
                "weyl scheme needs panels >= 1 and nodes >= 2, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Twice as many panels.
    pub fn refined(&self) -> Self {
        Self {
            panels: 2 * self.panels,
            nodes: self.nodes,
        }
    }
}

/// Mesh rules for one β, shared by every evaluation.
pub(crate) struct Rules<T> {
    pub beta: T,
    pub scheme: WeylScheme,
    gl: Rule<T>,
    /// weight x^{β-1}, for W^{-β}
    jac_int: Rule<T>,
    /// weight x^{-β}, for ∂^β
    jac_der: Rule<T>,
    gl_half: Rule<T>,
    jac_int_half: Rule<T>,
    jac_der_half: Rule<T>,
    pub inv_gamma: T,
    pub inv_gamma_1m: T,
}

impl<T: Real> Rules<T> {
    pub fn new(beta: FracOrder<T>, scheme: WeylScheme) -> Result<Self> {
        scheme.validate()?;
        let b = beta.get();
        let n = scheme.nodes;
        let h = n / 2;
        Ok(Self {
            beta: b,
            scheme,
            gl: gauss_legendre(n)?,
            jac_int: gauss_jacobi(n, b - T::one(), T::zero())?,
            jac_der: gauss_jacobi(n, -b, T::zero())?,
            gl_half: gauss_legendre(h)?,
            jac_int_half: gauss_jacobi(h, b - T::one(), T::zero())?,
            jac_der_half: gauss_jacobi(h, -b, T::zero())?,
            inv_gamma: T::one() / gamma(b),
            inv_gamma_1m: T::one() / gamma(T::one() - b),
        })
    }

    /// Nodes and weights with Σ w f(u) ≈ ∫_lo^hi (u-lo)^α f(u) du, where α
    /// is 0, β-1 or -β according to `weight`.
    pub fn mesh(&self, lo: T, hi: T, weight: Weight, half: bool) -> Vec<(T, T)> {
        let panels = self.scheme.panels;
        let (gl, jac) = match (weight, half) {
            (Weight::None, false) => (&self.gl, &self.gl),
            (Weight::None, true) => (&self.gl_half, &self.gl_half),
            (Weight::Integral, false) => (&self.gl, &self.jac_int),
            (Weight::Integral, true) => (&self.gl_half, &self.jac_int_half),
            (Weight::Derivative, false) => (&self.gl, &self.jac_der),
            (Weight::Derivative, true) => (&self.gl_half, &self.jac_der_half),
        };
        let alpha = match weight {
            Weight::None => T::zero(),
            Weight::Integral => self.beta - T::one(),
            Weight::Derivative => -self.beta,
        };
        let h = (hi - lo) / from_usize::<T>(panels);
        let mut out = Vec::with_capacity(panels * gl.len());
        let first = h.powf(T::one() + alpha);
        for (x, w) in jac.nodes.iter().zip(&jac.weights) {
            out.push((lo + h * *x, first * *w));
        }
        for k in 1..panels {
            let left = lo + h * from_usize::<T>(k);
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let u = left + h * *x;
                let wt = if alpha == T::zero() { T::one() } else { (u - lo).powf(alpha) };
                out.push((u, h * *w * wt));
            }
        }
        out
    }

    /// Integrates f with the given weight; error from the half-order companion.
    pub fn integrate(&self, lo: T, hi: T, weight: Weight, f: &dyn Fn(T) -> T) -> IntegrationReport<T> {
        if !(hi > lo) {
            return IntegrationReport::zero();
        }
        let fine = self.mesh(lo, hi, weight, false);
        let coarse = self.mesh(lo, hi, weight, true);
        let v: T = fine.iter().map(|(u, w)| *w * f(*u)).sum();
        let c: T = coarse.iter().map(|(u, w)| *w * f(*u)).sum();
        IntegrationReport {
            value: v,
            error: (v - c).abs(),
            evaluations: (fine.len() + coarse.len()) as u64,
        }
    }

    /// ∂^βφ(s): singular weight from s inside the support, the regularised
    /// form left of it, 0 right of it.
    pub fn derivative(&self, phi: &TestFunction<T>, s: T, half: bool) -> T {
        let (a, b) = phi.support();
        if s >= b {
            return T::zero();
        }
        let sum: T = if s >= a {
            self.mesh(s, b, Weight::Derivative, half)
                .iter()
                .map(|(u, w)| *w * phi.derivative(*u))
                .sum()
        } else {
            let base = (a - s).powf(-self.beta);
            self.mesh(a, b, Weight::None, half)
                .iter()
                .map(|(u, w)| *w * ((*u - s).powf(-self.beta) - base) * phi.derivative(*u))
                .sum()
        };
        sum * self.inv_gamma_1m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Weight {
    None,
    Integral,
    Derivative,
}

/// W^{-β}ψ(s) = Γ(β)^{-1} ∫ₛ^∞ (u-s)^{β-1} ψ(u) du.
///
/// Without a support bound the upper limit is cut where the supplied decay
/// bound makes the remainder negligible, and that remainder is added to the
/// error; with neither bound the integral cannot be truncated.
pub fn weyl_integral<T: Real>(
    psi: &WeylInput<T>,
    beta: FracOrder<T>,
    s: T,
    scheme: &WeylScheme,
) -> Result<IntegrationReport<T>> {
    let rules = Rules::new(beta, *scheme)?;
    let b = beta.get();
    let f = |u: T| psi.eval(u);
    let lower = psi.lower.map_or(s, |l| l.max(s));
    let mut rep = match psi.upper {
        Upper::Support(hi) => {
            if !(hi > lower) {
                return Ok(IntegrationReport::zero());
            }
            if lower > s {
                rules.integrate(lower, hi, Weight::None, &|u| (u - s).powf(b - T::one()) * f(u))
            } else {
                rules.integrate(s, hi, Weight::Integral, &f)
            }
        }
        Upper::Decay { from, c, p } => {
            if !(p > b) || !(c >= T::zero()) {
                return Err(Error::CannotTruncate(format!(
                    "decay bound needs c >= 0 and p > beta, got c={c}, p={p}"
                )));
            }
            // remainder past U is at most c/Γ(β) (U-m)^{β-p}/(p-β)
            let m = s.max(from);
            let tol: T = lit(1e-12);
            let reach = (c * rules.inv_gamma / ((p - b) * tol)).powf(T::one() / (p - b));
            let cut = m + reach.max(T::one()).min(lit(1e12));
            let tail = c * (cut - m).powf(b - p) / (p - b);
            let mut rep = if lower > s {
                IntegrationReport::zero()
            } else {
                rules.integrate(s, s + T::one(), Weight::Integral, &f)
            };
            // geometric panels beyond the first unit
            let mut left = if lower > s { lower } else { s + T::one() };
            let mut width = (left - s).max(T::one());
            while left < cut {
                let right = (left + width).min(cut);
                let r = rules.integrate(left, right, Weight::None, &|u| (u - s).powf(b - T::one()) * f(u));
                rep.value = rep.value + r.value;
                rep.error = rep.error + r.error;
                rep.evaluations += r.evaluations;
                left = right;
                width = width + width;
            }
            rep.error = rep.error + tail;
            return Ok(scale(rep, rules.inv_gamma));
        }
        Upper::Unknown => {
            return Err(Error::CannotTruncate(
                "integrand has unbounded support and no decay bound".into(),
            ))
        }
    };
    rep = scale(rep, rules.inv_gamma);
    Ok(rep)
}

fn scale<T: Real>(mut r: IntegrationReport<T>, k: T) -> IntegrationReport<T> {
    r.value = r.value * k;
    r.error = r.error * k;
    r
}

/// ∂^βφ(s) = Γ(1-β)^{-1} ∫ₛ^∞ (u-s)^{-β} φ'(u) du.
pub fn weyl_derivative<T: Real>(
    phi: &TestFunction<T>,
    beta: FracOrder<T>,
    s: T,
    scheme: &WeylScheme,
) -> Result<IntegrationReport<T>> {
    let rules = Rules::new(beta, *scheme)?;
    let fine = rules.derivative(phi, s, false);
    let coarse = rules.derivative(phi, s, true);
    Ok(IntegrationReport {
        value: fine,
        error: (fine - coarse).abs(),
        evaluations: (scheme.panels * (scheme.nodes + scheme.nodes / 2)) as u64,
    })
}

/// The decay bound of ∂^βφ left of the support (the constant multiplying
/// (a-s)^{-β-1}): Γ(1-β)^{-1} β (b-a)² ‖φ'‖∞.
pub fn derivative_decay_constant<T: Real>(phi: &TestFunction<T>, beta: FracOrder<T>) -> T {
    let (a, b) = phi.support();
    let bt = beta.get();
    bt * (b - a) * (b - a) * phi.derivative_sup() / gamma(T::one() - bt)
}

/// ∂^βφ as an input for [`weyl_integral`]: zero beyond b, decaying like
/// (a-u)^{-β-1} to the left.
pub fn derivative_input<T: Real>(phi: &TestFunction<T>, beta: FracOrder<T>, scheme: &WeylScheme) -> Result<WeylInput<T>> {
    let rules = Arc::new(Rules::new(beta, *scheme)?);
    let p = phi.clone();
    let b = phi.support().1;
    Ok(WeylInput::new(move |u| rules.derivative(&p, u, false), None, Upper::Support(b)))
}
