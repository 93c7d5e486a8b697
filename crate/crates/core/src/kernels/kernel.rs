use super::space::{State, StateSpace};
use super::tabulated::TabulatedKernel;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::special::{erfc_bound, gamma};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

static FORWARD_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of kernel evaluations requested at t <= s since process start.
/// Series and quadrature callers must keep this at zero.
pub fn forward_violations() -> u64 {
    FORWARD_VIOLATIONS.load(Ordering::Relaxed)
}

pub type KernelFn<T> = dyn Fn(T, &State<T>, T, &State<T>) -> T + Send + Sync;

/// How the spatial spread of a kernel scales with the time gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialProfile<T> {
    /// No natural length scale (or no space at all).
    Unscaled,
    /// width = sqrt(coef · dt)
    Diffusive { coef: T },
    /// width = coef · dt
    Ballistic { coef: T },
}

impl<T: Real> SpatialProfile<T> {
    pub fn width(&self, dt: T) -> Option<T> {
        match *self {
            SpatialProfile::Unscaled => None,
            SpatialProfile::Diffusive { coef } => Some((coef * dt).sqrt()),
            SpatialProfile::Ballistic { coef } => Some(coef * dt),
        }
    }
}

#[derive(Clone)]
pub enum KernelFamily<T> {
    /// κ(s,t) = (t-s)^{β-1}/Γ(β) on the one-point space.
    Beta { beta: T, inv_gamma: T },
    /// (4π(t-s))^{-d/2} exp(-|x-y|²/(4(t-s)))
    Gauss { dim: usize },
    /// (t-s)/(π((t-s)² + (x-y)²))
    Cauchy,
    Tabulated(Arc<TabulatedKernel<T>>),
    Custom(Arc<KernelFn<T>>),
}

impl<T: fmt::Debug> fmt::Debug for KernelFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Beta { beta, .. } => write!(f, "Beta({beta:?})"),
            KernelFamily::Gauss { dim } => write!(f, "Gauss(d={dim})"),
            KernelFamily::Cauchy => write!(f, "Cauchy"),
            KernelFamily::Tabulated(t) => write!(f, "Tabulated({} rows)", t.rows),
            KernelFamily::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A forward kernel density κ(s,x,t,y) ≥ 0, defined for s < t.
///
/// `time_exponent` γ ∈ (-1, 0] is the exponent of the mass singularity:
/// sup_x ∫ κ(s,x,t,y) m(dy) behaves like (t-s)^γ as t → s⁺. On the one-point
/// space this is the pointwise exponent.
#[derive(Debug, Clone)]
pub struct KernelDensity<T> {
    family: KernelFamily<T>,
    label: String,
    time_exponent: T,
    profile: SpatialProfile<T>,
    claims_chapman_kolmogorov: bool,
    dim: usize,
}

impl<T: Real> KernelDensity<T> {
    /// κ(s,t) = (t-s)^{β-1}/Γ(β) on the one-point space, γ = β - 1.
    pub fn beta(beta: T) -> Result<Self> {
        if !(beta > T::zero() && beta < T::one()) {
            return Err(Error::Domain(format!("beta kernel needs 0 < beta < 1, got {beta}")));
        }
        Ok(Self {
            family: KernelFamily::Beta {
                beta,
                inv_gamma: T::one() / gamma(beta),
            },
            label: format!("beta({beta})"),
            time_exponent: beta - T::one(),
            profile: SpatialProfile::Unscaled,
            claims_chapman_kolmogorov: false,
            dim: 0,
        })
    }

    /// Gaussian transition density of the heat semigroup e^{tΔ} in d = 1, 2.
    pub fn gauss(dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Domain(format!("Gaussian kernel supports d in {{1,2}}, got {dim}")));
        }
        Ok(Self {
            family: KernelFamily::Gauss { dim },
            label: format!("gauss(d={dim})"),
            time_exponent: T::zero(),
            profile: SpatialProfile::Diffusive { coef: lit(2.0) },
            claims_chapman_kolmogorov: true,
            dim,
        })
    }

    /// Cauchy transition density on the real line.
    pub fn cauchy() -> Self {
        Self {
            family: KernelFamily::Cauchy,
            label: "cauchy".into(),
            time_exponent: T::zero(),
            profile: SpatialProfile::Ballistic { coef: T::one() },
            claims_chapman_kolmogorov: true,
            dim: 1,
        }
    }

    pub fn tabulated(table: TabulatedKernel<T>, time_exponent: T) -> Result<Self> {
        check_exponent(time_exponent)?;
        let dim = table.dim();
        Ok(Self {
            label: format!("tabulated({} rows)", table.len()),
            family: KernelFamily::Tabulated(Arc::new(table)),
            time_exponent,
            profile: SpatialProfile::Unscaled,
            claims_chapman_kolmogorov: false,
            dim,
        })
    }

    /// Wraps a user closure. The closure must be pure and nonnegative.
    pub fn custom<F>(
        label: impl Into<String>,
        dim: usize,
        time_exponent: T,
        profile: SpatialProfile<T>,
        claims_chapman_kolmogorov: bool,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(T, &State<T>, T, &State<T>) -> T + Send + Sync + 'static,
    {
        check_exponent(time_exponent)?;
        if dim > 2 {
            return Err(Error::Domain(format!("state dimension {dim} unsupported")));
        }
        Ok(Self {
            family: KernelFamily::Custom(Arc::new(f)),
            label: label.into(),
            time_exponent,
            profile,
            claims_chapman_kolmogorov,
            dim,
        })
    }

    pub fn family(&self) -> &KernelFamily<T> {
        &self.family
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn time_exponent(&self) -> T {
        self.time_exponent
    }

    pub fn profile(&self) -> SpatialProfile<T> {
        self.profile
    }

    pub fn claims_chapman_kolmogorov(&self) -> bool {
        self.claims_chapman_kolmogorov
    }

    /// Spatial dimension the kernel lives on (0 for the one-point space).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Spatial spread at time gap `dt`, if the kernel has a natural scale.
    pub fn width(&self, dt: T) -> Option<T> {
        if self.dim == 0 {
            None
        } else {
            self.profile.width(dt)
        }
    }

    /// Checks that the kernel can be used on `space`.
    pub fn check_space(&self, space: &StateSpace<T>) -> Result<()> {
        if self.dim != space.dim() {
            return Err(Error::Domain(format!(
                "kernel {} lives in dimension {}, state space has dimension {}",
                self.label,
                self.dim,
                space.dim()
            )));
        }
        Ok(())
    }

    /// κ(s,x,t,y). Requesting t <= s is a contract violation: it is counted
    /// (see [`forward_violations`]) and yields NaN.
    #[inline]
    pub fn eval(&self, s: T, x: &State<T>, t: T, y: &State<T>) -> T {
        if !(t > s) {
            FORWARD_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
            return T::nan();
        }
        let dt = t - s;
        match &self.family {
            KernelFamily::Beta { beta, inv_gamma } => dt.powf(*beta - T::one()) * *inv_gamma,
            KernelFamily::Gauss { dim } => {
                let four_dt = lit::<T>(4.0) * dt;
                let norm = if *dim == 1 {
                    (T::PI() * four_dt).sqrt()
                } else {
                    T::PI() * four_dt
                };
                (-x.dist_sq(y) / four_dt).exp() / norm
            }
            KernelFamily::Cauchy => {
                let r = x.0[0] - y.0[0];
                dt / (T::PI() * (dt * dt + r * r))
            }
            KernelFamily::Tabulated(tab) => tab.eval(s, x, t, y),
            KernelFamily::Custom(f) => f(s, x, t, y),
        }
    }

    /// Upper bound on the mass of κ(s,x,s+dt,·) outside the ball of radius
    /// `r` around x, for kernels with a known tail.
    pub fn tail_mass(&self, dt: T, r: T) -> Option<T> {
        match self.family {
            KernelFamily::Gauss { dim } => {
                let u = r / (lit::<T>(2.0) * dt.sqrt());
                Some(if dim == 1 { erfc_bound(u) } else { (-(u * u)).exp() })
            }
            KernelFamily::Cauchy => {
                Some(T::one() - lit::<T>(2.0) / T::PI() * (r / dt).atan())
            }
            _ => None,
        }
    }
}

fn check_exponent<T: Real>(g: T) -> Result<()> {
    if !(g > -T::one() && g <= T::zero()) {
        return Err(Error::Domain(format!("time exponent must lie in (-1, 0], got {g}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn beta_kernel_values() {
        let k = KernelDensity::beta(0.5f64).unwrap();
        let o = State::origin();
        assert!((k.eval(0.0, &o, 1.0, &o) - 0.564_189_583_547_756_3).abs() < 1e-14);
        assert!((k.eval(0.0, &o, 4.0, &o) - 0.282_094_791_773_878_1).abs() < 1e-14);
        for b in [0.1, 0.3, 0.9] {
            let k = KernelDensity::beta(b).unwrap();
            assert!((k.eval(2.0, &o, 3.0, &o) - 1.0 / gamma(b)).abs() < 1e-14);
        }
        assert_eq!(k.time_exponent(), -0.5);
    }

    #[test]
    fn beta_domain_errors() {
        assert!(KernelDensity::<f64>::beta(0.0).is_err());
        assert!(KernelDensity::<f64>::beta(1.0).is_err());
        assert!(KernelDensity::<f64>::beta(-0.3).is_err());
    }

    #[test]
    fn gauss_values_and_symmetry() {
        let k = KernelDensity::gauss(1).unwrap();
        let z = State::on_line(0.0);
        assert!((k.eval(0.0, &z, 1.0, &z) - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let a = State::on_line(0.3);
        let b = State::on_line(-1.2);
        assert_eq!(k.eval(0.0, &a, 0.7, &b), k.eval(0.0, &b, 0.7, &a));
        let mut prev = f64::INFINITY;
        for r in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let v = k.eval(0.0, &z, 1.0, &State::on_line(r));
            assert!(v < prev);
            prev = v;
        }
        assert!(KernelDensity::<f64>::gauss(3).is_err());
    }

    #[test]
    fn cauchy_values() {
        let k = KernelDensity::<f64>::cauchy();
        let z = State::on_line(0.0);
        assert!((k.eval(0.0, &z, 1.0, &z) - 1.0 / PI).abs() < 1e-15);
        assert!((k.eval(0.0, &z, 1.0, &State::on_line(1.0)) - 0.5 / PI).abs() < 1e-15);
    }

    #[test]
    fn forward_guard_counts_and_returns_nan() {
        let k = KernelDensity::beta(0.5f64).unwrap();
        let o = State::origin();
        let before = forward_violations();
        assert!(k.eval(1.0, &o, 1.0, &o).is_nan());
        assert!(forward_violations() > before);
    }

    #[test]
    fn tail_bounds() {
        let g = KernelDensity::<f64>::gauss(1).unwrap();
        // N(0, 2): P(|Z| > 4) = erfc(2) = 4.68e-3
        assert!(g.tail_mass(1.0, 4.0).unwrap() >= 4.677_7e-3);
        let c = KernelDensity::<f64>::cauchy();
        assert!((c.tail_mass(1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(KernelDensity::beta(0.5f64).unwrap().tail_mass(1.0, 1.0).is_none());
    }
}
