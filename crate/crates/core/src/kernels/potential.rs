use super::space::State;
use crate::error::{Error, Result};
use crate::quadrature::Singularity;
use crate::scalar::Real;
use std::fmt;
use std::sync::Arc;

pub type PotentialFn<T> = dyn Fn(T, &State<T>) -> T + Send + Sync;

#[derive(Clone)]
pub enum PotentialShape<T> {
    Zero,
    Constant(T),
    /// q(u) = |u|^{-β+ε}
    Power { beta: T, eps: T },
    /// q(u,z) = amplitude · exp(-|z|²/width²)
    Bump { amplitude: T, width: T },
    Custom {
        f: Arc<PotentialFn<T>>,
        singular: Vec<Singularity<T>>,
        sup: Option<T>,
    },
}

impl<T: fmt::Debug> fmt::Debug for PotentialShape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialShape::Zero => write!(f, "Zero"),
            PotentialShape::Constant(c) => write!(f, "Constant({c:?})"),
            PotentialShape::Power { beta, eps } => write!(f, "Power(beta={beta:?}, eps={eps:?})"),
            PotentialShape::Bump { amplitude, width } => write!(f, "Bump({amplitude:?}, {width:?})"),
            PotentialShape::Custom { singular, .. } => write!(f, "Custom({} singular)", singular.len()),
        }
    }
}

/// Nonnegative potential q(u,z) with its singular times declared.
#[derive(Debug, Clone)]
pub struct Potential<T> {
    shape: PotentialShape<T>,
    scale: T,
    label: String,
}

impl<T: Real> Potential<T> {
    pub fn zero() -> Self {
        Self {
            shape: PotentialShape::Zero,
            scale: T::one(),
            label: "zero".into(),
        }
    }

    pub fn constant(c: T) -> Result<Self> {
        if !(c >= T::zero()) || !c.is_finite() {
            return Err(Error::Domain(format!("constant potential must be finite and >= 0, got {c}")));
        }
        Ok(Self {
            shape: PotentialShape::Constant(c),
            scale: T::one(),
            label: format!("constant({c})"),
        })
    }

    /// q(u) = |u|^{-β+ε} with 0 < ε <= β < 1.
    pub fn power(beta: T, eps: T) -> Result<Self> {
        if !(beta > T::zero() && beta < T::one()) {
            return Err(Error::Domain(format!("power potential needs 0 < beta < 1, got {beta}")));
        }
        if !(eps > T::zero() && eps <= beta) {
            return Err(Error::Domain(format!("power potential needs 0 < eps <= beta, got {eps}")));
        }
        Ok(Self {
            shape: PotentialShape::Power { beta, eps },
            scale: T::one(),
            label: format!("power(beta={beta}, eps={eps})"),
        })
    }

    pub fn bump(amplitude: T, width: T) -> Result<Self> {
        if !(amplitude >= T::zero()) || !(width > T::zero()) {
            return Err(Error::Domain("bump potential needs amplitude >= 0 and width > 0".into()));
        }
        Ok(Self {
            shape: PotentialShape::Bump { amplitude, width },
            scale: T::one(),
            label: format!("bump({amplitude}, {width})"),
        })
    }

    pub fn custom<F>(label: impl Into<String>, f: F, singular: Vec<Singularity<T>>, sup: Option<T>) -> Self
    where
        F: Fn(T, &State<T>) -> T + Send + Sync + 'static,
    {
        Self {
            shape: PotentialShape::Custom {
                f: Arc::new(f),
                singular,
                sup,
            },
            scale: T::one(),
            label: label.into(),
        }
    }

    /// λ·q for λ >= 0.
    pub fn scaled(&self, lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::Domain(format!("potential scale must be >= 0, got {lambda}")));
        }
        Ok(Self {
            shape: self.shape.clone(),
            scale: self.scale * lambda,
            label: format!("{}*{}", lambda, self.label),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn shape(&self) -> &PotentialShape<T> {
        &self.shape
    }

    #[inline]
    pub fn eval(&self, u: T, z: &State<T>) -> T {
        let raw = match &self.shape {
            PotentialShape::Zero => return T::zero(),
            PotentialShape::Constant(c) => *c,
            PotentialShape::Power { beta, eps } => {
                let e = *eps - *beta;
                if e == T::zero() {
                    T::one()
                } else {
                    u.abs().powf(e)
                }
            }
            PotentialShape::Bump { amplitude, width } => {
                *amplitude * (-(z.0[0] * z.0[0] + z.0[1] * z.0[1]) / (*width * *width)).exp()
            }
            PotentialShape::Custom { f, .. } => f(u, z),
        };
        self.scale * raw
    }

    pub fn is_zero(&self) -> bool {
        self.scale == T::zero()
            || matches!(self.shape, PotentialShape::Zero)
            || matches!(self.shape, PotentialShape::Constant(c) if c == T::zero())
            || matches!(self.shape, PotentialShape::Bump { amplitude, .. } if amplitude == T::zero())
    }

    /// Times where q may blow up, with the local exponent.
    pub fn singular_times(&self) -> Vec<Singularity<T>> {
        if self.is_zero() {
            return vec![];
        }
        match &self.shape {
            PotentialShape::Power { beta, eps } if *eps < *beta => vec![Singularity {
                time: T::zero(),
                exponent: *eps - *beta,
            }],
            PotentialShape::Custom { singular, .. } => singular.clone(),
            _ => vec![],
        }
    }

    /// ‖q‖∞ when finite and known.
    pub fn sup(&self) -> Option<T> {
        if self.is_zero() {
            return Some(T::zero());
        }
        match &self.shape {
            PotentialShape::Zero => Some(T::zero()),
            PotentialShape::Constant(c) => Some(*c * self.scale),
            PotentialShape::Power { beta, eps } if eps == beta => Some(self.scale),
            PotentialShape::Power { .. } => None,
            PotentialShape::Bump { amplitude, .. } => Some(*amplitude * self.scale),
            PotentialShape::Custom { sup, .. } => sup.map(|s| s * self.scale),
        }
    }

    /// Exponent of q at time `t` if t is a declared singular time.
    pub fn exponent_at(&self, t: T, tol: T) -> T {
        self.singular_times()
            .iter()
            .filter(|s| (s.time - t).abs() <= tol)
            .map(|s| s.exponent)
            .fold(T::zero(), |a, b| a + b)
    }
}
