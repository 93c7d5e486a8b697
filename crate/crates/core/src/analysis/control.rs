use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Superadditive Q(s,t) ≥ 0: Q(u,r) + Q(r,v) ≤ Q(u,v) for u < r < v.
#[derive(Debug, Clone, PartialEq)]
pub enum Superadditive<T> {
    /// Q(s,t) = c(t-s)
    Linear { c: T },
    /// Q(s,t) = c(t-s)^θ, θ ≥ 1
    Power { c: T, theta: T },
    /// Values on a time grid; off-grid arguments round outward to the
    /// smallest enclosing grid interval (an upper bound, Q being monotone).
    Tabulated { times: Vec<T>, values: Vec<Vec<T>> },
}

impl<T: Real> Superadditive<T> {
    pub fn eval(&self, s: T, t: T) -> T {
        let dt = (t - s).max(T::zero());
        match self {
            Superadditive::Linear { c } => *c * dt,
            Superadditive::Power { c, theta } => *c * dt.powf(*theta),
            Superadditive::Tabulated { times, values } => {
                let n = times.len();
                let i = times.iter().rposition(|&x| x <= s).unwrap_or(0);
                let j = times.iter().position(|&x| x >= t).unwrap_or(n - 1);
                if j <= i {
                    T::zero()
                } else {
                    values[i][j]
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Superadditive::Linear { c } => format!("linear(c={c})"),
            Superadditive::Power { c, theta } => format!("power(c={c}, theta={theta})"),
            Superadditive::Tabulated { times, .. } => format!("tabulated({} times)", times.len()),
        }
    }
}

/// The pair (η, Q) bounding k₁ ≤ (η + Q(s,t))·k₀.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair<T> {
    pub eta: T,
    pub q: Superadditive<T>,
}

impl<T: Real> ControlPair<T> {
    pub fn new(eta: T, q: Superadditive<T>) -> Result<Self> {
        if !(eta >= T::zero()) || !eta.is_finite() {
            return Err(Error::Domain(format!("eta must be finite and >= 0, got {eta}")));
        }
        match &q {
            Superadditive::Linear { c } if !(*c >= T::zero()) || !c.is_finite() => {
                return Err(Error::Domain(format!("linear control needs c >= 0, got {c}")))
            }
            Superadditive::Power { c, theta } if !(*c >= T::zero()) || !(*theta >= T::one()) => {
                return Err(Error::Domain(format!(
                    "power control needs c >= 0 and theta >= 1, got c={c}, theta={theta}"
                )))
            }
            Superadditive::Tabulated { times, values } => {
                let n = times.len();
                if n < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Domain("tabulated control needs >= 2 increasing times".into()));
                }
                if values.len() != n || values.iter().any(|r| r.len() != n) {
                    return Err(Error::Domain("tabulated control needs an n x n value matrix".into()));
                }
                if values.iter().flatten().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
                    return Err(Error::Domain("tabulated control values must be finite and >= 0".into()));
                }
            }
            _ => {}
        }
        Ok(Self { eta, q })
    }

    pub fn linear(eta: T, c: T) -> Result<Self> {
        Self::new(eta, Superadditive::Linear { c })
    }

    /// η + Q(s,t)
    pub fn bound(&self, s: T, t: T) -> T {
        self.eta + self.q.eval(s, t)
    }

    /// Largest defect Q(u,r) + Q(r,v) - Q(u,v) over the supplied triples
    /// (≤ 0 when superadditive on them).
    pub fn superadditivity_defect(&self, triples: &[(T, T, T)]) -> T {
        triples
            .iter()
            .map(|&(u, r, v)| self.q.eval(u, r) + self.q.eval(r, v) - self.q.eval(u, v))
            .fold(T::neg_infinity(), T::max)
    }

    /// Relative superadditivity check: the defect may not exceed rounding.
    pub fn is_superadditive_on(&self, triples: &[(T, T, T)]) -> bool {
        triples.iter().all(|&(u, r, v)| {
            let whole = self.q.eval(u, v);
            self.q.eval(u, r) + self.q.eval(r, v) - whole <= lit::<T>(64.0) * T::epsilon() * whole.abs()
        })
    }
}
