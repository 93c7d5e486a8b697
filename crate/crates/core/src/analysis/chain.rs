use super::certificate::NOISE_FACTOR;
use super::control::ControlPair;
use super::envelope::{envelope, product_bound, tail_sum};
use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::scalar::{from_usize, lit, Real};
use crate::series::{SeriesEntry, SeriesTable};

/// A term exceeding its bound by more than the noise threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainViolation<T> {
    pub n: usize,
    pub pair: GridPair<T>,
    /// k_n minus the bound
    pub excess: T,
    /// the noise threshold the excess was compared against
    pub noise: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport<T> {
    /// violations of k_n ≤ k_{n-1}(η + Q/n)
    pub step_violations: Vec<ChainViolation<T>>,
    /// violations of k_n ≤ k₀ ∏_{k≤n}(η + Q/k)
    pub product_violations: Vec<ChainViolation<T>>,
    /// largest k_n / (k_{n-1}(η + Q/n)) over entries with k_{n-1} > 0
    pub worst_ratio: T,
    pub worst: Option<(usize, GridPair<T>)>,
    pub checked: usize,
}

impl<T: Real> ChainReport<T> {
    pub fn passed(&self) -> bool {
        self.step_violations.is_empty() && self.product_violations.is_empty()
    }
}

fn pair_of<T: Real>(e: &SeriesEntry<T>) -> GridPair<T> {
    GridPair {
        s: e.s,
        x: e.x,
        t: e.t,
        y: e.y,
    }
}

/// Checks the step inequalities k_n ≤ k_{n-1}(η + Q/n) and the product
/// bound for every tabulated n ≥ 1. An excess counts as a violation only
/// beyond ten times the propagated error of both sides.
pub fn verify_term_chain<T: Real>(table: &SeriesTable<T>, control: &ControlPair<T>) -> Result<ChainReport<T>> {
    if table.order == 0 {
        return Err(Error::Precondition("term chain needs a table with order >= 1".into()));
    }
    let noise_factor: T = lit(NOISE_FACTOR);
    let mut rep = ChainReport {
        step_violations: Vec::new(),
        product_violations: Vec::new(),
        worst_ratio: T::zero(),
        worst: None,
        checked: 0,
    };
    for e in &table.entries {
        let q = control.q.eval(e.s, e.t);
        let k0 = e.terms[0];
        for n in 1..e.terms.len() {
            let factor = control.eta + q / from_usize::<T>(n);
            let (kn, prev) = (e.terms[n], e.terms[n - 1]);
            let bound = prev * factor;
            let noise = noise_factor * (e.errors[n] + factor * e.errors[n - 1]);
            if kn - bound > noise {
                rep.step_violations.push(ChainViolation {
                    n,
                    pair: pair_of(e),
                    excess: kn - bound,
                    noise,
                });
            }
            if bound > T::zero() && kn / bound > rep.worst_ratio {
                rep.worst_ratio = kn / bound;
                rep.worst = Some((n, pair_of(e)));
            }
            let product = k0 * product_bound(control.eta, q, n);
            let noise = noise_factor * e.errors[n];
            if kn - product > noise {
                rep.product_violations.push(ChainViolation {
                    n,
                    pair: pair_of(e),
                    excess: kn - product,
                    noise,
                });
            }
            rep.checked += 1;
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport<T> {
    /// max over entries of k̃_N / (k₀ · envelope(η, Q(s,t)))
    pub worst_ratio: T,
    pub location: Option<GridPair<T>>,
    /// entries where k̃_N exceeds k₀·envelope beyond noise
    pub violations: Vec<GridPair<T>>,
    /// largest certified relative tail Σ_{n>N} ∏_{k≤n}(η + Q/k) over the grid
    pub tail_bound: T,
    pub order: usize,
}

/// Checks the truncated sum against k₀·envelope(η, Q(s,t)) entrywise.
pub fn verify_envelope<T: Real>(table: &SeriesTable<T>, control: &ControlPair<T>) -> Result<EnvelopeReport<T>> {
    let noise_factor: T = lit(NOISE_FACTOR);
    let mut rep = EnvelopeReport {
        worst_ratio: T::zero(),
        location: None,
        violations: Vec::new(),
        tail_bound: T::zero(),
        order: table.order,
    };
    for e in &table.entries {
        let q = control.q.eval(e.s, e.t);
        let env = envelope(control.eta, q)?;
        let k0 = e.terms[0];
        let sum = e.sum();
        let err: T = e.errors.iter().copied().sum();
        if sum - k0 * env > noise_factor * err {
            rep.violations.push(pair_of(e));
        }
        if k0 > T::zero() {
            let ratio = sum / (k0 * env);
            if ratio > rep.worst_ratio || rep.location.is_none() {
                rep.worst_ratio = ratio;
                rep.location = Some(pair_of(e));
            }
        }
        rep.tail_bound = rep.tail_bound.max(tail_sum(control.eta, q, table.order)?);
    }
    Ok(rep)
}
