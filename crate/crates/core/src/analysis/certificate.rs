use super::control::{ControlPair, Superadditive};
use super::envelope::envelope;
use crate::error::{Error, Result};
use crate::grid::{GridPair, SpaceTimeGrid};
use crate::scalar::{lit, Real};
use crate::series::SeriesEngine;
use rayon::prelude::*;

/// Inequality checks count a violation only beyond this multiple of the
/// summed quadrature error estimates.
pub const NOISE_FACTOR: f64 = 10.0;

/// Default η candidates for [`fit_affine_control`].
pub const DEFAULT_ETAS: [f64; 5] = [0.0, 0.05, 0.1, 0.25, 0.5];

/// Outcome of checking k₁ ≤ (η + Q(s,t))·k₀ on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T> {
    pub control: ControlPair<T>,
    /// min over pairs of ((η+Q)k₀ - k₁)/k₀; negative means k₁ exceeds the bound
    pub slack: T,
    pub location: Option<GridPair<T>>,
    pub grid: SpaceTimeGrid<T>,
    /// no pair violates the bound by more than the noise threshold
    pub valid: bool,
    /// pairs skipped because k₀ = 0 (and k₁ within noise of 0)
    pub skipped: usize,
    pub truncation_radius: Option<T>,
}

/// k₀, k₁ and the error of k₁ on every grid pair.
pub(crate) fn first_terms<T: Real>(engine: &SeriesEngine<T>, grid: &SpaceTimeGrid<T>) -> Result<Vec<(GridPair<T>, T, T, T)>> {
    grid.pairs()
        .into_par_iter()
        .map(|p| {
            let k0 = engine.kernel().eval(p.s, &p.x, p.t, &p.y);
            let (k1, e1) = engine.eval_kn(1, p.s, &p.x, p.t, &p.y)?;
            Ok((p, k0, k1, e1))
        })
        .collect()
}

/// Verifies k₁ ≤ (η + Q(s,t))·k₀ on every grid pair, up to noise.
pub fn check_condition<T: Real>(
    engine: &SeriesEngine<T>,
    control: &ControlPair<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<Certificate<T>> {
    let terms = first_terms(engine, grid)?;
    Ok(certify(engine, control, grid, &terms))
}

fn certify<T: Real>(
    engine: &SeriesEngine<T>,
    control: &ControlPair<T>,
    grid: &SpaceTimeGrid<T>,
    terms: &[(GridPair<T>, T, T, T)],
) -> Certificate<T> {
    let noise: T = lit(NOISE_FACTOR);
    let mut cert = Certificate {
        control: control.clone(),
        slack: T::infinity(),
        location: None,
        grid: grid.clone(),
        valid: true,
        skipped: 0,
        truncation_radius: engine.space().truncation_radius(),
    };
    for (p, k0, k1, e1) in terms {
        let bound = control.bound(p.s, p.t) * *k0;
        if *k1 - bound > noise * *e1 {
            cert.valid = false;
        }
        if *k0 > T::zero() {
            let slack = (bound - *k1) / *k0;
            if slack < cert.slack {
                cert.slack = slack;
                cert.location = Some(*p);
            }
        } else {
            cert.skipped += 1;
        }
    }
    cert
}

/// One η candidate of an affine fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub eta: T,
    pub c: T,
    /// c moved by at most 1% under the last grid refinement
    pub converged: bool,
    /// envelope(η, c·H) at the grid's largest gap H
    pub envelope: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit<T> {
    pub best: Certificate<T>,
    pub candidates: Vec<Candidate<T>>,
    /// grid refinements performed (0..=3)
    pub refinements: usize,
}

/// Smallest c per η with k₁/k₀ ≤ η + c(t-s) on the grid, refining the grid
/// (midpoints, at most three times) while some c still moves by more than
/// 1%. The winner minimises the envelope at the largest gap, preferring
/// candidates whose c converged: a c that keeps growing under refinement
/// (η = 0 for kernels with k₁/k₀ ~ (t-s)^β, β < 1) certifies nothing
/// beyond the sampled gaps.
pub fn fit_affine_control<T: Real>(
    engine: &SeriesEngine<T>,
    grid: &SpaceTimeGrid<T>,
    etas: &[T],
) -> Result<AffineFit<T>> {
    if etas.is_empty() {
        return Err(Error::Precondition("no eta candidates".into()));
    }
    for &eta in etas {
        if !(eta >= T::zero() && eta < T::one()) {
            return Err(Error::Domain(format!("eta candidates must lie in [0,1), got {eta}")));
        }
    }
    let slopes = |terms: &[(GridPair<T>, T, T, T)]| -> Result<Vec<T>> {
        let usable: Vec<_> = terms.iter().filter(|(_, k0, _, _)| *k0 > T::zero()).collect();
        if usable.is_empty() {
            return Err(Error::DegenerateKernel("k0 vanishes on every grid pair".into()));
        }
        Ok(etas
            .iter()
            .map(|&eta| {
                usable
                    .iter()
                    .map(|(p, k0, k1, _)| (*k1 / *k0 - eta) / (p.t - p.s))
                    .fold(T::zero(), T::max)
            })
            .collect())
    };
    let mut g = grid.clone();
    let mut terms = first_terms(engine, &g)?;
    let mut cs = slopes(&terms)?;
    let mut converged = vec![false; etas.len()];
    let mut refinements = 0;
    let tol: T = lit(0.01);
    while refinements < 3 {
        let finer = g.refined();
        let finer_terms = first_terms(engine, &finer)?;
        let finer_cs = slopes(&finer_terms)?;
        refinements += 1;
        for i in 0..etas.len() {
            let (old, new) = (cs[i], finer_cs[i]);
            converged[i] = (new - old).abs() <= tol * old.abs().max(new.abs()) || (old == T::zero() && new == T::zero());
        }
        g = finer;
        terms = finer_terms;
        cs = finer_cs;
        if converged.iter().all(|&c| c) {
            break;
        }
    }
    let horizon = grid.horizon();
    let candidates: Vec<Candidate<T>> = etas
        .iter()
        .zip(&cs)
        .zip(&converged)
        .map(|((&eta, &c), &conv)| Candidate {
            eta,
            c,
            converged: conv,
            envelope: envelope(eta, c * horizon).ok(),
        })
        .collect();
    let pick = |only_converged: bool| {
        candidates
            .iter()
            .filter(|c| c.envelope.is_some() && (!only_converged || c.converged))
            .min_by(|a, b| {
                a.envelope
                    .partial_cmp(&b.envelope)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    };
    let best = pick(true)
        .or_else(|| pick(false))
        .ok_or_else(|| Error::NoCertificate("no candidate has a finite envelope".into()))?;
    let control = ControlPair::new(best.eta, Superadditive::Linear { c: best.c })?;
    let cert = certify(engine, &control, &g, &terms);
    Ok(AffineFit {
        best: cert,
        candidates,
        refinements,
    })
}
