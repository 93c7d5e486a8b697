use super::certificate::NOISE_FACTOR;
use crate::error::{Error, Result};
use crate::grid::{GridPair, SpaceTimeGrid};
use crate::kernels::{KernelDensity, State};
use crate::scalar::{lit, Real};
use crate::series::SeriesEngine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const MAX_REFINEMENTS: usize = 3;

fn moved<T: Real>(old: T, new: T) -> bool {
    (new - old).abs() > lit::<T>(0.01) * old.abs().max(new.abs())
}

/// A sampled triple s < u < t with states x, z, y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple<T> {
    pub s: T,
    pub x: State<T>,
    pub u: T,
    pub z: State<T>,
    pub t: T,
    pub y: State<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreePReport<T> {
    /// sup of min(k(s,x,u,z), k(u,z,t,y)) / k(s,x,t,y) over sampled triples
    pub sup: T,
    pub triple: Option<Triple<T>>,
    /// triples skipped because k(s,x,t,y) = 0
    pub excluded: usize,
    pub refinements: usize,
}

/// min(k(s,x,u,z), k(u,z,t,y)) / k(s,x,t,y); `None` when the denominator vanishes.
pub fn three_p_ratio<T: Real>(k: &KernelDensity<T>, tr: &Triple<T>) -> Option<T> {
    let whole = k.eval(tr.s, &tr.x, tr.t, &tr.y);
    if !(whole > T::zero()) {
        return None;
    }
    let a = k.eval(tr.s, &tr.x, tr.u, &tr.z);
    let b = k.eval(tr.u, &tr.z, tr.t, &tr.y);
    Some(a.min(b) / whole)
}

/// Grid maximum of the 3P ratio, without refinement.
pub fn three_p_sup<T: Real>(k: &KernelDensity<T>, grid: &SpaceTimeGrid<T>) -> Result<ThreePReport<T>> {
    let times = grid.times();
    if times.len() < 3 {
        return Err(Error::Precondition("3P scan needs at least three times".into()));
    }
    let states = grid.states();
    let spans: Vec<(usize, usize)> = (0..times.len())
        .flat_map(|i| (i + 2..times.len()).map(move |j| (i, j)))
        .collect();
    let partial: Vec<(T, Option<Triple<T>>, usize)> = spans
        .par_iter()
        .map(|&(i, j)| {
            let mut best = (T::zero(), None, 0usize);
            for &u in &times[i + 1..j] {
                for x in states {
                    for z in states {
                        for y in states {
                            let tr = Triple {
                                s: times[i],
                                x: *x,
                                u,
                                z: *z,
                                t: times[j],
                                y: *y,
                            };
                            match three_p_ratio(k, &tr) {
                                Some(r) if r > best.0 || best.1.is_none() => {
                                    best.0 = r;
                                    best.1 = Some(tr);
                                }
                                Some(_) => {}
                                None => best.2 += 1,
                            }
                        }
                    }
                }
            }
            best
        })
        .collect();
    let mut rep = ThreePReport {
        sup: T::zero(),
        triple: None,
        excluded: 0,
        refinements: 0,
    };
    for (r, tr, ex) in partial {
        rep.excluded += ex;
        if tr.is_some() && (r > rep.sup || rep.triple.is_none()) {
            rep.sup = r;
            rep.triple = tr;
        }
    }
    Ok(rep)
}

/// 3P constant estimate: the grid maximum, with the time grid refined (up
/// to three times) while the maximum moves by more than 1%. A kernel
/// without the 3P property shows up as a sup that keeps growing.
pub fn three_p_constant<T: Real>(k: &KernelDensity<T>, grid: &SpaceTimeGrid<T>) -> Result<ThreePReport<T>> {
    let mut g = grid.clone();
    let mut rep = three_p_sup(k, &g)?;
    while rep.refinements < MAX_REFINEMENTS {
        g = g.refined();
        let mut next = three_p_sup(k, &g)?;
        next.refinements = rep.refinements + 1;
        let again = moved(rep.sup, next.sup);
        rep = next;
        if !again {
            break;
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KatoMode {
    /// k₁/k₀
    Relative,
    /// ∫∫[k(s,x,u,z) + k(u,z,t,y)] q(u,z) dz du
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KatoPoint<T> {
    pub h: T,
    /// sup over grid pairs with t - s ≤ h (0 when no pair qualifies)
    pub sup: T,
    /// error estimate of the maximising value
    pub err: T,
    pub location: Option<GridPair<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KatoScan<T> {
    pub mode: KatoMode,
    pub points: Vec<KatoPoint<T>>,
    pub refinements: usize,
    /// state-space truncation: the sup over x, y only covers this ball
    pub truncation_radius: Option<T>,
}

impl<T: Real> KatoScan<T> {
    /// True when the sup does not increase as h decreases.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].sup <= w[0].sup)
    }
}

fn kato_values<T: Real>(
    engine: &SeriesEngine<T>,
    grid: &SpaceTimeGrid<T>,
    mode: KatoMode,
) -> Result<Vec<(GridPair<T>, T, T)>> {
    grid.pairs()
        .into_par_iter()
        .map(|p| {
            let (v, e) = match mode {
                KatoMode::Relative => {
                    let k0 = engine.kernel().eval(p.s, &p.x, p.t, &p.y);
                    if !(k0 > T::zero()) {
                        return Ok(None);
                    }
                    let (k1, e1) = engine.eval_kn(1, p.s, &p.x, p.t, &p.y)?;
                    (k1 / k0, e1 / k0)
                }
                KatoMode::Plain => engine.kato_integral(p.s, &p.x, p.t, &p.y)?,
            };
            Ok(Some((p, v, e)))
        })
        .filter_map(|r| r.transpose())
        .collect()
}

fn kato_points<T: Real>(values: &[(GridPair<T>, T, T)], h_values: &[T]) -> Vec<KatoPoint<T>> {
    let slack = T::one() + lit::<T>(64.0) * T::epsilon();
    h_values
        .iter()
        .map(|&h| {
            let mut pt = KatoPoint {
                h,
                sup: T::zero(),
                err: T::zero(),
                location: None,
            };
            for (p, v, e) in values {
                if p.t - p.s <= h * slack && (*v > pt.sup || pt.location.is_none()) {
                    pt.sup = *v;
                    pt.err = *e;
                    pt.location = Some(*p);
                }
            }
            pt
        })
        .collect()
}

/// Kato (plain) or relative Kato sup for each h, over grid pairs with
/// t - s ≤ h; the quantities are continuous in t, so the closed condition
/// gives the same sup as s < t < s + h. The time grid is refined while any
/// sup moves by more than 1%, up to three times.
pub fn kato_scan<T: Real>(
    engine: &SeriesEngine<T>,
    h_values: &[T],
    grid: &SpaceTimeGrid<T>,
    mode: KatoMode,
) -> Result<KatoScan<T>> {
    if h_values.is_empty() {
        return Err(Error::Precondition("kato scan needs at least one h".into()));
    }
    if h_values.iter().any(|h| !(*h > T::zero()) || !h.is_finite()) {
        return Err(Error::Domain("kato scan h values must be positive and finite".into()));
    }
    if h_values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("kato scan h values must be strictly decreasing".into()));
    }
    let mut g = grid.clone();
    let mut points = kato_points(&kato_values(engine, &g, mode)?, h_values);
    let mut refinements = 0;
    while refinements < MAX_REFINEMENTS {
        g = g.refined();
        let next = kato_points(&kato_values(engine, &g, mode)?, h_values);
        refinements += 1;
        let again = points.iter().zip(&next).any(|(a, b)| moved(a.sup, b.sup));
        points = next;
        if !again {
            break;
        }
    }
    Ok(KatoScan {
        mode,
        points,
        refinements,
        truncation_radius: engine.space().truncation_radius(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KatoImplication<T> {
    pub constant: T,
    pub relative: KatoScan<T>,
    pub plain: KatoScan<T>,
    /// per h: relative sup ≤ constant · plain sup, up to noise
    pub holds: Vec<bool>,
}

impl<T: Real> KatoImplication<T> {
    pub fn passed(&self) -> bool {
        self.holds.iter().all(|&b| b)
    }
}

/// Compares both scans: under 3P with constant C, k(s,u)k(u,t) ≤
/// C k(s,t)[k(s,u) + k(u,t)], hence relative(h) ≤ C · plain(h).
pub fn kato_implication<T: Real>(
    engine: &SeriesEngine<T>,
    h_values: &[T],
    grid: &SpaceTimeGrid<T>,
    constant: T,
) -> Result<KatoImplication<T>> {
    let relative = kato_scan(engine, h_values, grid, KatoMode::Relative)?;
    let plain = kato_scan(engine, h_values, grid, KatoMode::Plain)?;
    let noise: T = lit(NOISE_FACTOR);
    let holds = relative
        .points
        .iter()
        .zip(&plain.points)
        .map(|(r, p)| r.sup - constant * p.sup <= noise * (r.err + constant * p.err))
        .collect();
    Ok(KatoImplication {
        constant,
        relative,
        plain,
        holds,
    })
}
