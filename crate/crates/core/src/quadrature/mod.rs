//! Error-controlled quadrature over time intervals with endpoint power
//! singularities and over (truncated) state spaces.
//!
//! Time integrals take the endpoint exponents from the caller: the integrand
//! behaves like (u-s)^a near s and (t-u)^b near t. The Jacobi rule absorbs
//! these weights exactly; the graded rule refines panels toward singular
//! endpoints and applies a Jacobi rule on the panel touching them.
//!
//! Every result carries an error estimate obtained by comparing the rule with
//! a half-order companion rule on the same panels.

pub mod rules;

use crate::error::{Error, Result};
use crate::kernels::{State, StateSpace};
use crate::scalar::{from_usize, lit, to_f64, Real};
use rules::{gauss_jacobi, gauss_legendre, Rule};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Rule used for integrals over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TimeRule {
    /// Composite Gauss–Legendre rule in the variable x of the substitution
    /// u = s + (t-s)·x^{grading/(1+a)}, a being the endpoint exponent: `panels`
    /// equal panels of `order` nodes in x, clustered at the singular end in u.
    GradedMesh {
        grading: f64,
        panels: usize,
        order: usize,
    },
    /// One Gauss–Jacobi rule over the whole interval.
    JacobiWeighted { nodes: usize },
}

/// Rule used for integrals over the state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SpaceRule {
    /// Uniform trapezoid rule with `mesh` points per axis. Ignores foci.
    Trapezoid { mesh: usize },
    /// Composite Gauss–Legendre; `panels` caps the panel width at
    /// domain/panels, extra breakpoints are placed around foci.
    GaussLegendre { nodes_per_panel: usize, panels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureScheme {
    pub time: TimeRule,
    pub space: SpaceRule,
    pub tolerance: f64,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self {
            time: TimeRule::JacobiWeighted { nodes: 64 },
            space: SpaceRule::GaussLegendre {
                nodes_per_panel: 8,
                panels: 16,
            },
            tolerance: 1e-8,
        }
    }
}

impl QuadratureScheme {
    pub fn validate(&self) -> Result<()> {
        match self.time {
            TimeRule::GradedMesh {
                grading,
                panels,
                order,
            } => {
                if !(grading >= 1.0) {
                    return Err(Error::Domain(format!("grading exponent must be >= 1, got {grading}")));
                }
                if panels < 1 || order < 2 {
                    return Err(Error::Domain("graded mesh needs panels >= 1 and order >= 2".into()));
                }
            }
            TimeRule::JacobiWeighted { nodes } => {
                if nodes < 2 {
                    return Err(Error::Domain("Jacobi rule needs >= 2 nodes".into()));
                }
            }
        }
        match self.space {
            SpaceRule::Trapezoid { mesh } if mesh < 2 => {
                return Err(Error::Domain("trapezoid mesh must be >= 2".into()))
            }
            SpaceRule::GaussLegendre {
                nodes_per_panel,
                panels,
            } if nodes_per_panel < 2 || panels < 1 => {
                return Err(Error::Domain("Gauss-Legendre space rule needs >= 2 nodes and >= 1 panel".into()))
            }
            _ => {}
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Same scheme with every node and panel count multiplied by `factor`
    /// (rounded, never below the rule minimum).
    pub fn scaled(&self, factor: f64) -> Self {
        let sc = |n: usize, min: usize| ((n as f64 * factor).round() as usize).max(min);
        let time = match self.time {
            TimeRule::GradedMesh {
                grading,
                panels,
                order,
            } => TimeRule::GradedMesh {
                grading,
                panels: sc(panels, 1),
                order,
            },
            TimeRule::JacobiWeighted { nodes } => TimeRule::JacobiWeighted { nodes: sc(nodes, 2) },
        };
        let space = match self.space {
            SpaceRule::Trapezoid { mesh } => SpaceRule::Trapezoid { mesh: sc(mesh, 2) },
            SpaceRule::GaussLegendre {
                nodes_per_panel,
                panels,
            } => SpaceRule::GaussLegendre {
                nodes_per_panel,
                panels: sc(panels, 1),
            },
        };
        Self { time, space, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationReport<T> {
    pub value: T,
    pub error: T,
    pub evaluations: u64,
}

impl<T: Real> IntegrationReport<T> {
    pub fn zero() -> Self {
        Self {
            value: T::zero(),
            error: T::zero(),
            evaluations: 0,
        }
    }
}

/// A point where the integrand may blow up like |u - time|^exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity<T> {
    pub time: T,
    pub exponent: T,
}

/// Region in space where an integrand concentrates: quadrature places extra
/// breakpoints at center ± multiples of width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Focus<T> {
    pub center: State<T>,
    pub width: T,
}

const FOCUS_MULTIPLES: [f64; 7] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

/// Weighted node set for a space integral, with its half-order companion.
#[derive(Debug, Clone)]
pub struct SpaceNodes<T> {
    pub fine: Vec<(State<T>, T)>,
    pub coarse: Vec<(State<T>, T)>,
}

type RuleKey = (usize, u64, u64);

/// Quadrature engine: a scheme plus caches of generated rules.
#[derive(Debug)]
pub struct Quadrature<T> {
    scheme: QuadratureScheme,
    jacobi: RwLock<HashMap<RuleKey, Arc<Rule<T>>>>,
}

impl<T: Real> Clone for Quadrature<T> {
    fn clone(&self) -> Self {
        Self::new(self.scheme).expect("validated scheme")
    }
}

impl<T: Real> Default for Quadrature<T> {
    fn default() -> Self {
        Self::new(QuadratureScheme::default()).expect("default scheme is valid")
    }
}

impl<T: Real> Quadrature<T> {
    pub fn new(scheme: QuadratureScheme) -> Result<Self> {
        scheme.validate()?;
        Ok(Self {
            scheme,
            jacobi: RwLock::new(HashMap::new()),
        })
    }

    pub fn scheme(&self) -> &QuadratureScheme {
        &self.scheme
    }

    /// Cached Jacobi rule on [0,1] with weight x^a (1-x)^b.
    pub fn jacobi_rule(&self, n: usize, a: T, b: T) -> Result<Arc<Rule<T>>> {
        let key = (n, to_f64(a).to_bits(), to_f64(b).to_bits());
        if let Some(r) = self.jacobi.read().expect("rule cache poisoned").get(&key) {
            return Ok(r.clone());
        }
        let rule = Arc::new(if a == T::zero() && b == T::zero() {
            gauss_legendre(n)?
        } else {
            gauss_jacobi(n, a, b)?
        });
        self.jacobi
            .write()
            .expect("rule cache poisoned")
            .insert(key, rule.clone());
        Ok(rule)
    }

    /// ∫ₛᵗ f(u) du where f(u) ~ (u-s)^a near s and ~ (t-u)^b near t.
    pub fn integrate_time<F>(&self, f: F, s: T, t: T, a: T, b: T) -> Result<IntegrationReport<T>>
    where
        F: FnMut(T) -> T,
    {
        self.integrate_singular(f, s, t, a, b, &[])
    }

    /// Like [`integrate_time`](Self::integrate_time), additionally splitting at
    /// interior singular points and treating each as a weighted endpoint.
    pub fn integrate_singular<F>(
        &self,
        mut f: F,
        s: T,
        t: T,
        a: T,
        b: T,
        interior: &[Singularity<T>],
    ) -> Result<IntegrationReport<T>>
    where
        F: FnMut(T) -> T,
    {
        self.integrate_with_inner_error(|u, _| Ok((f(u), T::zero())), s, t, a, b, interior)
    }

    /// Fallible-integrand variant of [`integrate_singular`](Self::integrate_singular).
    pub fn try_integrate_singular<F>(
        &self,
        mut f: F,
        s: T,
        t: T,
        a: T,
        b: T,
        interior: &[Singularity<T>],
    ) -> Result<IntegrationReport<T>>
    where
        F: FnMut(T) -> Result<T>,
    {
        self.integrate_with_inner_error(|u, _| Ok((f(u)?, T::zero())), s, t, a, b, interior)
    }

    /// Integrand returning (value, error of that value); the inner errors are
    /// integrated with the absolute weights and added to the rule error.
    /// The flag tells the integrand whether its error is used (fine nodes)
    /// or only its value (companion nodes).
    pub fn integrate_with_inner_error<F>(
        &self,
        mut f: F,
        s: T,
        t: T,
        a: T,
        b: T,
        interior: &[Singularity<T>],
    ) -> Result<IntegrationReport<T>>
    where
        F: FnMut(T, bool) -> Result<(T, T)>,
    {
        let pieces = split_interval(s, t, a, b, interior)?;
        let mut total = IntegrationReport::zero();
        for (lo, hi, ea, eb) in pieces {
            let r = self.integrate_piece(&mut f, lo, hi, ea, eb)?;
            total.value = total.value + r.value;
            total.error = total.error + r.error;
            total.evaluations += r.evaluations;
        }
        Ok(total)
    }

    /// Weighted nodes (fine, half-order) with Σ W f(u) ≈ ∫ₛᵗ f for
    /// f ~ (u-s)^a (t-u)^b g(u), g smooth.
    pub fn time_nodes(&self, s: T, t: T, a: T, b: T) -> Result<(Vec<(T, T)>, Vec<(T, T)>)> {
        let minus_one = -T::one();
        if !(a > minus_one) {
            return Err(Error::DivergentIntegral { exponent: to_f64(a) });
        }
        if !(b > minus_one) {
            return Err(Error::DivergentIntegral { exponent: to_f64(b) });
        }
        if !(t > s) {
            return Err(Error::Precondition(format!("time integral needs s < t, got ({s}, {t})")));
        }
        match self.scheme.time {
            TimeRule::JacobiWeighted { nodes } => {
                let fine = self.jacobi_nodes(nodes, s, t, a, b)?;
                let coarse = self.jacobi_nodes((nodes / 2).max(1), s, t, a, b)?;
                Ok((fine, coarse))
            }
            TimeRule::GradedMesh {
                grading,
                panels,
                order,
            } => {
                let zero = T::zero();
                let grading: T = lit(grading);
                let mut fine = Vec::new();
                let mut coarse = Vec::new();
                let halves: Vec<(T, T, T, bool)> = match (a != zero, b != zero) {
                    (false, false) => vec![(s, t, zero, true)],
                    (true, false) => vec![(s, t, a, true)],
                    (false, true) => vec![(t, s, b, false)],
                    (true, true) => {
                        let mid = s + (t - s) * lit(0.5);
                        vec![(s, mid, a, true), (t, mid, b, false)]
                    }
                };
                let per_half = if halves.len() == 2 { panels.div_ceil(2) } else { panels };
                for (anchor, far, e, _) in halves {
                    self.graded_nodes(anchor, far, e, grading, per_half, order, &mut fine)?;
                    self.graded_nodes(anchor, far, e, grading, per_half, (order / 2).max(1), &mut coarse)?;
                }
                Ok((fine, coarse))
            }
        }
    }

    fn jacobi_nodes(&self, n: usize, s: T, t: T, a: T, b: T) -> Result<Vec<(T, T)>> {
        let rule = self.jacobi_rule(n, a, b)?;
        let h = t - s;
        let zero = T::zero();
        let scale = h.powf(T::one() + a + b);
        Ok(rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| {
                let u = s + h * x;
                // divide out the weights absorbed by the rule
                let mut wt = w * scale;
                if a != zero {
                    wt = wt / (h * x).powf(a);
                }
                if b != zero {
                    wt = wt / (h * (T::one() - x)).powf(b);
                }
                (u, wt)
            })
            .collect())
    }

    /// Substitution u = anchor + (far-anchor)·x^p with p = grading/(1+e):
    /// the transformed integrand behaves like x^{grading-1}, so uniform
    /// Gauss panels in x converge at the rule's full order.
    #[allow(clippy::too_many_arguments)]
    fn graded_nodes(
        &self,
        anchor: T,
        far: T,
        e: T,
        grading: T,
        panels: usize,
        order: usize,
        out: &mut Vec<(T, T)>,
    ) -> Result<()> {
        let p = if e == T::zero() { T::one() } else { grading / (T::one() + e) };
        let h = far - anchor;
        let rule = self.jacobi_rule(order, T::zero(), T::zero())?;
        let pw = T::one() / from_usize::<T>(panels);
        for j in 0..panels {
            let x0 = from_usize::<T>(j) * pw;
            for (&y, &w) in rule.nodes.iter().zip(&rule.weights) {
                let x = x0 + pw * y;
                let u = anchor + h * x.powf(p);
                let jac = (h * p * x.powf(p - T::one())).abs();
                out.push((u, w * pw * jac));
            }
        }
        Ok(())
    }

    fn integrate_piece<F>(&self, f: &mut F, s: T, t: T, a: T, b: T) -> Result<IntegrationReport<T>>
    where
        F: FnMut(T, bool) -> Result<(T, T)>,
    {
        let (fine, coarse) = self.time_nodes(s, t, a, b)?;
        let zero = T::zero();
        let mut fine_sum = zero;
        let mut coarse_sum = zero;
        let mut abs_sum = zero;
        let mut inner = zero;
        for (set, is_fine) in [(&fine, true), (&coarse, false)] {
            for &(u, w) in set.iter() {
                let (fu, eu) = f(u, is_fine)?;
                if !fu.is_finite() {
                    return Err(Error::numeric_at("non-finite integrand", format!("u={u}")));
                }
                if is_fine {
                    fine_sum = fine_sum + w * fu;
                    abs_sum = abs_sum + (w * fu).abs();
                    inner = inner + w.abs() * eu;
                } else {
                    coarse_sum = coarse_sum + w * fu;
                }
            }
        }
        let floor = lit::<T>(16.0) * T::epsilon() * abs_sum;
        Ok(IntegrationReport {
            value: fine_sum,
            error: (fine_sum - coarse_sum).abs() + floor + inner,
            evaluations: (fine.len() + coarse.len()) as u64,
        })
    }

    /// Nodes for a space integral over `space`, refined around `foci`.
    pub fn space_nodes(&self, space: &StateSpace<T>, foci: &[Focus<T>]) -> SpaceNodes<T> {
        let bounds = space.axis_bounds();
        if bounds.is_empty() {
            let single = vec![(State::origin(), T::one())];
            return SpaceNodes {
                fine: single.clone(),
                coarse: single,
            };
        }
        let axes: Vec<(Vec<(T, T)>, Vec<(T, T)>)> = bounds
            .iter()
            .enumerate()
            .map(|(axis, &(lo, hi))| self.axis_nodes(lo, hi, axis, foci))
            .collect();
        if axes.len() == 1 {
            let (f, c) = &axes[0];
            let wrap = |v: &Vec<(T, T)>| v.iter().map(|&(x, w)| (State::on_line(x), w)).collect();
            SpaceNodes {
                fine: wrap(f),
                coarse: wrap(c),
            }
        } else {
            let tensor = |xs: &Vec<(T, T)>, ys: &Vec<(T, T)>| {
                xs.iter()
                    .flat_map(|&(x, wx)| ys.iter().map(move |&(y, wy)| (State::in_plane(x, y), wx * wy)))
                    .collect()
            };
            SpaceNodes {
                fine: tensor(&axes[0].0, &axes[1].0),
                coarse: tensor(&axes[0].1, &axes[1].1),
            }
        }
    }

    fn axis_nodes(&self, lo: T, hi: T, axis: usize, foci: &[Focus<T>]) -> (Vec<(T, T)>, Vec<(T, T)>) {
        match self.scheme.space {
            SpaceRule::Trapezoid { mesh } => (trapezoid(lo, hi, mesh), trapezoid(lo, hi, mesh.div_ceil(2).max(2))),
            SpaceRule::GaussLegendre {
                nodes_per_panel,
                panels,
            } => {
                let edges = focused_edges(lo, hi, axis, panels, foci);
                let fine = self.jacobi_rule(nodes_per_panel, T::zero(), T::zero()).expect("legendre");
                let coarse = self
                    .jacobi_rule((nodes_per_panel / 2).max(1), T::zero(), T::zero())
                    .expect("legendre");
                let apply = |rule: &Rule<T>| {
                    let mut out = Vec::with_capacity((edges.len() - 1) * rule.len());
                    for w in edges.windows(2) {
                        let h = w[1] - w[0];
                        for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
                            out.push((w[0] + h * x, wt * h));
                        }
                    }
                    out
                };
                (apply(&fine), apply(&coarse))
            }
        }
    }

    /// ∫_X g dm over the truncated space; `tail` (e.g. a kernel's analytic
    /// tail-mass bound times sup|g|) is added to the error estimate.
    pub fn integrate_space<F>(
        &self,
        mut g: F,
        space: &StateSpace<T>,
        foci: &[Focus<T>],
        tail: T,
    ) -> Result<IntegrationReport<T>>
    where
        F: FnMut(&State<T>) -> T,
    {
        let nodes = self.space_nodes(space, foci);
        let mut eval = |set: &[(State<T>, T)]| -> Result<(T, T)> {
            let mut acc = T::zero();
            let mut abs = T::zero();
            for (z, w) in set {
                let v = g(z);
                if !v.is_finite() {
                    return Err(Error::numeric_at("non-finite space integrand", format!("z={z}")));
                }
                acc = acc + *w * v;
                abs = abs + (*w * v).abs();
            }
            Ok((acc, abs))
        };
        let (fine, abs) = eval(&nodes.fine)?;
        if space.dim() == 0 {
            return Ok(IntegrationReport {
                value: fine,
                error: T::zero(),
                evaluations: 1,
            });
        }
        let (coarse, _) = eval(&nodes.coarse)?;
        Ok(IntegrationReport {
            value: fine,
            error: (fine - coarse).abs() + lit::<T>(16.0) * T::epsilon() * abs + tail.abs(),
            evaluations: (nodes.fine.len() + nodes.coarse.len()) as u64,
        })
    }
}

/// Splits (s,t) at interior singular points; returns (lo, hi, left exp, right exp).
fn split_interval<T: Real>(
    s: T,
    t: T,
    a: T,
    b: T,
    interior: &[Singularity<T>],
) -> Result<Vec<(T, T, T, T)>> {
    if !(t > s) {
        return Err(Error::Precondition(format!("time integral needs s < t, got ({s}, {t})")));
    }
    let span = t - s;
    let close = span * lit(1e-12);
    let mut left = a;
    let mut right = b;
    let mut inner: Vec<Singularity<T>> = Vec::new();
    for sing in interior {
        if (sing.time - s).abs() <= close {
            left = left + sing.exponent;
        } else if (sing.time - t).abs() <= close {
            right = right + sing.exponent;
        } else if sing.time > s && sing.time < t {
            inner.push(*sing);
        }
    }
    inner.sort_by(|x, y| x.time.partial_cmp(&y.time).unwrap_or(std::cmp::Ordering::Equal));
    let mut pieces = Vec::with_capacity(inner.len() + 1);
    let mut lo = s;
    let mut ea = left;
    for sing in inner {
        pieces.push((lo, sing.time, ea, sing.exponent));
        lo = sing.time;
        ea = sing.exponent;
    }
    pieces.push((lo, t, ea, right));
    Ok(pieces)
}

fn focused_edges<T: Real>(lo: T, hi: T, axis: usize, panels: usize, foci: &[Focus<T>]) -> Vec<T> {
    let span = hi - lo;
    let mut pts = vec![lo, hi];
    for f in foci {
        let c = f.center.0[axis];
        if !(f.width > T::zero()) || !f.width.is_finite() || !c.is_finite() {
            continue;
        }
        for &m in FOCUS_MULTIPLES.iter() {
            for sign in [-1.0, 1.0] {
                let p = c + f.width * lit(m * sign);
                if p > lo && p < hi {
                    pts.push(p);
                }
            }
        }
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let tol = span * lit(1e-12);
    pts.dedup_by(|x, y| (*x - *y).abs() <= tol);
    let max_w = span / from_usize::<T>(panels.max(1));
    let mut edges = vec![pts[0]];
    for w in pts.windows(2) {
        let gap = w[1] - w[0];
        let pieces = (gap / max_w).ceil().to_usize().unwrap_or(1).max(1);
        for j in 1..=pieces {
            edges.push(w[0] + gap * from_usize::<T>(j) / from_usize::<T>(pieces));
        }
    }
    *edges.last_mut().expect("non-empty") = hi;
    edges
}

fn trapezoid<T: Real>(lo: T, hi: T, mesh: usize) -> Vec<(T, T)> {
    let n = mesh.max(2);
    let h = (hi - lo) / from_usize::<T>(n - 1);
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 { h * lit(0.5) } else { h };
            (lo + h * from_usize::<T>(i), w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{beta_fn, gamma};
    use std::f64::consts::PI;

    fn jacobi(n: usize) -> Quadrature<f64> {
        Quadrature::new(QuadratureScheme {
            time: TimeRule::JacobiWeighted { nodes: n },
            ..Default::default()
        })
        .unwrap()
    }

    fn graded(panels: usize) -> Quadrature<f64> {
        Quadrature::new(QuadratureScheme {
            time: TimeRule::GradedMesh {
                grading: 3.0,
                panels,
                order: 4,
            },
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn arcsine_integral_is_pi() {
        let q = jacobi(64);
        let r = q
            .integrate_time(|u| u.powf(-0.5) * (1.0 - u).powf(-0.5), 0.0, 1.0, -0.5, -0.5)
            .unwrap();
        assert!((r.value - PI).abs() / PI < 1e-10);
        assert!((r.value - PI).abs() <= 10.0 * r.error);
    }

    #[test]
    fn constant_integrand() {
        let r = jacobi(64).integrate_time(|_| 1.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-14);
    }

    #[test]
    fn beta_three_quarters_half() {
        let want = gamma(0.75f64) * gamma(0.5) / gamma(1.25);
        for q in [jacobi(64), graded(32)] {
            let r = q
                .integrate_time(|u| u.powf(-0.25) * (1.0 - u).powf(-0.5), 0.0, 1.0, -0.25, -0.5)
                .unwrap();
            assert!((r.value - want).abs() / want < 1e-8, "{}", r.value);
            assert!((r.value - want).abs() <= 10.0 * r.error);
        }
    }

    #[test]
    fn divergent_exponent_rejected() {
        let r = jacobi(8).integrate_time(|u| 1.0 / u, 0.0, 1.0, -1.0, 0.0);
        assert!(matches!(r, Err(Error::DivergentIntegral { .. })));
    }

    #[test]
    fn non_finite_integrand_is_numeric_error() {
        let r = jacobi(8).integrate_time(|u| if u > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 0.0, 0.0);
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }

    #[test]
    fn graded_rule_converges_on_smooth_times_singular() {
        let f = |u: f64| u.powf(-0.5) * u.exp();
        let exact = jacobi(40).integrate_time(f, 0.0, 1.0, -0.5, 0.0).unwrap().value;
        let mut prev = f64::INFINITY;
        for p in [2, 4, 8, 16] {
            let r = graded(p).integrate_time(f, 0.0, 1.0, -0.5, 0.0).unwrap();
            let e = (r.value - exact).abs();
            assert!(e <= 10.0 * r.error);
            if prev > 1e-13 {
                assert!(e <= prev / 4.0 || e < 1e-13, "p={p} e={e} prev={prev}");
            }
            prev = e;
        }
    }

    #[test]
    fn graded_beta_integral_converges() {
        let want = gamma(0.75f64) * gamma(0.5) / gamma(1.25);
        let f = |u: f64| u.powf(-0.25) * (1.0 - u).powf(-0.5);
        let mut prev = f64::INFINITY;
        for p in [4, 8, 16, 32] {
            let r = graded(p).integrate_time(f, 0.0, 1.0, -0.25, -0.5).unwrap();
            let e = (r.value - want).abs();
            assert!(e <= 10.0 * r.error);
            assert!(e <= prev / 4.0 || e < 1e-13, "p={p} e={e} prev={prev}");
            prev = e;
        }
    }

    #[test]
    fn interior_singularity_is_split() {
        // ∫_{-1}^{1} |u|^{-1/2} du = 4
        let r = jacobi(16)
            .integrate_singular(
                |u: f64| u.abs().powf(-0.5),
                -1.0,
                1.0,
                0.0,
                0.0,
                &[Singularity {
                    time: 0.0,
                    exponent: -0.5,
                }],
            )
            .unwrap();
        assert!((r.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity_adds_exponents() {
        // ∫₀¹ u^{-1/2} u^{-1/4} du = 4
        let r = jacobi(8)
            .integrate_singular(
                |u: f64| u.powf(-0.75),
                0.0,
                1.0,
                -0.5,
                0.0,
                &[Singularity {
                    time: 0.0,
                    exponent: -0.25,
                }],
            )
            .unwrap();
        assert!((r.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn space_single_point_is_counting_measure() {
        let q = jacobi(8);
        let r = q
            .integrate_space(|_| 3.5, &StateSpace::single_point(), &[], 0.0)
            .unwrap();
        assert_eq!(r.value, 3.5);
    }

    #[test]
    fn space_normal_density() {
        let q = jacobi(8);
        let space = StateSpace::real_line(8.0, 16).unwrap();
        let phi = |z: &State<f64>| (-(z.x() * z.x()) / 2.0).exp() / (2.0 * PI).sqrt();
        let tail = crate::special::erfc_bound(8.0 / 2f64.sqrt());
        let r = q.integrate_space(phi, &space, &[], tail).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        let zero = q.integrate_space(|_| 0.0, &space, &[], 0.0).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn narrow_peak_resolved_by_focus() {
        let q = jacobi(8);
        let space = StateSpace::real_line(10.0, 8).unwrap();
        let w = 1e-4;
        let g = |z: &State<f64>| (-(z.x() - 0.3).powi(2) / (2.0 * w * w)).exp() / (w * (2.0 * PI).sqrt());
        let focus = Focus {
            center: State::on_line(0.3),
            width: w,
        };
        let r = q.integrate_space(g, &space, &[focus], 0.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn plane_tensor_rule() {
        let q = jacobi(8);
        let space = StateSpace::plane(1.0, 4).unwrap();
        let r = q
            .integrate_space(|z| z.0[0] * z.0[0] + z.0[1] * z.0[1], &space, &[], 0.0)
            .unwrap();
        assert!((r.value - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn beta_function_oracle_in_f32() {
        let q: Quadrature<f32> = Quadrature::new(QuadratureScheme {
            time: TimeRule::JacobiWeighted { nodes: 16 },
            ..Default::default()
        })
        .unwrap();
        let r = q
            .integrate_time(|u| u.powf(-0.5) * (1.0 - u).powf(-0.5), 0.0, 1.0, -0.5, -0.5)
            .unwrap();
        assert!((r.value - beta_fn(0.5f32, 0.5)).abs() < 1e-4);
    }
}
