use super::{FracOrder, Rules, TestFunction, Upper, Weight, WeylInput, WeylScheme};
use crate::analysis::{envelope, tail_sum, Certificate, NOISE_FACTOR};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, State};
use crate::scalar::{from_usize, lit, Real};
use crate::series::SeriesEngine;
use crate::special::gamma;
use rayon::prelude::*;

/// 21 points from a - (b-a) to b + (b-a)/4: left of, inside and right of
/// the support.
pub fn default_s_grid<T: Real>(phi: &TestFunction<T>) -> Vec<T> {
    let (a, b) = phi.support();
    let len = b - a;
    let lo = a - len;
    let hi = b + len * lit(0.25);
    (0..=20).map(|i| lo + (hi - lo) * from_usize::<T>(i) / lit(20.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport<T> {
    pub beta: T,
    pub scheme: WeylScheme,
    /// (s, |left side + φ(s)|)
    pub per_s: Vec<(T, T)>,
    /// max residual plus certified truncation tail, divided by ‖φ‖∞
    /// (raw values when φ ≡ 0)
    pub max_residual: T,
    /// max over s of the certified contribution of the dropped terms n > N,
    /// divided by ‖φ‖∞
    pub tail: T,
    /// max over quadrature nodes of κ̃_N / (κ · envelope)
    pub envelope_ratio: Option<T>,
    /// nodes where κ̃_N exceeds κ · envelope beyond noise
    pub envelope_violations: usize,
    pub order: usize,
}

/// Σ_{n=1}^{N} k_n with its error, the control pair and the potential.
struct Perturbation<'a, T: Real> {
    engine: &'a SeriesEngine<T>,
    cert: &'a Certificate<T>,
    order: usize,
}

struct Node<T> {
    /// ∫ weight × factor, w includes (u-s)^{β-1}
    w: T,
    u: T,
    /// κ̃_N(s,u) / (u-s)^{β-1}
    factor: T,
    /// Σ_{n≥1} k_n (u-s)^{1-β} and its error
    extra: T,
    extra_err: T,
}

impl<'a, T: Real> Perturbation<'a, T> {
    fn q(&self, u: T) -> T {
        self.engine.potential().eval(u, &State::origin())
    }
}

/// Outer mesh of ∫ₛ^b κ̃_N(s,u) f(u) du; κ̃_N = κ without a perturbation.
fn outer_nodes<T: Real>(rules: &Rules<T>, s: T, hi: T, pert: Option<&Perturbation<T>>) -> Result<Vec<Node<T>>> {
    if !(hi > s) {
        return Ok(Vec::new());
    }
    let o = State::origin();
    rules
        .mesh(s, hi, Weight::Integral, false)
        .into_iter()
        .map(|(u, w)| {
            let (mut extra, mut extra_err) = (T::zero(), T::zero());
            if let Some(p) = pert {
                let lift = (u - s).powf(T::one() - rules.beta);
                for n in 1..=p.order {
                    let (v, e) = p.engine.eval_kn(n, s, &o, u, &o)?;
                    extra = extra + v * lift;
                    extra_err = extra_err + e * lift;
                }
            }
            Ok(Node {
                w,
                u,
                factor: rules.inv_gamma + extra,
                extra,
                extra_err,
            })
        })
        .collect()
}

struct Evaluated<T> {
    residual: T,
    tail: T,
    envelope_ratio: T,
    envelope_violations: usize,
}

/// The shared path of both residuals: ∫ₛ^b κ̃_N(s,u)[ψ(u) + q(u)φ(u)] du + φ(s).
fn residual_at<T: Real>(rules: &Rules<T>, phi: &TestFunction<T>, s: T, pert: Option<&Perturbation<T>>) -> Result<Evaluated<T>> {
    let b = phi.support().1;
    let nodes = outer_nodes(rules, s, b, pert)?;
    let mut sum = T::zero();
    let mut tail = T::zero();
    let mut ratio = T::zero();
    let mut violations = 0;
    for nd in &nodes {
        let q = pert.map_or(T::zero(), |p| p.q(nd.u));
        let h = rules.derivative(phi, nd.u, false) + q * phi.eval(nd.u);
        sum = sum + nd.w * nd.factor * h;
        if let Some(p) = pert {
            if !p.engine.potential().is_zero() {
                let ctl = &p.cert.control;
                let qq = ctl.q.eval(s, nd.u);
                let t = tail_sum(ctl.eta, qq, p.order)?;
                tail = tail + nd.w.abs() * rules.inv_gamma * t * h.abs();
                let env = rules.inv_gamma * envelope(ctl.eta, qq)?;
                ratio = ratio.max(nd.factor / env);
                if nd.factor - env > lit::<T>(NOISE_FACTOR) * nd.extra_err {
                    violations += 1;
                }
            } else {
                ratio = ratio.max(nd.factor / rules.inv_gamma);
            }
        }
    }
    Ok(Evaluated {
        residual: (sum + phi.eval(s)).abs(),
        tail,
        envelope_ratio: ratio,
        envelope_violations: violations,
    })
}

fn residual_report<T: Real>(
    phi: &TestFunction<T>,
    beta: FracOrder<T>,
    s_grid: &[T],
    scheme: &WeylScheme,
    pert: Option<&Perturbation<T>>,
) -> Result<ResidualReport<T>> {
    if s_grid.is_empty() {
        return Err(Error::Precondition("residual needs at least one s".into()));
    }
    let rules = Rules::new(beta, *scheme)?;
    let evals: Vec<Evaluated<T>> = s_grid
        .par_iter()
        .map(|&s| residual_at(&rules, phi, s, pert))
        .collect::<Result<_>>()?;
    let norm = phi.sup_norm();
    let scale = if norm > T::zero() { norm } else { T::one() };
    let raw = evals.iter().map(|e| e.residual).fold(T::zero(), T::max);
    let tail = evals.iter().map(|e| e.tail).fold(T::zero(), T::max);
    Ok(ResidualReport {
        beta: beta.get(),
        scheme: *scheme,
        per_s: s_grid.iter().zip(&evals).map(|(&s, e)| (s, e.residual)).collect(),
        max_residual: (raw + tail) / scale,
        tail: tail / scale,
        envelope_ratio: pert.map(|_| evals.iter().map(|e| e.envelope_ratio).fold(T::zero(), T::max)),
        envelope_violations: evals.iter().map(|e| e.envelope_violations).sum(),
        order: pert.map_or(0, |p| p.order),
    })
}

/// max over s of |W^{-β} ∂^β φ(s) + φ(s)| / ‖φ‖∞.
pub fn left_inverse_residual<T: Real>(
    phi: &TestFunction<T>,
    beta: FracOrder<T>,
    s_grid: &[T],
    scheme: &WeylScheme,
) -> Result<ResidualReport<T>> {
    residual_report(phi, beta, s_grid, scheme, None)
}

fn check_perturbation<T: Real>(
    engine: &SeriesEngine<T>,
    beta: FracOrder<T>,
    cert: &Certificate<T>,
    order: usize,
    span: T,
) -> Result<()> {
    match engine.kernel().family() {
        KernelFamily::Beta { beta: b, .. } if *b == beta.get() && engine.space().dim() == 0 => {}
        _ => {
            return Err(Error::Precondition(format!(
                "perturbed Weyl identity needs the beta({}) kernel on the one-point space",
                beta.get()
            )))
        }
    }
    if !cert.valid || !(cert.control.eta < T::one()) {
        return Err(Error::NoCertificate(format!(
            "certificate must be valid with eta < 1 (valid={}, eta={})",
            cert.valid, cert.control.eta
        )));
    }
    if order > engine.plan().order {
        return Err(Error::PlanViolation {
            requested: order,
            max: engine.plan().order,
        });
    }
    if cert.grid.horizon() < span {
        return Err(Error::Precondition(format!(
            "certificate horizon {} is shorter than the integration span {span}",
            cert.grid.horizon()
        )));
    }
    Ok(())
}

fn span<T: Real>(phi: &TestFunction<T>, s_grid: &[T]) -> T {
    let b = phi.support().1;
    s_grid.iter().map(|&s| b - s).fold(T::zero(), T::max)
}

fn interior_singularity<T: Real>(engine: &SeriesEngine<T>, lo: T, hi: T) -> Result<()> {
    if let Some(sg) = engine.potential().singular_times().iter().find(|sg| sg.time > lo && sg.time < hi) {
        return Err(Error::Precondition(format!(
            "potential is singular at u={} inside the integration range ({lo}, {hi})",
            sg.time
        )));
    }
    Ok(())
}

/// max over s of |∫ₛ^∞ κ̃_N(s,u)[∂^βφ(u) + q(u)φ(u)] du + φ(s)| / ‖φ‖∞,
/// plus the certified contribution of the terms beyond N. κ̃_N comes from
/// the series engine (β-kernel on the one-point space). With q ≡ 0 this is
/// the same computation as [`left_inverse_residual`].
pub fn perturbed_inverse_residual<T: Real>(
    phi: &TestFunction<T>,
    beta: FracOrder<T>,
    engine: &SeriesEngine<T>,
    certificate: &Certificate<T>,
    order: usize,
    s_grid: &[T],
    scheme: &WeylScheme,
) -> Result<ResidualReport<T>> {
    check_perturbation(engine, beta, certificate, order, span(phi, s_grid))?;
    let lo = s_grid.iter().copied().fold(T::infinity(), T::min);
    interior_singularity(engine, lo, phi.support().1)?;
    let pert = Perturbation {
        engine,
        cert: certificate,
        order,
    };
    residual_report(phi, beta, s_grid, scheme, Some(&pert))
}

/// Which absolute-integrability hypothesis the guard confirmed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Guard<T> {
    /// |ψ| ≤ c 1_(a,b)
    BoundedSupport { a: T, b: T, c: T },
    /// |ψ| ≤ c K1_(a,b), sampled
    KernelMajorant { a: T, b: T, c: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport<T> {
    pub guard: Guard<T>,
    /// max |Kψ + φ|: the premise Kψ = -φ
    pub premise: T,
    /// max |K̃_N qKqφ - (K̃_N - K)qφ|; the truncated resolvent equation
    /// leaves the n = N+1 term, so this tracks the tail
    pub resolvent: T,
    /// max |K̃_N(ψ + qφ) + φ|
    pub perturbed: T,
    /// all values divided by ‖φ‖∞ (raw when φ ≡ 0)
    pub normalized: bool,
}

/// Samples the majorant hypotheses for ψ. Bounded support suffices; else
/// ψ must vanish above some point and stay below c·K1_(a',b') with a' past
/// that point, checked on the grid and on a geometric far-left sequence
/// where the ratio may not grow.
fn guard<T: Real>(rules: &Rules<T>, psi: &WeylInput<T>, s_grid: &[T]) -> Result<Guard<T>> {
    let hi = match psi.upper {
        Upper::Support(hi) => hi,
        _ => {
            return Err(Error::Precondition(
                "hypothesis |psi| <= c K1_(a,b) fails: psi has no upper support bound".into(),
            ))
        }
    };
    let lo_grid = s_grid.iter().copied().fold(hi, T::min);
    if let Some(lo) = psi.lower {
        let c = s_grid
            .iter()
            .chain([lo, hi].iter())
            .map(|&s| psi.eval(s).abs())
            .fold(T::zero(), T::max);
        if c.is_finite() {
            return Ok(Guard::BoundedSupport { a: lo, b: hi, c });
        }
    }
    let a2 = hi + T::one();
    let b2 = a2 + T::one();
    let beta = rules.beta;
    let g1 = T::one() / gamma(beta + T::one());
    let k1 = |s: T| ((b2 - s).powf(beta) - (a2 - s).max(T::zero()).powf(beta)) * g1;
    let ratio = |s: T| psi.eval(s).abs() / k1(s);
    let mut c = T::zero();
    for &s in s_grid.iter().filter(|&&s| s < b2) {
        let r = ratio(s);
        if !r.is_finite() {
            return Err(Error::Precondition(format!(
                "hypothesis |psi| <= c K1_(a,b) fails: psi not finite at s={s}"
            )));
        }
        c = c.max(r);
    }
    let far: Vec<T> = (0..40).map(|j| lo_grid - lit::<T>(2.0).powi(j)).collect();
    let rs: Vec<T> = far.iter().map(|&s| ratio(s)).collect();
    if rs.iter().any(|r| !r.is_finite()) || rs[30..].windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Precondition(format!(
            "hypothesis |psi| <= c K1_(a,b) fails for (a,b)=({a2},{b2}): ratio grows toward -infinity"
        )));
    }
    c = rs.iter().copied().fold(c, T::max);
    Ok(Guard::KernelMajorant { a: a2, b: b2, c })
}

/// Kf(s) = Γ(β)^{-1} ∫ₛ^hi (u-s)^{β-1} f(u) du for f vanishing below lo.
fn apply_kernel<T: Real>(rules: &Rules<T>, f: &dyn Fn(T) -> T, lo: Option<T>, hi: T, s: T) -> T {
    let start = lo.map_or(s, |l| l.max(s));
    if !(hi > start) {
        return T::zero();
    }
    let sum: T = if start > s {
        rules
            .mesh(start, hi, Weight::None, false)
            .iter()
            .map(|(u, w)| *w * (*u - s).powf(rules.beta - T::one()) * f(*u))
            .sum()
    } else {
        rules.mesh(s, hi, Weight::Integral, false).iter().map(|(u, w)| *w * f(*u)).sum()
    };
    sum * rules.inv_gamma
}

/// Telescoping check K̃(ψ + qφ) = -φ given Kψ = -φ, on the one-point space
/// with the β-kernel. ψ must satisfy one of the majorant hypotheses that
/// make the rearrangement absolutely convergent; the guard only samples
/// them.
#[allow(clippy::too_many_arguments)]
pub fn algebraic_identity_check<T: Real>(
    phi: &TestFunction<T>,
    psi: &WeylInput<T>,
    beta: FracOrder<T>,
    engine: &SeriesEngine<T>,
    certificate: &Certificate<T>,
    order: usize,
    s_grid: &[T],
    scheme: &WeylScheme,
) -> Result<IdentityReport<T>> {
    let rules = Rules::new(beta, *scheme)?;
    let guard = guard(&rules, psi, s_grid)?;
    let hi = match psi.upper {
        Upper::Support(h) => h.max(phi.support().1),
        _ => unreachable!("guard requires an upper support bound"),
    };
    let span = s_grid.iter().map(|&s| hi - s).fold(T::zero(), T::max);
    check_perturbation(engine, beta, certificate, order, span)?;
    let lo = s_grid.iter().copied().fold(T::infinity(), T::min);
    interior_singularity(engine, lo, hi)?;
    let pert = Perturbation {
        engine,
        cert: certificate,
        order,
    };
    let (a, b) = phi.support();
    let qphi = |u: T| pert.q(u) * phi.eval(u);
    let rows: Vec<(T, T, T)> = s_grid
        .par_iter()
        .map(|&s| {
            let premise = (apply_kernel(&rules, &|u| psi.eval(u), psi.lower, hi, s) + phi.eval(s)).abs();
            let nodes = outer_nodes(&rules, s, hi, Some(&pert))?;
            let (mut lhs, mut rhs, mut pert_sum) = (T::zero(), T::zero(), T::zero());
            for nd in &nodes {
                let kqphi = apply_kernel(&rules, &qphi, Some(a), b, nd.u);
                lhs = lhs + nd.w * nd.factor * pert.q(nd.u) * kqphi;
                rhs = rhs + nd.w * nd.extra * qphi(nd.u);
                pert_sum = pert_sum + nd.w * nd.factor * (psi.eval(nd.u) + qphi(nd.u));
            }
            Ok((premise, (lhs - rhs).abs(), (pert_sum + phi.eval(s)).abs()))
        })
        .collect::<Result<_>>()?;
    let norm = phi.sup_norm();
    let scale = if norm > T::zero() { norm } else { T::one() };
    let max = |f: fn(&(T, T, T)) -> T| rows.iter().map(f).fold(T::zero(), T::max) / scale;
    Ok(IdentityReport {
        guard,
        premise: max(|r| r.0),
        resolvent: max(|r| r.1),
        perturbed: max(|r| r.2),
        normalized: norm > T::zero(),
    })
}
