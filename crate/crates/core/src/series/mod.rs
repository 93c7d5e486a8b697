//! Perturbation series k_n = ∫∫ k_{n-1} q κ and truncated sums k̃_N.
//!
//! Terms are computed by the m = 0 recursion. Intermediate k_{n-1}(s,x;·,·)
//! are tabulated per source on a graded time mesh and interpolated (see
//! [`table`]); the split ∫∫ k_{n-1-m} q k_m is only used as a cross-check.

mod engine;
mod table;

pub use engine::SeriesEngine;

use crate::analysis::{tail_sum, ControlPair};
use crate::error::{Error, Result};
use crate::grid::{GridPair, SpaceTimeGrid};
use crate::kernels::{KernelDensity, Potential, State, StateSpace};
use crate::quadrature::Quadrature;
use crate::scalar::{from_usize, to_f64, KahanSum, Real};
use crate::special::{gamma, mittag_leffler};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// How k_{n-1} is made available inside the integral for k_n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoPolicy {
    /// Interpolation tables per source and level (default).
    Tabulate,
    /// Nested quadrature without tables. Cost grows like nodesⁿ; only
    /// sensible for n ≤ 3.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecursionPlan {
    /// Largest order N.
    pub order: usize,
    /// Time nodes per table level (spread over the table's horizon).
    pub table_time_nodes: usize,
    /// Similarity-coordinate nodes per space axis in a table.
    pub table_space_nodes: usize,
    /// Grading exponent of the table time mesh toward the anchor.
    pub grading: f64,
    pub memo: MemoPolicy,
    /// Stop before N once the certified relative tail drops below
    /// `tail_tolerance` (needs a control pair).
    pub early_stop: bool,
    pub tail_tolerance: f64,
}

impl Default for RecursionPlan {
    fn default() -> Self {
        Self {
            order: 12,
            table_time_nodes: 24,
            table_space_nodes: 48,
            grading: 3.0,
            memo: MemoPolicy::Tabulate,
            early_stop: true,
            tail_tolerance: 1e-10,
        }
    }
}

impl RecursionPlan {
    pub fn with_order(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.table_time_nodes < 4 || self.table_space_nodes < 4 {
            return Err(Error::Domain("table meshes need at least 4 nodes".into()));
        }
        if !(self.grading >= 1.0) {
            return Err(Error::Domain(format!("table grading must be >= 1, got {}", self.grading)));
        }
        if !(self.tail_tolerance > 0.0) {
            return Err(Error::Domain("tail tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// qⁿ(t-s)^{(n+1)β-1}/Γ((n+1)β): k_n for the β-kernel and constant q.
pub fn beta_kernel_closed_form<T: Real>(beta: T, q0: T, n: usize, s: T, t: T) -> Result<T> {
    check_beta_args(beta, q0, s, t)?;
    let a = from_usize::<T>(n + 1) * beta;
    Ok(q0.powi(n as i32) * (t - s).powf(a - T::one()) / gamma(a))
}

/// (t-s)^{β-1} E_{β,β}(q(t-s)^β): the full perturbed β-kernel.
pub fn beta_kernel_full_sum<T: Real>(beta: T, q0: T, s: T, t: T) -> Result<T> {
    check_beta_args(beta, q0, s, t)?;
    let dt = t - s;
    Ok(dt.powf(beta - T::one()) * mittag_leffler(beta, beta, q0 * dt.powf(beta)))
}

fn check_beta_args<T: Real>(beta: T, q0: T, s: T, t: T) -> Result<()> {
    if !(beta > T::zero() && beta < T::one()) {
        return Err(Error::Domain(format!("beta must lie in (0,1), got {beta}")));
    }
    if !(q0 >= T::zero()) || !q0.is_finite() {
        return Err(Error::Domain(format!("q0 must be finite and >= 0, got {q0}")));
    }
    if !(t > s) {
        return Err(Error::Precondition(format!("needs s < t, got s={s}, t={t}")));
    }
    Ok(())
}

/// k_n and its error estimate at one point (builds a throwaway engine).
#[allow(clippy::too_many_arguments)]
pub fn eval_kn<T: Real>(
    kernel: &KernelDensity<T>,
    potential: &Potential<T>,
    space: &StateSpace<T>,
    n: usize,
    s: T,
    x: &State<T>,
    t: T,
    y: &State<T>,
    plan: &RecursionPlan,
    quad: &Quadrature<T>,
) -> Result<(T, T)> {
    SeriesEngine::new(kernel, potential, space, plan, quad)?.eval_kn(n, s, x, t, y)
}

/// Series terms and partial sums at one grid pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesEntry<T> {
    pub s: T,
    pub x: State<T>,
    pub t: T,
    pub y: State<T>,
    pub terms: Vec<T>,
    pub errors: Vec<T>,
    /// partial_sums[n] = Σ_{m≤n} terms[m], accumulated left to right.
    pub partial_sums: Vec<T>,
    /// k_n/k_{n-1} > 1 for three consecutive n: no comparability claim.
    pub divergence_flag: bool,
    /// k₀·Σ_{n>N} ∏_{k≤n}(η+Q/k) when a control pair was supplied.
    pub truncation_bound: Option<T>,
}

impl<T: Real> SeriesEntry<T> {
    /// k̃_N for the computed N.
    pub fn sum(&self) -> T {
        *self.partial_sums.last().expect("k0 always present")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable<T> {
    pub entries: Vec<SeriesEntry<T>>,
    /// Highest order actually computed.
    pub order: usize,
    pub stopped_early: bool,
    pub evaluations: u64,
    pub truncation_radius: Option<T>,
    pub dim: usize,
    pub kernel: String,
    pub potential: String,
}

impl<T: Real> SeriesTable<T> {
    /// Rows (s,x,t,y,n,value,err) in lexicographic (s,t,x,y,n) order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["s", "x", "t", "y", "n", "value", "err"]).map_err(io)?;
        for e in &self.entries {
            for n in 0..e.terms.len() {
                w.write_record([
                    fmt_num(e.s),
                    e.x.display(self.dim),
                    fmt_num(e.t),
                    e.y.display(self.dim),
                    n.to_string(),
                    fmt_num(e.terms[n]),
                    fmt_num(e.errors[n]),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let f = |v: T| serde_json::json!(to_f64(v));
        let state = |z: &State<T>| match self.dim {
            0 => serde_json::json!([]),
            1 => serde_json::json!([to_f64(z.0[0])]),
            _ => serde_json::json!([to_f64(z.0[0]), to_f64(z.0[1])]),
        };
        let entries: Vec<_> = self
            .entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "s": f(e.s),
                    "x": state(&e.x),
                    "t": f(e.t),
                    "y": state(&e.y),
                    "terms": e.terms.iter().map(|&v| to_f64(v)).collect::<Vec<_>>(),
                    "errors": e.errors.iter().map(|&v| to_f64(v)).collect::<Vec<_>>(),
                    "partial_sums": e.partial_sums.iter().map(|&v| to_f64(v)).collect::<Vec<_>>(),
                    "sum": f(e.sum()),
                    "divergence_flag": e.divergence_flag,
                    "truncation_bound": e.truncation_bound.map(to_f64),
                })
            })
            .collect();
        serde_json::json!({
            "kernel": self.kernel,
            "potential": self.potential,
            "order": self.order,
            "stopped_early": self.stopped_early,
            "evaluations": self.evaluations,
            "truncation_radius": self.truncation_radius.map(to_f64),
            "entries": entries,
        })
    }
}

fn fmt_num<T: Real>(v: T) -> String {
    format!("{:e}", to_f64(v))
}

/// Worst disagreement between k_n from the (n-1-m, m) split and from the
/// m = 0 recursion over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport<T> {
    pub n: usize,
    pub m: usize,
    pub max_relative: T,
    /// max |split - primary| / (err_split + err_primary); 0 where both agree exactly.
    pub max_error_ratio: T,
    /// Sum of both error estimates at the pair attaining max_relative.
    pub aggregated_error: T,
    pub location: Option<GridPair<T>>,
}

impl<T: Real> SeriesEngine<T> {
    /// All terms k_0..k_N on every grid pair, with partial sums.
    ///
    /// With a control pair (assumed certified by the caller) each entry gets
    /// a truncation bound and, if the plan allows, the computation stops as
    /// soon as the relative tail bound is below the plan tolerance everywhere.
    pub fn eval_series(&self, grid: &SpaceTimeGrid<T>, control: Option<&ControlPair<T>>) -> Result<SeriesTable<T>> {
        let start_evals = self.evaluations();
        let pairs = grid.pairs();
        let last = *grid.times().last().expect("grid has times");
        let plan = self.plan().clone();
        let tol = T::from_f64(plan.tail_tolerance).unwrap_or_else(T::epsilon);

        let mut terms: Vec<Vec<T>> = pairs
            .iter()
            .map(|p| vec![self.kernel().eval(p.s, &p.x, p.t, &p.y)])
            .collect();
        let mut errors: Vec<Vec<T>> = pairs.iter().map(|_| vec![T::zero()]).collect();
        let mut sums: Vec<KahanSum<T>> = terms
            .iter()
            .map(|v| {
                let mut k = KahanSum::new();
                k.add(v[0]);
                k
            })
            .collect();

        let mut sources: BTreeMap<(u64, u64, u64), (T, State<T>)> = BTreeMap::new();
        for p in &pairs {
            let key = (to_f64(p.s).to_bits(), to_f64(p.x.0[0]).to_bits(), to_f64(p.x.0[1]).to_bits());
            sources.insert(key, (p.s, p.x));
        }
        let sources: Vec<(T, State<T>)> = sources.into_values().collect();

        let mut order = 0;
        let mut stopped_early = false;
        for n in 1..=plan.order {
            if let Some(c) = control.filter(|_| plan.early_stop && n > 1) {
                let mut worst = T::zero();
                for (i, p) in pairs.iter().enumerate() {
                    let q = c.q.eval(p.s, p.t);
                    let tail = terms[i][0] * tail_sum(c.eta, q, n - 1)?;
                    let total = sums[i].value();
                    if total > T::zero() {
                        worst = worst.max(tail / total);
                    }
                }
                if worst < tol {
                    stopped_early = true;
                    break;
                }
            }
            if self.potential().is_zero() {
                for i in 0..pairs.len() {
                    terms[i].push(T::zero());
                    errors[i].push(T::zero());
                }
                order = n;
                continue;
            }
            if n >= 2 && plan.memo == MemoPolicy::Tabulate {
                sources
                    .par_iter()
                    .map(|(s, x)| self.forward_stack(*s, x, last - *s, n - 1).map(|_| ()))
                    .collect::<Result<Vec<_>>>()?;
            }
            let level: Vec<(T, T)> = pairs
                .par_iter()
                .map(|p| {
                    self.eval_kn(n, p.s, &p.x, p.t, &p.y)
                        .map_err(|e| e.located(format!("grid pair s={}, x={}, t={}, y={}", p.s, p.x, p.t, p.y)))
                })
                .collect::<Result<Vec<_>>>()?;
            for (i, (v, e)) in level.into_iter().enumerate() {
                terms[i].push(v);
                errors[i].push(e);
                sums[i].add(v);
            }
            order = n;
        }

        let entries = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let ts = std::mem::take(&mut terms[i]);
                let mut partial = Vec::with_capacity(ts.len());
                let mut acc = T::zero();
                for &v in &ts {
                    acc = acc + v;
                    partial.push(acc);
                }
                let mut run = 0;
                let mut divergence_flag = false;
                for w in ts.windows(2) {
                    if w[0] > T::zero() && w[1] > w[0] {
                        run += 1;
                        if run >= 3 {
                            divergence_flag = true;
                        }
                    } else {
                        run = 0;
                    }
                }
                let truncation_bound = match control {
                    Some(c) => Some(ts[0] * tail_sum(c.eta, c.q.eval(p.s, p.t), order)?),
                    None => None,
                };
                Ok(SeriesEntry {
                    s: p.s,
                    x: p.x,
                    t: p.t,
                    y: p.y,
                    terms: ts,
                    errors: std::mem::take(&mut errors[i]),
                    partial_sums: partial,
                    divergence_flag,
                    truncation_bound,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(SeriesTable {
            entries,
            order,
            stopped_early,
            evaluations: self.evaluations() - start_evals,
            truncation_radius: self.space().truncation_radius(),
            dim: self.space().dim(),
            kernel: self.kernel().label().to_string(),
            potential: self.potential().label().to_string(),
        })
    }

    /// Compares the (n-1-m, m) split with the primary recursion on every
    /// grid pair.
    pub fn splitting_check(&self, n: usize, m: usize, grid: &SpaceTimeGrid<T>) -> Result<SplitReport<T>> {
        if n == 0 || n > self.plan().order || m + 1 > n {
            if n > self.plan().order {
                return Err(Error::PlanViolation {
                    requested: n,
                    max: self.plan().order,
                });
            }
            return Err(Error::Precondition(format!(
                "split needs 1 <= n and 0 <= m <= n-1, got n={n}, m={m}"
            )));
        }
        let pairs = grid.pairs();
        let results: Vec<((T, T), (T, T))> = pairs
            .par_iter()
            .map(|p| {
                let a = self.eval_kn(n, p.s, &p.x, p.t, &p.y)?;
                let b = self.eval_split(n, m, p.s, &p.x, p.t, &p.y)?;
                Ok((a, b))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rep = SplitReport {
            n,
            m,
            max_relative: T::zero(),
            max_error_ratio: T::zero(),
            aggregated_error: T::zero(),
            location: None,
        };
        for (p, ((a, ea), (b, eb))) in pairs.iter().zip(results) {
            let diff = (a - b).abs();
            let scale = a.abs().max(b.abs());
            let rel = if scale > T::zero() { diff / scale } else { T::zero() };
            if rel > rep.max_relative || rep.location.is_none() {
                rep.max_relative = rel;
                rep.aggregated_error = ea + eb;
                rep.location = Some(*p);
            }
            if diff > T::zero() {
                let r = diff / (ea + eb);
                if r > rep.max_error_ratio {
                    rep.max_error_ratio = r;
                }
            }
        }
        Ok(rep)
    }
}

/// Convenience wrapper: builds an engine and evaluates the series.
pub fn eval_series<T: Real>(
    kernel: &KernelDensity<T>,
    potential: &Potential<T>,
    space: &StateSpace<T>,
    grid: &SpaceTimeGrid<T>,
    plan: &RecursionPlan,
    quad: &Quadrature<T>,
    control: Option<&ControlPair<T>>,
) -> Result<SeriesTable<T>> {
    SeriesEngine::new(kernel, potential, space, plan, quad)?.eval_series(grid, control)
}

#[cfg(test)]
mod tests;
