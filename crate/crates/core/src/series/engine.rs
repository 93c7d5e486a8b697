use super::table::{Direction, LayoutSpec, LevelTable, TableLayout, TableRow};
use super::{MemoPolicy, RecursionPlan};
use crate::error::{Error, Result};
use crate::kernels::{KernelDensity, Potential, SpatialProfile, State, StateSpace};
use crate::quadrature::{Focus, IntegrationReport, Quadrature};
use crate::scalar::{from_usize, lit, to_f64, Real};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

/// One factor of the composition ∫∫ L(u,z) q(u,z) R(u,z) dz du.
#[derive(Clone, Copy)]
pub(crate) enum Factor<'a, T> {
    /// κ(s, x, u, z)
    Source { s: T, x: State<T> },
    /// κ(u, z, t, y)
    Target { t: T, y: State<T> },
    /// k_m from a memo table (forward or backward)
    Table(&'a LevelTable<T>),
    /// the constant 1 (for Kato-type integrals)
    One,
    /// k_level(anchor; u, z) or k_level(u, z; anchor) by plain recursion
    Direct {
        level: usize,
        time: T,
        state: State<T>,
        forward: bool,
    },
}

enum Prepared<'a, T> {
    One,
    Source { s: T, x: State<T> },
    Target { t: T, y: State<T> },
    Row(TableRow<'a, T>),
    Direct {
        level: usize,
        time: T,
        state: State<T>,
        forward: bool,
    },
}

type StackKey = (bool, u64, u64, u64);

/// Memo tables k_1..k_L for one anchor point.
#[derive(Debug)]
pub(crate) struct TableStack<T> {
    pub layout: Arc<TableLayout<T>>,
    pub levels: Vec<Arc<LevelTable<T>>>,
}

/// Evaluates perturbation terms for one (kernel, potential, space) triple.
///
/// Memo tables are built on demand and cached per anchor; every public
/// evaluation is deterministic for a given sequence of requests.
pub struct SeriesEngine<T: Real> {
    kernel: KernelDensity<T>,
    potential: Potential<T>,
    space: StateSpace<T>,
    plan: RecursionPlan,
    quad: Quadrature<T>,
    stacks: Mutex<HashMap<StackKey, Arc<TableStack<T>>>>,
    evaluations: AtomicU64,
}

impl<T: Real> SeriesEngine<T> {
    pub fn new(
        kernel: &KernelDensity<T>,
        potential: &Potential<T>,
        space: &StateSpace<T>,
        plan: &RecursionPlan,
        quad: &Quadrature<T>,
    ) -> Result<Self> {
        kernel.check_space(space)?;
        plan.validate()?;
        Ok(Self {
            kernel: kernel.clone(),
            potential: potential.clone(),
            space: space.clone(),
            plan: plan.clone(),
            quad: quad.clone(),
            stacks: Mutex::new(HashMap::new()),
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn kernel(&self) -> &KernelDensity<T> {
        &self.kernel
    }

    pub fn potential(&self) -> &Potential<T> {
        &self.potential
    }

    pub fn space(&self) -> &StateSpace<T> {
        &self.space
    }

    pub fn plan(&self) -> &RecursionPlan {
        &self.plan
    }

    pub fn quadrature(&self) -> &Quadrature<T> {
        &self.quad
    }

    /// Integrand evaluations spent so far (space nodes × time nodes).
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Time exponent of k_m at an anchor time: (m+1)(γ+1) - 1 plus m times
    /// the potential's exponent if the anchor is one of its singular times.
    pub fn level_exponent(&self, m: usize, anchor: T) -> T {
        let g1 = self.kernel.time_exponent() + T::one();
        let e = self.potential.exponent_at(anchor, self.time_tol(anchor));
        from_usize::<T>(m + 1) * g1 - T::one() + from_usize::<T>(m) * e
    }

    fn time_tol(&self, t: T) -> T {
        lit::<T>(1e-12) * (T::one() + t.abs())
    }

    fn check_order(&self, n: usize) -> Result<()> {
        if n > self.plan.order {
            return Err(Error::PlanViolation {
                requested: n,
                max: self.plan.order,
            });
        }
        Ok(())
    }

    /// k_n(s,x,t,y) with its error estimate, by the m = 0 recursion.
    pub fn eval_kn(&self, n: usize, s: T, x: &State<T>, t: T, y: &State<T>) -> Result<(T, T)> {
        self.check_order(n)?;
        if !(t > s) {
            return Err(Error::Precondition(format!("k_n needs s < t, got s={s}, t={t}")));
        }
        if n == 0 {
            return Ok((self.kernel.eval(s, x, t, y), T::zero()));
        }
        if self.potential.is_zero() {
            return Ok((T::zero(), T::zero()));
        }
        let left_level = n - 1;
        let r = match self.plan.memo {
            MemoPolicy::Direct => self.convolve(
                &Factor::Direct {
                    level: left_level,
                    time: s,
                    state: *x,
                    forward: true,
                },
                &Factor::Target { t, y: *y },
                s,
                t,
            ),
            MemoPolicy::Tabulate => {
                if left_level == 0 {
                    self.convolve(&Factor::Source { s, x: *x }, &Factor::Target { t, y: *y }, s, t)
                } else {
                    let stack = self.stack(Direction::Forward, s, x, t - s, left_level)?;
                    self.convolve(
                        &Factor::Table(&stack.levels[left_level - 1]),
                        &Factor::Target { t, y: *y },
                        s,
                        t,
                    )
                }
            }
        }
        .map_err(|e| e.located(format!("n={n}, s={s}, t={t}")))?;
        Ok((r.value.max(T::zero()), r.error))
    }

    /// k_n recomputed through the split ∫∫ k_{n-1-m} q k_m.
    pub fn eval_split(&self, n: usize, m: usize, s: T, x: &State<T>, t: T, y: &State<T>) -> Result<(T, T)> {
        self.check_order(n)?;
        if n == 0 || m + 1 > n {
            return Err(Error::Precondition(format!("split needs 1 <= n and 0 <= m <= n-1, got n={n}, m={m}")));
        }
        if !(t > s) {
            return Err(Error::Precondition(format!("k_n needs s < t, got s={s}, t={t}")));
        }
        if m == 0 {
            return self.eval_kn(n, s, x, t, y);
        }
        if self.potential.is_zero() {
            return Ok((T::zero(), T::zero()));
        }
        let l = n - 1 - m;
        let r = match self.plan.memo {
            MemoPolicy::Direct => {
                let left = if l == 0 {
                    Factor::Source { s, x: *x }
                } else {
                    Factor::Direct {
                        level: l,
                        time: s,
                        state: *x,
                        forward: true,
                    }
                };
                let right = Factor::Direct {
                    level: m,
                    time: t,
                    state: *y,
                    forward: false,
                };
                self.convolve(&left, &right, s, t)
            }
            MemoPolicy::Tabulate => {
                let back = self.stack(Direction::Backward, t, y, t - s, m)?;
                let right = Factor::Table(&back.levels[m - 1]);
                if l == 0 {
                    self.convolve(&Factor::Source { s, x: *x }, &right, s, t)
                } else {
                    let fwd = self.stack(Direction::Forward, s, x, t - s, l)?;
                    self.convolve(&Factor::Table(&fwd.levels[l - 1]), &right, s, t)
                }
            }
        }
        .map_err(|e| e.located(format!("n={n}, m={m}, s={s}, t={t}")))?;
        Ok((r.value.max(T::zero()), r.error))
    }

    /// ∫ₛᵗ∫ [κ(s,x,u,z) + κ(u,z,t,y)] q(u,z) dz du, the quantity whose
    /// smallness for small t-s defines the Kato class.
    pub fn kato_integral(&self, s: T, x: &State<T>, t: T, y: &State<T>) -> Result<(T, T)> {
        if !(t > s) {
            return Err(Error::Precondition(format!("Kato integral needs s < t, got s={s}, t={t}")));
        }
        let a = self.convolve(&Factor::Source { s, x: *x }, &Factor::One, s, t)?;
        let b = self.convolve(&Factor::One, &Factor::Target { t, y: *y }, s, t)?;
        Ok((a.value + b.value, a.error + b.error))
    }

    /// Forward memo tables for source (s, x) covering gaps up to `horizon`,
    /// built to `levels` levels.
    pub(crate) fn forward_stack(&self, s: T, x: &State<T>, horizon: T, levels: usize) -> Result<Arc<TableStack<T>>> {
        self.stack(Direction::Forward, s, x, horizon, levels)
    }

    fn stack(&self, dir: Direction, time: T, state: &State<T>, horizon: T, levels: usize) -> Result<Arc<TableStack<T>>> {
        let key: StackKey = (
            dir == Direction::Forward,
            to_f64(time).to_bits(),
            to_f64(state.0[0]).to_bits(),
            to_f64(state.0[1]).to_bits(),
        );
        let existing = self.stacks.lock().expect("table cache poisoned").get(&key).cloned();
        let base = match existing {
            Some(st) if st.layout.horizon >= horizon => {
                if st.levels.len() >= levels {
                    return Ok(st);
                }
                st
            }
            _ => Arc::new(TableStack {
                layout: Arc::new(self.layout(dir, time, state, horizon)),
                levels: Vec::new(),
            }),
        };
        let mut lvls = base.levels.clone();
        while lvls.len() < levels {
            let m = lvls.len() + 1;
            let prev = lvls.last().cloned();
            let table = self.build_level(&base.layout, m, prev.as_deref())?;
            lvls.push(Arc::new(table));
        }
        let st = Arc::new(TableStack {
            layout: base.layout.clone(),
            levels: lvls,
        });
        self.stacks.lock().expect("table cache poisoned").insert(key, st.clone());
        Ok(st)
    }

    fn layout(&self, dir: Direction, time: T, state: &State<T>, horizon: T) -> TableLayout<T> {
        let breaks: Vec<T> = self
            .potential
            .singular_times()
            .iter()
            .map(|sg| match dir {
                Direction::Forward => sg.time - time,
                Direction::Backward => time - sg.time,
            })
            .collect();
        let bounds = self.space.axis_bounds();
        TableLayout::new(LayoutSpec {
            anchor_time: time,
            anchor_state: *state,
            direction: dir,
            horizon,
            mass_power: self.kernel.time_exponent() + T::one(),
            breaks: &breaks,
            time_nodes: self.plan.table_time_nodes,
            grading: lit(self.plan.grading),
            space_nodes: self.plan.table_space_nodes,
            profile: if self.kernel.dim() == 0 {
                crate::kernels::SpatialProfile::Unscaled
            } else {
                self.kernel.profile()
            },
            bounds: &bounds,
            kernel: (self.kernel.dim() > 0).then(|| self.kernel.clone()),
        })
    }

    fn build_level(&self, layout: &Arc<TableLayout<T>>, m: usize, prev: Option<&LevelTable<T>>) -> Result<LevelTable<T>> {
        let anchor = layout.anchor_time;
        let c = layout.anchor_state;
        let raw: Vec<(T, T)> = (0..layout.len())
            .into_par_iter()
            .map(|idx| {
                let (u, z) = layout.node(idx);
                let r = match layout.direction {
                    Direction::Forward => {
                        let left = match prev {
                            Some(p) => Factor::Table(p),
                            None => Factor::Source { s: anchor, x: c },
                        };
                        self.convolve(&left, &Factor::Target { t: u, y: z }, anchor, u)
                    }
                    Direction::Backward => {
                        let right = match prev {
                            Some(p) => Factor::Table(p),
                            None => Factor::Target { t: anchor, y: c },
                        };
                        self.convolve(&Factor::Source { s: u, x: z }, &right, u, anchor)
                    }
                };
                r.map(|r| (r.value, r.error))
                    .map_err(|e| e.located(format!("table level {m}, u={u}, z={z}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LevelTable::from_entries(
            layout.clone(),
            self.level_exponent(m, anchor),
            raw,
        ))
    }

    /// Time exponent of a factor at its anchor end.
    fn exponent(&self, f: &Factor<'_, T>) -> T {
        match f {
            Factor::Source { .. } | Factor::Target { .. } => self.kernel.time_exponent(),
            Factor::One => T::zero(),
            Factor::Table(t) => t.exponent,
            Factor::Direct { level, time, .. } => self.level_exponent(*level, *time),
        }
    }

    fn focus(&self, f: &Factor<'_, T>, u: T) -> Option<(State<T>, T)> {
        let (center, dt) = match f {
            Factor::Source { s, x } => (*x, u - *s),
            Factor::Target { t, y } => (*y, *t - u),
            Factor::Table(tb) => (tb.layout.anchor_state, tb.layout.gap(u)),
            Factor::Direct { time, state, .. } => (*state, (u - *time).abs()),
            Factor::One => return None,
        };
        self.kernel.width(dt).map(|w| (center, w))
    }

    fn prepare<'a>(&self, f: &Factor<'a, T>, u: T) -> Prepared<'a, T> {
        match *f {
            Factor::One => Prepared::One,
            Factor::Source { s, x } => Prepared::Source { s, x },
            Factor::Target { t, y } => Prepared::Target { t, y },
            Factor::Table(tb) => Prepared::Row(tb.row(u)),
            Factor::Direct {
                level,
                time,
                state,
                forward,
            } => Prepared::Direct {
                level,
                time,
                state,
                forward,
            },
        }
    }

    fn eval_factor(&self, p: &Prepared<'_, T>, u: T, z: &State<T>) -> Result<(T, T)> {
        match p {
            Prepared::One => Ok((T::one(), T::zero())),
            Prepared::Source { s, x } => Ok((self.kernel.eval(*s, x, u, z), T::zero())),
            Prepared::Target { t, y } => Ok((self.kernel.eval(u, z, *t, y), T::zero())),
            Prepared::Row(row) => Ok(row.eval(z)),
            Prepared::Direct {
                level,
                time,
                state,
                forward,
            } => {
                if *forward {
                    self.direct(*level, *time, state, u, z)
                } else {
                    self.direct(*level, u, z, *time, state)
                }
            }
        }
    }

    /// Plain recursion without memo tables (exponential cost in the level).
    fn direct(&self, level: usize, s: T, x: &State<T>, t: T, y: &State<T>) -> Result<(T, T)> {
        if level == 0 {
            return Ok((self.kernel.eval(s, x, t, y), T::zero()));
        }
        let left = if level == 1 {
            Factor::Source { s, x: *x }
        } else {
            Factor::Direct {
                level: level - 1,
                time: s,
                state: *x,
                forward: true,
            }
        };
        let r = self.convolve(&left, &Factor::Target { t, y: *y }, s, t)?;
        Ok((r.value.max(T::zero()), r.error))
    }

    /// ∫ₛᵗ ∫_X L(u,z) q(u,z) R(u,z) dz du with a combined error estimate.
    pub(crate) fn convolve(&self, left: &Factor<'_, T>, right: &Factor<'_, T>, s: T, t: T) -> Result<IntegrationReport<T>> {
        if self.potential.is_zero() {
            return Ok(IntegrationReport::zero());
        }
        let a = self.exponent(left);
        let b = self.exponent(right);
        let singular = self.potential.singular_times();
        let dim = self.space.dim();
        let truncated = self.space.truncation_radius().is_some();
        let diffusive = matches!(self.kernel.profile(), SpatialProfile::Diffusive { .. });
        let mut count = 0u64;
        let report = self.quad.integrate_with_inner_error(
            |u, want_error| {
                let lp = self.prepare(left, u);
                let rp = self.prepare(right, u);
                let mut foci: Vec<Focus<T>> = Vec::with_capacity(3);
                let mut tail_frac = T::zero();
                for f in [left, right] {
                    if let Some((center, width)) = self.focus(f, u) {
                        foci.push(Focus { center, width });
                        if truncated {
                            let dt = width_gap(f, u);
                            if let Some(m) = self.kernel.tail_mass(dt, self.space.distance_to_boundary(&center)) {
                                tail_frac = tail_frac + m;
                            }
                        }
                    }
                }
                if diffusive && foci.len() == 2 {
                    foci.push(bridge(&foci[0], &foci[1]));
                }
                let nodes = self.quad.space_nodes(&self.space, &foci);
                let mut fine = T::zero();
                let mut abs = T::zero();
                let mut ferr = T::zero();
                for (z, w) in &nodes.fine {
                    let qv = self.potential.eval(u, z);
                    if qv == T::zero() {
                        continue;
                    }
                    let (lv, le) = self.eval_factor(&lp, u, z)?;
                    let (rv, re) = self.eval_factor(&rp, u, z)?;
                    let v = *w * qv * lv * rv;
                    if !v.is_finite() {
                        return Err(Error::numeric_at("non-finite integrand", format!("u={u}, z={z}")));
                    }
                    fine = fine + v;
                    abs = abs + v.abs();
                    ferr = ferr + (*w * qv).abs() * (lv.abs() * re + rv.abs() * le + le * re);
                }
                count += nodes.fine.len() as u64;
                if dim == 0 || !want_error {
                    return Ok((fine, ferr));
                }
                let mut coarse = T::zero();
                for (z, w) in &nodes.coarse {
                    let qv = self.potential.eval(u, z);
                    if qv == T::zero() {
                        continue;
                    }
                    let (lv, _) = self.eval_factor(&lp, u, z)?;
                    let (rv, _) = self.eval_factor(&rp, u, z)?;
                    coarse = coarse + *w * qv * lv * rv;
                }
                count += nodes.coarse.len() as u64;
                let err = (fine - coarse).abs() + lit::<T>(16.0) * T::epsilon() * abs + ferr + fine.abs() * tail_frac;
                Ok((fine, err))
            },
            s,
            t,
            a,
            b,
            &singular,
        )?;
        self.evaluations.fetch_add(count, Ordering::Relaxed);
        Ok(report)
    }

}

/// Peak of the product of two Gaussian-like factors: precision-weighted
/// centre, combined width.
fn bridge<T: Real>(a: &Focus<T>, b: &Focus<T>) -> Focus<T> {
    let (wa, wb) = (a.width * a.width, b.width * b.width);
    let mut center = a.center;
    for i in 0..2 {
        center.0[i] = (a.center.0[i] * wb + b.center.0[i] * wa) / (wa + wb);
    }
    Focus {
        center,
        width: a.width * b.width / (wa + wb).sqrt(),
    }
}

fn width_gap<T: Real>(f: &Factor<'_, T>, u: T) -> T {
    match f {
        Factor::Source { s, .. } => u - *s,
        Factor::Target { t, .. } => *t - u,
        Factor::Table(tb) => tb.layout.gap(u),
        Factor::Direct { time, .. } => (u - *time).abs(),
        Factor::One => T::zero(),
    }
}
