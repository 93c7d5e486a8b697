//! Memo tables of k_m on a time mesh anchored at a source (forward) or a
//! target (backward) point.
//!
//! Values are stored as ratios S = k_m / N, where N is either the base
//! kernel itself times dt^{e-γ} (spatial kernels: k_m ≤ C·κ is exactly what
//! comparability says, so S is bounded and smooth, tails included) or the
//! pure scaling W^{-d}·dt^e. Here dt is the time gap to the anchor, W the
//! kernel's spatial width at dt, e the level's time exponent and γ the
//! kernel's. For self-similar kernels and constant potentials S does not
//! depend on dt at all, so interpolation in time is exact. Space is sampled
//! in similarity coordinates z = c + W·sinh(v), uniform in v.

use crate::kernels::{KernelDensity, SpatialProfile, State};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    /// k_m(anchor; u, z) for u > anchor time
    Forward,
    /// k_m(u, z; anchor) for u < anchor time
    Backward,
}

#[derive(Debug, Clone, Copy)]
enum Axis<T> {
    /// z = c + W sinh(v), v ∈ [-vmax, vmax]
    Similarity { vmax: T },
    /// z = lo + (hi - lo) v, v ∈ [0, 1]
    Linear { lo: T, hi: T },
}

/// Time span of the mesh between two singular times of the potential.
#[derive(Debug, Clone)]
struct Segment<T> {
    start: T,
    first: usize,
    len: usize,
    /// coordinate of each node (dt^{mass exponent} on the first segment,
    /// dt - start afterwards)
    rho: Vec<T>,
}

#[derive(Debug)]
pub(crate) struct TableLayout<T> {
    pub anchor_time: T,
    pub anchor_state: State<T>,
    pub direction: Direction,
    pub horizon: T,
    mass_power: T,
    segments: Vec<Segment<T>>,
    dts: Vec<T>,
    /// spatial width at each time node
    widths: Vec<T>,
    /// per axis: similarity range in widths (infinite for linear axes)
    reach: Vec<T>,
    axes: Vec<Axis<T>>,
    vn: usize,
    profile: SpatialProfile<T>,
    kernel: Option<KernelDensity<T>>,
}

pub(crate) struct LayoutSpec<'a, T> {
    pub anchor_time: T,
    pub anchor_state: State<T>,
    pub direction: Direction,
    pub horizon: T,
    /// γ + 1
    pub mass_power: T,
    /// singular times of the potential, as gaps from the anchor in (0, horizon)
    pub breaks: &'a [T],
    pub time_nodes: usize,
    pub grading: T,
    pub space_nodes: usize,
    pub profile: SpatialProfile<T>,
    pub bounds: &'a [(T, T)],
    /// base kernel used as the normaliser (spatial kernels only)
    pub kernel: Option<KernelDensity<T>>,
}

/// Far-field cut for diffusive profiles, in widths: beyond it the kernel is
/// below e^{-70} of its peak.
const DIFFUSIVE_XI_CAP: f64 = 12.0;

impl<T: Real> TableLayout<T> {
    pub fn new(spec: LayoutSpec<'_, T>) -> Self {
        let h = spec.horizon;
        let mut edges = vec![T::zero()];
        let tol = h * lit(1e-12);
        for &b in spec.breaks {
            if b > tol && b < h - tol && b - *edges.last().expect("non-empty") > tol {
                edges.push(b);
            }
        }
        edges.push(h);
        let mut segments = Vec::new();
        let mut dts = Vec::new();
        let sigma = spec.grading;
        for (i, w) in edges.windows(2).enumerate() {
            let len_frac = (w[1] - w[0]) / h;
            let count = ((from_usize::<T>(spec.time_nodes) * len_frac).round().to_usize().unwrap_or(0)).max(4);
            let first = dts.len();
            let mut rho = Vec::with_capacity(count + 1);
            let j0 = if i == 0 { 1 } else { 0 };
            for j in j0..=count {
                let dt = w[0] + (w[1] - w[0]) * (from_usize::<T>(j) / from_usize::<T>(count)).powf(sigma);
                dts.push(dt);
                rho.push(if i == 0 { dt.powf(spec.mass_power) } else { dt - w[0] });
            }
            segments.push(Segment {
                start: w[0],
                first,
                len: rho.len(),
                rho,
            });
        }
        let dt_min = dts[0];
        let axes = spec
            .bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| match spec.profile.width(dt_min) {
                Some(w0) => {
                    let c = spec.anchor_state.0[i];
                    let far = (hi - c).abs().max((c - lo).abs());
                    let mut vmax = (far / w0).asinh();
                    if let SpatialProfile::Diffusive { .. } = spec.profile {
                        vmax = vmax.min(lit::<T>(DIFFUSIVE_XI_CAP).asinh());
                    }
                    Axis::Similarity { vmax }
                }
                None => Axis::Linear { lo, hi },
            })
            .collect();
        let mut lay = Self {
            anchor_time: spec.anchor_time,
            anchor_state: spec.anchor_state,
            direction: spec.direction,
            horizon: h,
            mass_power: spec.mass_power,
            segments,
            dts,
            axes,
            vn: if spec.bounds.is_empty() { 1 } else { spec.space_nodes.max(4) },
            profile: spec.profile,
            kernel: spec.kernel,
            widths: Vec::new(),
            reach: Vec::new(),
        };
        lay.reach = lay
            .axes
            .iter()
            .map(|ax| match *ax {
                Axis::Similarity { vmax } => vmax.sinh(),
                Axis::Linear { .. } => T::infinity(),
            })
            .collect();
        lay.widths = lay.dts.iter().map(|&dt| lay.width(dt)).collect();
        lay
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn space_count(&self) -> usize {
        self.vn.pow(self.dim() as u32)
    }

    pub fn len(&self) -> usize {
        self.dts.len() * self.space_count()
    }

    fn width(&self, dt: T) -> T {
        let any_similarity = self.axes.iter().any(|a| matches!(a, Axis::Similarity { .. }));
        if any_similarity {
            self.profile.width(dt).unwrap_or(T::one())
        } else {
            T::one()
        }
    }

    fn v_step(&self, axis: &Axis<T>) -> (T, T) {
        let n1 = from_usize::<T>(self.vn - 1);
        match *axis {
            Axis::Similarity { vmax } => (-vmax, lit::<T>(2.0) * vmax / n1),
            Axis::Linear { .. } => (T::zero(), T::one() / n1),
        }
    }

    /// Time and state of table entry `idx`.
    pub fn node(&self, idx: usize) -> (T, State<T>) {
        let sc = self.space_count();
        let dt = self.dts[idx / sc];
        let mut rem = idx % sc;
        let w = self.width(dt);
        let mut z = self.anchor_state;
        for (i, axis) in self.axes.iter().enumerate() {
            let k = rem % self.vn;
            rem /= self.vn;
            let (v0, hv) = self.v_step(axis);
            let v = v0 + hv * from_usize::<T>(k);
            z.0[i] = match *axis {
                Axis::Similarity { .. } => self.anchor_state.0[i] + w * v.sinh(),
                Axis::Linear { lo, hi } => lo + (hi - lo) * v,
            };
        }
        let u = match self.direction {
            Direction::Forward => self.anchor_time + dt,
            Direction::Backward => self.anchor_time - dt,
        };
        (u, z)
    }

    /// Gap between `u` and the anchor time.
    pub fn gap(&self, u: T) -> T {
        match self.direction {
            Direction::Forward => u - self.anchor_time,
            Direction::Backward => self.anchor_time - u,
        }
    }

    /// Factor converting scaled values at gap dt back to kernel values.
    pub fn unscale(&self, dt: T, exponent: T) -> T {
        let w = self.width(dt);
        dt.powf(exponent) / w.powi(self.dim() as i32)
    }

    /// Whether the similarity grid of time node `row` reaches z.
    fn covers(&self, row: usize, z: &State<T>) -> bool {
        let w = self.widths[row];
        (0..self.axes.len()).all(|i| (z.0[i] - self.anchor_state.0[i]).abs() <= w * self.reach[i])
    }

    /// κ between the anchor and (anchor ± dt, z).
    fn anchor_kernel(&self, kernel: &KernelDensity<T>, dt: T, z: &State<T>) -> T {
        let c = &self.anchor_state;
        match self.direction {
            Direction::Forward => kernel.eval(self.anchor_time, c, self.anchor_time + dt, z),
            Direction::Backward => kernel.eval(self.anchor_time - dt, z, self.anchor_time, c),
        }
    }

    /// κ between the anchor and (anchor ± dt, z), times dt^{e-γ}.
    fn kernel_norm(&self, kernel: &KernelDensity<T>, dt: T, z: &State<T>, exponent: T) -> T {
        self.anchor_kernel(kernel, dt, z) * dt.powf(exponent - kernel.time_exponent())
    }
}

/// One level k_m of a memo table.
#[derive(Debug)]
pub(crate) struct LevelTable<T> {
    pub layout: std::sync::Arc<TableLayout<T>>,
    pub exponent: T,
    values: Vec<T>,
    errors: Vec<T>,
    slopes: Vec<T>,
    /// values are ratios to the base kernel rather than scaled values
    by_kernel: bool,
}

impl<T: Real> LevelTable<T> {
    /// Builds a level from raw (value, error) pairs in node order.
    pub fn from_entries(
        layout: std::sync::Arc<TableLayout<T>>,
        exponent: T,
        raw: Vec<(T, T)>,
    ) -> Self {
        let sc = layout.space_count();
        let kernel_norms: Option<Vec<T>> = layout.kernel.as_ref().and_then(|k| {
            let norms: Vec<T> = (0..raw.len())
                .map(|idx| {
                    let dt = layout.dts[idx / sc];
                    let (_, z) = layout.node(idx);
                    layout.kernel_norm(k, dt, &z, exponent)
                })
                .collect();
            norms.iter().all(|n| n.is_finite() && *n > T::min_positive_value()).then_some(norms)
        });
        let by_kernel = kernel_norms.is_some();
        let mut values = Vec::with_capacity(raw.len());
        let mut errors = Vec::with_capacity(raw.len());
        for (idx, (v, e)) in raw.into_iter().enumerate() {
            let f = match &kernel_norms {
                Some(n) => n[idx],
                None => layout.unscale(layout.dts[idx / sc], exponent),
            };
            values.push(v.max(T::zero()) / f);
            errors.push(e / f);
        }
        let mut slopes = vec![T::zero(); values.len()];
        for seg in &layout.segments {
            for k in 0..sc {
                let ys: Vec<T> = (0..seg.len).map(|j| values[(seg.first + j) * sc + k]).collect();
                let d = pchip_slopes(&seg.rho, &ys);
                for (j, dj) in d.into_iter().enumerate() {
                    slopes[(seg.first + j) * sc + k] = dj;
                }
            }
        }
        Self {
            layout,
            exponent,
            values,
            errors,
            slopes,
            by_kernel,
        }
    }

    /// Prepares evaluation at time `u`.
    ///
    /// Ratio tables are interpolated in time at fixed physical z (k_m/κ is
    /// governed by where the bridge between anchor and z runs, not by the
    /// similarity variable); scaled tables at fixed similarity coordinate.
    pub fn row(&self, u: T) -> TableRow<'_, T> {
        let lay = &*self.layout;
        let dt = lay.gap(u);
        let mut row = TableRow {
            table: self,
            dt,
            width: lay.width(dt),
            scale: lay.unscale(dt, self.exponent),
            extra: T::zero(),
            time: TimeInterp::Columns {
                vals: Vec::new(),
                errs: Vec::new(),
            },
        };
        if !(dt > T::zero()) {
            row.scale = T::nan();
            return row;
        }
        if dt > lay.horizon * (T::one() + lit(1e-9)) {
            // outside the tabulated range: flag through the error
            row.extra = T::infinity();
        }
        let seg_idx = lay.segments.iter().rposition(|s| s.start <= dt).unwrap_or(0);
        let seg = &lay.segments[seg_idx];
        let rho = if seg_idx == 0 { dt.powf(lay.mass_power) } else { dt - seg.start };
        if self.by_kernel && lay.dim() > 0 {
            row.time = TimeInterp::FixedState {
                seg: seg_idx,
                rho,
                base: time_weights(seg, rho, 0),
            };
            if let Some(k) = &lay.kernel {
                row.scale = dt.powf(self.exponent - k.time_exponent());
            }
        } else {
            let (vals, errs) = self.columns(seg, rho);
            row.time = TimeInterp::Columns { vals, errs };
        }
        row
    }

    /// All space columns interpolated in time (monotone cubic in ρ).
    fn columns(&self, seg: &Segment<T>, rho: T) -> (Vec<T>, Vec<T>) {
        let sc = self.layout.space_count();
        let mut vals = vec![T::zero(); sc];
        let mut errs = vec![T::zero(); sc];
        let n = seg.len;
        let node = |j: usize, k: usize| (seg.first + j) * sc + k;
        if n == 1 || rho <= seg.rho[0] {
            let trend = n > 1;
            for k in 0..sc {
                let y0 = self.values[node(0, k)];
                vals[k] = y0;
                errs[k] = self.errors[node(0, k)];
                if trend && rho < seg.rho[0] {
                    let y1 = self.values[node(1, k)];
                    let frac = (seg.rho[0] - rho) / (seg.rho[1] - seg.rho[0]);
                    errs[k] = errs[k] + (y1 - y0).abs() * frac.min(T::one());
                }
            }
            return (vals, errs);
        }
        let i = match seg.rho.iter().rposition(|&r| r <= rho) {
            Some(i) if i + 1 < n => i,
            _ => n - 2,
        };
        let (r0, r1) = (seg.rho[i], seg.rho[i + 1]);
        let h = r1 - r0;
        let t = ((rho - r0) / h).min(T::one()).max(T::zero());
        let (h00, h10, h01, h11) = hermite_basis(t);
        let q0 = if n < 3 {
            None
        } else if i == 0 || (i + 2 < n && rho - r0 > r1 - rho) {
            Some(i.min(n - 3))
        } else {
            Some(i - 1)
        };
        for k in 0..sc {
            let y0 = self.values[node(i, k)];
            let y1 = self.values[node(i + 1, k)];
            let d0 = self.slopes[node(i, k)];
            let d1 = self.slopes[node(i + 1, k)];
            let cubic = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
            let interp = match q0 {
                Some(j) => {
                    let xs = [seg.rho[j], seg.rho[j + 1], seg.rho[j + 2]];
                    let ys = [
                        self.values[node(j, k)],
                        self.values[node(j + 1, k)],
                        self.values[node(j + 2, k)],
                    ];
                    (cubic - lagrange3(&xs, &ys, rho)).abs()
                }
                None => (y1 - y0).abs(),
            };
            vals[k] = cubic;
            errs[k] = self.errors[node(i, k)].max(self.errors[node(i + 1, k)]) + interp;
        }
        (vals, errs)
    }
}

/// Lagrange weights in ρ over up to four consecutive time nodes, with the
/// weights of a companion rule one node shorter (dropping the node farthest
/// from ρ) for the error estimate.
#[derive(Clone, Copy)]
struct TimeWeights<T> {
    start: usize,
    width: usize,
    main: [T; 4],
    companion: [T; 4],
}

fn time_weights<T: Real>(seg: &Segment<T>, rho: T, j_min: usize) -> TimeWeights<T> {
    let n = seg.len;
    let width = (n - j_min).min(4);
    let i = seg.rho.iter().rposition(|&r| r <= rho).unwrap_or(0).max(j_min);
    let start = i.saturating_sub(1).max(j_min).min(n - width);
    let xs = &seg.rho[start..start + width];
    let mut main = [T::zero(); 4];
    let mut companion = [T::zero(); 4];
    let drop = if width == 1 || (rho - xs[0]).abs() >= (xs[width - 1] - rho).abs() {
        0
    } else {
        width - 1
    };
    for i in 0..width {
        let mut w = T::one();
        let mut wc = T::one();
        for j in 0..width {
            if i != j {
                let f = (rho - xs[j]) / (xs[i] - xs[j]);
                w = w * f;
                if j != drop {
                    wc = wc * f;
                }
            }
        }
        main[i] = w;
        companion[i] = if i == drop && width > 1 { T::zero() } else { wc };
    }
    TimeWeights {
        start,
        width,
        main,
        companion,
    }
}

enum TimeInterp<T> {
    /// space columns already interpolated in time
    Columns { vals: Vec<T>, errs: Vec<T> },
    /// interpolate in space on each time node of the segment, then in time
    /// at fixed z
    FixedState {
        seg: usize,
        rho: T,
        /// weights when every node of the segment reaches z
        base: TimeWeights<T>,
    },
}

/// A level table at one time, ready for evaluation in space.
pub(crate) struct TableRow<'a, T> {
    table: &'a LevelTable<T>,
    dt: T,
    width: T,
    scale: T,
    extra: T,
    time: TimeInterp<T>,
}

impl<T: Real> TableRow<'_, T> {
    /// (k_m, error) at state z.
    pub fn eval(&self, z: &State<T>) -> (T, T) {
        let lay = &*self.table.layout;
        if !(self.dt > T::zero()) {
            return (T::nan(), T::nan());
        }
        let scale = match (&lay.kernel, &self.time) {
            (Some(k), TimeInterp::FixedState { .. }) => lay.anchor_kernel(k, self.dt, z) * self.scale,
            _ => self.scale,
        };
        let (v, e) = match &self.time {
            TimeInterp::Columns { vals, errs } => {
                if lay.dim() == 0 {
                    (vals[0], errs[0])
                } else {
                    self.space_interp(vals, errs, self.width, z)
                }
            }
            TimeInterp::FixedState { seg, rho, base } => self.fixed_state(&lay.segments[*seg], *rho, base, z),
        };
        (v.max(T::zero()) * scale, (e + self.extra) * scale)
    }

    fn fixed_state(&self, seg: &Segment<T>, rho: T, base: &TimeWeights<T>, z: &State<T>) -> (T, T) {
        let lay = &*self.table.layout;
        let sc = lay.space_count();
        let n = seg.len;
        let row_of = |j: usize| {
            let r = seg.first + j;
            (
                &self.table.values[r * sc..(r + 1) * sc],
                &self.table.errors[r * sc..(r + 1) * sc],
                lay.widths[r],
            )
        };
        // time nodes whose similarity range reaches z; widths grow with dt
        let Some(j_min) = (0..n).find(|&j| lay.covers(seg.first + j, z)) else {
            let (vals, errs, w) = row_of(n - 1);
            return self.space_interp(vals, errs, w, z);
        };
        let tw = if j_min <= base.start { *base } else { time_weights(seg, rho, j_min) };
        let mut v_main = T::zero();
        let mut v_comp = T::zero();
        let mut err = T::zero();
        for a in 0..tw.width {
            let (vals, errs, w) = row_of(tw.start + a);
            let (v, e) = self.space_interp(vals, errs, w, z);
            v_main = v_main + tw.main[a] * v;
            v_comp = v_comp + tw.companion[a] * v;
            err = err.max(e);
        }
        (v_main, err + (v_main - v_comp).abs())
    }

    /// Interpolates one time row of ratios at z: tensor cubic in the
    /// similarity coordinate, error from two lower-order companions.
    fn space_interp(&self, vals: &[T], errs: &[T], width: T, z: &State<T>) -> (T, T) {
        let lay = &*self.table.layout;
        match lay.dim() {
            0 => (vals[0], errs[0]),
            1 => {
                let Some(st) = self.stencil(0, z, width) else {
                    let edge = vals[0].abs().max(vals[lay.vn - 1].abs());
                    return (T::zero(), edge);
                };
                let mut cubic = T::zero();
                let mut alt = T::zero();
                let mut quad = T::zero();
                let mut err = T::zero();
                for a in 0..4 {
                    let k = st.start + a;
                    cubic = cubic + st.cubic[a] * vals[k];
                    alt = alt + st.alt[a] * vals[st.astart + a];
                    err = err.max(errs[k]);
                }
                for a in 0..3 {
                    quad = quad + st.quad[a] * vals[st.qstart + a];
                }
                (cubic, err + (cubic - quad).abs().max((cubic - alt).abs()))
            }
            _ => {
                let (Some(sx), Some(sy)) = (self.stencil(0, z, width), self.stencil(1, z, width)) else {
                    let edge = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                    return (T::zero(), edge);
                };
                let vn = lay.vn;
                let idx = |i: usize, j: usize| i + vn * j;
                let mut cubic = T::zero();
                let mut alt = T::zero();
                let mut quad = T::zero();
                let mut err = T::zero();
                for b in 0..4 {
                    for a in 0..4 {
                        let k = idx(sx.start + a, sy.start + b);
                        cubic = cubic + sx.cubic[a] * sy.cubic[b] * vals[k];
                        alt = alt + sx.alt[a] * sy.alt[b] * vals[idx(sx.astart + a, sy.astart + b)];
                        err = err.max(errs[k]);
                    }
                }
                for b in 0..3 {
                    for a in 0..3 {
                        quad = quad + sx.quad[a] * sy.quad[b] * vals[idx(sx.qstart + a, sy.qstart + b)];
                    }
                }
                (cubic, err + (cubic - quad).abs().max((cubic - alt).abs()))
            }
        }
    }

    fn stencil(&self, axis: usize, z: &State<T>, width: T) -> Option<Stencil<T>> {
        let lay = &*self.table.layout;
        let ax = lay.axes[axis];
        let v = match ax {
            Axis::Similarity { .. } => ((z.0[axis] - lay.anchor_state.0[axis]) / width).asinh(),
            Axis::Linear { lo, hi } => (z.0[axis] - lo) / (hi - lo),
        };
        let (v0, hv) = lay.v_step(&ax);
        let mut f = (v - v0) / hv;
        let last = from_usize::<T>(lay.vn - 1);
        if f < T::zero() || f > last {
            match ax {
                Axis::Similarity { .. } => return None,
                Axis::Linear { .. } => f = f.max(T::zero()).min(last),
            }
        }
        let vn = lay.vn;
        let fl = f.floor().to_usize().unwrap_or(0);
        let start = fl.saturating_sub(1).min(vn - 4);
        let qstart = f.round().to_usize().unwrap_or(0).saturating_sub(1).min(vn - 3);
        // neighbouring cubic stencil on the other side of the point; its
        // error term has the opposite sign, so the difference is a safe bound
        let centre = f - from_usize::<T>(start);
        let astart = if centre < lit(1.5) {
            start.saturating_sub(1)
        } else {
            (start + 1).min(vn - 4)
        };
        Some(Stencil {
            start,
            astart,
            qstart,
            cubic: lagrange_weights4(f - from_usize::<T>(start)),
            alt: lagrange_weights4(f - from_usize::<T>(astart)),
            quad: lagrange_weights3(f - from_usize::<T>(qstart)),
        })
    }
}

struct Stencil<T> {
    start: usize,
    astart: usize,
    qstart: usize,
    cubic: [T; 4],
    alt: [T; 4],
    quad: [T; 3],
}

/// Weights of the cubic through nodes 0,1,2,3 at position x.
fn lagrange_weights4<T: Real>(x: T) -> [T; 4] {
    let one = T::one();
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    let six: T = lit(6.0);
    [
        -(x - one) * (x - two) * (x - three) / six,
        x * (x - two) * (x - three) / two,
        -x * (x - one) * (x - three) / two,
        x * (x - one) * (x - two) / six,
    ]
}

/// Weights of the quadratic through nodes 0,1,2 at position x.
fn lagrange_weights3<T: Real>(x: T) -> [T; 3] {
    let one = T::one();
    let two: T = lit(2.0);
    [(x - one) * (x - two) / two, -x * (x - two), x * (x - one) / two]
}

fn lagrange3<T: Real>(xs: &[T; 3], ys: &[T; 3], x: T) -> T {
    let mut acc = T::zero();
    for i in 0..3 {
        let mut w = T::one();
        for j in 0..3 {
            if i != j {
                w = w * (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc = acc + w * ys[i];
    }
    acc
}

fn hermite_basis<T: Real>(t: T) -> (T, T, T, T) {
    let t2 = t * t;
    let t3 = t2 * t;
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    (
        two * t3 - three * t2 + T::one(),
        t3 - two * t2 + t,
        -two * t3 + three * t2,
        t3 - t2,
    )
}

/// Monotone (Fritsch–Butland) derivative estimates, as in PCHIP.
pub(crate) fn pchip_slopes<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let zero = T::zero();
    if n < 2 {
        return vec![zero; n];
    }
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![zero; n];
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= zero {
            d[i] = zero;
        } else {
            let w1 = two * h[i] + h[i - 1];
            let w2 = h[i] + two * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: T, h1: T, d0: T, d1: T| -> T {
        let mut s = ((two * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= zero {
            s = zero;
        } else if d0 * d1 <= zero && s.abs() > (three * d0).abs() {
            s = three * d0;
        }
        s
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn pchip_preserves_monotone_data() {
        let x = [0.0f64, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.1, 0.2, 5.0, 5.1];
        let d = pchip_slopes(&x, &y);
        assert!(d.iter().all(|&v| v >= 0.0));
        let lin = pchip_slopes(&x, &[0.0f64, 1.0, 2.0, 3.0, 4.0]);
        assert!(lin.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let w = lagrange_weights4(1.3);
        let v: f64 = (0..4).map(|i| w[i] * f(i as f64)).sum();
        assert!((v - f(1.3)).abs() < 1e-13);
        let w3 = lagrange_weights3(0.7);
        assert!((w3.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    fn layout(bounds: &[(f64, f64)], profile: SpatialProfile<f64>) -> Arc<TableLayout<f64>> {
        Arc::new(TableLayout::new(LayoutSpec {
            anchor_time: 0.0,
            anchor_state: State::origin(),
            direction: Direction::Forward,
            horizon: 2.0,
            mass_power: 1.0,
            breaks: &[],
            time_nodes: 16,
            grading: 2.0,
            space_nodes: 64,
            profile,
            bounds,
            kernel: None,
        }))
    }

    #[test]
    fn self_similar_data_interpolates_exactly_in_time() {
        // k = dt^0.5 exactly → scaled value constant
        let lay = Arc::new(TableLayout::new(LayoutSpec {
            anchor_time: 1.0,
            anchor_state: State::origin(),
            direction: Direction::Backward,
            horizon: 4.0,
            mass_power: 0.5,
            breaks: &[],
            time_nodes: 8,
            grading: 3.0,
            space_nodes: 1,
            profile: SpatialProfile::Unscaled,
            bounds: &[],
            kernel: None,
        }));
        let raw = (0..lay.len())
            .map(|i| {
                let (u, _) = lay.node(i);
                ((1.0f64 - u).powf(0.5), 0.0)
            })
            .collect();
        let t = LevelTable::from_entries(lay, 0.5, raw);
        for u in [0.9999, 0.5, -1.0, -2.9] {
            let (v, e) = t.row(u).eval(&State::origin());
            assert!((v - (1.0f64 - u).powf(0.5)).abs() < 1e-14, "{u} {v}");
            assert!(e < 1e-14);
        }
    }

    #[test]
    fn gaussian_profile_is_resolved_in_space() {
        let lay = layout(&[(-10.0, 10.0)], SpatialProfile::Diffusive { coef: 2.0 });
        let g = |dt: f64, z: f64| (-(z * z) / (4.0 * dt)).exp() / (4.0 * std::f64::consts::PI * dt).sqrt();
        let raw = (0..lay.len())
            .map(|i| {
                let (u, z) = lay.node(i);
                (g(u, z.x()), 0.0)
            })
            .collect();
        let t = LevelTable::from_entries(lay, 0.0, raw);
        for u in [0.001, 0.3, 1.7] {
            let row = t.row(u);
            for z in [0.0, 0.05, 0.4, 1.0, 3.0] {
                let (v, e) = row.eval(&State::on_line(z));
                let want = g(u, z);
                if z * z < 4.0 * u {
                    assert!((v - want).abs() <= 1e-3 * want, "u={u} z={z} v={v} want={want}");
                }
                assert!((v - want).abs() <= 10.0 * e + 1e-15, "u={u} z={z} v={v} want={want} e={e}");
            }
        }
    }

    #[test]
    fn kernel_normalised_table_is_accurate_in_the_tails() {
        let gauss = KernelDensity::<f64>::gauss(1).unwrap();
        let lay = Arc::new(TableLayout::new(LayoutSpec {
            anchor_time: 0.0,
            anchor_state: State::origin(),
            direction: Direction::Forward,
            horizon: 2.0,
            mass_power: 1.0,
            breaks: &[],
            time_nodes: 16,
            grading: 2.0,
            space_nodes: 64,
            profile: SpatialProfile::Diffusive { coef: 2.0 },
            bounds: &[(-10.0, 10.0)],
            kernel: Some(gauss.clone()),
        }));
        let o = State::origin();
        let k1 = |dt: f64, z: f64| {
            gauss.eval(0.0, &o, dt, &State::on_line(z)) * dt * (1.0 + 0.5 * (-z * z).exp())
        };
        let raw = (0..lay.len())
            .map(|i| {
                let (u, z) = lay.node(i);
                (k1(u, z.x()), 0.0)
            })
            .collect();
        let t = LevelTable::from_entries(lay, 1.0, raw);
        for u in [0.01, 0.3, 1.7] {
            let row = t.row(u);
            for z in [0.0, 0.05, 0.4, 1.0, 3.0] {
                let (v, e) = row.eval(&State::on_line(z));
                let want = k1(u, z);
                assert!((v - want).abs() <= 10.0 * e + 1e-300, "u={u} z={z} v={v} want={want} e={e}");
                // far beyond the table's reach at small gaps only honesty is required
                if want > 1e-20 {
                    assert!((v - want).abs() <= 1e-3 * want, "u={u} z={z} v={v} want={want}");
                }
            }
        }
    }
}
