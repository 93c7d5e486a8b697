use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};
use std::fmt;

/// A point of the state space. Unused coordinates are zero: the one-point
/// space uses none, line-like spaces use the first, the plane uses both.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State<T>(pub [T; 2]);

impl<T: Real> State<T> {
    pub fn origin() -> Self {
        State([T::zero(); 2])
    }

    pub fn on_line(x: T) -> Self {
        State([x, T::zero()])
    }

    pub fn in_plane(x: T, y: T) -> Self {
        State([x, y])
    }

    pub fn x(&self) -> T {
        self.0[0]
    }

    pub fn dist_sq(&self, other: &Self) -> T {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Self) -> T {
        self.dist_sq(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0[0].is_finite() && self.0[1].is_finite()
    }

    /// Formats the state for reports using `dim` coordinates.
    pub fn display(&self, dim: usize) -> String {
        match dim {
            0 => "x0".to_string(),
            1 => format!("{}", self.0[0]),
            _ => format!("{};{}", self.0[0], self.0[1]),
        }
    }
}

impl<T: Real> fmt::Display for State<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0[0], self.0[1])
    }
}

/// State space with its reference measure: counting measure on a single
/// point, Lebesgue measure otherwise. Unbounded spaces are truncated to a
/// radius for quadrature.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpace<T> {
    SinglePoint,
    Interval { lo: T, hi: T, mesh: usize },
    RealLine { radius: T, mesh: usize },
    Plane { radius: T, mesh: usize },
}

impl<T: Real> StateSpace<T> {
    pub fn single_point() -> Self {
        StateSpace::SinglePoint
    }

    pub fn interval(lo: T, hi: T, mesh: usize) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("interval needs lo < hi, got [{lo}, {hi}]")));
        }
        check_mesh(mesh)?;
        Ok(StateSpace::Interval { lo, hi, mesh })
    }

    pub fn real_line(radius: T, mesh: usize) -> Result<Self> {
        check_radius(radius)?;
        check_mesh(mesh)?;
        Ok(StateSpace::RealLine { radius, mesh })
    }

    pub fn plane(radius: T, mesh: usize) -> Result<Self> {
        check_radius(radius)?;
        check_mesh(mesh)?;
        Ok(StateSpace::Plane { radius, mesh })
    }

    pub fn dim(&self) -> usize {
        match self {
            StateSpace::SinglePoint => 0,
            StateSpace::Interval { .. } | StateSpace::RealLine { .. } => 1,
            StateSpace::Plane { .. } => 2,
        }
    }

    /// Coordinate bounds of the (truncated) domain, one pair per used axis.
    pub fn axis_bounds(&self) -> Vec<(T, T)> {
        match *self {
            StateSpace::SinglePoint => vec![],
            StateSpace::Interval { lo, hi, .. } => vec![(lo, hi)],
            StateSpace::RealLine { radius, .. } => vec![(-radius, radius)],
            StateSpace::Plane { radius, .. } => vec![(-radius, radius), (-radius, radius)],
        }
    }

    pub fn mesh(&self) -> usize {
        match *self {
            StateSpace::SinglePoint => 1,
            StateSpace::Interval { mesh, .. }
            | StateSpace::RealLine { mesh, .. }
            | StateSpace::Plane { mesh, .. } => mesh,
        }
    }

    pub fn truncation_radius(&self) -> Option<T> {
        match *self {
            StateSpace::RealLine { radius, .. } | StateSpace::Plane { radius, .. } => Some(radius),
            _ => None,
        }
    }

    pub fn contains(&self, z: &State<T>) -> bool {
        let bounds = self.axis_bounds();
        match self {
            StateSpace::SinglePoint => *z == State::origin(),
            _ => bounds
                .iter()
                .enumerate()
                .all(|(axis, &(lo, hi))| z.0[axis] >= lo && z.0[axis] <= hi),
        }
    }

    /// Distance from `z` to the boundary of the truncated domain.
    pub fn distance_to_boundary(&self, z: &State<T>) -> T {
        self.axis_bounds()
            .iter()
            .enumerate()
            .map(|(axis, &(lo, hi))| (z.0[axis] - lo).min(hi - z.0[axis]))
            .fold(T::infinity(), T::min)
    }

    /// Uniform mesh of states (mesh points per axis) covering the domain.
    pub fn mesh_states(&self) -> Vec<State<T>> {
        match self {
            StateSpace::SinglePoint => vec![State::origin()],
            _ => {
                let bounds = self.axis_bounds();
                let m = self.mesh();
                let axis = |(lo, hi): (T, T)| -> Vec<T> {
                    (0..m)
                        .map(|i| lo + (hi - lo) * from_usize::<T>(i) / from_usize::<T>(m - 1))
                        .collect()
                };
                let xs = axis(bounds[0]);
                if bounds.len() == 1 {
                    xs.into_iter().map(State::on_line).collect()
                } else {
                    let ys = axis(bounds[1]);
                    xs.iter()
                        .flat_map(|&x| ys.iter().map(move |&y| State::in_plane(x, y)))
                        .collect()
                }
            }
        }
    }

    /// Characteristic length used to cap panel widths in space quadrature.
    pub fn base_panel_width(&self) -> T {
        match self.axis_bounds().first() {
            Some(&(lo, hi)) => (hi - lo) / from_usize::<T>(self.mesh().max(1)),
            None => lit(1.0),
        }
    }
}

fn check_mesh(mesh: usize) -> Result<()> {
    if mesh < 2 {
        return Err(Error::Domain(format!("mesh must be >= 2, got {mesh}")));
    }
    Ok(())
}

fn check_radius<T: Real>(radius: T) -> Result<()> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::Domain(format!("truncation radius must be positive, got {radius}")));
    }
    Ok(())
}
