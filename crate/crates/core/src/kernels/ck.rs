use super::kernel::KernelDensity;
use super::space::{State, StateSpace};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::quadrature::{Focus, Quadrature};
use crate::scalar::Real;

/// Worst Chapman–Kolmogorov defect over a grid.
#[derive(Debug, Clone)]
pub struct CkReport<T> {
    /// max |∫ k(s,x,u,z) k(u,z,t,y) dz - k(s,x,t,y)| / k(s,x,t,y)
    pub max_relative: T,
    /// quadrature error estimate (relative) at the worst location
    pub error_estimate: T,
    /// (s, x, u, t, y) of the worst defect
    pub location: Option<(T, State<T>, T, T, State<T>)>,
    pub evaluations: u64,
    pub truncation_radius: Option<T>,
}

/// Chapman–Kolmogorov residual of a kernel claiming the semigroup property.
pub fn ck_residual<T: Real>(
    kernel: &KernelDensity<T>,
    space: &StateSpace<T>,
    grid: &SpaceTimeGrid<T>,
    quad: &Quadrature<T>,
) -> Result<CkReport<T>> {
    if !kernel.claims_chapman_kolmogorov() {
        return Err(Error::Precondition(format!(
            "kernel {} does not claim the Chapman-Kolmogorov property",
            kernel.label()
        )));
    }
    if grid.times().len() < 3 {
        return Err(Error::Precondition("Chapman-Kolmogorov check needs >= 3 distinct times".into()));
    }
    kernel.check_space(space)?;
    let times = grid.times();
    let mut report = CkReport {
        max_relative: T::zero(),
        error_estimate: T::zero(),
        location: None,
        evaluations: 0,
        truncation_radius: space.truncation_radius(),
    };
    for (i, &s) in times.iter().enumerate() {
        for (j, &u) in times.iter().enumerate().skip(i + 1) {
            for &t in &times[j + 1..] {
                for x in grid.states() {
                    for y in grid.states() {
                        let mut foci = Vec::new();
                        if let Some(w) = kernel.width(u - s) {
                            foci.push(Focus { center: *x, width: w });
                        }
                        if let Some(w) = kernel.width(t - u) {
                            foci.push(Focus { center: *y, width: w });
                        }
                        let tail = tail_bound(kernel, space, s, x, u, t, y);
                        let r = quad
                            .integrate_space(
                                |z| kernel.eval(s, x, u, z) * kernel.eval(u, z, t, y),
                                space,
                                &foci,
                                tail,
                            )
                            .map_err(|e| e.located(format!("s={s}, u={u}, t={t}")))?;
                        report.evaluations += r.evaluations;
                        let direct = kernel.eval(s, x, t, y);
                        if !(direct > T::zero()) {
                            continue;
                        }
                        let rel = (r.value - direct).abs() / direct;
                        if rel > report.max_relative || report.location.is_none() {
                            report.max_relative = rel;
                            report.error_estimate = r.error / direct;
                            report.location = Some((s, *x, u, t, *y));
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Mass of the integrand lost to truncating the state space.
fn tail_bound<T: Real>(
    kernel: &KernelDensity<T>,
    space: &StateSpace<T>,
    s: T,
    x: &State<T>,
    u: T,
    t: T,
    y: &State<T>,
) -> T {
    if space.truncation_radius().is_none() {
        return T::zero();
    }
    let dx = space.distance_to_boundary(x);
    let dy = space.distance_to_boundary(y);
    // sup_z k(u,z,t,y) is attained at z = y for the built-in families
    let left = kernel
        .tail_mass(u - s, dx)
        .map(|m| m * kernel.eval(u, y, t, y))
        .unwrap_or(T::zero());
    let right = kernel
        .tail_mass(t - u, dy)
        .map(|m| m * kernel.eval(s, x, u, x))
        .unwrap_or(T::zero());
    left + right
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_kernel_is_rejected() {
        let k = KernelDensity::beta(0.5f64).unwrap();
        let g = SpaceTimeGrid::times_only(vec![0.0, 1.0, 2.0]).unwrap();
        let r = ck_residual(&k, &StateSpace::single_point(), &g, &Quadrature::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn needs_three_times() {
        let k = KernelDensity::gauss(1).unwrap();
        let g = SpaceTimeGrid::new(vec![0.0, 1.0], vec![State::on_line(0.0)]).unwrap();
        let sp = StateSpace::real_line(10.0, 8).unwrap();
        assert!(ck_residual(&k, &sp, &g, &Quadrature::default()).is_err());
    }
}
