//! User-tabulated kernels read from CSV rows `s,x,t,y,value`.

use super::space::State;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

/// Kernel values on a rectilinear (s,x,t,y) grid, interpolated multilinearly.
///
/// Corners with t <= s need not be present; the interpolation weights are
/// renormalized over the corners that exist. Queries outside the grid are
/// clamped to its boundary.
#[derive(Debug, Clone)]
pub struct TabulatedKernel<T> {
    s_axis: Vec<T>,
    x_axis: Vec<T>,
    t_axis: Vec<T>,
    y_axis: Vec<T>,
    values: HashMap<[usize; 4], T>,
    pub(super) rows: usize,
}

#[derive(Debug, serde::Deserialize)]
struct Row {
    s: f64,
    x: f64,
    t: f64,
    y: f64,
    value: f64,
}

impl<T: Real> TabulatedKernel<T> {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<Row>() {
            let row = rec.map_err(|e| Error::Config(format!("tabulated kernel CSV: {e}")))?;
            rows.push(row);
        }
        Self::from_rows(rows.into_iter().map(|r| (r.s, r.x, r.t, r.y, r.value)))
    }

    pub fn from_rows(rows: impl IntoIterator<Item = (f64, f64, f64, f64, f64)>) -> Result<Self> {
        let rows: Vec<_> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::Config("tabulated kernel has no rows".into()));
        }
        let axis = |pick: fn(&(f64, f64, f64, f64, f64)) -> f64| -> Vec<f64> {
            let mut v: Vec<f64> = rows.iter().map(pick).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            v.dedup();
            v
        };
        let sa = axis(|r| r.0);
        let xa = axis(|r| r.1);
        let ta = axis(|r| r.2);
        let ya = axis(|r| r.3);
        let index = |a: &[f64], v: f64| a.iter().position(|&w| w == v).expect("axis value");
        let mut values = HashMap::new();
        for &(s, x, t, y, v) in &rows {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "tabulated kernel value must be finite and >= 0, got {v} at ({s},{x},{t},{y})"
                )));
            }
            if t <= s {
                continue;
            }
            values.insert([index(&sa, s), index(&xa, x), index(&ta, t), index(&ya, y)], lit(v));
        }
        if values.is_empty() {
            return Err(Error::Config("tabulated kernel has no rows with s < t".into()));
        }
        let conv = |v: Vec<f64>| v.into_iter().map(lit).collect::<Vec<T>>();
        Ok(Self {
            s_axis: conv(sa),
            x_axis: conv(xa),
            t_axis: conv(ta),
            y_axis: conv(ya),
            values,
            rows: rows.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// 0 when every state coordinate is zero (one-point space), else 1.
    pub fn dim(&self) -> usize {
        let zero = T::zero();
        if self.x_axis.iter().chain(&self.y_axis).all(|&v| v == zero) {
            0
        } else {
            1
        }
    }

    pub fn eval(&self, s: T, x: &State<T>, t: T, y: &State<T>) -> T {
        let bs = bracket(&self.s_axis, s);
        let bx = bracket(&self.x_axis, x.0[0]);
        let bt = bracket(&self.t_axis, t);
        let by = bracket(&self.y_axis, y.0[0]);
        let mut acc = T::zero();
        let mut wsum = T::zero();
        for (is, ws) in bs.iter() {
            for (ix, wx) in bx.iter() {
                for (it, wt) in bt.iter() {
                    for (iy, wy) in by.iter() {
                        let w = *ws * *wx * *wt * *wy;
                        if w == T::zero() {
                            continue;
                        }
                        if let Some(v) = self.values.get(&[*is, *ix, *it, *iy]) {
                            acc = acc + w * *v;
                            wsum = wsum + w;
                        }
                    }
                }
            }
        }
        if wsum > T::zero() {
            acc / wsum
        } else {
            T::nan()
        }
    }
}

/// Two bracketing indices with linear weights (clamped outside the axis).
fn bracket<T: Real>(axis: &[T], v: T) -> [(usize, T); 2] {
    let n = axis.len();
    if n == 1 || v <= axis[0] {
        return [(0, T::one()), (0, T::zero())];
    }
    if v >= axis[n - 1] {
        return [(n - 1, T::one()), (n - 1, T::zero())];
    }
    let j = axis.partition_point(|&a| a <= v) - 1;
    let h = axis[j + 1] - axis[j];
    let w = (v - axis[j]) / h;
    [(j, T::one() - w), (j + 1, w)]
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "s,x,t,y,value\n\
        0,0,1,0,1.0\n\
        0,0,2,0,0.5\n\
        0,1,1,0,2.0\n\
        0,1,2,0,1.0\n\
        0,0,1,1,3.0\n\
        0,0,2,1,1.5\n\
        0,1,1,1,4.0\n\
        0,1,2,1,2.0\n";

    #[test]
    fn interpolates_multilinearly() {
        let k = TabulatedKernel::<f64>::from_reader(CSV.as_bytes()).unwrap();
        assert_eq!(k.len(), 8);
        let v = k.eval(0.0, &State::on_line(0.0), 1.5, &State::on_line(0.0));
        assert!((v - 0.75).abs() < 1e-15);
        let v = k.eval(0.0, &State::on_line(0.5), 1.0, &State::on_line(0.5));
        assert!((v - 2.5).abs() < 1e-15);
        assert_eq!(k.dim(), 1);
    }

    #[test]
    fn rejects_negative_values() {
        let bad = "s,x,t,y,value\n0,0,1,0,-1\n";
        assert!(TabulatedKernel::<f64>::from_reader(bad.as_bytes()).is_err());
    }

    #[test]
    fn one_point_table() {
        let csv = "s,x,t,y,value\n0,0,1,0,1\n0,0,2,0,0.7071067811865476\n";
        let k = TabulatedKernel::<f64>::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(k.dim(), 0);
        let o = State::origin();
        assert!((k.eval(0.0, &o, 2.0, &o) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }
}
