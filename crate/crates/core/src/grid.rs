use crate::error::{Error, Result};
use crate::kernels::State;
use crate::scalar::{lit, Real};

/// Evaluation grid: all (s,x,t,y) with s < t drawn from times × states.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid<T> {
    times: Vec<T>,
    states: Vec<State<T>>,
}

/// One evaluation pair of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPair<T> {
    pub s: T,
    pub x: State<T>,
    pub t: T,
    pub y: State<T>,
}

impl<T: Real> SpaceTimeGrid<T> {
    pub fn new(times: Vec<T>, states: Vec<State<T>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Precondition("grid needs at least two times".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Precondition("grid times must be finite and strictly increasing".into()));
        }
        if states.is_empty() {
            return Err(Error::Precondition("grid needs at least one state".into()));
        }
        if states.iter().any(|z| !z.is_finite()) {
            return Err(Error::Precondition("grid states must be finite".into()));
        }
        let mut states = states;
        states.sort_by(|a, b| {
            a.0[0]
                .partial_cmp(&b.0[0])
                .expect("finite")
                .then(a.0[1].partial_cmp(&b.0[1]).expect("finite"))
        });
        states.dedup();
        Ok(Self { times, states })
    }

    /// Grid on the one-point space.
    pub fn times_only(times: Vec<T>) -> Result<Self> {
        Self::new(times, vec![State::origin()])
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[State<T>] {
        &self.states
    }

    /// Pairs in lexicographic order of (s, t, x, y); states are kept sorted.
    pub fn pairs(&self) -> Vec<GridPair<T>> {
        let mut out = Vec::new();
        for (i, &s) in self.times.iter().enumerate() {
            for &t in &self.times[i + 1..] {
                for x in &self.states {
                    for y in &self.states {
                        out.push(GridPair { s, x: *x, t, y: *y });
                    }
                }
            }
        }
        out
    }

    /// Largest time gap t - s in the grid.
    pub fn horizon(&self) -> T {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Grid with the midpoint of every consecutive pair of times inserted.
    pub fn refined(&self) -> Self {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push((w[0] + w[1]) * lit(0.5));
        }
        times.push(self.times[self.times.len() - 1]);
        Self {
            times,
            states: self.states.clone(),
        }
    }
}
