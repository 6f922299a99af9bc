//! Uniform time grids and full-history trajectories of nodal vectors.

use std::io::Write;

use crate::error::{check_len, Error, Result};
use crate::fem::{Discretization, FeFunction};

/// `num_steps` uniform steps of size `dt` covering `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    dt: f64,
    num_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, num_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: format!("horizon must be positive, got {horizon}"),
            });
        }
        if num_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "num_steps",
                reason: "at least one step is required".into(),
            });
        }
        Ok(Self {
            horizon,
            dt: horizon / num_steps as f64,
            num_steps,
        })
    }

    /// Grid with step `dt`; `horizon / dt` must be an integer up to 1e-12.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("step must be positive, got {dt}"),
            });
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("T = {horizon} is not an integer multiple of dt = {dt}"),
            });
        }
        Self::new(horizon, steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn num_points(&self) -> usize {
        self.num_steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.num_steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    /// Composite trapezoidal weight of grid point `k`.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.num_steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{} steps of {:e} vs {} steps of {:e}",
                self.num_steps, self.dt, other.num_steps, other.dt
            )))
        }
    }
}

/// Snapshots `0..=num_steps` of a nodal field, snapshot `k` at time `k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    ndof: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(grid: TimeGrid, ndof: usize) -> Self {
        Self {
            grid,
            ndof,
            data: vec![0.0; grid.num_points() * ndof],
        }
    }

    /// Fills snapshot `k` with `f(t_k, out)`.
    pub fn from_fn(grid: TimeGrid, ndof: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut traj = Self::zeros(grid, ndof);
        for k in 0..grid.num_points() {
            f(grid.time(k), traj.snapshot_mut(k));
        }
        traj
    }

    /// Nodal interpolation of a space-time field `f(t, x, y)`.
    pub fn interpolate(grid: TimeGrid, disc: &Discretization, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let nodes = disc.mesh.nodes();
        Self::from_fn(grid, nodes.len(), |t, out| {
            for (o, p) in out.iter_mut().zip(nodes) {
                *o = f(t, p[0], p[1]);
            }
        })
    }

    /// Same field at every time.
    pub fn constant(grid: TimeGrid, snapshot: &[f64]) -> Self {
        Self::from_fn(grid, snapshot.len(), |_, out| out.copy_from_slice(snapshot))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn len(&self) -> usize {
        self.grid.num_points()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        &self.data[k * self.ndof..(k + 1) * self.ndof]
    }

    pub fn snapshot_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.ndof..(k + 1) * self.ndof]
    }

    pub fn fe_function(&self, k: usize) -> FeFunction {
        FeFunction::from_values(self.snapshot(k).to_vec())
    }

    pub fn last(&self) -> &[f64] {
        self.snapshot(self.grid.num_steps())
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ndof)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Time reversal `θ = T − t`, in place.
    pub fn reverse_time(&mut self) {
        let n = self.len();
        for k in 0..n / 2 {
            let (head, tail) = self.data.split_at_mut((n - 1 - k) * self.ndof);
            head[k * self.ndof..(k + 1) * self.ndof].swap_with_slice(&mut tail[..self.ndof]);
        }
    }

    pub fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        check_len(self.ndof, other.ndof)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Trajectory) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self − other`.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// Space-time `L²(0,T;L²)` inner product: mass-matrix pairing per
    /// snapshot, trapezoidal rule in time.
    pub fn l2l2_inner(&self, other: &Trajectory, disc: &Discretization) -> Result<f64> {
        self.check_compatible(other)?;
        let mut total = 0.0;
        for k in 0..self.len() {
            total += self.grid.trapezoid_weight(k) * disc.l2_inner(self.snapshot(k), other.snapshot(k))?;
        }
        Ok(total)
    }

    pub fn l2l2_norm(&self, disc: &Discretization) -> Result<f64> {
        Ok(self.l2l2_inner(self, disc)?.max(0.0).sqrt())
    }

    /// CSV dump `step,time,v0,v1,…` of every `stride`-th snapshot (and the last).
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> std::io::Result<()> {
        let stride = stride.max(1);
        write!(w, "step,time")?;
        for i in 0..self.ndof {
            write!(w, ",v{i}")?;
        }
        writeln!(w)?;
        let last = self.grid.num_steps();
        for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
            write!(w, "{k},{}", self.grid.time(k))?;
            for v in self.snapshot(k) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_invariants() {
        let g = TimeGrid::with_step(1.0, 1e-4).unwrap();
        assert_eq!(g.num_steps(), 10_000);
        assert!((g.num_steps() as f64 * g.dt() - 1.0).abs() < 1e-12);
        assert_eq!(g.time(g.num_steps()), 1.0);
        assert!(TimeGrid::with_step(1.0, 0.3).is_err());
        assert!(TimeGrid::with_step(1.0, -1.0).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        let weights: f64 = (0..g.num_points()).map(|k| g.trapezoid_weight(k)).sum();
        assert!((weights - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversal_is_an_involution() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let t = Trajectory::from_fn(g, 2, |t, out| {
            out[0] = t;
            out[1] = -t;
        });
        let mut r = t.clone();
        r.reverse_time();
        assert_eq!(r.snapshot(0), &[1.0, -1.0]);
        assert_eq!(r.snapshot(2), &[0.5, -0.5]);
        r.reverse_time();
        assert_eq!(r, t);
    }

    #[test]
    fn csv_dump_follows_stride() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        let t = Trajectory::zeros(g, 2);
        let mut buf = Vec::new();
        t.write_csv(&mut buf, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "step,time,v0,v1");
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[4].starts_with("5,1,"));
    }
}
