//! Time integration of the semi-discrete heat and Cattaneo systems.
//!
//! Heat: Crank–Nicolson on `M y' + K y = M u`.
//! Cattaneo: Newmark-β with β = γ = ½ on `τ M y'' + M y' + K y = M u`.
//!
//! Homogeneous Dirichlet conditions are imposed by symmetric elimination
//! inside the steppers, so every snapshot after the initial one vanishes on
//! the boundary. Adjoint equations are integrated by time reversal with the
//! same forward schemes.

use crate::error::{check_len, Error, Result};
use crate::fem::{zero_boundary, Discretization, FeFunction};
use crate::sparse::{factorize_spd, CsrMatrix, SpdFactor};
use crate::trajectory::{TimeGrid, Trajectory};

pub const NEWMARK_BETA: f64 = 0.5;
pub const NEWMARK_GAMMA: f64 = 0.5;

/// Displacement, velocity and acceleration at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CattaneoState {
    pub displacement: FeFunction,
    pub velocity: FeFunction,
    pub acceleration: FeFunction,
}

fn check_source(grid: &TimeGrid, ndof: usize, source: Option<&Trajectory>) -> Result<()> {
    if let Some(src) = source {
        grid.check_same(src.grid())?;
        check_len(ndof, src.ndof())?;
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("relaxation time must be positive, got {tau}"),
        })
    }
}

/// Crank–Nicolson integrator with a prefactored `M + (Δt/2) K`.
#[derive(Debug, Clone)]
pub struct HeatSolver<'a> {
    disc: &'a Discretization,
    grid: TimeGrid,
    explicit: CsrMatrix,
    factor: SpdFactor,
}

impl<'a> HeatSolver<'a> {
    pub fn new(disc: &'a Discretization, grid: TimeGrid) -> Result<Self> {
        let half = 0.5 * grid.dt();
        let implicit = disc.mass.linear_combination(1.0, &disc.stiffness, half)?;
        let explicit = disc.mass.linear_combination(1.0, &disc.stiffness, -half)?;
        let factor = factorize_spd(&implicit.eliminate(disc.boundary_mask())?)?;
        Ok(Self {
            disc,
            grid,
            explicit,
            factor,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Runs the scheme, handing each snapshot `(k, y_k)` to `sink`.
    pub fn run(
        &self,
        source: Option<&Trajectory>,
        y0: &[f64],
        mut sink: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        let n = self.disc.num_nodes();
        check_len(n, y0.len())?;
        check_source(&self.grid, n, source)?;
        let mask = self.disc.boundary_mask();
        let half = 0.5 * self.grid.dt();
        let mut y = y0.to_vec();
        let mut rhs = vec![0.0; n];
        let mut avg = vec![0.0; n];
        sink(0, &y);
        for k in 0..self.grid.num_steps() {
            self.explicit.spmv_into(&y, &mut rhs)?;
            if let Some(src) = source {
                for ((a, u0), u1) in avg.iter_mut().zip(src.snapshot(k)).zip(src.snapshot(k + 1)) {
                    *a = u0 + u1;
                }
                self.disc.mass.spmv_add(half, &avg, &mut rhs)?;
            }
            zero_boundary(&mut rhs, mask);
            self.factor.solve_in_place(&mut rhs)?;
            std::mem::swap(&mut y, &mut rhs);
            sink(k + 1, &y);
        }
        Ok(())
    }

    pub fn solve(&self, source: Option<&Trajectory>, y0: &[f64]) -> Result<Trajectory> {
        let mut out = Trajectory::zeros(self.grid, self.disc.num_nodes());
        self.run(source, y0, |k, y| out.snapshot_mut(k).copy_from_slice(y))?;
        Ok(out)
    }

    /// Backward adjoint `−p' − Δp = residual`, `p(T) = 0`, by time reversal.
    pub fn solve_adjoint(&self, residual: &Trajectory) -> Result<Trajectory> {
        let mut reversed = residual.clone();
        reversed.reverse_time();
        let zero = vec![0.0; self.disc.num_nodes()];
        let mut p = self.solve(Some(&reversed), &zero)?;
        p.reverse_time();
        Ok(p)
    }
}

/// Newmark-β integrator (β = γ = ½) with prefactored effective matrix.
#[derive(Debug, Clone)]
pub struct CattaneoSolver<'a> {
    disc: &'a Discretization,
    grid: TimeGrid,
    tau: f64,
    initial: SpdFactor,
    effective: SpdFactor,
}

impl<'a> CattaneoSolver<'a> {
    pub fn new(disc: &'a Discretization, tau: f64, grid: TimeGrid) -> Result<Self> {
        check_tau(tau)?;
        let dt = grid.dt();
        let mask = disc.boundary_mask();
        let initial = factorize_spd(&disc.mass.scaled(tau).eliminate(mask)?)?;
        let effective = disc
            .mass
            .linear_combination(tau + NEWMARK_GAMMA * dt, &disc.stiffness, NEWMARK_BETA * dt * dt)?
            .eliminate(mask)?;
        let effective = factorize_spd(&effective)?;
        Ok(Self {
            disc,
            grid,
            tau,
            initial,
            effective,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Initial acceleration from `τ M a₀ = M u₀ − M y₁ − K y₀`.
    pub fn initial_acceleration(&self, u0: Option<&[f64]>, y0: &[f64], y1: &[f64]) -> Result<Vec<f64>> {
        let n = self.disc.num_nodes();
        let mut rhs = vec![0.0; n];
        self.disc.mass.spmv_into(y1, &mut rhs)?;
        rhs.iter_mut().for_each(|v| *v = -*v);
        self.disc.stiffness.spmv_add(-1.0, y0, &mut rhs)?;
        if let Some(u0) = u0 {
            self.disc.mass.spmv_add(1.0, u0, &mut rhs)?;
        }
        zero_boundary(&mut rhs, self.disc.boundary_mask());
        self.initial.solve_in_place(&mut rhs)?;
        Ok(rhs)
    }

    /// Runs the scheme, handing each state `(k, d_k, v_k, a_k)` to `sink`.
    pub fn run(
        &self,
        source: Option<&Trajectory>,
        y0: &[f64],
        y1: &[f64],
        mut sink: impl FnMut(usize, &[f64], &[f64], &[f64]),
    ) -> Result<()> {
        let n = self.disc.num_nodes();
        check_len(n, y0.len())?;
        check_len(n, y1.len())?;
        check_source(&self.grid, n, source)?;
        let mask = self.disc.boundary_mask();
        let dt = self.grid.dt();
        let (beta, gamma) = (NEWMARK_BETA, NEWMARK_GAMMA);

        let mut d = y0.to_vec();
        let mut v = y1.to_vec();
        let mut a = self.initial_acceleration(source.map(|s| s.snapshot(0)), y0, y1)?;
        let mut rhs = vec![0.0; n];
        sink(0, &d, &v, &a);
        for k in 0..self.grid.num_steps() {
            // predictors
            for i in 0..n {
                d[i] += dt * v[i] + 0.5 * dt * dt * (1.0 - 2.0 * beta) * a[i];
                v[i] += dt * (1.0 - gamma) * a[i];
            }
            self.disc.mass.spmv_into(&v, &mut rhs)?;
            rhs.iter_mut().for_each(|r| *r = -*r);
            self.disc.stiffness.spmv_add(-1.0, &d, &mut rhs)?;
            if let Some(src) = source {
                self.disc.mass.spmv_add(1.0, src.snapshot(k + 1), &mut rhs)?;
            }
            zero_boundary(&mut rhs, mask);
            self.effective.solve_in_place(&mut rhs)?;
            std::mem::swap(&mut a, &mut rhs);
            for i in 0..n {
                d[i] += beta * dt * dt * a[i];
                v[i] += gamma * dt * a[i];
            }
            zero_boundary(&mut d, mask);
            zero_boundary(&mut v, mask);
            sink(k + 1, &d, &v, &a);
        }
        Ok(())
    }

    /// Displacement and velocity trajectories.
    pub fn solve(
        &self,
        source: Option<&Trajectory>,
        y0: &[f64],
        y1: &[f64],
    ) -> Result<(Trajectory, Trajectory)> {
        let n = self.disc.num_nodes();
        let mut disp = Trajectory::zeros(self.grid, n);
        let mut vel = Trajectory::zeros(self.grid, n);
        self.run(source, y0, y1, |k, d, v, _| {
            disp.snapshot_mut(k).copy_from_slice(d);
            vel.snapshot_mut(k).copy_from_slice(v);
        })?;
        Ok((disp, vel))
    }

    /// Displacement only, without keeping the velocity history.
    pub fn solve_displacement(&self, source: Option<&Trajectory>, y0: &[f64], y1: &[f64]) -> Result<Trajectory> {
        let mut disp = Trajectory::zeros(self.grid, self.disc.num_nodes());
        self.run(source, y0, y1, |k, d, _, _| disp.snapshot_mut(k).copy_from_slice(d))?;
        Ok(disp)
    }

    /// State of the scheme after the last step.
    pub fn final_state(&self, source: Option<&Trajectory>, y0: &[f64], y1: &[f64]) -> Result<CattaneoState> {
        let last = self.grid.num_steps();
        let mut state = None;
        self.run(source, y0, y1, |k, d, v, a| {
            if k == last {
                state = Some(CattaneoState {
                    displacement: FeFunction::from_values(d.to_vec()),
                    velocity: FeFunction::from_values(v.to_vec()),
                    acceleration: FeFunction::from_values(a.to_vec()),
                });
            }
        })?;
        Ok(state.expect("the sink sees the final step"))
    }

    /// Backward adjoint `τp'' − p' − Δp = residual`, `p(T) = 0`,
    /// `−p'(T) = terminal_velocity`. With `θ = T − t` this is the forward
    /// Cattaneo problem with `q(0) = 0` and `q'(0) = terminal_velocity`.
    pub fn solve_adjoint(&self, residual: &Trajectory, terminal_velocity: &[f64]) -> Result<Trajectory> {
        let mut reversed = residual.clone();
        reversed.reverse_time();
        let zero = vec![0.0; self.disc.num_nodes()];
        let mut p = self.solve_displacement(Some(&reversed), &zero, terminal_velocity)?;
        p.reverse_time();
        Ok(p)
    }
}

/// Crank–Nicolson solve of `y' − Δy = u`, `y(0) = y0`.
pub fn solve_heat_cn(disc: &Discretization, grid: TimeGrid, source: Option<&Trajectory>, y0: &[f64]) -> Result<Trajectory> {
    HeatSolver::new(disc, grid)?.solve(source, y0)
}

/// Newmark solve of `τy'' + y' − Δy = u`, `y(0) = y0`, `y'(0) = y1`;
/// returns displacement and velocity.
pub fn solve_cattaneo_newmark(
    tau: f64,
    disc: &Discretization,
    grid: TimeGrid,
    source: Option<&Trajectory>,
    y0: &[f64],
    y1: &[f64],
) -> Result<(Trajectory, Trajectory)> {
    CattaneoSolver::new(disc, tau, grid)?.solve(source, y0, y1)
}

pub fn solve_adjoint_heat(disc: &Discretization, grid: TimeGrid, residual: &Trajectory) -> Result<Trajectory> {
    grid.check_same(residual.grid())?;
    HeatSolver::new(disc, grid)?.solve_adjoint(residual)
}

pub fn solve_adjoint_cattaneo(
    tau: f64,
    disc: &Discretization,
    grid: TimeGrid,
    residual: &Trajectory,
    terminal_velocity: &[f64],
) -> Result<Trajectory> {
    grid.check_same(residual.grid())?;
    CattaneoSolver::new(disc, tau, grid)?.solve_adjoint(residual, terminal_velocity)
}
