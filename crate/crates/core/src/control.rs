//! Reduced-functional optimal control of the Cattaneo and heat equations.
//!
//! The cost is
//!
//! ```text
//! J(u) = ½‖y − y_d‖²_{L²L²} + (τ/2)‖y(T) − y_d(T)‖²_{L²} + (λ/2)‖u‖²_{L²L²}
//! ```
//!
//! where `y` solves the state equation for the control `u` and the terminal
//! term is present only for the penalized Cattaneo functional. `τ = 0`
//! selects the heat equation. The reduced gradient is `p + λu` with `p`
//! the adjoint state; the problem is linear-quadratic, so steps along a
//! direction have a closed-form minimizer.

use crate::error::{Error, Result};
use crate::fem::{Discretization, FeFunction};
use crate::steppers::{CattaneoSolver, HeatSolver};
use crate::trajectory::{TimeGrid, Trajectory};

#[derive(Debug, Clone)]
pub struct OcpConfig {
    /// Relaxation time; `0` selects the heat problem.
    pub tau: f64,
    pub lambda: f64,
    /// Adds `(τ/2)‖y(T) − y_d(T)‖²` to the cost.
    pub terminal_penalty: bool,
    pub desired: Trajectory,
    pub y0: FeFunction,
    /// Initial velocity; ignored for the heat problem.
    pub y1: FeFunction,
    pub grid: TimeGrid,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl OcpConfig {
    pub fn new(tau: f64, lambda: f64, desired: Trajectory, y0: FeFunction, y1: FeFunction) -> Self {
        let grid = *desired.grid();
        Self {
            tau,
            lambda,
            terminal_penalty: true,
            desired,
            y0,
            y1,
            grid,
            rel_tol: 1e-4,
            max_iters: 500,
        }
    }

    pub fn validate(&self, disc: &Discretization) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return bad("tau", format!("must be non-negative, got {}", self.tau));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda", format!("must be non-negative, got {}", self.lambda));
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol", format!("must be positive, got {}", self.rel_tol));
        }
        self.grid.check_same(self.desired.grid())?;
        let n = disc.num_nodes();
        crate::error::check_len(n, self.desired.ndof())?;
        crate::error::check_len(n, self.y0.len())?;
        if self.tau > 0.0 {
            crate::error::check_len(n, self.y1.len())?;
        }
        Ok(())
    }

    /// Weight of the terminal term, `τ` if penalized and `0` otherwise.
    pub fn terminal_weight(&self) -> f64 {
        if self.terminal_penalty {
            self.tau
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub control: Trajectory,
    pub state: Trajectory,
    pub cost_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub step_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OptimizeResult {
    /// `iter,cost,grad_norm,step_length`; the step is empty on the final row.
    pub fn iteration_log_csv(&self) -> String {
        let mut out = String::from("iter,cost,grad_norm,step_length\n");
        for (i, (c, g)) in self.cost_history.iter().zip(&self.grad_norm_history).enumerate() {
            let step = self.step_history.get(i).map(|s| format!("{s:e}")).unwrap_or_default();
            out.push_str(&format!("{i},{c:e},{g:e},{step}\n"));
        }
        out
    }
}

enum StateSolver<'a> {
    Heat(HeatSolver<'a>),
    Cattaneo(CattaneoSolver<'a>),
}

/// The reduced problem `u ↦ J(u)` with prefactored state and adjoint solvers.
pub struct ReducedProblem<'a> {
    disc: &'a Discretization,
    cfg: &'a OcpConfig,
    solver: StateSolver<'a>,
    zero: Vec<f64>,
}

impl<'a> ReducedProblem<'a> {
    pub fn new(disc: &'a Discretization, cfg: &'a OcpConfig) -> Result<Self> {
        cfg.validate(disc)?;
        let solver = if cfg.tau == 0.0 {
            StateSolver::Heat(HeatSolver::new(disc, cfg.grid)?)
        } else {
            StateSolver::Cattaneo(CattaneoSolver::new(disc, cfg.tau, cfg.grid)?)
        };
        Ok(Self {
            disc,
            cfg,
            solver,
            zero: vec![0.0; disc.num_nodes()],
        })
    }

    pub fn config(&self) -> &OcpConfig {
        self.cfg
    }

    fn check_control(&self, u: &Trajectory) -> Result<()> {
        self.cfg.grid.check_same(u.grid())?;
        crate::error::check_len(self.disc.num_nodes(), u.ndof())
    }

    /// State for control `u` with the configured initial data.
    pub fn state(&self, u: &Trajectory) -> Result<Trajectory> {
        self.check_control(u)?;
        match &self.solver {
            StateSolver::Heat(s) => s.solve(Some(u), &self.cfg.y0),
            StateSolver::Cattaneo(s) => s.solve_displacement(Some(u), &self.cfg.y0, &self.cfg.y1),
        }
    }

    /// State for source `d` with zero initial data; `y(u + αd) = y(u) + α w`.
    pub fn linearized_state(&self, d: &Trajectory) -> Result<Trajectory> {
        self.check_control(d)?;
        match &self.solver {
            StateSolver::Heat(s) => s.solve(Some(d), &self.zero),
            StateSolver::Cattaneo(s) => s.solve_displacement(Some(d), &self.zero, &self.zero),
        }
    }

    /// Cost of the pair `(u, y)` with `y` the state of `u`.
    pub fn cost_of(&self, u: &Trajectory, y: &Trajectory) -> Result<f64> {
        let residual = y.difference(&self.cfg.desired)?;
        let mut j = 0.5 * residual.l2l2_norm(self.disc)?.powi(2);
        let wt = self.cfg.terminal_weight();
        if wt > 0.0 {
            j += 0.5 * wt * self.disc.l2_norm(residual.last())?.powi(2);
        }
        if self.cfg.lambda > 0.0 {
            j += 0.5 * self.cfg.lambda * u.l2l2_norm(self.disc)?.powi(2);
        }
        Ok(j)
    }

    pub fn cost(&self, u: &Trajectory) -> Result<(f64, Trajectory)> {
        let y = self.state(u)?;
        Ok((self.cost_of(u, &y)?, y))
    }

    /// Adjoint state for the residual of `y`.
    pub fn adjoint(&self, y: &Trajectory) -> Result<Trajectory> {
        let residual = y.difference(&self.cfg.desired)?;
        match &self.solver {
            StateSolver::Heat(s) => s.solve_adjoint(&residual),
            StateSolver::Cattaneo(s) => {
                let terminal = if self.cfg.terminal_penalty {
                    residual.last().to_vec()
                } else {
                    self.zero.clone()
                };
                s.solve_adjoint(&residual, &terminal)
            }
        }
    }

    /// Reduced gradient `p + λu` at `u` with state `y`.
    pub fn gradient_of(&self, u: &Trajectory, y: &Trajectory) -> Result<Trajectory> {
        let mut g = self.adjoint(y)?;
        if self.cfg.lambda != 0.0 {
            g.axpy(self.cfg.lambda, u)?;
        }
        Ok(g)
    }

    pub fn gradient(&self, u: &Trajectory) -> Result<(Trajectory, f64, Trajectory)> {
        let (j, y) = self.cost(u)?;
        let g = self.gradient_of(u, &y)?;
        Ok((g, j, y))
    }

    /// Curvature `φ''` of `α ↦ J(u + αd)` given `w`, the linearized state of `d`.
    fn curvature(&self, d: &Trajectory, w: &Trajectory) -> Result<f64> {
        let mut c = w.l2l2_norm(self.disc)?.powi(2);
        let wt = self.cfg.terminal_weight();
        if wt > 0.0 {
            c += wt * self.disc.l2_norm(w.last())?.powi(2);
        }
        if self.cfg.lambda > 0.0 {
            c += self.cfg.lambda * d.l2l2_norm(self.disc)?.powi(2);
        }
        Ok(c)
    }

    /// Minimizer of the quadratic `α ↦ J(u + αd)` and the linearized state
    /// of `d`; `None` when the curvature vanishes (only for `d ≡ 0`).
    pub fn line_search(&self, d: &Trajectory, g: &Trajectory) -> Result<Option<(f64, Trajectory)>> {
        let w = self.linearized_state(d)?;
        let curvature = self.curvature(d, &w)?;
        if curvature <= 0.0 || !curvature.is_finite() {
            return Ok(None);
        }
        let slope = g.l2l2_inner(d, self.disc)?;
        Ok(Some((-slope / curvature, w)))
    }

    /// Steepest descent with exact line search from `u0`.
    pub fn gradient_descent_from(&self, u0: Trajectory) -> Result<OptimizeResult> {
        let mut u = u0;
        let mut y = self.state(&u)?;
        let mut cost_history = vec![self.cost_of(&u, &y)?];
        let mut grad_norm_history = Vec::new();
        let mut step_history = Vec::new();
        let mut g = self.gradient_of(&u, &y)?;
        let g0 = g.l2l2_norm(self.disc)?;
        let mut iter = 0;
        let converged = loop {
            let gn = g.l2l2_norm(self.disc)?;
            grad_norm_history.push(gn);
            if gn == 0.0 || gn <= self.cfg.rel_tol * g0 {
                break true;
            }
            if iter >= self.cfg.max_iters {
                break false;
            }
            let mut d = g;
            d.scale(-1.0);
            // ⟨g, d⟩ = −‖d‖², so the slope needs no second copy of g
            let w = self.linearized_state(&d)?;
            let curvature = self.curvature(&d, &w)?;
            if curvature <= 0.0 {
                break true;
            }
            let alpha = gn * gn / curvature;
            u.axpy(alpha, &d)?;
            y.axpy(alpha, &w)?;
            drop((d, w));
            step_history.push(alpha);
            cost_history.push(self.cost_of(&u, &y)?);
            g = self.gradient_of(&u, &y)?;
            iter += 1;
        };
        Ok(OptimizeResult {
            control: u,
            state: y,
            cost_history,
            grad_norm_history,
            step_history,
            iterations: iter,
            converged,
        })
    }

    pub fn gradient_descent(&self) -> Result<OptimizeResult> {
        self.gradient_descent_from(Trajectory::zeros(self.cfg.grid, self.disc.num_nodes()))
    }
}

pub fn eval_cost(disc: &Discretization, cfg: &OcpConfig, u: &Trajectory) -> Result<(f64, Trajectory)> {
    ReducedProblem::new(disc, cfg)?.cost(u)
}

pub fn eval_gradient(disc: &Discretization, cfg: &OcpConfig, u: &Trajectory) -> Result<(Trajectory, f64, Trajectory)> {
    ReducedProblem::new(disc, cfg)?.gradient(u)
}

/// Exact step along `d`; `None` signals a vanishing direction.
pub fn exact_line_search(
    disc: &Discretization,
    cfg: &OcpConfig,
    d: &Trajectory,
    g: &Trajectory,
) -> Result<Option<f64>> {
    Ok(ReducedProblem::new(disc, cfg)?.line_search(d, g)?.map(|(a, _)| a))
}

/// Gradient descent from `u = 0`. Running out of iterations is reported as
/// [`Error::NotConverged`]; use [`ReducedProblem::gradient_descent`] to keep
/// the partial result.
pub fn gradient_descent(disc: &Discretization, cfg: &OcpConfig) -> Result<OptimizeResult> {
    let res = ReducedProblem::new(disc, cfg)?.gradient_descent()?;
    if !res.converged {
        let g0 = res.grad_norm_history[0];
        return Err(Error::NotConverged {
            iterations: res.iterations,
            relative_gradient: res.grad_norm_history.last().unwrap() / g0,
        });
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::random_modal_field;

    fn setup(n: usize) -> (Discretization, TimeGrid) {
        (Discretization::unit_square(n).unwrap(), TimeGrid::with_step(0.2, 1e-2).unwrap())
    }

    fn config(disc: &Discretization, grid: TimeGrid, tau: f64, lambda: f64) -> OcpConfig {
        let zero = FeFunction::zeros(disc.num_nodes());
        let desired = random_modal_field(grid, disc, 11);
        OcpConfig::new(tau, lambda, desired, zero.clone(), zero)
    }

    fn phi(p: &ReducedProblem, u: &Trajectory, d: &Trajectory, alpha: f64) -> f64 {
        let mut v = u.clone();
        v.axpy(alpha, d).unwrap();
        p.cost(&v).unwrap().0
    }

    #[test]
    fn cost_vanishes_when_desired_is_reached() {
        let (disc, grid) = setup(6);
        for tau in [0.0, 0.1] {
            let mut cfg = config(&disc, grid, tau, 0.0);
            cfg.desired = Trajectory::zeros(grid, disc.num_nodes());
            let p = ReducedProblem::new(&disc, &cfg).unwrap();
            let u = Trajectory::zeros(grid, disc.num_nodes());
            assert_eq!(p.cost(&u).unwrap().0, 0.0);
            let (g, _, _) = p.gradient(&u).unwrap();
            assert!(g.is_zero());
        }
    }

    #[test]
    fn control_penalty_scales_with_lambda() {
        let (disc, grid) = setup(6);
        let mut cfg = config(&disc, grid, 0.05, 1.0);
        cfg.desired = Trajectory::zeros(grid, disc.num_nodes());
        let u = random_modal_field(grid, &disc, 3);
        let p1 = ReducedProblem::new(&disc, &cfg).unwrap();
        let (j1, y) = p1.cost(&u).unwrap();
        cfg.lambda = 3.0;
        let p3 = ReducedProblem::new(&disc, &cfg).unwrap();
        let (j3, _) = p3.cost(&u).unwrap();
        let tracking = 0.5 * y.l2l2_norm(&disc).unwrap().powi(2) + 0.025 * disc.l2_norm(y.last()).unwrap().powi(2);
        let penalty = 0.5 * u.l2l2_norm(&disc).unwrap().powi(2);
        assert!((j1 - tracking - penalty).abs() <= 1e-12 * j1);
        assert!((j3 - tracking - 3.0 * penalty).abs() <= 1e-12 * j3);
    }

    #[test]
    fn gradient_without_penalty_is_the_adjoint() {
        let (disc, grid) = setup(6);
        let cfg = config(&disc, grid, 0.1, 0.0);
        let p = ReducedProblem::new(&disc, &cfg).unwrap();
        let u = random_modal_field(grid, &disc, 5);
        let (g, _, y) = p.gradient(&u).unwrap();
        assert_eq!(g.as_slice(), p.adjoint(&y).unwrap().as_slice());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (disc, grid) = setup(8);
        for (tau, lambda) in [(0.0, 0.0), (0.0, 1.0), (0.05, 0.0), (0.05, 1.0)] {
            let cfg = config(&disc, grid, tau, lambda);
            let p = ReducedProblem::new(&disc, &cfg).unwrap();
            let u = random_modal_field(grid, &disc, 21);
            let d = random_modal_field(grid, &disc, 22);
            let (g, _, _) = p.gradient(&u).unwrap();
            let eps = 1e-4;
            let fd = (phi(&p, &u, &d, eps) - phi(&p, &u, &d, -eps)) / (2.0 * eps);
            let an = g.l2l2_inner(&d, &disc).unwrap();
            // the adjoint is a consistent, not exact, discrete transpose
            assert!((fd - an).abs() <= 2e-2 * fd.abs().max(1e-12), "tau={tau} lambda={lambda}: {fd} vs {an}");
        }
    }

    #[test]
    fn line_search_minimizes_along_the_direction() {
        let (disc, grid) = setup(6);
        for lambda in [0.0, 1.0, 1e6] {
            let cfg = config(&disc, grid, 0.05, lambda);
            let p = ReducedProblem::new(&disc, &cfg).unwrap();
            let u = random_modal_field(grid, &disc, 31);
            let d = random_modal_field(grid, &disc, 32);
            let (g, _, _) = p.gradient(&u).unwrap();
            let (alpha, _) = p.line_search(&d, &g).unwrap().unwrap();
            let best = phi(&p, &u, &d, alpha);
            assert!(best <= phi(&p, &u, &d, 0.5 * alpha) && best <= phi(&p, &u, &d, 2.0 * alpha));
            // phi is an exact quadratic, so the symmetric difference quotient is exact
            let h = 1e-3 * alpha.abs().max(1e-8);
            let slope = (phi(&p, &u, &d, alpha + h) - phi(&p, &u, &d, alpha - h)) / (2.0 * h);
            let scale = (phi(&p, &u, &d, alpha + h) - best).abs() / h + 1e-12;
            assert!(slope.abs() <= 1e-3 * scale.max(best.abs()), "lambda={lambda}: slope {slope}");
        }
    }

    #[test]
    fn line_search_agrees_with_golden_section() {
        let (disc, grid) = setup(6);
        let cfg = config(&disc, grid, 0.0, 1e-2);
        let p = ReducedProblem::new(&disc, &cfg).unwrap();
        let u = Trajectory::zeros(grid, disc.num_nodes());
        let (mut d, _, _) = p.gradient(&u).unwrap();
        let (g, _, _) = p.gradient(&u).unwrap();
        d.scale(-1.0);
        let (alpha, _) = p.line_search(&d, &g).unwrap().unwrap();
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, 4.0 * alpha);
        for _ in 0..80 {
            let c = b - ratio * (b - a);
            let e = a + ratio * (b - a);
            if phi(&p, &u, &d, c) < phi(&p, &u, &d, e) {
                b = e;
            } else {
                a = c;
            }
        }
        // the slope comes from the adjoint, which is consistent only to O(dt)
        assert!((0.5 * (a + b) - alpha).abs() <= 2e-2 * alpha, "{alpha} vs {}", 0.5 * (a + b));
    }

    #[test]
    fn zero_direction_has_no_step() {
        let (disc, grid) = setup(4);
        let cfg = config(&disc, grid, 0.1, 1.0);
        let p = ReducedProblem::new(&disc, &cfg).unwrap();
        let z = Trajectory::zeros(grid, disc.num_nodes());
        assert!(p.line_search(&z, &z).unwrap().is_none());
    }

    #[test]
    fn reachable_target_stops_immediately() {
        let (disc, grid) = setup(6);
        let mut cfg = config(&disc, grid, 0.1, 1.0);
        cfg.desired = Trajectory::zeros(grid, disc.num_nodes());
        let res = gradient_descent(&disc, &cfg).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged && res.control.is_zero());
    }

    #[test]
    fn descent_decreases_cost_on_the_pulse_problem() {
        let disc = Discretization::unit_square(8).unwrap();
        let grid = TimeGrid::with_step(1.0, 1e-3).unwrap();
        let desired = crate::study::desired_state(&disc, grid);
        for (tau, lambda) in [(0.0, 1.0), (1e-2, 1.0), (1e-1, 0.1)] {
            let cfg = crate::study::ocp_config(&disc, grid, tau, lambda, &desired);
            let res = gradient_descent(&disc, &cfg).unwrap();
            assert!(res.cost_history.windows(2).all(|w| w[1] < w[0]), "{:?}", res.cost_history);
            let p = ReducedProblem::new(&disc, &cfg).unwrap();
            let (g, _, _) = p.gradient(&res.control).unwrap();
            assert!(g.l2l2_norm(&disc).unwrap() <= cfg.rel_tol * res.grad_norm_history[0]);
        }
    }

    #[test]
    fn descent_reaches_tight_stationarity() {
        let (disc, grid) = setup(6);
        for tau in [0.0, 0.05] {
            let mut cfg = config(&disc, grid, tau, 0.1);
            cfg.rel_tol = 1e-8;
            let res = gradient_descent(&disc, &cfg).unwrap();
            assert!(res.converged);
            let p = ReducedProblem::new(&disc, &cfg).unwrap();
            let (g, _, _) = p.gradient(&res.control).unwrap();
            assert!(g.l2l2_norm(&disc).unwrap() <= 1e-7 * res.grad_norm_history[0]);
        }
    }

    #[test]
    fn optimum_does_not_depend_on_the_start() {
        let (disc, grid) = setup(6);
        let mut cfg = config(&disc, grid, 0.05, 0.5);
        cfg.rel_tol = 1e-9;
        let p = ReducedProblem::new(&disc, &cfg).unwrap();
        let a = p.gradient_descent().unwrap();
        let b = p.gradient_descent_from(random_modal_field(grid, &disc, 77)).unwrap();
        assert!(a.converged && b.converged);
        let diff = a.control.difference(&b.control).unwrap().l2l2_norm(&disc).unwrap();
        assert!(diff <= 1e-6 * a.control.l2l2_norm(&disc).unwrap(), "{diff}");
    }

    #[test]
    fn iteration_cap_is_reported() {
        let (disc, grid) = setup(6);
        let mut cfg = config(&disc, grid, 0.05, 1e-3);
        cfg.rel_tol = 1e-14;
        cfg.max_iters = 2;
        match gradient_descent(&disc, &cfg) {
            Err(Error::NotConverged { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn log_has_one_row_per_iterate() {
        let (disc, grid) = setup(4);
        let cfg = config(&disc, grid, 0.0, 1.0);
        let res = gradient_descent(&disc, &cfg).unwrap();
        let log = res.iteration_log_csv();
        assert_eq!(log.lines().count(), res.iterations + 2);
        assert!(log.starts_with("iter,cost,grad_norm,step_length\n"));
    }
}
