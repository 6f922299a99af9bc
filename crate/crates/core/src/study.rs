//! τ-sweeps comparing Cattaneo and heat solutions, forward and optimal,
//! tabulated as absolute/relative differences with observed orders.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::control::{OcpConfig, OptimizeResult, ReducedProblem};
use crate::error::{Error, Result};
use crate::fem::{linf_norm, Discretization, FeFunction};
use crate::problems::{gaussian_peak, gaussian_peak_laplacian, moving_pulse};
use crate::steppers::{CattaneoSolver, HeatSolver};
use crate::trajectory::{TimeGrid, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialNorm {
    L2,
    H1,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalNorm {
    L2,
    Linf,
}

impl SpatialNorm {
    fn eval(self, disc: &Discretization, v: &[f64]) -> Result<f64> {
        match self {
            SpatialNorm::L2 => disc.l2_norm(v),
            SpatialNorm::H1 => disc.h1_norm(v),
            SpatialNorm::Linf => Ok(linf_norm(v)),
        }
    }
}

/// Space-time norm `X(0,T; Y)` selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NormKind {
    pub spatial: SpatialNorm,
    pub temporal: TemporalNorm,
}

impl NormKind {
    pub const L2_L2: NormKind = NormKind {
        spatial: SpatialNorm::L2,
        temporal: TemporalNorm::L2,
    };
    pub const L2_H1: NormKind = NormKind {
        spatial: SpatialNorm::H1,
        temporal: TemporalNorm::L2,
    };
    pub const LINF_LINF: NormKind = NormKind {
        spatial: SpatialNorm::Linf,
        temporal: TemporalNorm::Linf,
    };

    /// Short label used in file names.
    pub fn tag(&self) -> String {
        let t = match self.temporal {
            TemporalNorm::L2 => "L2",
            TemporalNorm::Linf => "Linf",
        };
        let s = match self.spatial {
            SpatialNorm::L2 => "L2",
            SpatialNorm::H1 => "H1",
            SpatialNorm::Linf => "Linf",
        };
        format!("{t}{s}")
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.temporal {
            TemporalNorm::L2 => "L2",
            TemporalNorm::Linf => "Linf",
        };
        let s = match self.spatial {
            SpatialNorm::L2 => "L2",
            SpatialNorm::H1 => "H1_0",
            SpatialNorm::Linf => "Linf",
        };
        write!(f, "{t}(0,T;{s})")
    }
}

/// Streaming evaluation of a space-time norm, one snapshot at a time.
#[derive(Debug, Clone)]
pub struct NormAccumulator {
    kind: NormKind,
    grid: TimeGrid,
    acc: f64,
}

impl NormAccumulator {
    pub fn new(kind: NormKind, grid: TimeGrid) -> Self {
        Self { kind, grid, acc: 0.0 }
    }

    pub fn push(&mut self, disc: &Discretization, k: usize, v: &[f64]) -> Result<()> {
        let s = self.kind.spatial.eval(disc, v)?;
        match self.kind.temporal {
            TemporalNorm::L2 => self.acc += self.grid.trapezoid_weight(k) * s * s,
            TemporalNorm::Linf => self.acc = self.acc.max(s),
        }
        Ok(())
    }

    pub fn value(&self) -> f64 {
        match self.kind.temporal {
            TemporalNorm::L2 => self.acc.sqrt(),
            TemporalNorm::Linf => self.acc,
        }
    }
}

/// Temporal L²: trapezoidal rule on the squared spatial norms; temporal
/// L∞: maximum over snapshots.
pub fn spacetime_norm(traj: &Trajectory, disc: &Discretization, kind: NormKind) -> Result<f64> {
    let mut acc = NormAccumulator::new(kind, *traj.grid());
    for (k, v) in traj.snapshots().enumerate() {
        acc.push(disc, k, v)?;
    }
    Ok(acc.value())
}

/// Observed order `ln(e_c/e_f) / ln(τ_c/τ_f)`.
pub fn compute_order(e_coarse: f64, e_fine: f64, tau_coarse: f64, tau_fine: f64) -> Result<f64> {
    if !(e_coarse > 0.0 && e_fine > 0.0 && tau_coarse > 0.0 && tau_fine > 0.0) {
        return Err(Error::NonPositiveInput);
    }
    if !(tau_coarse > tau_fine) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("expected tau_coarse > tau_fine, got {tau_coarse} and {tau_fine}"),
        });
    }
    Ok((e_coarse / e_fine).ln() / (tau_coarse / tau_fine).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub tau: f64,
    pub absolute: f64,
    pub relative_percent: f64,
    /// Order against the previous row; absent on the first row and next to
    /// invalid rows.
    pub order: Option<f64>,
    /// False when the generating run did not converge.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub mode: String,
    pub quantity: String,
    pub norm: NormKind,
    pub lambda: Option<f64>,
    pub reference_norm: f64,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// Builds rows from `(τ, absolute error, valid)` triples in sweep order.
    pub fn new(
        mode: &str,
        quantity: &str,
        norm: NormKind,
        lambda: Option<f64>,
        reference_norm: f64,
        entries: &[(f64, f64, bool)],
    ) -> Self {
        let mut rows: Vec<ErrorRow> = Vec::with_capacity(entries.len());
        for (i, &(tau, absolute, valid)) in entries.iter().enumerate() {
            let order = if i == 0 {
                None
            } else {
                let prev = &rows[i - 1];
                if prev.valid && valid {
                    compute_order(prev.absolute, absolute, prev.tau, tau).ok()
                } else {
                    None
                }
            };
            rows.push(ErrorRow {
                tau,
                absolute,
                relative_percent: 100.0 * absolute / reference_norm,
                order,
                valid,
            });
        }
        Self {
            mode: mode.to_string(),
            quantity: quantity.to_string(),
            norm,
            lambda,
            reference_norm,
            rows,
        }
    }

    pub fn row(&self, tau: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| (r.tau / tau - 1.0).abs() < 1e-9)
    }

    /// `{mode}_{quantity}_{norm}_lambda{λ}.csv`; the λ part is dropped for
    /// forward tables.
    pub fn file_stem(&self) -> String {
        match self.lambda {
            Some(l) => format!("{}_{}_{}_lambda{l:e}", self.mode, self.quantity, self.norm.tag()),
            None => format!("{}_{}_{}", self.mode, self.quantity, self.norm.tag()),
        }
    }

    /// `tau,absolute,relative_percent,order`; invalid rows keep only `tau`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,absolute,relative_percent,order\n");
        for r in &self.rows {
            if !r.valid {
                out.push_str(&format!("{:e},,,\n", r.tau));
                continue;
            }
            let order = r.order.map(|o| format!("{o:.4}")).unwrap_or_default();
            out.push_str(&format!("{:e},{:.6e},{:.6},{}\n", r.tau, r.absolute, r.relative_percent, order));
        }
        out
    }
}

impl fmt::Display for ErrorTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} in {}", self.mode, self.quantity, self.norm)?;
        if let Some(l) = self.lambda {
            write!(f, ", lambda = {l:e}")?;
        }
        writeln!(f)?;
        writeln!(f, "{:>12} {:>12} {:>14} {:>7}", "tau", "absolute", "relative [%]", "order")?;
        for r in &self.rows {
            let order = r.order.map(|o| format!("{o:.2}")).unwrap_or_default();
            let flag = if r.valid { "" } else { "  (not converged)" };
            writeln!(
                f,
                "{:>12.4e} {:>12.3e} {:>14.3} {:>7}{flag}",
                r.tau, r.absolute, r.relative_percent, order
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    Forward,
    Ocp,
}

impl StudyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyMode::Forward => "forward",
            StudyMode::Ocp => "ocp",
        }
    }
}

/// `10^0, 10^-0.5, …, 10^-4`.
pub fn default_taus() -> Vec<f64> {
    (0..=8).map(|i| 10f64.powf(-0.5 * i as f64)).collect()
}

pub fn default_lambdas() -> Vec<f64> {
    vec![1.0, 1e-1, 1e-2, 1e-3]
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub taus: Vec<f64>,
    pub n_cells: usize,
    pub dt: f64,
    pub horizon: f64,
    pub mode: StudyMode,
    pub lambdas: Vec<f64>,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub workers: usize,
    /// `y₁ = Δy₀` when true, `y₁ = 0` otherwise (forward mode only).
    pub compatible_initial_velocity: bool,
}

impl SweepSpec {
    /// Half-decade sweep from 1 to 1e-4 on 50 cells with dt = 1e-4 and T = 1.
    pub fn reference(mode: StudyMode) -> Self {
        Self {
            taus: default_taus(),
            n_cells: 50,
            dt: 1e-4,
            horizon: 1.0,
            mode,
            lambdas: vec![1.0],
            rel_tol: 1e-4,
            max_iters: 500,
            workers: 1,
            compatible_initial_velocity: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::InvalidParameter {
                name: "taus",
                reason: "at least one tau is required".into(),
            });
        }
        if self.taus.iter().any(|t| !(*t > 0.0)) || self.taus.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter {
                name: "taus",
                reason: "tau values must be positive and strictly decreasing".into(),
            });
        }
        if self.mode == StudyMode::Ocp && (self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l >= 0.0))) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "need at least one non-negative lambda".into(),
            });
        }
        if self.n_cells == 0 {
            return Err(Error::InvalidParameter {
                name: "n_cells",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.horizon, self.dt)
    }
}

/// Runs `f(0..n)` on at most `workers` threads; results come back in index order.
pub fn run_jobs<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut results: Vec<(usize, T)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break local;
                        }
                        local.push((i, f(i)));
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, t)| t).collect()
}

/// Gaussian peak initial data `(y₀, y₁)`, with `y₁ = Δy₀` for compatible data.
pub fn forward_initial_data(disc: &Discretization, compatible: bool) -> (FeFunction, FeFunction) {
    let y0 = disc.interpolate(gaussian_peak);
    let y1 = if compatible {
        disc.interpolate(gaussian_peak_laplacian)
    } else {
        FeFunction::zeros(disc.num_nodes())
    };
    (y0, y1)
}

#[derive(Debug, Clone)]
pub struct ForwardStudy {
    pub h1: ErrorTable,
    pub linf: ErrorTable,
    /// `(τ, ‖y_τ'‖_{L²(0,T;L²)})` per sweep row.
    pub velocity_norms: Vec<(f64, f64)>,
}

pub fn forward_study(disc: &Discretization, spec: &SweepSpec) -> Result<ForwardStudy> {
    spec.validate()?;
    let grid = spec.grid()?;
    let (y0, y1) = forward_initial_data(disc, spec.compatible_initial_velocity);
    let heat = HeatSolver::new(disc, grid)?.solve(None, &y0)?;
    let ref_h1 = spacetime_norm(&heat, disc, NormKind::L2_H1)?;
    let ref_linf = spacetime_norm(&heat, disc, NormKind::LINF_LINF)?;

    let cells = run_jobs(spec.taus.len(), spec.workers, |i| -> Result<(f64, f64, f64)> {
        let tau = spec.taus[i];
        let solver = CattaneoSolver::new(disc, tau, grid)?;
        let mut h1 = NormAccumulator::new(NormKind::L2_H1, grid);
        let mut linf = NormAccumulator::new(NormKind::LINF_LINF, grid);
        let mut vel = NormAccumulator::new(NormKind::L2_L2, grid);
        let mut diff = vec![0.0; disc.num_nodes()];
        let mut failure = None;
        solver.run(None, &y0, &y1, |k, d, v, _| {
            for ((e, a), b) in diff.iter_mut().zip(d).zip(heat.snapshot(k)) {
                *e = a - b;
            }
            let step = h1
                .push(disc, k, &diff)
                .and_then(|_| linf.push(disc, k, &diff))
                .and_then(|_| vel.push(disc, k, v));
            if let Err(e) = step {
                failure.get_or_insert(e);
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((h1.value(), linf.value(), vel.value()))
    });
    let mut values = Vec::with_capacity(cells.len());
    for (i, c) in cells.into_iter().enumerate() {
        values.push(c.map_err(|e| Error::Cell {
            tau: spec.taus[i],
            lambda: f64::NAN,
            source: Box::new(e),
        })?);
    }
    let entries = |pick: fn(&(f64, f64, f64)) -> f64| -> Vec<(f64, f64, bool)> {
        spec.taus.iter().zip(&values).map(|(t, v)| (*t, pick(v), true)).collect()
    };
    Ok(ForwardStudy {
        h1: ErrorTable::new("forward", "state", NormKind::L2_H1, None, ref_h1, &entries(|v| v.0)),
        linf: ErrorTable::new("forward", "state", NormKind::LINF_LINF, None, ref_linf, &entries(|v| v.1)),
        velocity_norms: spec.taus.iter().zip(&values).map(|(t, v)| (*t, v.2)).collect(),
    })
}

/// Optimal control configuration of the reference experiment: circling
/// Gaussian pulse as desired state, homogeneous initial data, penalized
/// terminal state.
pub fn ocp_config(disc: &Discretization, grid: TimeGrid, tau: f64, lambda: f64, desired: &Trajectory) -> OcpConfig {
    debug_assert_eq!(desired.grid(), &grid);
    let zero = FeFunction::zeros(disc.num_nodes());
    OcpConfig::new(tau, lambda, desired.clone(), zero.clone(), zero)
}

pub fn desired_state(disc: &Discretization, grid: TimeGrid) -> Trajectory {
    Trajectory::interpolate(grid, disc, moving_pulse)
}

/// Outcome of one optimizer run inside a sweep.
#[derive(Debug, Clone)]
pub struct OcpRun {
    pub tau: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub step_history: Vec<f64>,
}

impl OcpRun {
    fn from_result(tau: f64, lambda: f64, r: &OptimizeResult) -> Self {
        Self {
            tau,
            lambda,
            iterations: r.iterations,
            converged: r.converged,
            cost_history: r.cost_history.clone(),
            grad_norm_history: r.grad_norm_history.clone(),
            step_history: r.step_history.clone(),
        }
    }

    pub fn cost_strictly_decreasing(&self) -> bool {
        self.cost_history.windows(2).all(|w| w[1] < w[0])
    }

    pub fn iteration_log_csv(&self) -> String {
        let mut out = String::from("iter,cost,grad_norm,step_length\n");
        for (i, (c, g)) in self.cost_history.iter().zip(&self.grad_norm_history).enumerate() {
            let step = self.step_history.get(i).map(|s| format!("{s:e}")).unwrap_or_default();
            out.push_str(&format!("{i},{c:e},{g:e},{step}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct OcpStudy {
    pub lambda: f64,
    pub control_l2: ErrorTable,
    pub control_linf: ErrorTable,
    pub state_h1: ErrorTable,
    pub state_linf: ErrorTable,
    /// Heat reference run followed by one run per τ.
    pub runs: Vec<OcpRun>,
}

pub fn ocp_study(disc: &Discretization, spec: &SweepSpec) -> Result<Vec<OcpStudy>> {
    spec.validate()?;
    let grid = spec.grid()?;
    let desired = desired_state(disc, grid);
    spec.lambdas
        .iter()
        .map(|&lambda| ocp_study_lambda(disc, spec, grid, &desired, lambda))
        .collect()
}

fn ocp_study_lambda(
    disc: &Discretization,
    spec: &SweepSpec,
    grid: TimeGrid,
    desired: &Trajectory,
    lambda: f64,
) -> Result<OcpStudy> {
    let cell_err = |tau: f64| move |e: Error| Error::Cell {
        tau,
        lambda,
        source: Box::new(e),
    };
    let mut heat_cfg = ocp_config(disc, grid, 0.0, lambda, desired);
    heat_cfg.rel_tol = spec.rel_tol;
    heat_cfg.max_iters = spec.max_iters;
    let heat = ReducedProblem::new(disc, &heat_cfg)
        .and_then(|p| p.gradient_descent())
        .map_err(cell_err(0.0))?;
    if !heat.converged {
        return Err(cell_err(0.0)(Error::NotConverged {
            iterations: heat.iterations,
            relative_gradient: heat.grad_norm_history.last().unwrap() / heat.grad_norm_history[0],
        }));
    }
    let ref_u_l2 = spacetime_norm(&heat.control, disc, NormKind::L2_L2)?;
    let ref_u_linf = spacetime_norm(&heat.control, disc, NormKind::LINF_LINF)?;
    let ref_y_h1 = spacetime_norm(&heat.state, disc, NormKind::L2_H1)?;
    let ref_y_linf = spacetime_norm(&heat.state, disc, NormKind::LINF_LINF)?;

    let cells = run_jobs(spec.taus.len(), spec.workers, |i| -> Result<([f64; 4], OcpRun)> {
        let tau = spec.taus[i];
        let mut cfg = ocp_config(disc, grid, tau, lambda, desired);
        cfg.rel_tol = spec.rel_tol;
        cfg.max_iters = spec.max_iters;
        let res = ReducedProblem::new(disc, &cfg)?.gradient_descent()?;
        let du = res.control.difference(&heat.control)?;
        let u_l2 = spacetime_norm(&du, disc, NormKind::L2_L2)?;
        let u_linf = spacetime_norm(&du, disc, NormKind::LINF_LINF)?;
        drop(du);
        let dy = res.state.difference(&heat.state)?;
        let y_h1 = spacetime_norm(&dy, disc, NormKind::L2_H1)?;
        let y_linf = spacetime_norm(&dy, disc, NormKind::LINF_LINF)?;
        Ok(([u_l2, u_linf, y_h1, y_linf], OcpRun::from_result(tau, lambda, &res)))
    });
    let mut runs = vec![OcpRun::from_result(0.0, lambda, &heat)];
    let mut values = Vec::with_capacity(cells.len());
    for (i, c) in cells.into_iter().enumerate() {
        let (v, run) = c.map_err(cell_err(spec.taus[i]))?;
        values.push((v, run.converged));
        runs.push(run);
    }
    let table = |q: &str, norm: NormKind, reference: f64, j: usize| {
        let entries: Vec<_> = spec
            .taus
            .iter()
            .zip(&values)
            .map(|(t, (v, ok))| (*t, v[j], *ok))
            .collect();
        ErrorTable::new("ocp", q, norm, Some(lambda), reference, &entries)
    };
    Ok(OcpStudy {
        lambda,
        control_l2: table("control", NormKind::L2_L2, ref_u_l2, 0),
        control_linf: table("control", NormKind::LINF_LINF, ref_u_linf, 1),
        state_h1: table("state", NormKind::L2_H1, ref_y_h1, 2),
        state_linf: table("state", NormKind::LINF_LINF, ref_y_linf, 3),
        runs,
    })
}
