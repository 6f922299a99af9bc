//! Dispatch of configured runs and artifact output.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{Command, RunConfig};
use crate::control::ReducedProblem;
use crate::error::{Error, Result};
use crate::fem::Discretization;
use crate::plot::{loglog_svg, Series};
use crate::steppers::{CattaneoSolver, HeatSolver};
use crate::study::{
    default_lambdas, default_taus, desired_state, forward_initial_data, forward_study, ocp_config, ocp_study,
    spacetime_norm, ErrorTable, NormAccumulator, NormKind, OcpStudy, StudyMode, SweepSpec,
};
use crate::trajectory::TimeGrid;

/// Sequential writer for one output directory; records every file in
/// `manifest.csv` on [`ArtifactWriter::finish`].
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    base: String,
    entries: Vec<(String, String, String)>,
}

impl ArtifactWriter {
    pub const MANIFEST: &'static str = "manifest.csv";

    /// Refuses a directory that already holds a manifest unless `force`.
    pub fn create(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.out.clone();
        if dir.join(Self::MANIFEST).exists() && !cfg.force {
            return Err(Error::Usage(format!(
                "{} already contains results; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::create_dir_all(&dir)?;
        let base = format!(
            "{},{},{},{:e},{:e},{:e},{}",
            cfg.command.as_str(),
            if cfg.command == Command::Study { cfg.mode.as_str() } else { "" },
            cfg.n_cells,
            cfg.dt,
            cfg.horizon,
            cfg.tolerance,
            cfg.max_iters
        );
        Ok(Self {
            dir,
            base,
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` and records it with its `tau`/`lambda` parameters.
    pub fn write(&mut self, name: &str, contents: &str, tau: &str, lambda: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.entries.push((name.to_string(), tau.to_string(), lambda.to_string()));
        Ok(path)
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.0.as_str())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let mut text = String::from("file,command,mode,n_cells,dt,T,tol,max_iters,tau,lambda\n");
        for (file, tau, lambda) in &self.entries {
            text.push_str(&format!("{file},{},{tau},{lambda}\n", self.base));
        }
        let path = self.dir.join(Self::MANIFEST);
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn fmt_param(v: f64) -> String {
    format!("{v:e}")
}

fn table_svg(table: &ErrorTable) -> String {
    let title = format!("{} {} difference, {}", table.mode, table.quantity, table.norm);
    loglog_svg(&title, "tau", "absolute difference", &[Series::from_table(&table.norm.to_string(), table)])
}

fn write_table(w: &mut ArtifactWriter, table: &ErrorTable) -> Result<()> {
    let stem = table.file_stem();
    let lambda = table.lambda.map(fmt_param).unwrap_or_default();
    w.write(&format!("{stem}.csv"), &table.to_csv(), "sweep", &lambda)?;
    w.write(&format!("{stem}.svg"), &table_svg(table), "sweep", &lambda)?;
    Ok(())
}

/// Summary of a completed run, also printed by the binary.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub lines: Vec<String>,
    pub files: Vec<String>,
}

pub fn sweep_spec(cfg: &RunConfig) -> SweepSpec {
    SweepSpec {
        taus: cfg.taus.clone().unwrap_or_else(default_taus),
        n_cells: cfg.n_cells,
        dt: cfg.dt,
        horizon: cfg.horizon,
        mode: cfg.mode,
        lambdas: cfg.lambdas.clone().unwrap_or_else(|| match cfg.mode {
            StudyMode::Forward => vec![cfg.lambda],
            StudyMode::Ocp => default_lambdas(),
        }),
        rel_tol: cfg.tolerance,
        max_iters: cfg.max_iters,
        workers: cfg.workers,
        compatible_initial_velocity: cfg.compatible_initial_velocity,
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let disc = Discretization::unit_square(cfg.n_cells)?;
    let grid = TimeGrid::with_step(cfg.horizon, cfg.dt)?;
    let mut writer = ArtifactWriter::create(cfg)?;
    let mut report = RunReport::default();
    if cfg.dump_mesh {
        writer.write("mesh.txt", &disc.mesh.dump(), "", "")?;
    }
    let outcome = match cfg.command {
        Command::Forward => run_forward(cfg, &disc, grid, &mut writer, &mut report),
        Command::Optimize => run_optimize(cfg, &disc, grid, &mut writer, &mut report),
        Command::Study => run_study(cfg, &disc, &mut writer, &mut report),
    };
    report.files = writer.files().map(str::to_string).collect();
    writer.finish()?;
    outcome.map(|_| report)
}

fn run_forward(
    cfg: &RunConfig,
    disc: &Discretization,
    grid: TimeGrid,
    w: &mut ArtifactWriter,
    report: &mut RunReport,
) -> Result<()> {
    let (y0, y1) = forward_initial_data(disc, cfg.compatible_initial_velocity);
    let mut h1 = NormAccumulator::new(NormKind::L2_H1, grid);
    let mut linf = NormAccumulator::new(NormKind::LINF_LINF, grid);
    let mut l2 = NormAccumulator::new(NormKind::L2_L2, grid);
    let mut vel = NormAccumulator::new(NormKind::L2_L2, grid);
    let mut dump = cfg.snapshot_stride.map(|s| (s, String::new()));
    let mut failure = None;
    let mut final_l2 = 0.0;
    {
        let mut record = |k: usize, d: &[f64], v: Option<&[f64]>| {
            let step = h1
                .push(disc, k, d)
                .and_then(|_| linf.push(disc, k, d))
                .and_then(|_| l2.push(disc, k, d))
                .and_then(|_| v.map_or(Ok(()), |v| vel.push(disc, k, v)));
            if let Err(e) = step {
                failure.get_or_insert(e);
            }
            if k == grid.num_steps() {
                final_l2 = disc.l2_norm(d).unwrap_or(f64::NAN);
            }
            if let Some((stride, text)) = dump.as_mut() {
                if k.is_multiple_of(*stride) || k == grid.num_steps() {
                    text.push_str(&format!("{k},{}", grid.time(k)));
                    for x in d {
                        text.push_str(&format!(",{x}"));
                    }
                    text.push('\n');
                }
            }
        };
        if cfg.tau == 0.0 {
            HeatSolver::new(disc, grid)?.run(None, &y0, |k, y| record(k, y, None))?;
        } else {
            CattaneoSolver::new(disc, cfg.tau, grid)?.run(None, &y0, &y1, |k, d, v, _| record(k, d, Some(v)))?;
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let tau = fmt_param(cfg.tau);
    let mut summary = String::from("quantity,value\n");
    let mut rows = vec![
        ("state_L2H1", h1.value()),
        ("state_LinfLinf", linf.value()),
        ("state_L2L2", l2.value()),
        ("state_final_L2", final_l2),
    ];
    if cfg.tau > 0.0 {
        rows.push(("velocity_L2L2", vel.value()));
    }
    for (name, value) in &rows {
        summary.push_str(&format!("{name},{value:e}\n"));
        report.lines.push(format!("{name:>16} = {value:.6e}"));
    }
    w.write(&format!("forward_summary_tau{tau}.csv"), &summary, &tau, "")?;
    if let Some((_, text)) = dump {
        let mut header = String::from("step,time");
        for i in 0..disc.num_nodes() {
            header.push_str(&format!(",v{i}"));
        }
        header.push('\n');
        w.write(&format!("forward_trajectory_tau{tau}.csv"), &(header + &text), &tau, "")?;
    }
    Ok(())
}

fn run_optimize(
    cfg: &RunConfig,
    disc: &Discretization,
    grid: TimeGrid,
    w: &mut ArtifactWriter,
    report: &mut RunReport,
) -> Result<()> {
    let desired = desired_state(disc, grid);
    let mut ocp = ocp_config(disc, grid, cfg.tau, cfg.lambda, &desired);
    drop(desired);
    ocp.rel_tol = cfg.tolerance;
    ocp.max_iters = cfg.max_iters;
    let cell = |e: Error| Error::Cell {
        tau: cfg.tau,
        lambda: cfg.lambda,
        source: Box::new(e),
    };
    let res = ReducedProblem::new(disc, &ocp)
        .and_then(|p| p.gradient_descent())
        .map_err(cell)?;
    let (tau, lambda) = (fmt_param(cfg.tau), fmt_param(cfg.lambda));
    w.write(
        &format!("optimize_iterations_tau{tau}_lambda{lambda}.csv"),
        &res.iteration_log_csv(),
        &tau,
        &lambda,
    )?;
    let rows = [
        ("iterations", res.iterations as f64),
        ("final_cost", *res.cost_history.last().unwrap()),
        (
            "relative_gradient",
            res.grad_norm_history.last().unwrap() / res.grad_norm_history[0].max(f64::MIN_POSITIVE),
        ),
        ("control_L2L2", spacetime_norm(&res.control, disc, NormKind::L2_L2)?),
        ("state_L2H1", spacetime_norm(&res.state, disc, NormKind::L2_H1)?),
    ];
    let mut summary = String::from("quantity,value\n");
    for (name, value) in rows {
        summary.push_str(&format!("{name},{value:e}\n"));
        report.lines.push(format!("{name:>18} = {value:.6e}"));
    }
    w.write(&format!("optimize_summary_tau{tau}_lambda{lambda}.csv"), &summary, &tau, &lambda)?;
    if !res.converged {
        return Err(cell(Error::NotConverged {
            iterations: res.iterations,
            relative_gradient: res.grad_norm_history.last().unwrap() / res.grad_norm_history[0],
        }));
    }
    Ok(())
}

fn run_study(cfg: &RunConfig, disc: &Discretization, w: &mut ArtifactWriter, report: &mut RunReport) -> Result<()> {
    let spec = sweep_spec(cfg);
    match spec.mode {
        StudyMode::Forward => {
            let res = forward_study(disc, &spec)?;
            for t in [&res.h1, &res.linf] {
                write_table(w, t)?;
                report.lines.push(t.to_string());
            }
            let mut csv = String::from("tau,velocity_L2L2\n");
            for (tau, v) in &res.velocity_norms {
                csv.push_str(&format!("{tau:e},{v:e}\n"));
            }
            w.write("forward_velocity_L2L2.csv", &csv, "sweep", "")?;
        }
        StudyMode::Ocp => {
            let studies = ocp_study(disc, &spec)?;
            let mut failed = Vec::new();
            for s in &studies {
                for t in [&s.control_l2, &s.control_linf, &s.state_h1, &s.state_linf] {
                    write_table(w, t)?;
                    report.lines.push(t.to_string());
                }
                for r in &s.runs {
                    let (tau, lambda) = (fmt_param(r.tau), fmt_param(r.lambda));
                    w.write(
                        &format!("ocp_iterations_tau{tau}_lambda{lambda}.csv"),
                        &r.iteration_log_csv(),
                        &tau,
                        &lambda,
                    )?;
                    if !r.converged {
                        failed.push((r.tau, r.lambda));
                    }
                }
            }
            if studies.len() > 1 {
                write_lambda_figures(w, &studies)?;
            }
            if let Some(&(tau, lambda)) = failed.first() {
                return Err(Error::Cell {
                    tau,
                    lambda,
                    source: Box::new(Error::NotConverged {
                        iterations: spec.max_iters,
                        relative_gradient: f64::NAN,
                    }),
                });
            }
        }
    }
    Ok(())
}

fn write_lambda_figures(w: &mut ArtifactWriter, studies: &[OcpStudy]) -> Result<()> {
    type Pick = fn(&OcpStudy) -> &ErrorTable;
    let figures: [(&str, Pick); 2] = [("control_L2L2", |s| &s.control_l2), ("state_L2H1", |s| &s.state_h1)];
    for (name, pick) in figures {
        let series: Vec<Series> = studies
            .iter()
            .map(|s| Series::from_table(&format!("lambda = {:e}", s.lambda), pick(s)))
            .collect();
        let svg = loglog_svg(&format!("ocp {name} for several lambda"), "tau", "absolute difference", &series);
        w.write(&format!("ocp_{name}_lambdas.svg"), &svg, "sweep", "sweep")?;
    }
    Ok(())
}
