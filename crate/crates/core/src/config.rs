//! Run configuration: `key = value` files with `#` comments, overridden by
//! command-line flags.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::study::StudyMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Optimize,
    Study,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Optimize => "optimize",
            Command::Study => "study",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub mode: StudyMode,
    pub n_cells: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Relaxation time of single runs; `0` selects the heat equation.
    pub tau: f64,
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub out: PathBuf,
    pub workers: usize,
    pub force: bool,
    pub taus: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    /// `y₁ = Δy₀` (default) or `y₁ = 0` in forward runs.
    pub compatible_initial_velocity: bool,
    /// Dump every `s`-th snapshot of single forward runs.
    pub snapshot_stride: Option<usize>,
    pub dump_mesh: bool,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        Self {
            command,
            mode: StudyMode::Forward,
            n_cells: 50,
            dt: 1e-4,
            horizon: 1.0,
            tau: 1e-2,
            lambda: 1.0,
            tolerance: 1e-4,
            max_iters: 500,
            out: PathBuf::from("catlab-out"),
            workers: 1,
            force: false,
            taus: None,
            lambdas: None,
            compatible_initial_velocity: true,
            snapshot_stride: None,
            dump_mesh: false,
        }
    }
}

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

impl Origin {
    fn error(self, message: String) -> Error {
        match self {
            Origin::Line(line) => Error::Config { line, message },
            Origin::Flag => Error::Usage(message),
        }
    }
}

pub const KEYS: &[&str] = &[
    "command",
    "mode",
    "n_cells",
    "dt",
    "T",
    "tau",
    "lambda",
    "tol",
    "max_iters",
    "out",
    "workers",
    "force",
    "taus",
    "lambdas",
    "compatible_initial_velocity",
    "snapshot_stride",
    "dump_mesh",
];

/// Splits config text into `(key, value, line)` entries.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String, Origin)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        out.push((key.to_string(), value.trim().to_string(), Origin::Line(line)));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, origin: Origin) -> Result<T> {
    value
        .parse()
        .map_err(|_| origin.error(format!("`{key}`: cannot parse `{value}`")))
}

fn positive(key: &str, v: f64, origin: Origin) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(origin.error(format!("`{key}` must be positive, got {v}")))
    }
}

fn non_negative(key: &str, v: f64, origin: Origin) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(origin.error(format!("`{key}` must be non-negative, got {v}")))
    }
}

fn parse_bool(key: &str, value: &str, origin: Origin) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(origin.error(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str, origin: Origin) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_num::<f64>(key, s.trim(), origin))
        .collect()
}

fn parse_command(value: &str, origin: Origin) -> Result<Command> {
    match value {
        "forward" => Ok(Command::Forward),
        "optimize" => Ok(Command::Optimize),
        "study" => Ok(Command::Study),
        _ => Err(origin.error(format!("unknown command `{value}`"))),
    }
}

/// Applies `entries` in order (later wins) on top of the defaults.
///
/// When no entry sets `command`, `fallback_command` is used; without either
/// the configuration is rejected.
pub fn build_config(entries: &[(String, String, Origin)], env_workers: Option<&str>) -> Result<RunConfig> {
    let command_entry = entries.iter().rev().find(|(k, _, _)| k == "command");
    let command = match command_entry {
        Some((_, v, o)) => parse_command(v, *o)?,
        None => {
            let line = entries
                .iter()
                .filter_map(|(_, _, o)| match o {
                    Origin::Line(l) => Some(*l),
                    Origin::Flag => None,
                })
                .max()
                .unwrap_or(0);
            return Err(Error::Config {
                line,
                message: "missing required `command` (forward | optimize | study)".into(),
            });
        }
    };
    let mut cfg = RunConfig::defaults(command);
    if let Some(w) = env_workers {
        let n: usize = w
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("CATLAB_WORKERS: cannot parse `{w}`")))?;
        if n > 0 {
            cfg.workers = n;
        }
    }
    for (key, value, origin) in entries {
        let o = *origin;
        match key.as_str() {
            "command" => {}
            "mode" => {
                cfg.mode = match value.as_str() {
                    "forward" => StudyMode::Forward,
                    "ocp" | "optimize" => StudyMode::Ocp,
                    _ => return Err(o.error(format!("`mode`: expected forward | ocp, got `{value}`"))),
                }
            }
            "n_cells" => {
                cfg.n_cells = parse_num(key, value, o)?;
                if cfg.n_cells == 0 {
                    return Err(o.error("`n_cells` must be positive".into()));
                }
            }
            "dt" => cfg.dt = positive(key, parse_num(key, value, o)?, o)?,
            "T" => cfg.horizon = positive(key, parse_num(key, value, o)?, o)?,
            "tau" => cfg.tau = non_negative(key, parse_num(key, value, o)?, o)?,
            "lambda" => cfg.lambda = non_negative(key, parse_num(key, value, o)?, o)?,
            "tol" => cfg.tolerance = positive(key, parse_num(key, value, o)?, o)?,
            "max_iters" => cfg.max_iters = parse_num(key, value, o)?,
            "out" => {
                if value.is_empty() {
                    return Err(o.error("`out` must not be empty".into()));
                }
                cfg.out = PathBuf::from(value)
            }
            "workers" => {
                cfg.workers = parse_num(key, value, o)?;
                if cfg.workers == 0 {
                    return Err(o.error("`workers` must be positive".into()));
                }
            }
            "force" => cfg.force = parse_bool(key, value, o)?,
            "taus" => {
                let list = parse_list(key, value, o)?;
                if list.iter().any(|t| !(*t > 0.0)) || list.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(o.error("`taus` must be positive and strictly decreasing".into()));
                }
                cfg.taus = Some(list);
            }
            "lambdas" => {
                let list = parse_list(key, value, o)?;
                if list.iter().any(|l| !(*l >= 0.0)) {
                    return Err(o.error("`lambdas` must be non-negative".into()));
                }
                cfg.lambdas = Some(list);
            }
            "compatible_initial_velocity" => cfg.compatible_initial_velocity = parse_bool(key, value, o)?,
            "snapshot_stride" => {
                let s: usize = parse_num(key, value, o)?;
                if s == 0 {
                    return Err(o.error("`snapshot_stride` must be positive".into()));
                }
                cfg.snapshot_stride = Some(s);
            }
            "dump_mesh" => cfg.dump_mesh = parse_bool(key, value, o)?,
            other => return Err(o.error(format!("unknown key `{other}`"))),
        }
    }
    let steps = (cfg.horizon / cfg.dt).round();
    if steps < 1.0 || (steps * cfg.dt - cfg.horizon).abs() > 1e-12 * cfg.horizon.max(1.0) {
        return Err(Error::Usage(format!(
            "T = {} must be an integer multiple of dt = {}",
            cfg.horizon, cfg.dt
        )));
    }
    Ok(cfg)
}

/// Parses config file contents (if any) with flag overrides applied on top.
pub fn parse_config(file: Option<&str>, flags: &[(String, String)], env_workers: Option<&str>) -> Result<RunConfig> {
    let mut entries = match file {
        Some(text) => parse_config_text(text)?,
        None => Vec::new(),
    };
    for (k, v) in flags {
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Usage(format!("unknown option `{k}`")));
        }
        entries.push((k.clone(), v.clone(), Origin::Flag));
    }
    build_config(&entries, env_workers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config(Some(""), &flags(&[("command", "forward")]), None).unwrap();
        assert_eq!(cfg.command, Command::Forward);
        assert_eq!(cfg.n_cells, 50);
        assert_eq!(cfg.dt, 1e-4);
        assert_eq!(cfg.horizon, 1.0);
        assert_eq!(cfg.workers, 1);
    }

    #[test]
    fn negative_dt_names_the_key() {
        let err = parse_config(Some("command = forward\ndt = -1\n"), &[], None).unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("dt"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn flags_override_file() {
        let cfg = parse_config(Some("command = study\nn_cells = 50\n"), &flags(&[("n_cells", "16")]), None).unwrap();
        assert_eq!(cfg.n_cells, 16);
    }

    #[test]
    fn comments_and_errors_carry_line_numbers() {
        let text = "# header\ncommand = optimize # inline\n\nlambda = 0.5\nbogus = 1\n";
        match parse_config(Some(text), &[], None).unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("bogus"));
            }
            e => panic!("unexpected {e:?}"),
        }
        match parse_config(Some("command = forward\ntau = abc\n"), &[], None).unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        let cfg = parse_config(Some(&text[..text.find("bogus").unwrap()]), &[], None).unwrap();
        assert_eq!(cfg.command, Command::Optimize);
        assert_eq!(cfg.lambda, 0.5);
    }

    #[test]
    fn missing_command_is_rejected() {
        assert!(matches!(
            parse_config(Some("dt = 1e-3\n"), &[], None),
            Err(Error::Config { line: 1, .. })
        ));
    }

    #[test]
    fn worker_precedence() {
        let f = flags(&[("command", "study")]);
        assert_eq!(parse_config(None, &f, Some("3")).unwrap().workers, 3);
        let f = flags(&[("command", "study"), ("workers", "2")]);
        assert_eq!(parse_config(None, &f, Some("3")).unwrap().workers, 2);
    }

    #[test]
    fn sweep_overrides() {
        let cfg = parse_config(
            Some("command = study\nmode = ocp\ntaus = 0.1, 0.01\nlambdas = 1, 0.1\n"),
            &[],
            None,
        )
        .unwrap();
        assert_eq!(cfg.mode, StudyMode::Ocp);
        assert_eq!(cfg.taus, Some(vec![0.1, 0.01]));
        assert_eq!(cfg.lambdas, Some(vec![1.0, 0.1]));
        assert!(parse_config(Some("command = study\ntaus = 0.01, 0.1\n"), &[], None).is_err());
    }

    #[test]
    fn horizon_must_be_a_multiple_of_dt() {
        assert!(parse_config(None, &flags(&[("command", "forward"), ("dt", "0.3")]), None).is_err());
    }
}
