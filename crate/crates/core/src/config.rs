//! Plain-text experiment configuration: `key = value` lines, `#` comments.

use crate::error::{Error, Result};
use crate::evolution::Scheme;
use crate::grid::GridSpec;
use crate::monotonicity::{sigma_condition, WeightForm};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    GroundState,
    Spectrum,
    Simulate,
    CheckMonotonicity,
    KernelDecay,
    Instability,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::GroundState,
        Command::Spectrum,
        Command::Simulate,
        Command::CheckMonotonicity,
        Command::KernelDecay,
        Command::Instability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GroundState => "ground-state",
            Command::Spectrum => "spectrum",
            Command::Simulate => "simulate",
            Command::CheckMonotonicity => "check-monotonicity",
            Command::KernelDecay => "kernel-decay",
            Command::Instability => "instability",
        }
    }

    /// Keys this command reads, in serialization order.
    pub fn keys(self) -> Vec<&'static str> {
        let mut k = COMMON_KEYS.to_vec();
        k.extend_from_slice(match self {
            Command::GroundState => &[],
            Command::Spectrum => &["coercivity_trials"],
            Command::Simulate => &[
                "dt",
                "t_end",
                "scheme",
                "frame_speed",
                "diagnostics_every",
                "dealias",
                "initial",
                "checkpoint",
            ],
            Command::CheckMonotonicity => &["sigma", "gamma", "m_scale", "omega", "probes", "weight_form", "c1"],
            Command::KernelDecay => &["r_inner"],
            Command::Instability => &[
                "n_index",
                "dt",
                "t_end",
                "scheme",
                "frame_speed",
                "sample_every",
                "A",
                "x0_list",
                "m_exponent",
                "weight_scale",
                "nu",
                "flip",
            ],
        });
        k
    }
}

const COMMON_KEYS: [&str; 9] = [
    "alpha",
    "c",
    "dim",
    "grid",
    "length",
    "seed",
    "tolerance",
    "max_iterations",
    "band_limited",
];

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    /// The computed ground state.
    Soliton,
    /// A unit Gaussian bump at the origin.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub c: f64,
    pub dim: usize,
    pub grid: [usize; 2],
    pub length: [f64; 2],
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub band_limited: bool,
    pub dt: f64,
    /// Physical time for `simulate`, rescaled time `s` for `instability`.
    pub t_end: f64,
    pub scheme: Scheme,
    pub frame_speed: f64,
    pub diagnostics_every: usize,
    pub dealias: bool,
    pub initial: Initial,
    /// Initial field to load instead of `initial`.
    pub checkpoint: Option<String>,
    pub coercivity_trials: usize,
    pub sigma: Vec<f64>,
    pub gamma: f64,
    pub m_scale: f64,
    pub omega: f64,
    pub probes: usize,
    pub weight_form: WeightForm,
    pub c1: Option<f64>,
    pub r_inner: f64,
    pub n_index: u32,
    pub sample_every: usize,
    pub a_cutoff: f64,
    pub x0_list: Vec<f64>,
    pub m_exponent: f64,
    pub weight_scale: f64,
    pub nu: f64,
    pub flip: bool,
}

impl Params {
    pub fn defaults(command: Command) -> Self {
        let mut p = Self {
            alpha: 1.0,
            c: 1.0,
            dim: 2,
            grid: [256, 256],
            length: [32.0, 32.0],
            seed: 2024,
            tolerance: 1e-10,
            max_iterations: 5000,
            band_limited: false,
            dt: 4e-3,
            t_end: 5.0,
            scheme: Scheme::EtdRk4,
            frame_speed: 0.0,
            diagnostics_every: 10,
            dealias: true,
            initial: Initial::Soliton,
            checkpoint: None,
            coercivity_trials: 200,
            sigma: vec![1.0, 0.0],
            gamma: 1.0,
            m_scale: 1.0,
            omega: 0.0,
            probes: 50,
            weight_form: WeightForm::Plain,
            c1: None,
            r_inner: 5.0,
            n_index: 40,
            sample_every: 10,
            a_cutoff: 16.0,
            x0_list: vec![2.0, 4.0, 8.0],
            m_exponent: 1.25,
            weight_scale: 1.0,
            nu: 0.25,
            flip: false,
        };
        match command {
            Command::GroundState => p.length = [64.0, 64.0],
            Command::Spectrum => {
                p.grid = [512, 512];
                p.tolerance = 1e-12;
            }
            Command::Simulate => {
                p.band_limited = true;
                p.tolerance = 1e-12;
            }
            Command::CheckMonotonicity | Command::KernelDecay => p.length = [128.0, 128.0],
            Command::Instability => {
                p.band_limited = true;
                p.tolerance = 1e-12;
                p.dt = 5e-3;
                p.t_end = 20.0;
                p.frame_speed = 1.0;
            }
        }
        p
    }

    /// Grid described by `dim`, `grid` and `length`.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        match self.dim {
            1 => GridSpec::new_1d(self.grid[0], self.length[0]),
            2 => GridSpec::new_2d(self.grid[0], self.grid[1], self.length[0], self.length[1]),
            d => Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {d}"))),
        }
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "alpha" => self.alpha = real(v)?,
            "c" => self.c = real(v)?,
            "dim" => self.dim = int(v)?,
            "grid" => self.grid = pair(v, int)?,
            "length" => self.length = pair(v, real)?,
            "seed" => self.seed = int(v)?,
            "tolerance" => self.tolerance = real(v)?,
            "max_iterations" => self.max_iterations = int(v)?,
            "band_limited" => self.band_limited = boolean(v)?,
            "dt" => self.dt = real(v)?,
            "t_end" => self.t_end = real(v)?,
            "scheme" => self.scheme = v.parse().map_err(|e: Error| e.to_string())?,
            "frame_speed" => self.frame_speed = real(v)?,
            "diagnostics_every" => self.diagnostics_every = int(v)?,
            "dealias" => self.dealias = boolean(v)?,
            "initial" => {
                self.initial = match v {
                    "soliton" => Initial::Soliton,
                    "gaussian" => Initial::Gaussian,
                    _ => return Err(format!("expected soliton | gaussian, got `{v}`")),
                }
            }
            "checkpoint" => self.checkpoint = optional(v, |s| Ok(s.to_string()))?,
            "coercivity_trials" => self.coercivity_trials = int(v)?,
            "sigma" => self.sigma = list(v)?,
            "gamma" => self.gamma = real(v)?,
            "m_scale" => self.m_scale = real(v)?,
            "omega" => self.omega = real(v)?,
            "probes" => self.probes = int(v)?,
            "weight_form" => {
                self.weight_form = match v {
                    "plain" => WeightForm::Plain,
                    "rescaled" => WeightForm::Rescaled,
                    _ => return Err(format!("expected plain | rescaled, got `{v}`")),
                }
            }
            "c1" => self.c1 = optional(v, real)?,
            "r_inner" => self.r_inner = real(v)?,
            "n_index" => self.n_index = int(v)?,
            "sample_every" => self.sample_every = int(v)?,
            "A" => self.a_cutoff = real(v)?,
            "x0_list" => self.x0_list = list(v)?,
            "m_exponent" => self.m_exponent = real(v)?,
            "weight_scale" => self.weight_scale = real(v)?,
            "nu" => self.nu = real(v)?,
            "flip" => self.flip = boolean(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
        match key {
            "alpha" => num(self.alpha),
            "c" => num(self.c),
            "dim" => self.dim.to_string(),
            "grid" if self.dim == 1 => self.grid[0].to_string(),
            "grid" => format!("{}x{}", self.grid[0], self.grid[1]),
            "length" if self.dim == 1 => num(self.length[0]),
            "length" => format!("{}x{}", num(self.length[0]), num(self.length[1])),
            "seed" => self.seed.to_string(),
            "tolerance" => num(self.tolerance),
            "max_iterations" => self.max_iterations.to_string(),
            "band_limited" => self.band_limited.to_string(),
            "dt" => num(self.dt),
            "t_end" => num(self.t_end),
            "scheme" => self.scheme.to_string(),
            "frame_speed" => num(self.frame_speed),
            "diagnostics_every" => self.diagnostics_every.to_string(),
            "dealias" => self.dealias.to_string(),
            "initial" => match self.initial {
                Initial::Soliton => "soliton".into(),
                Initial::Gaussian => "gaussian".into(),
            },
            "checkpoint" => self.checkpoint.clone().unwrap_or_else(|| "none".into()),
            "coercivity_trials" => self.coercivity_trials.to_string(),
            "sigma" => join(&self.sigma),
            "gamma" => num(self.gamma),
            "m_scale" => num(self.m_scale),
            "omega" => num(self.omega),
            "probes" => self.probes.to_string(),
            "weight_form" => match self.weight_form {
                WeightForm::Plain => "plain".into(),
                WeightForm::Rescaled => "rescaled".into(),
            },
            "c1" => self.c1.map(num).unwrap_or_else(|| "auto".into()),
            "r_inner" => num(self.r_inner),
            "n_index" => self.n_index.to_string(),
            "sample_every" => self.sample_every.to_string(),
            "A" => num(self.a_cutoff),
            "x0_list" => join(&self.x0_list),
            "m_exponent" => num(self.m_exponent),
            "weight_scale" => num(self.weight_scale),
            "nu" => num(self.nu),
            "flip" => self.flip.to_string(),
            _ => unreachable!("key list and getter out of sync: {key}"),
        }
    }

    /// First violated constraint as `(key, message)`.
    fn check(&self, command: Command) -> std::result::Result<(), (&'static str, String)> {
        let positive = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((key, format!("{key} = {v} must be positive")))
            }
        };
        if !(1.0..=2.0).contains(&self.alpha) {
            return Err(("alpha", format!("alpha = {} outside [1, 2]", self.alpha)));
        }
        positive("c", self.c)?;
        positive("tolerance", self.tolerance)?;
        if !(self.dim == 1 || self.dim == 2) {
            return Err(("dim", format!("dim = {} must be 1 or 2", self.dim)));
        }
        self.grid_spec().map_err(|e| ("grid", e.to_string()))?;
        if self.max_iterations == 0 {
            return Err(("max_iterations", "max_iterations must be at least 1".into()));
        }
        match command {
            Command::GroundState | Command::KernelDecay => {
                if command == Command::KernelDecay {
                    positive("r_inner", self.r_inner)?;
                }
            }
            Command::Spectrum => {
                if self.dim != 2 {
                    return Err(("dim", "spectrum needs dim = 2".into()));
                }
            }
            Command::Simulate => {
                positive("dt", self.dt)?;
                if !(self.t_end >= 0.0) {
                    return Err(("t_end", format!("t_end = {} must be non-negative", self.t_end)));
                }
                if self.diagnostics_every == 0 {
                    return Err(("diagnostics_every", "diagnostics_every must be at least 1".into()));
                }
            }
            Command::CheckMonotonicity => {
                let hi = 0.5 * (self.alpha + 1.0);
                if !(self.gamma > 0.5 && self.gamma <= hi) {
                    return Err((
                        "gamma",
                        format!(
                            "gamma = {} outside (1/2, {hi}], the range of the weighted commutator estimate for alpha = {}",
                            self.gamma, self.alpha
                        ),
                    ));
                }
                if self.sigma.len() != self.dim {
                    return Err(("sigma", format!("sigma needs {} components", self.dim)));
                }
                if !sigma_condition(&self.sigma, self.alpha) {
                    return Err((
                        "sigma",
                        format!(
                            "sigma = {:?} violates sigma1 > 0, sigma1^2 > alpha/(2(1+alpha)) |sigma'|^2",
                            self.sigma
                        ),
                    ));
                }
                positive("m_scale", self.m_scale)?;
                if self.probes == 0 {
                    return Err(("probes", "probes must be at least 1".into()));
                }
                if let Some(c1) = self.c1 {
                    positive("c1", c1)?;
                }
            }
            Command::Instability => {
                if self.dim != 2 || self.alpha != 1.0 || self.c != 1.0 {
                    return Err(("alpha", "instability runs need dim = 2, alpha = 1, c = 1".into()));
                }
                if self.n_index == 0 {
                    return Err(("n_index", "n_index must be at least 1".into()));
                }
                positive("dt", self.dt)?;
                positive("t_end", self.t_end)?;
                positive("A", self.a_cutoff)?;
                positive("weight_scale", self.weight_scale)?;
                if self.sample_every == 0 {
                    return Err(("sample_every", "sample_every must be at least 1".into()));
                }
                if self.x0_list.is_empty() || self.x0_list.iter().any(|x| !(*x > 0.0)) {
                    return Err(("x0_list", "x0 values must be positive".into()));
                }
                if !(self.m_exponent > 1.0 && self.m_exponent < 1.5) {
                    return Err(("m_exponent", format!("m_exponent = {} outside (1, 3/2)", self.m_exponent)));
                }
                if !(self.nu > 0.0 && self.nu < 0.375) {
                    return Err(("nu", format!("nu = {} outside (0, 3/8)", self.nu)));
                }
            }
        }
        Ok(())
    }
}

/// Shortest round-trip form, exponent notation for very small or large values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn real(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("expected a finite number, got `{v}`"))
}

fn int<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>()
        .map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true | false, got `{v}`")),
    }
}

fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|s| real(s.trim())).collect()
}

fn pair<T: Copy>(
    v: &str,
    f: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<[T; 2], String> {
    match v.split_once('x') {
        Some((a, b)) => Ok([f(a.trim())?, f(b.trim())?]),
        None => {
            let a = f(v)?;
            Ok([a, a])
        }
    }
}

fn optional<T>(
    v: &str,
    f: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Option<T>, String> {
    match v {
        "none" | "auto" => Ok(None),
        _ => f(v).map(Some),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub params: Params,
    /// Line each key was read from.
    lines: BTreeMap<String, usize>,
}

impl PartialEq for ExperimentConfig {
    fn eq(&self, other: &Self) -> bool {
        self.command == other.command && self.params == other.params
    }
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            params: Params::defaults(command),
            lines: BTreeMap::new(),
        }
    }

    /// Sets one key, as from a command-line flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_at(key, value, None)
    }

    fn set_at(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<()> {
        let fail = |message: String| match line {
            Some(line) => Error::Config { line, message },
            None => Error::Precondition(format!("--{}: {message}", key.replace('_', "-"))),
        };
        if !self.command.keys().contains(&key) {
            let known = COMMON_KEYS.contains(&key)
                || Command::ALL.iter().any(|c| c.keys().contains(&key));
            return Err(fail(if known {
                format!("key `{key}` is not used by {}", self.command)
            } else {
                format!("unknown key `{key}`")
            }));
        }
        self.params.set(key, value).map_err(fail)?;
        match line {
            Some(l) => self.lines.insert(key.to_string(), l),
            None => self.lines.remove(key),
        };
        Ok(())
    }

    /// Checks every constraint of the command, reporting the line of the
    /// offending key when it came from a file.
    pub fn validate(&self) -> Result<()> {
        self.params.check(self.command).map_err(|(key, message)| match self.lines.get(key) {
            Some(&line) => Error::Config { line, message },
            None => Error::Precondition(message),
        })
    }

    /// Every key of the command, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut s = format!("# {}\n", self.command);
        for key in self.command.keys() {
            s.push_str(&format!("{key} = {}\n", self.params.get(key)));
        }
        s
    }
}

/// Parses and validates a config for `command`.
pub fn parse_config(command: Command, text: &str) -> Result<ExperimentConfig> {
    let cfg = parse_unchecked(command, text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses without the constraint checks, for callers that still apply
/// command-line overrides.
pub fn parse_unchecked(command: Command, text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(command);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let key = key.trim();
        if cfg.lines.contains_key(key) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        cfg.set_at(key, value.trim(), Some(line))?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        for c in Command::ALL {
            let cfg = parse_config(c, "").unwrap();
            assert_eq!(cfg.params, Params::defaults(c));
        }
    }

    #[test]
    fn gamma_outside_range_is_reported_with_line() {
        let text = "alpha = 1\n# comment\ngamma = 2.0\n";
        match parse_config(Command::CheckMonotonicity, text) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("(1/2, 1]"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_first_error_line() {
        let e = parse_config(Command::Simulate, "dt = 0.1\nfoo = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = parse_config(Command::Simulate, "dt = fast\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }), "{e}");
        let e = parse_config(Command::Simulate, "dt 0.1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }), "{e}");
        let e = parse_config(Command::Simulate, "dt = 1\ndt = 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = parse_config(Command::Simulate, "n_index = 3\n").unwrap_err();
        assert!(e.to_string().contains("not used by simulate"), "{e}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn serialization_round_trips() {
        for c in Command::ALL {
            let mut cfg = ExperimentConfig::new(c);
            cfg.params.alpha = 1.0;
            cfg.params.tolerance = 1.0 / 3.0 * 1e-9;
            let back = parse_config(c, &cfg.to_text()).unwrap();
            assert_eq!(back, cfg, "{c}");
        }
        let mut cfg = ExperimentConfig::new(Command::Instability);
        cfg.set("x0_list", "1.5, 3,6").unwrap();
        cfg.set("A", "8").unwrap();
        assert_eq!(cfg.params.x0_list, vec![1.5, 3.0, 6.0]);
        assert_eq!(parse_config(Command::Instability, &cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg = parse_unchecked(Command::Instability, "m_exponent = 1.2\n").unwrap();
        cfg.set("m_exponent", "1.6").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Precondition(_))));
    }
}
