//! Flat `key = value` run configuration: key tables per command, file
//! parsing, flag precedence and the provenance echo.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Arg, ArgMatches};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Sweep,
    Diag,
    Fitlaw,
    Pinn,
    Proxy,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Train,
        Command::Sweep,
        Command::Diag,
        Command::Fitlaw,
        Command::Pinn,
        Command::Proxy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Sweep => "sweep",
            Self::Diag => "diag",
            Self::Fitlaw => "fitlaw",
            Self::Pinn => "pinn",
            Self::Proxy => "proxy",
        }
    }

    fn about(self) -> &'static str {
        match self {
            Self::Train => "Train one regression network and write its trace and checkpoint",
            Self::Sweep => "Sweep the scale over seeds for a regression target",
            Self::Diag => "Scan first-layer conditioning over a scale grid",
            Self::Fitlaw => "Fit eps = C/(G-1)^q to measured or supplied scale pairs",
            Self::Pinn => "Sweep the scale over seeds for a physics-informed problem",
            Self::Proxy => "Pick a scale by short-training loss over the admissible interval",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Value type of a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Int,
    Real,
    Text,
    IntList,
    RealList,
    /// A single count `n` (seeds `0..n`) or an explicit comma list.
    Seeds,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Self::Int => "a non-negative integer",
            Self::Real => "a real number",
            Self::Text => "text",
            Self::IntList => "a comma-separated list of integers",
            Self::RealList => "a comma-separated list of reals",
            Self::Seeds => "a seed count or a comma-separated seed list",
        }
    }

    fn accepts(self, v: &str) -> bool {
        let list = |f: fn(&str) -> bool| !v.is_empty() && v.split(',').all(|p| f(p.trim()));
        match self {
            Self::Int => v.parse::<u64>().is_ok(),
            Self::Real => v.parse::<f64>().is_ok_and(f64::is_finite),
            Self::Text => !v.is_empty(),
            Self::IntList | Self::Seeds => list(|p| p.parse::<u64>().is_ok()),
            Self::RealList => list(|p| p.parse::<f64>().is_ok_and(f64::is_finite)),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Default_ {
    Value(&'static str),
    Optional,
}

#[derive(Clone, Copy, Debug)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    default: Default_,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec {
        name,
        kind,
        default: Default_::Value(default),
        help,
    }
}

const fn opt(name: &'static str, kind: Kind, help: &'static str) -> KeySpec {
    KeySpec {
        name,
        kind,
        default: Default_::Optional,
        help,
    }
}

use Kind::*;

const COMMON: &[KeySpec] = &[
    key("out", Text, "out", "output directory"),
    opt(
        "workers",
        Int,
        "worker threads (default: available cores); results do not depend on it",
    ),
];

const OPTIMIZER: &[KeySpec] = &[
    key("epochs", Int, "3000", "training epochs"),
    key("lr", Real, "0.001", "learning rate"),
    key("beta1", Real, "0.9", "first-moment decay"),
    key("beta2", Real, "0.999", "second-moment decay"),
    key("adam_eps", Real, "1e-8", "denominator offset"),
    key("weight_decay", Real, "0", "decoupled weight decay"),
    key("precision", Text, "double", "double | single"),
];

const NETWORK: &[KeySpec] = &[
    key("G", Int, "20", "basis functions per edge"),
    key("arch", Text, "2,12,12,1", "layer widths"),
    key("family", Text, "gaussian", "basis family"),
    key("nu", Int, "5", "Matérn smoothness (1, 3 or 5)"),
];

const GRID: &[KeySpec] = &[
    key("eps_min", Real, "0.005", "smallest scale of the log grid"),
    key("eps_max", Real, "1", "largest scale of the log grid"),
    key("eps_count", Int, "12", "points in the log grid"),
    opt("eps", RealList, "explicit scale grid (overrides the log grid)"),
    key("seeds", Seeds, "3", "seed count or list"),
    key("proxy_epoch", Int, "500", "epoch at which the proxy training MSE is recorded"),
    opt("collapse_layer", Int, "sweep only this layer; others stay at 0.1"),
];

const TRAIN: &[KeySpec] = &[
    key("target", Text, "F1", "F1 | F2 | F3 | F4 | FD<d>"),
    key("N", Int, "961", "training points"),
    opt("eps", Real, "scale (required for gaussian and matern)"),
    opt("scale_low", Real, "variable-scale lower bound (default 1/(G-1))"),
    opt("scale_high", Real, "variable-scale upper bound (default 2/(G-1))"),
    opt("degree", Int, "Chebyshev degree (default G-1)"),
    key("seed", Int, "0", "data, initialization and scale seed"),
    key("checkpoint_every", Int, "100", "validation interval in epochs"),
];

const SWEEP: &[KeySpec] = &[
    key("target", Text, "F1", "F1 | F2 | F3 | F4 | FD<d>"),
    key("N", Int, "961", "training points"),
];

const PINN: &[KeySpec] = &[
    key("problem", Text, "helmholtz", "helmholtz | black-scholes"),
    key("lambda", Real, "0", "Helmholtz lambda"),
    key("a1", Real, "1", "Helmholtz x-frequency"),
    key("a2", Real, "2", "Helmholtz y-frequency"),
    key("r", Real, "0.05", "Black-Scholes rate"),
    key("sigma", Real, "0.2", "Black-Scholes volatility"),
    key("strike", Real, "0.5", "Black-Scholes strike"),
    key("maturity", Real, "1", "Black-Scholes maturity"),
    key("s_max", Real, "1", "Black-Scholes upper asset price"),
    opt("w_pde", Real, "residual weight (default 1)"),
    opt("w_bc", Real, "boundary weight (default 100 Helmholtz, 1 Black-Scholes)"),
    opt("n_bc", Int, "boundary points (default 800 Helmholtz, 500 Black-Scholes)"),
    opt("n_pde", Int, "interior points (default 2000 Helmholtz, 3000 Black-Scholes)"),
];

const PROXY: &[KeySpec] = &[
    key("target", Text, "F1", "F1 | F2 | F3 | F4 | FD<d>"),
    key("N", Int, "961", "training points"),
    opt("eps_low", Real, "interval start (default: the family's lower scale)"),
    opt("eps_high", Real, "interval end (default: eps_kappa of the training set)"),
    key("eps_count", Int, "8", "grid points in the interval"),
    key("proxy_epochs", Int, "500", "epochs per proxy run"),
    key("full_epochs", Int, "0", "if positive, fully train the chosen scale"),
    key("seed", Int, "0", "seed"),
];

const DIAG: &[KeySpec] = &[
    key("N", Int, "961", "Halton points"),
    key("G", Int, "20", "basis functions per edge"),
    key("dim", Int, "2", "input dimension"),
    key("family", Text, "gaussian", "gaussian | matern"),
    key("nu", Int, "5", "Matérn smoothness (1, 3 or 5)"),
    key("eps_min", Real, "0.005", "smallest scale"),
    key("eps_max", Real, "5", "largest scale"),
    key("eps_count", Int, "100", "log-spaced scales"),
    key("seed", Int, "0", "Halton block index"),
    key("threshold", Real, "3000", "condition-number threshold"),
];

const FITLAW: &[KeySpec] = &[
    opt("input", Text, "CSV with columns N,G,eps (skips measurement)"),
    key("Ns", IntList, "400,900,1600", "point counts to measure"),
    key("Gs", IntList, "8,12,16,20,24", "grid sizes to measure"),
    key("seeds", Seeds, "3", "seed count or list"),
    key("eps_min", Real, "0.005", "smallest scanned scale"),
    key("eps_max", Real, "5", "largest scanned scale"),
    key("eps_count", Int, "100", "log-spaced scanned scales"),
    key("split_seed", Int, "0", "train/validation split seed"),
];

/// All keys of a command, command-specific first. Later duplicates are
/// dropped, so a command table can override a shared entry.
pub fn keys(cmd: Command) -> Vec<KeySpec> {
    let groups: Vec<&[KeySpec]> = match cmd {
        Command::Train => vec![TRAIN, NETWORK, OPTIMIZER, COMMON],
        Command::Sweep => vec![SWEEP, NETWORK, GRID, OPTIMIZER, COMMON],
        Command::Pinn => vec![PINN, NETWORK, GRID, OPTIMIZER, COMMON],
        Command::Proxy => vec![PROXY, NETWORK, OPTIMIZER, COMMON],
        Command::Diag => vec![DIAG, COMMON],
        Command::Fitlaw => vec![FITLAW, COMMON],
    };
    let mut out: Vec<KeySpec> = Vec::new();
    for k in groups.into_iter().flatten() {
        if !out.iter().any(|o| o.name == k.name) {
            out.push(*k);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

/// A fully resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<String, (String, Source)>,
    /// Keys given in both file and flags, with the file value.
    overridden: BTreeMap<String, String>,
    config_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.text("out").unwrap_or("out"))
    }

    pub fn workers(&self) -> Result<Option<usize>, CliError> {
        self.int_opt("workers")
    }

    pub fn source(&self, key: &str) -> Option<Source> {
        self.values.get(key).map(|v| v.1)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|v| v.0.as_str())
    }

    fn raw(&self, key: &str) -> Result<&str, CliError> {
        self.text(key).ok_or_else(|| CliError::MissingKey(key.into()))
    }

    fn mismatch(&self, key: &str, expected: &str) -> CliError {
        CliError::TypeMismatch {
            key: key.into(),
            expected: expected.into(),
            value: self.text(key).unwrap_or_default().into(),
        }
    }

    pub fn int(&self, key: &str) -> Result<usize, CliError> {
        self.raw(key)?.parse().map_err(|_| self.mismatch(key, "a non-negative integer"))
    }

    pub fn int_opt(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.text(key).map(|_| self.int(key)).transpose()
    }

    pub fn real(&self, key: &str) -> Result<f64, CliError> {
        self.raw(key)?.parse().map_err(|_| self.mismatch(key, "a real number"))
    }

    pub fn real_opt(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.text(key).map(|_| self.real(key)).transpose()
    }

    pub fn int_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.raw(key)?
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| self.mismatch(key, "a list of integers")))
            .collect()
    }

    pub fn real_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.raw(key)?
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| self.mismatch(key, "a list of reals")))
            .collect()
    }

    /// `n` means seeds `0..n`; a list is taken as given.
    pub fn seeds(&self, key: &str) -> Result<Vec<u64>, CliError> {
        let raw = self.raw(key)?;
        let parsed: Vec<u64> = raw
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| self.mismatch(key, "a seed count or list")))
            .collect::<Result<_, _>>()?;
        if raw.contains(',') {
            Ok(parsed)
        } else {
            Ok((0..parsed[0]).collect())
        }
    }

    /// The resolved configuration as a config file that reproduces the run.
    /// Comments record where each value came from.
    pub fn echo(&self) -> String {
        let mut s = format!("# kanscale {}\n", self.command.name());
        if let Some(p) = &self.config_file {
            let _ = writeln!(s, "# config file: {}", p.display());
        }
        for k in keys(self.command) {
            let Some((v, src)) = self.values.get(k.name) else {
                continue;
            };
            let note = match (src, self.overridden.get(k.name)) {
                (Source::Default, _) => "default".to_string(),
                (Source::File, _) => "file".to_string(),
                (Source::Flag, Some(f)) => format!("flag, file had {f}"),
                (Source::Flag, None) => "flag".to_string(),
            };
            let _ = writeln!(s, "{} = {v}  # {note}", k.name);
        }
        s
    }
}

/// Parses a flat config file: `key = value` lines, `#` starts a comment.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected `key = value`", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        if out.iter().any(|(o, _)| o == k) {
            return Err(CliError::Usage(format!("config line {}: duplicate key `{k}`", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn clap_command() -> clap::Command {
    let mut app = clap::Command::new("kanscale")
        .about("Scale-parameter experiments for Gaussian-basis Kolmogorov-Arnold networks")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in Command::ALL {
        let mut sub = clap::Command::new(cmd.name()).about(cmd.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat key = value file; flags override it"),
        );
        for k in keys(cmd) {
            let help = match k.default {
                Default_::Value(v) => format!("{} [default: {v}]", k.help),
                Default_::Optional => k.help.to_string(),
            };
            sub = sub.arg(Arg::new(k.name).long(k.name).value_name("VALUE").help(help));
        }
        app = app.subcommand(sub);
    }
    app
}

/// Resolves command, file and flags into a [`RunConfig`]. Precedence is
/// flag over file over default. Only key presence and value syntax are
/// checked here; see [`crate::validate`] for semantic checks.
pub fn resolve(args: &[String]) -> Result<RunConfig, CliError> {
    let matches = clap_command().try_get_matches_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Help(e.render().to_string())
        }
        clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            CliError::Usage(format!("a command is required\n\n{}", e.render().to_string().trim_end()))
        }
        _ => CliError::Usage(e.render().to_string().trim_end().to_string()),
    })?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = Command::from_name(name).expect("registered subcommand");
    let config_file = sub.get_one::<String>("config").map(PathBuf::from);
    let file_values = match &config_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.clone(),
                source,
            })?;
            parse_file(&text)?
        }
        None => Vec::new(),
    };
    build(command, file_values, flag_values(command, sub), config_file)
}

fn flag_values(cmd: Command, m: &ArgMatches) -> Vec<(String, String)> {
    keys(cmd)
        .iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.trim().to_string())))
        .collect()
}

fn build(
    command: Command,
    file: Vec<(String, String)>,
    flags: Vec<(String, String)>,
    config_file: Option<PathBuf>,
) -> Result<RunConfig, CliError> {
    let specs = keys(command);
    let mut values = BTreeMap::new();
    for k in &specs {
        if let Default_::Value(v) = k.default {
            values.insert(k.name.to_string(), (v.to_string(), Source::Default));
        }
    }
    for (k, v) in &file {
        if !specs.iter().any(|s| s.name == k) {
            return Err(CliError::UnknownKey(k.clone()));
        }
        values.insert(k.clone(), (v.clone(), Source::File));
    }
    let mut overridden = BTreeMap::new();
    for (k, v) in flags {
        if let Some((old, Source::File)) = values.get(&k) {
            overridden.insert(k.clone(), old.clone());
        }
        values.insert(k, (v, Source::Flag));
    }
    for k in &specs {
        if let Some((v, _)) = values.get(k.name) {
            if !k.kind.accepts(v) {
                return Err(CliError::TypeMismatch {
                    key: k.name.into(),
                    expected: k.kind.describe().into(),
                    value: v.clone(),
                });
            }
        }
    }
    Ok(RunConfig {
        command,
        values,
        overridden,
        config_file,
    })
}
