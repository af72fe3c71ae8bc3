//! Command-line front end: resolves a flat configuration, runs the
//! requested experiment and writes CSV and `key = value` outputs into the
//! output directory.
//!
//! Every run writes `config.echo` (a config file reproducing it) and
//! `summary.txt`; commands add their own tables:
//!
//! | command | files |
//! |---|---|
//! | train | `trace.csv`, `network.ckpt` |
//! | sweep, pinn | `records.csv`, `aggregates.csv` |
//! | proxy | none beyond the summary |
//! | diag | `report.csv` |
//! | fitlaw | `pairs.csv` |

pub mod config;
pub mod error;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use kanscale::basis::{gaussian_interval, matern_lower_scale, sample_variable_scales, BasisSpec, MaternNu};
use kanscale::diagnostics::{
    fit_scale_law, log_spaced, scan_conditioning, scan_conditioning_with_threshold, ScalePair, ScanFamily,
};
use kanscale::fmt::fmt_f64;
use kanscale::harness::{
    init_seed, measure_scale_pairs, proxy_scale_search, run_sweep, RunData, Schedule, SweepConfig, Task,
    COLLAPSE_REFERENCE,
};
use kanscale::network::{init_network, Architecture, Precision};
use kanscale::problems::{BsParams, PinnProblem, TargetId};
use kanscale::rng::derive_seed;
use kanscale::sampling::{halton, uniform_centers, PointSet};
use kanscale::training::{AdamConfig, TrainConfig};

pub use config::{Command, RunConfig};
pub use error::CliError;

type Summary = Vec<(String, String)>;

enum Plan {
    Train {
        task: Task,
        seed: u64,
        basis: BasisSpec,
        arch: Architecture,
        train: TrainConfig,
    },
    Sweep(SweepConfig),
    Proxy {
        cfg: SweepConfig,
        proxy_epochs: usize,
        full_epochs: usize,
    },
    Diag {
        pts: PointSet,
        g: usize,
        family: ScanFamily,
        eps_grid: Vec<f64>,
        threshold: f64,
    },
    Fitlaw {
        pairs: Option<Vec<ScalePair>>,
        ns: Vec<usize>,
        gs: Vec<usize>,
        seeds: Vec<u64>,
        eps_grid: Vec<f64>,
        split_seed: u64,
    },
}

/// Resolves arguments (program name first) into a validated [`RunConfig`].
pub fn parse_config(args: &[String]) -> Result<RunConfig, CliError> {
    let cfg = config::resolve(args)?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Semantic checks: builds the experiment description without running it.
pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    plan(cfg).map(|_| ())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    write_file(path, |w| {
        for (k, v) in summary {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    })
}

/// Runs a resolved configuration and returns its summary.
pub fn execute(cfg: &RunConfig) -> Result<Summary, CliError> {
    let plan = plan(cfg)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    let echo = cfg.echo();
    write_file(&out.join("config.echo"), |w| w.write_all(echo.as_bytes()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers()?.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("key `workers`: {e}")))?;
    let summary = pool.install(|| run_plan(plan, &out))?;
    write_summary(&out.join("summary.txt"), &summary)?;
    Ok(summary)
}

/// Full entry point; returns the process exit status.
pub fn run(args: &[String]) -> i32 {
    match parse_config(args).and_then(|cfg| execute(&cfg)) {
        Ok(summary) => {
            for (k, v) in summary {
                println!("{k} = {v}");
            }
            0
        }
        Err(CliError::Help(text)) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("kanscale: error: {e}");
            e.exit_code()
        }
    }
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let t = TrainConfig {
        epochs: cfg.int("epochs")?,
        adam: AdamConfig {
            learning_rate: cfg.real("lr")?,
            beta1: cfg.real("beta1")?,
            beta2: cfg.real("beta2")?,
            eps: cfg.real("adam_eps")?,
            weight_decay: cfg.real("weight_decay")?,
        },
        precision: Precision::parse(cfg.text("precision").unwrap_or("double"))?,
        ..Default::default()
    };
    t.validate()?;
    Ok(t)
}

fn matern_nu(cfg: &RunConfig) -> Result<MaternNu, CliError> {
    Ok(MaternNu::from_value(cfg.int("nu")? as u32)?)
}

fn scan_family(cfg: &RunConfig) -> Result<ScanFamily, CliError> {
    match cfg.text("family").unwrap_or("gaussian") {
        "gaussian" => Ok(ScanFamily::Gaussian),
        "matern" => Ok(ScanFamily::Matern(matern_nu(cfg)?)),
        other => Err(CliError::Usage(format!(
            "key `family`: expected gaussian or matern, got `{other}`"
        ))),
    }
}

fn regression_task(cfg: &RunConfig) -> Result<Task, CliError> {
    let target = TargetId::parse(cfg.text("target").unwrap_or("F1"))?;
    let n = cfg.int("N")?;
    if n == 0 {
        return Err(CliError::Usage("key `N`: must be positive".into()));
    }
    Ok(Task::Regression { target, n })
}

fn pinn_task(cfg: &RunConfig) -> Result<Task, CliError> {
    let mut problem = match cfg.text("problem").unwrap_or("helmholtz") {
        "helmholtz" => PinnProblem::helmholtz(cfg.real("lambda")?, cfg.real("a1")?, cfg.real("a2")?),
        "black-scholes" => {
            let p = BsParams {
                r: cfg.real("r")?,
                sigma: cfg.real("sigma")?,
                strike: cfg.real("strike")?,
                maturity: cfg.real("maturity")?,
                s_max: cfg.real("s_max")?,
            };
            if !(p.sigma > 0.0 && p.strike > 0.0 && p.maturity > 0.0 && p.s_max > p.strike) {
                return Err(CliError::Usage(
                    "Black-Scholes needs sigma, strike, maturity > 0 and s_max > strike".into(),
                ));
            }
            PinnProblem::black_scholes(p)
        }
        other => {
            return Err(CliError::Usage(format!(
                "key `problem`: expected helmholtz or black-scholes, got `{other}`"
            )))
        }
    };
    if let Some(w) = cfg.real_opt("w_pde")? {
        problem.w_pde = w;
    }
    if let Some(w) = cfg.real_opt("w_bc")? {
        problem.w_bc = w;
    }
    if problem.w_pde < 0.0 || problem.w_bc < 0.0 {
        return Err(CliError::Usage("loss weights must be non-negative".into()));
    }
    let (n_bc, n_pde) = problem.default_counts();
    Ok(Task::Pinn {
        problem,
        n_bc: cfg.int_opt("n_bc")?.unwrap_or(n_bc),
        n_pde: cfg.int_opt("n_pde")?.unwrap_or(n_pde),
    })
}

fn eps_grid(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    if cfg.text("eps").is_some() {
        return cfg.real_list("eps");
    }
    Ok(log_spaced(cfg.real("eps_min")?, cfg.real("eps_max")?, cfg.int("eps_count")?)?)
}

fn sweep_config(cfg: &RunConfig, task: Task) -> Result<SweepConfig, CliError> {
    let arch = Architecture::parse(cfg.text("arch").unwrap_or(""))?;
    let schedule = match cfg.int_opt("collapse_layer")? {
        Some(layer) => Schedule::OneLayer {
            layer,
            reference: COLLAPSE_REFERENCE,
        },
        None => Schedule::Shared,
    };
    let proxy_epoch = cfg.int("proxy_epoch")?;
    let s = SweepConfig {
        task,
        g: cfg.int("G")?,
        arch,
        family: scan_family(cfg)?,
        eps_grid: eps_grid(cfg)?,
        seeds: cfg.seeds("seeds")?,
        train: train_config(cfg)?,
        proxy_epoch: (proxy_epoch > 0).then_some(proxy_epoch),
        schedule,
    };
    s.validate()?;
    schedule.build(1.0, s.arch.n_layers())?;
    Ok(s)
}

fn plan(cfg: &RunConfig) -> Result<Plan, CliError> {
    match cfg.command {
        Command::Train => plan_train(cfg),
        Command::Sweep => Ok(Plan::Sweep(sweep_config(cfg, regression_task(cfg)?)?)),
        Command::Pinn => Ok(Plan::Sweep(sweep_config(cfg, pinn_task(cfg)?)?)),
        Command::Proxy => plan_proxy(cfg),
        Command::Diag => {
            let (n, dim, g) = (cfg.int("N")?, cfg.int("dim")?, cfg.int("G")?);
            uniform_centers(g)?;
            Ok(Plan::Diag {
                pts: halton(n, dim, cfg.int("seed")? as u64 * n as u64)?,
                g,
                family: scan_family(cfg)?,
                eps_grid: log_spaced(cfg.real("eps_min")?, cfg.real("eps_max")?, cfg.int("eps_count")?)?,
                threshold: cfg.real("threshold")?,
            })
        }
        Command::Fitlaw => {
            let pairs = match cfg.text("input") {
                Some(p) => Some(read_pairs(Path::new(p))?),
                None => None,
            };
            let gs = cfg.int_list("Gs")?;
            for &g in &gs {
                uniform_centers(g)?;
            }
            Ok(Plan::Fitlaw {
                pairs,
                ns: cfg.int_list("Ns")?,
                gs,
                seeds: cfg.seeds("seeds")?,
                eps_grid: log_spaced(cfg.real("eps_min")?, cfg.real("eps_max")?, cfg.int("eps_count")?)?,
                split_seed: cfg.int("split_seed")? as u64,
            })
        }
    }
}

fn plan_train(cfg: &RunConfig) -> Result<Plan, CliError> {
    let task = regression_task(cfg)?;
    let arch = Architecture::parse(cfg.text("arch").unwrap_or(""))?;
    let g = cfg.int("G")?;
    let seed = cfg.int("seed")? as u64;
    let eps = || cfg.real_opt("eps")?.ok_or_else(|| CliError::MissingKey("eps".into()));
    let basis = match cfg.text("family").unwrap_or("gaussian") {
        "gaussian" => BasisSpec::gaussian(uniform_centers(g)?, eps()?)?,
        "matern" => BasisSpec::matern(matern_nu(cfg)?, uniform_centers(g)?, eps()?)?,
        "gaussian-variable" => {
            let interval = gaussian_interval(g)?;
            let low = cfg.real_opt("scale_low")?.unwrap_or(interval.low);
            let high = cfg.real_opt("scale_high")?.unwrap_or(interval.high);
            let scales = sample_variable_scales(g, low, high, derive_seed(seed, 2))?;
            BasisSpec::gaussian_variable(uniform_centers(g)?, scales)?
        }
        "chebyshev" => BasisSpec::chebyshev(cfg.int_opt("degree")?.unwrap_or(g.saturating_sub(1)))?,
        other => {
            return Err(CliError::Usage(format!(
                "key `family`: expected gaussian, gaussian-variable, matern or chebyshev, got `{other}`"
            )))
        }
    };
    if arch.input_dim() != task.input_dim() || arch.output_dim() != 1 {
        return Err(CliError::Usage(format!(
            "key `arch`: {arch} does not map {} inputs to one output",
            task.input_dim()
        )));
    }
    let mut train = train_config(cfg)?;
    train.seed = seed;
    let every = cfg.int("checkpoint_every")?;
    if every > 0 {
        train.checkpoints = (every..=train.epochs).step_by(every).collect();
    }
    Ok(Plan::Train {
        task,
        seed,
        basis,
        arch,
        train,
    })
}

fn plan_proxy(cfg: &RunConfig) -> Result<Plan, CliError> {
    let task = regression_task(cfg)?;
    let family = scan_family(cfg)?;
    let g = cfg.int("G")?;
    let seed = cfg.int("seed")? as u64;
    let low = match cfg.real_opt("eps_low")? {
        Some(v) => v,
        None => match family {
            ScanFamily::Gaussian => gaussian_interval(g)?.low,
            ScanFamily::Matern(nu) => matern_lower_scale(g, nu.value())?,
        },
    };
    let high = match cfg.real_opt("eps_high")? {
        Some(v) => v,
        None => {
            let data = RunData::new(&task, seed)?;
            let scan = log_spaced(5e-3, 5.0, 100)?;
            scan_conditioning(&data.train, &uniform_centers(g)?, family, &scan)?.eps_kappa
        }
    };
    if !(low > 0.0 && high >= low) {
        return Err(CliError::Usage(format!(
            "admissible interval [{}, {}] is empty",
            fmt_f64(low),
            fmt_f64(high)
        )));
    }
    let s = SweepConfig {
        task,
        g,
        arch: Architecture::parse(cfg.text("arch").unwrap_or(""))?,
        family,
        eps_grid: log_spaced(low, high, cfg.int("eps_count")?)?,
        seeds: vec![seed],
        train: train_config(cfg)?,
        proxy_epoch: None,
        schedule: Schedule::Shared,
    };
    s.validate()?;
    Ok(Plan::Proxy {
        cfg: s,
        proxy_epochs: cfg.int("proxy_epochs")?,
        full_epochs: cfg.int("full_epochs")?,
    })
}

fn read_pairs(path: &Path) -> Result<Vec<ScalePair>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::Usage(format!("{}: missing column `{name}`", path.display())))
    };
    let (cn, cg, ce) = (col("N")?, col("G")?, col("eps")?);
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || CliError::Usage(format!("{}: malformed row {}", path.display(), i + 2));
            let get = |c: usize| f.get(c).copied().ok_or_else(bad);
            Ok(ScalePair {
                n: get(cn)?.parse().map_err(|_| bad())?,
                g: get(cg)?.parse().map_err(|_| bad())?,
                eps: get(ce)?.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn run_plan(plan: Plan, out: &Path) -> Result<Summary, CliError> {
    let kv = |k: &str, v: String| (k.to_string(), v);
    match plan {
        Plan::Train {
            task,
            seed,
            basis,
            arch,
            train,
        } => {
            let data = RunData::new(&task, seed)?;
            let net = init_network(&arch, &basis, None, init_seed(seed))?;
            let (net, trace) = data.train(net, &train)?;
            write_file(&out.join("trace.csv"), |w| trace.write_csv(w))?;
            let ckpt: PathBuf = out.join("network.ckpt");
            let mut w = BufWriter::new(File::create(&ckpt).map_err(io_err(&ckpt))?);
            net.write_checkpoint(&mut w)?;
            w.flush().map_err(io_err(&ckpt))?;
            Ok(vec![
                kv("family", basis.family_name().to_string()),
                kv("epochs", train.epochs.to_string()),
                kv("final_train_mse", fmt_f64(trace.final_train_loss)),
                kv("val_rmse", fmt_f64(trace.final_val_rmse().unwrap_or(f64::NAN))),
            ])
        }
        Plan::Sweep(cfg) => {
            let result = run_sweep(&cfg)?;
            write_file(&out.join("records.csv"), |w| result.write_records_csv(w))?;
            write_file(&out.join("aggregates.csv"), |w| result.write_aggregates_csv(w))?;
            let diverged = result.records.iter().filter(|r| r.diverged).count();
            let mut s = vec![
                kv("cells", result.records.len().to_string()),
                kv("diverged", diverged.to_string()),
            ];
            match result.best() {
                Some(b) => {
                    s.push(kv("e_opt", fmt_f64(b.eps)));
                    s.push(kv("best_rmse_geomean", fmt_f64(b.rmse_geomean)));
                }
                None => s.push(kv("e_opt", "none".into())),
            }
            Ok(s)
        }
        Plan::Proxy {
            cfg,
            proxy_epochs,
            full_epochs,
        } => {
            let chosen = proxy_scale_search(&cfg, proxy_epochs)?;
            let mut s = vec![
                kv("eps_low", fmt_f64(cfg.eps_grid[0])),
                kv("eps_high", fmt_f64(*cfg.eps_grid.last().unwrap())),
                kv("grid_points", cfg.eps_grid.len().to_string()),
                kv("proxy_epochs", proxy_epochs.to_string()),
                kv("chosen_eps", fmt_f64(chosen)),
            ];
            if full_epochs > 0 {
                let mut full = cfg.clone();
                full.eps_grid = vec![chosen];
                full.train.epochs = full_epochs;
                let r = run_sweep(&full)?;
                s.push(kv("full_epochs", full_epochs.to_string()));
                s.push(kv("val_rmse", fmt_f64(r.records[0].val_rmse)));
            }
            Ok(s)
        }
        Plan::Diag {
            pts,
            g,
            family,
            eps_grid,
            threshold,
        } => {
            let report = scan_conditioning_with_threshold(&pts, &uniform_centers(g)?, family, &eps_grid, threshold)?;
            write_file(&out.join("report.csv"), |w| report.write_csv(w))?;
            Ok(report.summary())
        }
        Plan::Fitlaw {
            pairs,
            ns,
            gs,
            seeds,
            eps_grid,
            split_seed,
        } => {
            let pairs = match pairs {
                Some(p) => p,
                None => measure_scale_pairs(&ns, &gs, &seeds, &eps_grid)?,
            };
            write_file(&out.join("pairs.csv"), |w| {
                writeln!(w, "N,G,eps")?;
                for p in &pairs {
                    writeln!(w, "{},{},{}", p.n, p.g, fmt_f64(p.eps))?;
                }
                Ok(())
            })?;
            Ok(fit_scale_law(&pairs, split_seed)?.summary())
        }
    }
}
