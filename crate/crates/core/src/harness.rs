//! Experiment orchestration: scale sweeps over seeds with geometric-mean
//! aggregation, the short-training proxy search, forced-collapse runs and
//! the conditioning-scale measurements used by the scale-law fit.

use std::io::Write;

use rayon::prelude::*;

use crate::basis::BasisSpec;
use crate::diagnostics::{scan_conditioning, ScalePair, ScanFamily};
use crate::error::{KanError, Result};
use crate::fmt::fmt_f64;
use crate::network::{init_network, Architecture, KanNetwork, ScaleSchedule};
use crate::problems::{PinnKind, PinnProblem, TargetId};
use crate::rng::derive_seed;
use crate::sampling::{cell_centered_grid, halton, tensor_grid, uniform_centers, PointSet};
use crate::training::{rmse, train_pinn, train_regression, TrainConfig, TrainTrace};

/// What is being trained.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Regression { target: TargetId, n: usize },
    Pinn { problem: PinnProblem, n_bc: usize, n_pde: usize },
}

impl Task {
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Regression { target, .. } => target.dim(),
            Self::Pinn { .. } => 2,
        }
    }
}

/// How a swept scale is placed into the per-layer schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    /// Every layer uses the swept scale.
    Shared,
    /// Only `layer` uses the swept scale; the others use `reference`.
    OneLayer { layer: usize, reference: f64 },
}

impl Schedule {
    pub fn build(&self, eps: f64, layers: usize) -> Result<ScaleSchedule> {
        match *self {
            Self::Shared => ScaleSchedule::shared(eps, layers),
            Self::OneLayer { layer, reference } => {
                if layer >= layers {
                    return Err(KanError::IndexOutOfRange { index: layer, layers });
                }
                let mut s = vec![reference; layers];
                s[layer] = eps;
                ScaleSchedule::new(s)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub task: Task,
    pub g: usize,
    pub arch: Architecture,
    pub family: ScanFamily,
    pub eps_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Epochs, optimizer and precision; the seed field is ignored.
    pub train: TrainConfig,
    /// Epoch at which the training MSE is also recorded.
    pub proxy_epoch: Option<usize>,
    pub schedule: Schedule,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() || self.seeds.is_empty() {
            return Err(KanError::Config("scale grid and seed list must be non-empty".into()));
        }
        if self.eps_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(KanError::Config("scales must be positive".into()));
        }
        if self.arch.input_dim() != self.task.input_dim() || self.arch.output_dim() != 1 {
            return Err(KanError::Config(format!(
                "architecture {} does not map {} inputs to one output",
                self.arch,
                self.task.input_dim()
            )));
        }
        uniform_centers(self.g)?;
        if let Some(p) = self.proxy_epoch {
            if p > self.train.epochs {
                return Err(KanError::Config(format!(
                    "proxy epoch {p} exceeds training epochs {}",
                    self.train.epochs
                )));
            }
        }
        self.train.validate()
    }
}

/// Training data for one seed. Points are Halton blocks starting after
/// index `seed * count`, so different seeds use disjoint blocks.
#[derive(Clone, Debug)]
pub struct RunData {
    pub task: Task,
    pub train: PointSet,
    pub targets: Vec<f64>,
    /// Boundary points for physics-informed tasks.
    pub boundary: Option<PointSet>,
    pub val: PointSet,
    pub val_truth: Vec<f64>,
}

/// Validation set: 100×100 tensor grid for 2-D regression and Helmholtz,
/// a 100×100 cell-centred grid for Black–Scholes (off `S = 0` and `t = T`),
/// and 10⁴ Halton points far down the sequence for other dimensions.
pub fn validation_points(task: &Task) -> Result<PointSet> {
    match task {
        Task::Pinn { problem, .. } => match problem.kind {
            PinnKind::Helmholtz { .. } => tensor_grid(100, 2),
            PinnKind::BlackScholesDigital(_) => cell_centered_grid(100, 2),
        },
        Task::Regression { target, .. } if target.dim() == 2 => tensor_grid(100, 2),
        Task::Regression { target, .. } => halton(10_000, target.dim(), 1 << 24),
    }
}

impl RunData {
    pub fn new(task: &Task, seed: u64) -> Result<Self> {
        let val = validation_points(task)?;
        match task {
            Task::Regression { target, n } => {
                let train = halton(*n, target.dim(), seed * *n as u64)?;
                Ok(Self {
                    task: task.clone(),
                    targets: target.values_unit(&train)?,
                    train,
                    boundary: None,
                    val_truth: target.values_unit(&val)?,
                    val,
                })
            }
            Task::Pinn { problem, n_bc, n_pde } => {
                let (interior, boundary) = problem.collocation(*n_bc, *n_pde, seed * (*n_pde + *n_bc) as u64)?;
                Ok(Self {
                    task: task.clone(),
                    train: interior,
                    targets: Vec::new(),
                    boundary: Some(boundary),
                    val_truth: problem.exact_values(&val)?,
                    val,
                })
            }
        }
    }

    /// Trains `net` on this data; validation RMSE is checkpointed at the last epoch.
    pub fn train(&self, net: KanNetwork, cfg: &TrainConfig) -> Result<(KanNetwork, TrainTrace)> {
        let mut cfg = cfg.clone();
        if !cfg.checkpoints.contains(&cfg.epochs) {
            cfg.checkpoints.push(cfg.epochs);
        }
        let val = Some(crate::training::Validation {
            points: &self.val,
            truth: &self.val_truth,
        });
        match &self.task {
            Task::Regression { .. } => train_regression(net, &self.train, &self.targets, val, &cfg),
            Task::Pinn { problem, .. } => {
                train_pinn(net, problem, &self.train, self.boundary.as_ref().unwrap(), val, &cfg)
            }
        }
    }

    pub fn val_rmse(&self, net: &KanNetwork) -> Result<f64> {
        rmse(&net.predict(&self.val)?, &self.val_truth)
    }
}

/// Seed used for the coefficient initialization of a run.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, 1)
}

fn family_basis(family: ScanFamily, g: usize, eps: f64) -> Result<BasisSpec> {
    let grid = uniform_centers(g)?;
    match family {
        ScanFamily::Gaussian => BasisSpec::gaussian(grid, eps),
        ScanFamily::Matern(nu) => BasisSpec::matern(nu, grid, eps),
    }
}

/// The untrained network of one sweep cell.
pub fn cell_network(cfg: &SweepConfig, eps: f64, seed: u64) -> Result<KanNetwork> {
    let schedule = cfg.schedule.build(eps, cfg.arch.n_layers())?;
    let basis = family_basis(cfg.family, cfg.g, eps)?;
    init_network(&cfg.arch, &basis, Some(&schedule), init_seed(seed))
}

/// Outcome of one (scale, seed) cell. Diverged runs carry NaN errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    pub eps: f64,
    pub seed: u64,
    pub train_mse_final: f64,
    pub train_mse_proxy: Option<f64>,
    pub val_rmse: f64,
    pub diverged: bool,
}

/// Per-scale aggregate over seeds; `n_excluded` counts diverged or
/// non-positive runs, and the statistics are NaN when all are excluded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepAggregate {
    pub eps: f64,
    pub rmse_geomean: f64,
    pub rmse_min: f64,
    pub rmse_max: f64,
    pub n_excluded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepResult {
    /// Aggregate with the smallest geometric-mean RMSE (ties to the smaller scale).
    pub fn best(&self) -> Option<SweepAggregate> {
        self.aggregates
            .iter()
            .filter(|a| a.rmse_geomean.is_finite())
            .fold(None, |best: Option<SweepAggregate>, a| match best {
                Some(b) if b.rmse_geomean <= a.rmse_geomean => Some(b),
                _ => Some(*a),
            })
    }

    /// `E_opt`: the best aggregate RMSE over the scale grid.
    pub fn e_opt(&self) -> Option<f64> {
        self.best().map(|a| a.rmse_geomean)
    }

    pub fn aggregate_at(&self, eps: f64) -> Option<&SweepAggregate> {
        self.aggregates.iter().find(|a| a.eps == eps)
    }

    /// CSV `eps,seed,train_mse_final,train_mse_proxy,val_rmse,diverged`.
    pub fn write_records_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eps,seed,train_mse_final,train_mse_proxy,val_rmse,diverged")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(r.eps),
                r.seed,
                fmt_f64(r.train_mse_final),
                r.train_mse_proxy.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.val_rmse),
                r.diverged
            )?;
        }
        Ok(())
    }

    /// CSV `eps,rmse_geomean,rmse_min,rmse_max,n_excluded`.
    pub fn write_aggregates_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eps,rmse_geomean,rmse_min,rmse_max,n_excluded")?;
        for a in &self.aggregates {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(a.eps),
                fmt_f64(a.rmse_geomean),
                fmt_f64(a.rmse_min),
                fmt_f64(a.rmse_max),
                a.n_excluded
            )?;
        }
        Ok(())
    }
}

/// `exp(mean(ln v))`; every value must be positive.
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(KanError::InvalidInput("geometric mean of an empty list".into()));
    }
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(KanError::InvalidInput("geometric mean needs positive finite values".into()));
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Aggregates records (in grid order of `eps_grid`).
pub fn aggregate(records: &[SweepRecord], eps_grid: &[f64]) -> Vec<SweepAggregate> {
    eps_grid
        .iter()
        .map(|&eps| {
            let cell: Vec<&SweepRecord> = records.iter().filter(|r| r.eps == eps).collect();
            let ok: Vec<f64> = cell
                .iter()
                .filter(|r| !r.diverged && r.val_rmse > 0.0 && r.val_rmse.is_finite())
                .map(|r| r.val_rmse)
                .collect();
            let n_excluded = cell.len() - ok.len();
            if ok.is_empty() {
                return SweepAggregate {
                    eps,
                    rmse_geomean: f64::NAN,
                    rmse_min: f64::NAN,
                    rmse_max: f64::NAN,
                    n_excluded,
                };
            }
            SweepAggregate {
                eps,
                rmse_geomean: geometric_mean(&ok).unwrap(),
                rmse_min: ok.iter().copied().fold(f64::INFINITY, f64::min),
                rmse_max: ok.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                n_excluded,
            }
        })
        .collect()
}

fn run_cell(cfg: &SweepConfig, data: &RunData, eps: f64, seed: u64) -> Result<SweepRecord> {
    let net = cell_network(cfg, eps, seed)?;
    match data.train(net, &cfg.train) {
        Ok((_, trace)) => Ok(SweepRecord {
            eps,
            seed,
            train_mse_final: trace.final_train_loss,
            train_mse_proxy: cfg.proxy_epoch.and_then(|p| trace.train_loss_after(p)),
            val_rmse: trace.final_val_rmse().unwrap_or(f64::NAN),
            diverged: false,
        }),
        Err(KanError::Diverged { .. }) => Ok(SweepRecord {
            eps,
            seed,
            train_mse_final: f64::NAN,
            train_mse_proxy: None,
            val_rmse: f64::NAN,
            diverged: true,
        }),
        Err(e) => Err(e),
    }
}

/// Trains one network per (scale, seed) cell. Divergence is recorded, not fatal.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let data = cfg
        .seeds
        .iter()
        .map(|&s| RunData::new(&cfg.task, s))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(f64, usize)> = cfg
        .eps_grid
        .iter()
        .flat_map(|&e| (0..cfg.seeds.len()).map(move |k| (e, k)))
        .collect();
    let records = cells
        .par_iter()
        .map(|&(eps, k)| run_cell(cfg, &data[k], eps, cfg.seeds[k]))
        .collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate(&records, &cfg.eps_grid);
    Ok(SweepResult { records, aggregates })
}

/// Trains `proxy_epochs` epochs per scale on the first seed and returns the
/// scale with the smallest training loss (ties to the smaller scale).
pub fn proxy_scale_search(cfg: &SweepConfig, proxy_epochs: usize) -> Result<f64> {
    let mut proxy = cfg.clone();
    proxy.seeds.truncate(1);
    proxy.train.epochs = proxy_epochs;
    proxy.proxy_epoch = None;
    let result = run_sweep(&proxy)?;
    let mut best: Option<(f64, f64)> = None;
    for r in &result.records {
        if r.diverged || !r.train_mse_final.is_finite() {
            continue;
        }
        if best.is_none_or(|(l, _)| r.train_mse_final < l) {
            best = Some((r.train_mse_final, r.eps));
        }
    }
    best.map(|(_, e)| e)
        .ok_or(KanError::Diverged { last_finite_epoch: None })
}

/// Baseline versus one forced-collapse layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseComparison {
    pub layer: usize,
    pub collapse_eps: f64,
    pub baseline_rmse: f64,
    pub collapsed_rmse: f64,
}

impl CollapseComparison {
    pub fn degradation(&self) -> f64 {
        self.collapsed_rmse / self.baseline_rmse
    }
}

/// Reference scale of the non-collapsed layers.
pub const COLLAPSE_REFERENCE: f64 = 0.1;

/// Trains with every layer at 0.1 and again with `layer` forced to
/// `collapse_eps`; RMSEs are geometric means over the configured seeds.
pub fn collapse_experiment(base: &SweepConfig, layer: usize, collapse_eps: f64) -> Result<CollapseComparison> {
    let mut cfg = base.clone();
    cfg.schedule = Schedule::OneLayer {
        layer,
        reference: COLLAPSE_REFERENCE,
    };
    cfg.eps_grid = if collapse_eps == COLLAPSE_REFERENCE {
        vec![COLLAPSE_REFERENCE]
    } else {
        vec![COLLAPSE_REFERENCE, collapse_eps]
    };
    let result = run_sweep(&cfg)?;
    let base_agg = result.aggregates[0];
    let coll_agg = *result.aggregates.last().unwrap();
    Ok(CollapseComparison {
        layer,
        collapse_eps,
        baseline_rmse: base_agg.rmse_geomean,
        collapsed_rmse: coll_agg.rmse_geomean,
    })
}

/// Measures `eps_kappa` on Halton sets for every (N, G, seed); seed `s`
/// uses the block of `N` points after index `s * N`.
pub fn measure_scale_pairs(ns: &[usize], gs: &[usize], seeds: &[u64], eps_grid: &[f64]) -> Result<Vec<ScalePair>> {
    let mut out = Vec::new();
    for &n in ns {
        for &seed in seeds {
            let pts = halton(n, 2, seed * n as u64)?;
            for &g in gs {
                let rep = scan_conditioning(&pts, &uniform_centers(g)?, ScanFamily::Gaussian, eps_grid)?;
                out.push(ScalePair { n, g, eps: rep.eps_kappa });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn geometric_mean_examples() {
        assert!((geometric_mean(&[1.0, 100.0]).unwrap() - 10.0).abs() < 1e-14);
        assert_eq!(geometric_mean(&[0.37]).unwrap(), 0.37);
        assert!((geometric_mean(&[0.01, 0.04]).unwrap() - 0.02).abs() < 1e-16);
        assert!(geometric_mean(&[1.0, 0.0]).is_err());
        assert!(geometric_mean(&[]).is_err());
        let mut rng = SeededRng::new(5);
        let mut v: Vec<f64> = (0..20).map(|_| rng.uniform(0.01, 10.0)).collect();
        let a = geometric_mean(&v).unwrap();
        v.reverse();
        v.swap(3, 11);
        assert!((geometric_mean(&v).unwrap() - a).abs() <= 1e-14 * a);
    }

    #[test]
    fn aggregation_excludes_diverged() {
        let rec = |eps, seed, rmse: f64, diverged| SweepRecord {
            eps,
            seed,
            train_mse_final: 0.0,
            train_mse_proxy: None,
            val_rmse: rmse,
            diverged,
        };
        let records = vec![
            rec(0.1, 0, 0.01, false),
            rec(0.1, 1, 0.04, false),
            rec(0.2, 0, f64::NAN, true),
            rec(0.2, 1, 0.5, false),
            rec(0.3, 0, f64::NAN, true),
        ];
        let agg = aggregate(&records, &[0.1, 0.2, 0.3]);
        assert!((agg[0].rmse_geomean - 0.02).abs() < 1e-16);
        assert_eq!((agg[0].rmse_min, agg[0].rmse_max, agg[0].n_excluded), (0.01, 0.04, 0));
        assert_eq!((agg[1].rmse_geomean, agg[1].n_excluded), (0.5, 1));
        assert!(agg[2].rmse_geomean.is_nan());
        let res = SweepResult { records, aggregates: agg };
        assert_eq!(res.best().unwrap().eps, 0.1);
    }

    fn tiny_cfg(eps: Vec<f64>, seeds: Vec<u64>) -> SweepConfig {
        SweepConfig {
            task: Task::Regression {
                target: TargetId::F1,
                n: 30,
            },
            g: 5,
            arch: Architecture::new(vec![2, 3, 1]).unwrap(),
            family: ScanFamily::Gaussian,
            eps_grid: eps,
            seeds,
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            proxy_epoch: Some(5),
            schedule: Schedule::Shared,
        }
    }

    #[test]
    fn single_cell_matches_direct_training() {
        let cfg = tiny_cfg(vec![0.3], vec![2]);
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.records.len(), 1);
        let data = RunData::new(&cfg.task, 2).unwrap();
        let (net, trace) = data.train(cell_network(&cfg, 0.3, 2).unwrap(), &cfg.train).unwrap();
        let r = res.records[0];
        assert_eq!(r.train_mse_final, trace.final_train_loss);
        assert_eq!(r.train_mse_proxy, Some(trace.train_loss[5]));
        assert_eq!(r.val_rmse, data.val_rmse(&net).unwrap());
        assert_eq!(res.aggregates[0].rmse_geomean, r.val_rmse);
    }

    #[test]
    fn sweeps_are_reproducible_and_seed_order_invariant() {
        let a = run_sweep(&tiny_cfg(vec![0.2, 0.4], vec![0, 1])).unwrap();
        let b = run_sweep(&tiny_cfg(vec![0.2, 0.4], vec![0, 1])).unwrap();
        assert_eq!(a, b);
        let c = run_sweep(&tiny_cfg(vec![0.2, 0.4], vec![1, 0])).unwrap();
        for (x, y) in a.aggregates.iter().zip(&c.aggregates) {
            assert!((x.rmse_geomean - y.rmse_geomean).abs() <= 1e-15 * x.rmse_geomean);
            assert!(x.rmse_min <= x.rmse_geomean && x.rmse_geomean <= x.rmse_max);
        }
    }

    #[test]
    fn proxy_single_point_grid() {
        assert_eq!(proxy_scale_search(&tiny_cfg(vec![0.25], vec![0]), 5).unwrap(), 0.25);
    }

    #[test]
    fn no_op_collapse_matches_baseline() {
        let cfg = tiny_cfg(vec![0.1], vec![0]);
        let c = collapse_experiment(&cfg, 0, COLLAPSE_REFERENCE).unwrap();
        assert_eq!(c.baseline_rmse, c.collapsed_rmse);
        assert!(collapse_experiment(&cfg, 5, 1e3).is_err());
    }

    #[test]
    fn schedules() {
        let s = Schedule::OneLayer { layer: 1, reference: 0.1 }.build(0.5, 3).unwrap();
        assert_eq!(s.scales(), &[0.1, 0.5, 0.1]);
        assert_eq!(Schedule::Shared.build(0.5, 2).unwrap().scales(), &[0.5, 0.5]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_cfg(vec![], vec![0]);
        assert!(cfg.validate().is_err());
        cfg.eps_grid = vec![0.1];
        cfg.arch = Architecture::new(vec![3, 2, 1]).unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg(vec![0.1], vec![0]);
        cfg.g = 1;
        assert!(cfg.validate().is_err());
    }
}
