//! First-layer conditioning analysis: per-scale spectra of Φ, the marker
//! scales `eps_kappa` and `eps_rank`, the recommended interval, and the
//! power-law fit of the conditioning scale against the grid size.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::basis::{gaussian_interval, matern_lower_scale, BasisSpec, MaternNu, ScaleInterval};
use crate::error::{KanError, Result};
use crate::fmt::fmt_f64;
use crate::linalg::{gram, spectrum_summary, Condition, Matrix};
use crate::network::FeatureMatrix;
use crate::rng::SeededRng;
use crate::sampling::{CenterGrid, PointSet};

/// Default practical condition-number threshold.
pub const KAPPA_THRESHOLD: f64 = 3e3;

/// Scale families that can be scanned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanFamily {
    Gaussian,
    Matern(MaternNu),
}

impl ScanFamily {
    fn basis(self, grid: &CenterGrid, eps: f64) -> Result<BasisSpec> {
        match self {
            Self::Gaussian => BasisSpec::gaussian(grid.clone(), eps),
            Self::Matern(nu) => BasisSpec::matern(nu, grid.clone(), eps),
        }
    }
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && n >= 1) || (n == 1 && hi != lo) {
        return Err(KanError::InvalidInput(format!("bad log grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    v[0] = lo;
    v[n - 1] = hi;
    Ok(v)
}

/// Spectrum of Φ at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRecord {
    pub eps: f64,
    pub kappa: Condition,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub tol: f64,
    pub num_rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub records: Vec<ScanRecord>,
    pub threshold: f64,
    /// Swept scale whose finite κ is closest to the threshold in log scale.
    pub eps_kappa: f64,
    /// Smallest swept scale with `σ_min ≤ tol`; `None` when not observed.
    pub eps_rank: Option<f64>,
    pub recommended: ScaleInterval,
}

impl DiagnosticsReport {
    /// CSV `eps,kappa,sigma_min,sigma_max,tol,num_rank`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eps,kappa,sigma_min,sigma_max,tol,num_rank")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(r.eps),
                fmt_f64(r.kappa.value()),
                fmt_f64(r.sigma_min),
                fmt_f64(r.sigma_max),
                fmt_f64(r.tol),
                r.num_rank
            )?;
        }
        Ok(())
    }

    /// Flat `key = value` summary.
    pub fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("threshold".into(), fmt_f64(self.threshold)),
            ("eps_kappa".into(), fmt_f64(self.eps_kappa)),
            (
                "eps_rank".into(),
                self.eps_rank.map_or_else(|| "not_observed".into(), fmt_f64),
            ),
            ("recommended_low".into(), fmt_f64(self.recommended.low)),
            ("recommended_high".into(), fmt_f64(self.recommended.high)),
        ]
    }
}

/// Marker selection on existing records; ties go to the smaller scale.
pub fn eps_kappa_marker(records: &[ScanRecord], threshold: f64) -> Result<f64> {
    let target = threshold.ln();
    let mut best: Option<(f64, f64)> = None;
    for r in records {
        if let Condition::Finite(k) = r.kappa {
            let dist = (k.ln() - target).abs();
            if best.is_none_or(|(d, _)| dist < d) {
                best = Some((dist, r.eps));
            }
        }
    }
    best.map(|(_, e)| e)
        .ok_or_else(|| KanError::InsufficientData("no finite condition number on the scale grid".into()))
}

/// Scans Φ over `eps_grid` with the default κ threshold.
pub fn scan_conditioning(
    pts: &PointSet,
    grid: &CenterGrid,
    family: ScanFamily,
    eps_grid: &[f64],
) -> Result<DiagnosticsReport> {
    scan_conditioning_with_threshold(pts, grid, family, eps_grid, KAPPA_THRESHOLD)
}

pub fn scan_conditioning_with_threshold(
    pts: &PointSet,
    grid: &CenterGrid,
    family: ScanFamily,
    eps_grid: &[f64],
    threshold: f64,
) -> Result<DiagnosticsReport> {
    if eps_grid.is_empty() {
        return Err(KanError::InvalidInput("empty scale grid".into()));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) || eps_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KanError::InvalidInput("scale grid must be positive and strictly increasing".into()));
    }
    if !(threshold > 1.0) {
        return Err(KanError::InvalidInput(format!("threshold must exceed 1, got {threshold}")));
    }
    let records = eps_grid
        .par_iter()
        .map(|&eps| {
            let fm = FeatureMatrix::from_basis(&family.basis(grid, eps)?, pts)?;
            let s = spectrum_summary(fm.matrix())?;
            Ok(ScanRecord {
                eps,
                kappa: s.condition_number,
                sigma_min: s.sigma_min,
                sigma_max: s.sigma_max,
                tol: s.tolerance,
                num_rank: s.numerical_rank,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let eps_kappa = eps_kappa_marker(&records, threshold)?;
    let eps_rank = records.iter().find(|r| r.sigma_min <= r.tol).map(|r| r.eps);
    let g = grid.len();
    let recommended = match family {
        ScanFamily::Gaussian => gaussian_interval(g)?,
        ScanFamily::Matern(nu) => {
            let low = matern_lower_scale(g, nu.value())?;
            ScaleInterval::new(low, eps_kappa.max(low))?
        }
    };
    Ok(DiagnosticsReport {
        records,
        threshold,
        eps_kappa,
        eps_rank,
        recommended,
    })
}

/// Empirical first-layer kernel `K0 = Φ Φᵀ`.
pub fn kernel_matrix(fm: &FeatureMatrix) -> Matrix {
    gram(&fm.matrix().transpose()).expect("feature matrices are finite")
}

/// One measured conditioning scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalePair {
    pub n: usize,
    pub g: usize,
    pub eps: f64,
}

/// Fit of `log ε = log C - q log(G - 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleLawFit {
    pub c: f64,
    pub q: f64,
    /// Validation R² (in log space) of the fitted law.
    pub r_squared_fitted: f64,
    /// Validation R² (in log space) of the rule `ε = 2/(G - 1)`.
    pub r_squared_simplified: f64,
    pub n_train: usize,
    pub n_validation: usize,
}

impl ScaleLawFit {
    pub fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("C".into(), fmt_f64(self.c)),
            ("q".into(), fmt_f64(self.q)),
            ("r2_fitted".into(), fmt_f64(self.r_squared_fitted)),
            ("r2_simplified".into(), fmt_f64(self.r_squared_simplified)),
            ("n_train".into(), self.n_train.to_string()),
            ("n_validation".into(), self.n_validation.to_string()),
        ]
    }
}

fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(pred).map(|(v, p)| (v - p).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Fits the scale law on a 70/30 split of the per-(N, G) geometric means.
///
/// The aggregated points are sorted by `(G, N)` and every validation
/// position is drawn systematically (`⌊(j + u) k / m⌋` for `j < m`, with `u`
/// uniform from `split_seed`), so both subsets span the range of `G`.
/// Coefficients of determination are computed in log space on the
/// validation subset.
pub fn fit_scale_law(pairs: &[ScalePair], split_seed: u64) -> Result<ScaleLawFit> {
    if pairs.len() < 10 {
        return Err(KanError::InsufficientData(format!("need at least 10 pairs, got {}", pairs.len())));
    }
    let mut groups: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for p in pairs {
        if !(p.eps > 0.0 && p.eps.is_finite()) || p.g < 2 {
            return Err(KanError::InvalidInput(format!("invalid pair {p:?}")));
        }
        let e = groups.entry((p.g, p.n)).or_insert((0.0, 0));
        e.0 += p.eps.ln();
        e.1 += 1;
    }
    // (x, y) = (ln(G-1), ln ε) in (G, N) order.
    let points: Vec<(f64, f64)> = groups
        .iter()
        .map(|(&(g, _), &(s, k))| (((g - 1) as f64).ln(), s / k as f64))
        .collect();
    let k = points.len();
    let m = ((0.3 * k as f64).round() as usize).max(1);
    if k < 4 || k - m < 2 {
        return Err(KanError::InsufficientData(format!("{k} distinct (N, G) groups are too few to split")));
    }
    let u = SeededRng::new(split_seed).next_f64();
    let mut is_val = vec![false; k];
    for j in 0..m {
        is_val[((j as f64 + u) * k as f64 / m as f64) as usize] = true;
    }
    let (train, val): (Vec<_>, Vec<_>) = points.iter().zip(&is_val).partition(|(_, &v)| !v);
    let train: Vec<(f64, f64)> = train.into_iter().map(|(p, _)| *p).collect();
    let val: Vec<(f64, f64)> = val.into_iter().map(|(p, _)| *p).collect();
    let nt = train.len() as f64;
    let mx = train.iter().map(|p| p.0).sum::<f64>() / nt;
    let my = train.iter().map(|p| p.1).sum::<f64>() / nt;
    let sxx: f64 = train.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(KanError::InsufficientData("training subset has a single grid size".into()));
    }
    let sxy: f64 = train.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let vy: Vec<f64> = val.iter().map(|p| p.1).collect();
    let fitted: Vec<f64> = val.iter().map(|p| intercept + slope * p.0).collect();
    let simple: Vec<f64> = val.iter().map(|p| 2f64.ln() - p.0).collect();
    Ok(ScaleLawFit {
        c: intercept.exp(),
        q: -slope,
        r_squared_fitted: r_squared(&vy, &fitted),
        r_squared_simplified: r_squared(&vy, &simple),
        n_train: train.len(),
        n_validation: val.len(),
    })
}
