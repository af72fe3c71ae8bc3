//! Benchmark targets and the two physics-informed problems.

use std::f64::consts::PI;

use crate::autodiff::{residuals, OperatorTerms, PinnObjective};
use crate::error::{KanError, Result};
use crate::network::KanNetwork;
use crate::sampling::{halton, radical_inverse, PointSet};

/// Regression targets. `Fd(d)` is `exp((1/d) Σ [sin(π x_i) + x_i²/2])` on `[0,1]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetId {
    F1,
    F2,
    F3,
    F4,
    Fd(usize),
}

impl TargetId {
    /// Parses `F1`..`F4` and `FD<d>` (e.g. `FD3`), case-insensitively.
    pub fn parse(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        match up.as_str() {
            "F1" => Ok(Self::F1),
            "F2" => Ok(Self::F2),
            "F3" => Ok(Self::F3),
            "F4" => Ok(Self::F4),
            _ => {
                let d = up
                    .strip_prefix("FD")
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&d| d >= 1)
                    .ok_or_else(|| KanError::Parse(format!("unknown target `{s}`")))?;
                Ok(Self::Fd(d))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::F1 => "F1".into(),
            Self::F2 => "F2".into(),
            Self::F3 => "F3".into(),
            Self::F4 => "F4".into(),
            Self::Fd(d) => format!("FD{d}"),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Fd(d) => *d,
            _ => 2,
        }
    }

    /// Lower and upper corner of the target's domain.
    pub fn domain(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::F3 => (vec![-1.0; 2], vec![1.0; 2]),
            _ => (vec![0.0; self.dim()], vec![1.0; self.dim()]),
        }
    }

    /// Evaluates the target at a point of its own domain.
    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        let (lo, hi) = self.domain();
        if p.len() != lo.len() {
            return Err(KanError::InvalidInput(format!(
                "{} expects {} coordinates, got {}",
                self.name(),
                lo.len(),
                p.len()
            )));
        }
        if p.iter().zip(lo.iter().zip(&hi)).any(|(x, (l, h))| !(l..=h).contains(&x)) {
            return Err(KanError::Domain(format!("{p:?} outside the domain of {}", self.name())));
        }
        Ok(match self {
            Self::F1 => {
                let (x, y) = (p[0], p[1]);
                0.75 * (-((9.0 * x - 2.0).powi(2) + (9.0 * y - 2.0).powi(2)) / 4.0).exp()
                    + 0.75 * (-(9.0 * x + 1.0).powi(2) / 49.0 - (9.0 * y + 1.0) / 10.0).exp()
                    + 0.5 * (-((9.0 * x - 7.0).powi(2) + (9.0 * y - 3.0).powi(2)) / 4.0).exp()
                    - 0.2 * (-((9.0 * x - 4.0).powi(2) + (9.0 * y - 7.0).powi(2))).exp()
            }
            Self::F2 => (4.0 * PI * p[0]).sin() * (4.0 * PI * p[1]).sin(),
            Self::F3 => {
                let (x, y) = (p[0], p[1]);
                1.0 / (1.0 + 1e3 * (x * x - 0.25).powi(2) * (y * y - 0.25).powi(2))
            }
            Self::F4 => {
                let x = p[0];
                let g = if x < 0.5 {
                    5.0 + (1..=4).map(|k| (2.0 * PI * k as f64 * x).sin()).sum::<f64>()
                } else {
                    (20.0 * PI * x).cos()
                };
                g * (1.0 + 0.15 * (2.0 * PI * p[1]).sin())
            }
            Self::Fd(d) => {
                let s: f64 = p.iter().map(|&x| (PI * x).sin() + 0.5 * x * x).sum();
                (s / *d as f64).exp()
            }
        })
    }

    /// Evaluates at the image of a unit-cube point under the affine map onto the domain.
    pub fn eval_unit(&self, u: &[f64]) -> Result<f64> {
        let (lo, hi) = self.domain();
        let p: Vec<f64> = u
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(t, (l, h))| (l + (h - l) * t).clamp(*l, *h))
            .collect();
        self.eval(&p)
    }

    /// Target values at unit-cube points.
    pub fn values_unit(&self, pts: &PointSet) -> Result<Vec<f64>> {
        pts.iter().map(|u| self.eval_unit(u)).collect()
    }
}

/// Exact solution `sin(a1 π x) sin(a2 π y)` and forcing `((a1² + a2²) π² - λ) u`.
pub fn helmholtz_data(lambda: f64, a1: f64, a2: f64, p: &[f64]) -> (f64, f64) {
    let u = (a1 * PI * p[0]).sin() * (a2 * PI * p[1]).sin();
    (u, ((a1 * a1 + a2 * a2) * PI * PI - lambda) * u)
}

/// Digital cash-or-nothing call parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsParams {
    pub r: f64,
    pub sigma: f64,
    pub strike: f64,
    pub maturity: f64,
    pub s_max: f64,
}

impl Default for BsParams {
    fn default() -> Self {
        Self {
            r: 0.05,
            sigma: 0.2,
            strike: 0.5,
            maturity: 1.0,
            s_max: 1.0,
        }
    }
}

/// `erf(z)` from the everywhere-convergent series
/// `2/√π e^{-z²} Σ_{n≥0} 2ⁿ z^{2n+1} / (1·3·…·(2n+1))` (positive terms, no
/// cancellation); `|z| > 6` returns `±1`, where the tail is below 3e-17.
pub fn erf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z.abs() > 6.0 {
        return z.signum();
    }
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * z2 / (2.0 * n + 1.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    2.0 / PI.sqrt() * (-z2).exp() * sum
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Digital call payoff: 1 if `S > K`, else 0.
pub fn bs_payoff(s: f64, params: &BsParams) -> f64 {
    if s > params.strike {
        1.0
    } else {
        0.0
    }
}

/// Exact digital call value `e^{-r(T-t)} N(d2)`; `t = T` returns the payoff.
pub fn bs_exact(s: f64, t: f64, params: &BsParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(KanError::Domain(format!("asset price must be positive, got {s}")));
    }
    let tau = params.maturity - t;
    if tau < 0.0 {
        return Err(KanError::Domain(format!("time {t} beyond maturity {}", params.maturity)));
    }
    if tau == 0.0 {
        return Ok(bs_payoff(s, params));
    }
    let sig = params.sigma;
    let d2 = ((s / params.strike).ln() + (params.r - 0.5 * sig * sig) * tau) / (sig * tau.sqrt());
    Ok((-params.r * tau).exp() * normal_cdf(d2))
}

/// Interior strip `t ∈ (T - BS_TERMINAL_GAP, T)` excluded from collocation.
pub const BS_TERMINAL_GAP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PinnKind {
    Helmholtz { lambda: f64, a1: f64, a2: f64 },
    BlackScholesDigital(BsParams),
}

/// A physics-informed problem posed on the unit square.
///
/// For Black–Scholes the network inputs are `(S / S_max, t / T)`, so the
/// operator is rewritten in those unit coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinnProblem {
    pub kind: PinnKind,
    pub w_pde: f64,
    pub w_bc: f64,
}

impl PinnProblem {
    /// Helmholtz with `w_pde = 1`, `w_bc = 100`.
    pub fn helmholtz(lambda: f64, a1: f64, a2: f64) -> Self {
        Self {
            kind: PinnKind::Helmholtz { lambda, a1, a2 },
            w_pde: 1.0,
            w_bc: 100.0,
        }
    }

    /// Black–Scholes digital call with `w_pde = w_bc = 1`.
    pub fn black_scholes(params: BsParams) -> Self {
        Self {
            kind: PinnKind::BlackScholesDigital(params),
            w_pde: 1.0,
            w_bc: 1.0,
        }
    }

    /// Default `(N_BC, N_PDE)`.
    pub fn default_counts(&self) -> (usize, usize) {
        match self.kind {
            PinnKind::Helmholtz { .. } => (800, 2000),
            PinnKind::BlackScholesDigital(_) => (500, 3000),
        }
    }

    /// Exact solution at a unit-square point.
    pub fn exact(&self, u: &[f64]) -> Result<f64> {
        match self.kind {
            PinnKind::Helmholtz { lambda, a1, a2 } => Ok(helmholtz_data(lambda, a1, a2, u).0),
            PinnKind::BlackScholesDigital(p) => {
                let s = u[0] * p.s_max;
                if s <= 0.0 {
                    return Ok(0.0);
                }
                bs_exact(s, u[1] * p.maturity, &p)
            }
        }
    }

    pub fn exact_values(&self, pts: &PointSet) -> Result<Vec<f64>> {
        pts.iter().map(|u| self.exact(u)).collect()
    }

    /// Interior collocation points (Halton, indices after `skip`) and
    /// boundary points spread over the boundary segments.
    ///
    /// Helmholtz: `n_bc` split equally over the four edges. Black–Scholes:
    /// equally over `S = 0`, `S = S_max` and `t = T` (equal length in unit
    /// coordinates); interior times are restricted to `t ≤ T - 1e-3`.
    /// Positions along each segment are base-2 radical inverses.
    pub fn collocation(&self, n_bc: usize, n_pde: usize, skip: u64) -> Result<(PointSet, PointSet)> {
        if n_bc == 0 || n_pde == 0 {
            return Err(KanError::Config("collocation counts must be >= 1".into()));
        }
        let mut interior = halton(n_pde, 2, skip)?;
        let segments: &[fn(f64) -> [f64; 2]] = match self.kind {
            PinnKind::Helmholtz { .. } => &[|t| [t, 0.0], |t| [1.0, t], |t| [t, 1.0], |t| [0.0, t]],
            PinnKind::BlackScholesDigital(p) => {
                let top = 1.0 - BS_TERMINAL_GAP / p.maturity;
                interior = interior.map_affine(&[0.0, 0.0], &[1.0, top])?;
                &[|t| [0.0, t], |t| [1.0, t], |t| [t, 1.0]]
            }
        };
        let k = segments.len();
        let mut coords = Vec::with_capacity(2 * n_bc);
        for (j, seg) in segments.iter().enumerate() {
            let count = n_bc / k + usize::from(j < n_bc % k);
            for i in 0..count as u64 {
                coords.extend(seg(radical_inverse(skip + i + 1, 2)));
            }
        }
        Ok((interior, PointSet::new(2, coords)?))
    }

    /// Strong-form residual of the network at one unit-square point.
    pub fn residual(&self, net: &KanNetwork, point: &[f64]) -> Result<f64> {
        Ok(residuals(net, self, &PointSet::new(2, point.to_vec())?)?[0])
    }
}

impl PinnObjective for PinnProblem {
    fn input_dim(&self) -> usize {
        2
    }

    fn terms(&self, x: &[f64]) -> OperatorTerms {
        match self.kind {
            // -Δu - λu - f
            PinnKind::Helmholtz { lambda, a1, a2 } => OperatorTerms {
                zeroth: -lambda,
                first: vec![0.0, 0.0],
                second: vec![-1.0, -1.0],
                source: helmholtz_data(lambda, a1, a2, x).1,
            },
            // u_t + σ²S²u_SS/2 + rSu_S - ru with S = s S_max, t = τ T
            PinnKind::BlackScholesDigital(p) => {
                let s = x[0];
                OperatorTerms {
                    zeroth: -p.r,
                    first: vec![p.r * s, 1.0 / p.maturity],
                    second: vec![0.5 * p.sigma * p.sigma * s * s, 0.0],
                    source: 0.0,
                }
            }
        }
    }

    fn boundary_value(&self, x: &[f64]) -> f64 {
        match self.kind {
            PinnKind::Helmholtz { lambda, a1, a2 } => helmholtz_data(lambda, a1, a2, x).0,
            PinnKind::BlackScholesDigital(p) => {
                let s = x[0] * p.s_max;
                if x[1] >= 1.0 {
                    bs_payoff(s, &p)
                } else if s <= 0.0 {
                    0.0
                } else {
                    bs_exact(s, x[1] * p.maturity, &p).unwrap_or(0.0)
                }
            }
        }
    }

    fn weights(&self) -> (f64, f64) {
        (self.w_pde, self.w_bc)
    }
}
