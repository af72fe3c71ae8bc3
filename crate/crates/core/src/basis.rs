//! Univariate edge bases: fixed and centerwise-variable Gaussians, Matérn
//! (ν = 1, 3, 5 closed forms) and Chebyshev polynomials, together with the
//! admissible-scale rules.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{KanError, Result};
use crate::fmt::fmt_f64;
use crate::rng::SeededRng;
use crate::sampling::{uniform_centers, CenterGrid};

/// Matérn smoothness parameter with a closed-form profile `P_ν(r) e^{-r}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaternNu {
    One,
    Three,
    Five,
}

impl MaternNu {
    pub fn from_value(nu: u32) -> Result<Self> {
        match nu {
            1 => Ok(Self::One),
            3 => Ok(Self::Three),
            5 => Ok(Self::Five),
            other => Err(KanError::InvalidInput(format!(
                "unsupported Matérn order {other}; supported: 1, 3, 5"
            ))),
        }
    }

    pub fn value(self) -> u32 {
        match self {
            Self::One => 1,
            Self::Three => 3,
            Self::Five => 5,
        }
    }

    /// Coefficients (ascending powers of r) of `P_ν`.
    fn polynomial(self) -> [f64; 3] {
        match self {
            Self::One => [1.0, 0.0, 0.0],
            Self::Three => [1.0, 1.0, 0.0],
            Self::Five => [1.0, 1.0, 1.0 / 3.0],
        }
    }

    /// `Q_k` with `d^k/dr^k [P(r) e^{-r}] = Q_k(r) e^{-r}`, for k = 0..=3.
    fn derivative_polynomials(self) -> [[f64; 3]; 4] {
        let mut q = [[0.0; 3]; 4];
        q[0] = self.polynomial();
        for k in 1..4 {
            let prev = q[k - 1];
            // Q_k = Q_{k-1}' - Q_{k-1}
            q[k] = [prev[1] - prev[0], 2.0 * prev[2] - prev[1], -prev[2]];
        }
        q
    }

    /// `sqrt(2ν)`.
    pub fn distance_factor(self) -> f64 {
        (2.0 * self.value() as f64).sqrt()
    }

    /// Profile value `P_ν(r) e^{-r}`.
    pub fn profile(self, r: f64) -> f64 {
        let p = self.polynomial();
        (p[0] + r * (p[1] + r * p[2])) * (-r).exp()
    }
}

/// One edge-basis family together with its centers and scale(s).
#[derive(Clone, Debug, PartialEq)]
pub enum BasisSpec {
    Gaussian { centers: CenterGrid, scale: f64 },
    GaussianVariable { centers: CenterGrid, scales: Vec<f64> },
    Matern { nu: MaternNu, centers: CenterGrid, scale: f64 },
    Chebyshev { degree: usize },
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(KanError::InvalidInput(format!("scale must be positive and finite, got {scale}")));
    }
    Ok(())
}

impl BasisSpec {
    pub fn gaussian(centers: CenterGrid, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        Ok(Self::Gaussian { centers, scale })
    }

    pub fn gaussian_variable(centers: CenterGrid, scales: Vec<f64>) -> Result<Self> {
        if scales.len() != centers.len() {
            return Err(KanError::InvalidInput(format!(
                "{} scales for {} centers",
                scales.len(),
                centers.len()
            )));
        }
        scales.iter().try_for_each(|&s| check_scale(s))?;
        Ok(Self::GaussianVariable { centers, scales })
    }

    pub fn matern(nu: MaternNu, centers: CenterGrid, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        Ok(Self::Matern { nu, centers, scale })
    }

    pub fn chebyshev(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(KanError::InvalidInput("Chebyshev degree must be >= 1".into()));
        }
        Ok(Self::Chebyshev { degree })
    }

    /// Number of features per input coordinate: G for the RBF families, m+1 for Chebyshev.
    pub fn width(&self) -> usize {
        match self {
            Self::Gaussian { centers, .. }
            | Self::GaussianVariable { centers, .. }
            | Self::Matern { centers, .. } => centers.len(),
            Self::Chebyshev { degree } => degree + 1,
        }
    }

    pub fn centers(&self) -> Option<&CenterGrid> {
        match self {
            Self::Gaussian { centers, .. }
            | Self::GaussianVariable { centers, .. }
            | Self::Matern { centers, .. } => Some(centers),
            Self::Chebyshev { .. } => None,
        }
    }

    /// The shared scalar scale, for the families that have one.
    pub fn scale(&self) -> Option<f64> {
        match self {
            Self::Gaussian { scale, .. } | Self::Matern { scale, .. } => Some(*scale),
            _ => None,
        }
    }

    /// Copy with the scalar scale replaced.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        match self {
            Self::Gaussian { centers, .. } => Ok(Self::Gaussian {
                centers: centers.clone(),
                scale,
            }),
            Self::Matern { nu, centers, .. } => Ok(Self::Matern {
                nu: *nu,
                centers: centers.clone(),
                scale,
            }),
            other => Err(KanError::Config(format!(
                "the {} family has no scalar scale",
                other.family_name()
            ))),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::GaussianVariable { .. } => "gaussian-variable",
            Self::Matern { .. } => "matern",
            Self::Chebyshev { .. } => "chebyshev",
        }
    }

    /// Feature vector at `t`. Chebyshev requires `t` in `[-1, 1]`.
    pub fn eval_features(&self, t: f64) -> Result<Vec<f64>> {
        if !t.is_finite() {
            return Err(KanError::InvalidInput(format!("non-finite argument {t}")));
        }
        if matches!(self, Self::Chebyshev { .. }) && t.abs() > 1.0 {
            return Err(KanError::Domain(format!("Chebyshev argument {t} outside [-1, 1]")));
        }
        let mut out = vec![0.0; self.width()];
        self.eval_derivs(t, 0, &mut out);
        Ok(out)
    }

    /// Features and their first `order` derivatives (order <= 3) at `t`,
    /// written as `out[k * width + g]` = k-th derivative of feature g.
    /// No domain check.
    pub(crate) fn eval_derivs(&self, t: f64, order: usize, out: &mut [f64]) {
        debug_assert!(order <= 3);
        let w = self.width();
        debug_assert!(out.len() >= (order + 1) * w);
        match self {
            Self::Gaussian { centers, scale } => {
                let inv = 1.0 / (scale * scale);
                for (g, &c) in centers.centers().iter().enumerate() {
                    gaussian_derivs(t - c, inv, order, out, w, g);
                }
            }
            Self::GaussianVariable { centers, scales } => {
                for (g, (&c, &s)) in centers.centers().iter().zip(scales).enumerate() {
                    gaussian_derivs(t - c, 1.0 / (s * s), order, out, w, g);
                }
            }
            Self::Matern { nu, centers, scale } => {
                let q = nu.derivative_polynomials();
                let a = nu.distance_factor() / scale;
                for (g, &c) in centers.centers().iter().enumerate() {
                    let u = t - c;
                    let r = a * u.abs();
                    let e = (-r).exp();
                    let sign = if u > 0.0 {
                        1.0
                    } else if u < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    let mut factor = 1.0;
                    for (k, qk) in q.iter().enumerate().take(order + 1) {
                        let poly = qk[0] + r * (qk[1] + r * qk[2]);
                        // d^k/dt^k = (a sgn u)^k Q_k(r) e^{-r}; odd orders vanish at the center.
                        let dir = if k % 2 == 1 { sign } else { 1.0 };
                        out[k * w + g] = factor * dir * poly * e;
                        factor *= a;
                    }
                }
            }
            Self::Chebyshev { degree } => chebyshev_derivs(t, *degree, order, out),
        }
    }

    /// Flat `key = value` description used by config echoes and checkpoints.
    pub fn to_config(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("family".to_string(), self.family_name().to_string());
        if let Some(centers) = self.centers() {
            if centers.is_uniform() {
                m.insert("grid_size".into(), centers.len().to_string());
            } else {
                m.insert("centers".into(), join(centers.centers()));
            }
        }
        match self {
            Self::Gaussian { scale, .. } => {
                m.insert("scale".into(), fmt_f64(*scale));
            }
            Self::GaussianVariable { scales, .. } => {
                m.insert("scales".into(), join(scales));
            }
            Self::Matern { nu, scale, .. } => {
                m.insert("nu".into(), nu.value().to_string());
                m.insert("scale".into(), fmt_f64(*scale));
            }
            Self::Chebyshev { degree } => {
                m.insert("degree".into(), degree.to_string());
            }
        }
        m
    }

    /// Inverse of [`BasisSpec::to_config`].
    pub fn from_config(m: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            m.get(k)
                .map(String::as_str)
                .ok_or_else(|| KanError::Parse(format!("missing basis key `{k}`")))
        };
        let centers = || -> Result<CenterGrid> {
            if let Some(list) = m.get("centers") {
                CenterGrid::new(parse_list(list)?)
            } else {
                uniform_centers(parse_num(get("grid_size")?)?)
            }
        };
        match get("family")? {
            "gaussian" => Self::gaussian(centers()?, parse_num(get("scale")?)?),
            "gaussian-variable" => Self::gaussian_variable(centers()?, parse_list(get("scales")?)?),
            "matern" => Self::matern(
                MaternNu::from_value(parse_num(get("nu")?)?)?,
                centers()?,
                parse_num(get("scale")?)?,
            ),
            "chebyshev" => Self::chebyshev(parse_num(get("degree")?)?),
            other => Err(KanError::Parse(format!("unknown basis family `{other}`"))),
        }
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_config().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| KanError::Parse(format!("cannot parse `{s}`")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_num).collect()
}

#[inline]
fn gaussian_derivs(u: f64, inv: f64, order: usize, out: &mut [f64], w: usize, g: usize) {
    let phi = (-u * u * inv).exp();
    out[g] = phi;
    if order >= 1 {
        out[w + g] = -2.0 * u * inv * phi;
    }
    if order >= 2 {
        out[2 * w + g] = (4.0 * u * u * inv * inv - 2.0 * inv) * phi;
    }
    if order >= 3 {
        out[3 * w + g] = (-8.0 * u * u * u * inv * inv * inv + 12.0 * u * inv * inv) * phi;
    }
}

/// T_k(t) and derivatives by the differentiated three-term recurrence.
fn chebyshev_derivs(t: f64, degree: usize, order: usize, out: &mut [f64]) {
    let w = degree + 1;
    for k in 0..=order {
        let base = k * w;
        // d^k T_0 = [1,0,0,0][k]; d^k T_1 = [t,1,0,0][k]
        out[base] = if k == 0 { 1.0 } else { 0.0 };
        out[base + 1] = match k {
            0 => t,
            1 => 1.0,
            _ => 0.0,
        };
        for n in 1..degree {
            // T_{n+1}^{(k)} = 2k T_n^{(k-1)} + 2t T_n^{(k)} - T_{n-1}^{(k)}
            let lower = if k > 0 { 2.0 * k as f64 * out[(k - 1) * w + n] } else { 0.0 };
            out[base + n + 1] = lower + 2.0 * t * out[base + n] - out[base + n - 1];
        }
    }
}

/// Closed interval of admissible scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleInterval {
    pub low: f64,
    pub high: f64,
}

impl ScaleInterval {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0 && low <= high && high.is_finite()) {
            return Err(KanError::InvalidInput(format!("invalid scale interval [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, eps: f64) -> bool {
        (self.low..=self.high).contains(&eps)
    }
}

fn check_grid(g: usize) -> Result<()> {
    if g < 2 {
        return Err(KanError::InvalidGrid(format!("G must be >= 2, got {g}")));
    }
    Ok(())
}

/// The practical Gaussian interval `[1/(G-1), 2/(G-1)]`.
pub fn gaussian_interval(g: usize) -> Result<ScaleInterval> {
    check_grid(g)?;
    let h = 1.0 / (g - 1) as f64;
    ScaleInterval::new(h, 2.0 * h)
}

/// Positive root `s` of `P_ν(s) e^{-s} = e^{-1}` (bisection, |bracket| < 1e-13).
pub fn matern_overlap_root(nu: MaternNu) -> f64 {
    let target = (-1.0f64).exp();
    let f = |s: f64| nu.profile(s) - target;
    // Profile decreases from 1 at s = 0; f(0) > 0 and f(60) < 0.
    let (mut lo, mut hi) = (0.0f64, 60.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Matérn lower scale: the ε at which a basis function drops to `e^{-1}` at
/// the adjacent center, `sqrt(2ν)/s * 1/(G-1)`.
pub fn matern_lower_scale(g: usize, nu: u32) -> Result<f64> {
    check_grid(g)?;
    let nu = MaternNu::from_value(nu)?;
    Ok(nu.distance_factor() / matern_overlap_root(nu) / (g - 1) as f64)
}

/// `G` scales drawn i.i.d. uniform on `[low, high]`, in center order.
pub fn sample_variable_scales(g: usize, low: f64, high: f64, seed: u64) -> Result<Vec<f64>> {
    ScaleInterval::new(low, high)?;
    let mut rng = SeededRng::new(seed);
    Ok((0..g).map(|_| rng.uniform(low, high)).collect())
}
