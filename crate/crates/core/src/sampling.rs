//! Training/validation point sets and center grids.

use std::io::Write;

use crate::error::{KanError, Result};
use crate::fmt::fmt_f64;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// A finite set of `dim`-dimensional points stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(KanError::InvalidInput("point dimension must be >= 1".into()));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(KanError::InvalidInput(format!(
                "{} coordinates do not form a non-empty set of {dim}-dimensional points",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(KanError::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(KanError::InvalidInput("points have mixed dimensions".into()));
        }
        Self::new(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Concatenates two point sets of the same dimension.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim {
            return Err(KanError::InvalidInput("dimension mismatch".into()));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        PointSet::new(self.dim, coords)
    }

    /// Applies `x -> low + (high - low) * x` coordinate-wise.
    pub fn map_affine(&self, low: &[f64], high: &[f64]) -> Result<PointSet> {
        if low.len() != self.dim || high.len() != self.dim {
            return Err(KanError::InvalidInput("bounds do not match dimension".into()));
        }
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let j = k % self.dim;
                low[j] + (high[j] - low[j]) * x
            })
            .collect();
        PointSet::new(self.dim, coords)
    }

    /// CSV with header `x1,...,xd`, one point per row, shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in self.iter() {
            let row: Vec<String> = p.iter().map(|&x| fmt_f64(x)).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Sorted one-dimensional basis centers.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterGrid {
    centers: Vec<f64>,
}

impl CenterGrid {
    /// Arbitrary strictly increasing centers (at least two).
    pub fn new(centers: Vec<f64>) -> Result<Self> {
        if centers.len() < 2 {
            return Err(KanError::InvalidGrid(format!(
                "need at least 2 centers, got {}",
                centers.len()
            )));
        }
        if centers.iter().any(|c| !c.is_finite()) || centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(KanError::InvalidGrid("centers must be finite and strictly increasing".into()));
        }
        Ok(Self { centers })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Spacing `1/(G-1)` of the uniform grid with the same number of centers.
    pub fn uniform_spacing(&self) -> f64 {
        1.0 / (self.centers.len() - 1) as f64
    }

    /// True when the centers are exactly `(g-1)/(G-1)`.
    pub fn is_uniform(&self) -> bool {
        let g = self.centers.len();
        self.centers
            .iter()
            .enumerate()
            .all(|(i, &c)| c == i as f64 / (g - 1) as f64)
    }
}

/// `G` uniformly spaced centers `c_g = (g-1)/(G-1)` on `[0, 1]`.
pub fn uniform_centers(g: usize) -> Result<CenterGrid> {
    if g < 2 {
        return Err(KanError::InvalidGrid(format!("G must be >= 2, got {g}")));
    }
    CenterGrid::new((0..g).map(|i| i as f64 / (g - 1) as f64).collect())
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut factor = inv_base;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv_base;
    }
    value
}

/// Unscrambled Halton points with indices `skip+1 ..= skip+n`; coordinate `j`
/// uses the `j`-th prime base.
pub fn halton(n: usize, dim: usize, skip: u64) -> Result<PointSet> {
    if !(1..=PRIMES.len()).contains(&dim) {
        return Err(KanError::UnsupportedDimension(dim));
    }
    if n == 0 {
        return Err(KanError::InvalidInput("halton needs n >= 1".into()));
    }
    let mut coords = Vec::with_capacity(n * dim);
    for i in 0..n as u64 {
        let index = skip + i + 1;
        coords.extend(PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)));
    }
    PointSet::new(dim, coords)
}

/// Tensor grid with `per_axis` points per coordinate including both
/// endpoints of `[0, 1]`, first coordinate varying slowest.
pub fn tensor_grid(per_axis: usize, dim: usize) -> Result<PointSet> {
    if per_axis < 2 || dim == 0 {
        return Err(KanError::InvalidInput("tensor grid needs per_axis >= 2 and dim >= 1".into()));
    }
    let axis: Vec<f64> = (0..per_axis).map(|i| i as f64 / (per_axis - 1) as f64).collect();
    cartesian(&axis, dim)
}

/// Cell-centered tensor grid: `(i + 1/2)/per_axis` on each axis.
pub fn cell_centered_grid(per_axis: usize, dim: usize) -> Result<PointSet> {
    if per_axis == 0 || dim == 0 {
        return Err(KanError::InvalidInput("cell grid needs per_axis >= 1 and dim >= 1".into()));
    }
    let axis: Vec<f64> = (0..per_axis).map(|i| (i as f64 + 0.5) / per_axis as f64).collect();
    cartesian(&axis, dim)
}

fn cartesian(axis: &[f64], dim: usize) -> Result<PointSet> {
    let total = axis.len().pow(dim as u32);
    let mut coords = Vec::with_capacity(total * dim);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![0.0; dim];
        for j in (0..dim).rev() {
            p[j] = axis[rem % axis.len()];
            rem /= axis.len();
        }
        coords.extend(p);
    }
    PointSet::new(dim, coords)
}

/// Largest distance from a probe point to its nearest sample point.
pub fn fill_distance(sample: &PointSet, probe: &PointSet) -> Result<f64> {
    if sample.dim() != probe.dim() {
        return Err(KanError::InvalidInput(format!(
            "sample dimension {} differs from probe dimension {}",
            sample.dim(),
            probe.dim()
        )));
    }
    let mut worst = 0.0f64;
    for p in probe.iter() {
        let nearest = sample
            .iter()
            .map(|s| s.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst.sqrt())
}
