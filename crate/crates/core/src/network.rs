//! The KAN forward model: per-layer basis features followed by a linear
//! coefficient block, `x^(l+1) = W^(l) Φ(x^(l))`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::basis::BasisSpec;
use crate::error::{KanError, Result};
use crate::fmt::fmt_f64;
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::sampling::PointSet;

/// Layer widths `[n_0, ..., n_L]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    widths: Vec<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(KanError::Config(format!(
                "architecture needs at least two widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(KanError::Config(format!("zero width in architecture {widths:?}")));
        }
        Ok(Self { widths })
    }

    /// Parses `"2,12,12,1"`.
    pub fn parse(s: &str) -> Result<Self> {
        let widths = s
            .split(',')
            .map(|w| {
                w.trim()
                    .parse::<usize>()
                    .map_err(|_| KanError::Parse(format!("bad architecture width `{w}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of layers `L`.
    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Per-layer scales `(ε_1, ..., ε_L)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSchedule(Vec<f64>);

impl ScaleSchedule {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() || scales.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(KanError::Config(format!("invalid scale schedule {scales:?}")));
        }
        Ok(Self(scales))
    }

    /// The same scale in each of `layers` layers.
    pub fn shared(scale: f64, layers: usize) -> Result<Self> {
        Self::new(vec![scale; layers])
    }

    pub fn scales(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Rbf,
    ChebyshevReference,
}

impl Variant {
    fn name(self) -> &'static str {
        match self {
            Self::Rbf => "rbf",
            Self::ChebyshevReference => "chebyshev-reference",
        }
    }
}

/// Arithmetic used for activations and stored parameters. `Single` rounds
/// them to `f32` after every operation that produces them; gradients and
/// optimizer state stay in double.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    Double,
    Single,
}

impl Precision {
    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Self::Double => x,
            Self::Single => x as f32 as f64,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(Self::Double),
            "single" => Ok(Self::Single),
            other => Err(KanError::Parse(format!("unknown precision `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Double => "double",
            Self::Single => "single",
        }
    }
}

/// Scalar map applied to each layer input before the basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMap {
    Identity,
    /// `t -> 2t - 1`, taking `[0, 1]` onto `[-1, 1]`.
    UnitToSymmetric,
    Tanh,
}

impl InputMap {
    /// Value and first three derivatives.
    #[inline]
    pub(crate) fn eval(self, t: f64) -> [f64; 4] {
        match self {
            Self::Identity => [t, 1.0, 0.0, 0.0],
            Self::UnitToSymmetric => [2.0 * t - 1.0, 2.0, 0.0, 0.0],
            Self::Tanh => {
                let y = t.tanh();
                let d1 = 1.0 - y * y;
                [y, d1, -2.0 * y * d1, d1 * (6.0 * y * y - 2.0)]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KanLayer {
    basis: BasisSpec,
    coefficients: Matrix,
    input_map: InputMap,
}

impl KanLayer {
    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.coefficients
    }

    pub fn input_map(&self) -> InputMap {
        self.input_map
    }

    pub fn n_in(&self) -> usize {
        self.coefficients.cols() / self.basis.width()
    }

    pub fn n_out(&self) -> usize {
        self.coefficients.rows()
    }

    /// Writes the stacked features of `input` into `out` (length `n_in * width`).
    pub(crate) fn features_into(&self, input: &[f64], out: &mut [f64]) {
        let w = self.basis.width();
        for (i, &v) in input.iter().enumerate() {
            let s = self.input_map.eval(v)[0];
            self.basis.eval_derivs(s, 0, &mut out[i * w..(i + 1) * w]);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KanNetwork {
    arch: Architecture,
    layers: Vec<KanLayer>,
    variant: Variant,
    precision: Precision,
}

fn variant_for(basis: &BasisSpec) -> Variant {
    match basis {
        BasisSpec::Chebyshev { .. } => Variant::ChebyshevReference,
        _ => Variant::Rbf,
    }
}

fn input_map_for(variant: Variant, layer: usize) -> InputMap {
    match (variant, layer) {
        (Variant::Rbf, _) => InputMap::Identity,
        (Variant::ChebyshevReference, 0) => InputMap::UnitToSymmetric,
        (Variant::ChebyshevReference, _) => InputMap::Tanh,
    }
}

/// Builds a network whose layer `l` coefficients are i.i.d. normal with
/// standard deviation `1/(n_l * width)`, drawn layer by layer in row-major
/// order from one stream seeded by `seed`.
///
/// With a schedule, layer `l` uses `basis` with its scale replaced by the
/// schedule's `l`-th entry; this requires a family with a scalar scale.
/// Without one, every layer uses `basis` unchanged.
pub fn init_network(
    arch: &Architecture,
    basis: &BasisSpec,
    schedule: Option<&ScaleSchedule>,
    seed: u64,
) -> Result<KanNetwork> {
    let n_layers = arch.n_layers();
    let bases = match schedule {
        Some(s) => {
            if s.len() != n_layers {
                return Err(KanError::Config(format!(
                    "schedule has {} entries for {} layers",
                    s.len(),
                    n_layers
                )));
            }
            s.scales()
                .iter()
                .map(|&eps| basis.with_scale(eps))
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![basis.clone(); n_layers],
    };
    let variant = variant_for(basis);
    let width = basis.width();
    let mut rng = SeededRng::new(seed);
    let layers = bases
        .into_iter()
        .enumerate()
        .map(|(l, b)| {
            let n_in = arch.widths()[l];
            let n_out = arch.widths()[l + 1];
            let std = 1.0 / (n_in * width) as f64;
            let data = (0..n_out * n_in * width).map(|_| std * rng.normal()).collect();
            KanLayer {
                basis: b,
                coefficients: Matrix::from_row_major(n_out, n_in * width, data).unwrap(),
                input_map: input_map_for(variant, l),
            }
        })
        .collect();
    Ok(KanNetwork {
        arch: arch.clone(),
        layers,
        variant,
        precision: Precision::Double,
    })
}

impl KanNetwork {
    /// Assembles a network from explicit per-layer bases and coefficients.
    pub fn from_parts(arch: Architecture, layers: Vec<(BasisSpec, Matrix)>) -> Result<Self> {
        if layers.len() != arch.n_layers() {
            return Err(KanError::Config(format!(
                "{} layers given for architecture {arch}",
                layers.len()
            )));
        }
        let variant = variant_for(&layers[0].0);
        let mut built = Vec::with_capacity(layers.len());
        for (l, (basis, coefficients)) in layers.into_iter().enumerate() {
            if variant_for(&basis) != variant {
                return Err(KanError::Config("cannot mix Chebyshev and RBF layers".into()));
            }
            let (n_in, n_out) = (arch.widths()[l], arch.widths()[l + 1]);
            if coefficients.rows() != n_out || coefficients.cols() != n_in * basis.width() {
                return Err(KanError::Config(format!(
                    "layer {l}: coefficient shape {}x{} does not match {n_out}x{}",
                    coefficients.rows(),
                    coefficients.cols(),
                    n_in * basis.width()
                )));
            }
            built.push(KanLayer {
                basis,
                coefficients,
                input_map: input_map_for(variant, l),
            });
        }
        Ok(Self {
            arch,
            layers: built,
            variant,
            precision: Precision::Double,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Result<&KanLayer> {
        self.layers.get(index).ok_or(KanError::IndexOutOfRange {
            index,
            layers: self.layers.len(),
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Switches arithmetic mode; in single mode the coefficients are rounded to `f32`.
    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self.round_parameters();
        self
    }

    pub(crate) fn round_parameters(&mut self) {
        if self.precision == Precision::Single {
            for layer in &mut self.layers {
                for w in layer.coefficients.as_mut_slice() {
                    *w = Precision::Single.round(*w);
                }
            }
        }
    }

    pub fn coefficients(&self, layer: usize) -> Result<&Matrix> {
        Ok(&self.layer(layer)?.coefficients)
    }

    pub fn coefficients_mut(&mut self, layer: usize) -> Result<&mut Matrix> {
        let layers = self.layers.len();
        self.layers
            .get_mut(layer)
            .map(|l| &mut l.coefficients)
            .ok_or(KanError::IndexOutOfRange { index: layer, layers })
    }

    /// Replaces one layer's coefficient block.
    pub fn set_coefficients(&mut self, layer: usize, w: Matrix) -> Result<()> {
        let current = self.coefficients_mut(layer)?;
        if current.rows() != w.rows() || current.cols() != w.cols() {
            return Err(KanError::Config(format!(
                "coefficient shape {}x{} does not match {}x{}",
                w.rows(),
                w.cols(),
                current.rows(),
                current.cols()
            )));
        }
        *current = w;
        self.round_parameters();
        Ok(())
    }

    /// The scalar scale of one layer, if its family has one.
    pub fn layer_scale(&self, layer: usize) -> Result<Option<f64>> {
        Ok(self.layer(layer)?.basis.scale())
    }

    /// Copy with one layer's basis scale replaced; coefficients untouched.
    pub fn set_layer_scale(&self, layer: usize, eps: f64) -> Result<KanNetwork> {
        let basis = self.layer(layer)?.basis.with_scale(eps)?;
        let mut net = self.clone();
        net.layers[layer].basis = basis;
        Ok(net)
    }

    /// Evaluates the network at one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.arch.input_dim() {
            return Err(KanError::InvalidInput(format!(
                "input has {} coordinates, network expects {}",
                x.len(),
                self.arch.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KanError::InvalidInput("non-finite input".into()));
        }
        let p = self.precision;
        let mut v: Vec<f64> = x.iter().map(|&t| p.round(t)).collect();
        let mut feats = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            feats.resize(layer.coefficients.cols(), 0.0);
            layer.features_into(&v, &mut feats);
            for f in feats.iter_mut() {
                *f = p.round(*f);
            }
            let next: Vec<f64> = (0..layer.n_out())
                .map(|o| p.round(dot(layer.coefficients.row(o), &feats)))
                .collect();
            if next.iter().any(|y| !y.is_finite()) {
                return Err(KanError::DivergedForward { layer: l });
            }
            v = next;
        }
        Ok(v)
    }

    /// Scalar outputs over a point set (requires `n_L = 1`).
    pub fn predict(&self, pts: &PointSet) -> Result<Vec<f64>> {
        if self.arch.output_dim() != 1 {
            return Err(KanError::Config("predict requires a scalar-output network".into()));
        }
        pts.iter().map(|x| Ok(self.forward(x)?[0])).collect()
    }

    /// The first layer's pre-weighting feature matrix over `pts`.
    pub fn first_layer_feature_matrix(&self, pts: &PointSet) -> Result<FeatureMatrix> {
        if pts.dim() != self.arch.input_dim() {
            return Err(KanError::InvalidInput(format!(
                "points have dimension {}, network input is {}",
                pts.dim(),
                self.arch.input_dim()
            )));
        }
        let layer = &self.layers[0];
        FeatureMatrix::assemble(pts, layer.basis.width(), |v, out| layer.features_into(v, out))
    }

    /// Writes the checkpoint format described in `docs/checkpoint.md`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "kanscale-checkpoint 1").unwrap();
        writeln!(s, "arch {}", self.arch).unwrap();
        writeln!(s, "variant {}", self.variant.name()).unwrap();
        writeln!(s, "precision {}", self.precision.name()).unwrap();
        for (l, layer) in self.layers.iter().enumerate() {
            let parts: Vec<String> = layer
                .basis
                .to_config()
                .into_iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            writeln!(s, "basis {l} {}", parts.join(" ")).unwrap();
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let c = &layer.coefficients;
            writeln!(s, "coefficients {l} {} {}", c.rows(), c.cols()).unwrap();
            for r in 0..c.rows() {
                let row: Vec<String> = c.row(r).iter().map(|&x| fmt_f64(x)).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<KanNetwork> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| KanError::Parse(format!("checkpoint truncated before {what}")))
        };
        if next("header")? != "kanscale-checkpoint 1" {
            return Err(KanError::Parse("not a version-1 checkpoint".into()));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| KanError::Parse(format!("expected `{key}` line, got `{line}`")))
        };
        let arch = Architecture::parse(&field(next("arch")?, "arch")?)?;
        let variant = field(next("variant")?, "variant")?;
        let precision = Precision::parse(&field(next("precision")?, "precision")?)?;
        let mut bases = Vec::new();
        for l in 0..arch.n_layers() {
            let rest = field(next("basis")?, "basis")?;
            let mut toks = rest.split_whitespace();
            if toks.next() != Some(l.to_string().as_str()) {
                return Err(KanError::Parse(format!("expected basis for layer {l}")));
            }
            let mut map = BTreeMap::new();
            for tok in toks {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| KanError::Parse(format!("bad basis field `{tok}`")))?;
                map.insert(k.to_string(), v.to_string());
            }
            bases.push(BasisSpec::from_config(&map)?);
        }
        let mut layers = Vec::new();
        for (l, basis) in bases.into_iter().enumerate() {
            let rest = field(next("coefficients")?, "coefficients")?;
            let dims: Vec<usize> = rest
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| KanError::Parse(format!("bad header `{rest}`"))))
                .collect::<Result<_>>()?;
            if dims.len() != 3 || dims[0] != l {
                return Err(KanError::Parse(format!("bad coefficient header `{rest}`")));
            }
            let (rows, cols) = (dims[1], dims[2]);
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                for tok in next("coefficient row")?.split_whitespace() {
                    data.push(
                        tok.parse::<f64>()
                            .map_err(|_| KanError::Parse(format!("bad number `{tok}`")))?,
                    );
                }
            }
            layers.push((basis, Matrix::from_row_major(rows, cols, data)?));
        }
        let net = KanNetwork::from_parts(arch, layers)?;
        if net.variant.name() != variant {
            return Err(KanError::Parse(format!("variant `{variant}` does not match bases")));
        }
        Ok(net.with_precision(precision))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `N x (d*G)` first-layer matrix, column `i*G + g` holding feature `g`
/// of coordinate `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    matrix: Matrix,
    dim: usize,
    width: usize,
}

impl FeatureMatrix {
    fn assemble(pts: &PointSet, width: usize, mut fill: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let cols = pts.dim() * width;
        let mut data = vec![0.0; pts.len() * cols];
        for (x, row) in pts.iter().zip(data.chunks_exact_mut(cols)) {
            fill(x, row);
        }
        Ok(Self {
            matrix: Matrix::from_row_major(pts.len(), cols, data)?,
            dim: pts.dim(),
            width,
        })
    }

    /// Features of `basis` applied directly to each coordinate of `pts`.
    pub fn from_basis(basis: &BasisSpec, pts: &PointSet) -> Result<Self> {
        let w = basis.width();
        Self::assemble(pts, w, |x, row| {
            for (i, &t) in x.iter().enumerate() {
                basis.eval_derivs(t, 0, &mut row[i * w..(i + 1) * w]);
            }
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The `N x G` block of coordinate `i`.
    pub fn block(&self, i: usize) -> Result<Matrix> {
        if i >= self.dim {
            return Err(KanError::IndexOutOfRange {
                index: i,
                layers: self.dim,
            });
        }
        let w = self.width;
        let data = (0..self.matrix.rows())
            .flat_map(|r| self.matrix.row(r)[i * w..(i + 1) * w].to_vec())
            .collect();
        Matrix::from_row_major(self.matrix.rows(), w, data)
    }
}
