//! Exact derivatives of the network.
//!
//! A single per-point engine runs the forward pass while carrying, for a
//! chosen set of input coordinates, the first and second derivative of every
//! activation along that coordinate (a second-order jet). The reverse pass
//! then differentiates the whole jet-augmented forward, so the same code
//! yields plain loss gradients (no jet directions), input jets, and gradients
//! of losses built from first and second input derivatives.

use rayon::prelude::*;

use crate::error::{KanError, Result};
use crate::linalg::Matrix;
use crate::network::{InputMap, KanNetwork};
use crate::sampling::PointSet;

/// Points per work unit; partial sums are reduced in chunk order.
const CHUNK: usize = 128;

/// Gradients with respect to every coefficient block, plus the loss value.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Matrix>,
    pub loss: f64,
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.layers.iter().all(Matrix::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().map(Matrix::max_abs).fold(0.0, f64::max)
    }
}

/// Pointwise regression loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossSpec {
    /// `mean((u - y)^2)`
    #[default]
    MeanSquared,
    /// `mean((u - y)^2) / 2`
    HalfMeanSquared,
}

impl LossSpec {
    fn factor(self) -> f64 {
        match self {
            Self::MeanSquared => 1.0,
            Self::HalfMeanSquared => 0.5,
        }
    }
}

/// Value, first and second derivative along one input coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Coefficients of the linear operator
/// `R[u](x) = a0 u + Σ_i (b_i ∂_i u + c_i ∂_ii u) - f` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTerms {
    pub zeroth: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub source: f64,
}

/// A strong-form residual loss `w_pde mean(R²) + w_bc mean((u - g)²)`.
pub trait PinnObjective: Sync {
    fn input_dim(&self) -> usize;
    fn terms(&self, x: &[f64]) -> OperatorTerms;
    fn boundary_value(&self, x: &[f64]) -> f64;
    /// `(w_pde, w_bc)`
    fn weights(&self) -> (f64, f64);
}

#[derive(Clone, Debug, Default)]
struct LayerState {
    // Inputs to the layer and their jets (`d1[k * n + i]`).
    v: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    // Adjoints of the above.
    vbar: Vec<f64>,
    d1bar: Vec<f64>,
    d2bar: Vec<f64>,
    // Composed basis derivatives, `hd[i * 4w + k * w + g]`.
    hd: Vec<f64>,
    // Feature channels (`f1[k * n * w + i * w + g]`).
    f: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
}

struct Engine<'a> {
    net: &'a KanNetwork,
    dirs: Vec<usize>,
    order: usize,
    states: Vec<LayerState>,
    fbar: Vec<f64>,
    f1bar: Vec<f64>,
    f2bar: Vec<f64>,
}

impl<'a> Engine<'a> {
    /// `dirs`: input coordinates carried as jet directions. `backward`: whether
    /// the reverse pass will be run.
    fn new(net: &'a KanNetwork, dirs: Vec<usize>, backward: bool) -> Self {
        let nd = dirs.len();
        let order = match (nd > 0, backward) {
            (false, false) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (true, true) => 3,
        };
        let widths = net.arch().widths();
        let mut states = Vec::with_capacity(widths.len());
        let mut max_cols = 0;
        for (l, &n) in widths.iter().enumerate() {
            let w = net.layers().get(l).map_or(0, |layer| layer.basis().width());
            max_cols = max_cols.max(n * w);
            states.push(LayerState {
                v: vec![0.0; n],
                d1: vec![0.0; nd * n],
                d2: vec![0.0; nd * n],
                vbar: vec![0.0; n],
                d1bar: vec![0.0; nd * n],
                d2bar: vec![0.0; nd * n],
                hd: vec![0.0; 4 * n * w],
                f: vec![0.0; n * w],
                f1: vec![0.0; nd * n * w],
                f2: vec![0.0; nd * n * w],
            });
        }
        Self {
            net,
            dirs,
            order,
            states,
            fbar: vec![0.0; max_cols],
            f1bar: vec![0.0; nd * max_cols],
            f2bar: vec![0.0; nd * max_cols],
        }
    }

    fn output(&self) -> &LayerState {
        self.states.last().unwrap()
    }

    fn forward(&mut self, x: &[f64]) -> Result<()> {
        let p = self.net.precision();
        let nd = self.dirs.len();
        let order = self.order;
        {
            let s0 = &mut self.states[0];
            let n0 = s0.v.len();
            for (v, &xi) in s0.v.iter_mut().zip(x) {
                *v = p.round(xi);
            }
            s0.d1.fill(0.0);
            s0.d2.fill(0.0);
            for (k, &c) in self.dirs.iter().enumerate() {
                s0.d1[k * n0 + c] = 1.0;
            }
        }
        for (l, layer) in self.net.layers().iter().enumerate() {
            let (head, tail) = self.states.split_at_mut(l + 1);
            let cur = &mut head[l];
            let next = &mut tail[0];
            let basis = layer.basis();
            let map = layer.input_map();
            let w = basis.width();
            let n_in = cur.v.len();
            let cols = n_in * w;
            for i in 0..n_in {
                let m = map.eval(cur.v[i]);
                let hd = &mut cur.hd[i * 4 * w..(i + 1) * 4 * w];
                basis.eval_derivs(m[0], order, hd);
                if map != InputMap::Identity {
                    compose(hd, w, &m, order);
                }
                for g in 0..w {
                    cur.f[i * w + g] = p.round(hd[g]);
                }
                for k in 0..nd {
                    let a = cur.d1[k * n_in + i];
                    let b = cur.d2[k * n_in + i];
                    let f1 = &mut cur.f1[k * cols + i * w..k * cols + (i + 1) * w];
                    let f2 = &mut cur.f2[k * cols + i * w..k * cols + (i + 1) * w];
                    for g in 0..w {
                        f1[g] = p.round(hd[w + g] * a);
                        f2[g] = p.round(hd[2 * w + g] * a * a + hd[w + g] * b);
                    }
                }
            }
            let coef = layer.coefficients();
            let n_out = coef.rows();
            for o in 0..n_out {
                let row = coef.row(o);
                next.v[o] = p.round(dot(row, &cur.f));
                for k in 0..nd {
                    next.d1[k * n_out + o] = p.round(dot(row, &cur.f1[k * cols..(k + 1) * cols]));
                    next.d2[k * n_out + o] = p.round(dot(row, &cur.f2[k * cols..(k + 1) * cols]));
                }
            }
            if next.v.iter().chain(&next.d1).chain(&next.d2).any(|y| !y.is_finite()) {
                return Err(KanError::DivergedForward { layer: l });
            }
        }
        Ok(())
    }

    /// Reverse pass. The caller sets the output state's `vbar`, `d1bar`,
    /// `d2bar`; coefficient gradients are accumulated into `grads`. When
    /// `to_input` is set the adjoint of the network input is left in
    /// `states[0].vbar`.
    fn backward(&mut self, grads: &mut [Vec<f64>], to_input: bool) {
        let nd = self.dirs.len();
        for (l, layer) in self.net.layers().iter().enumerate().rev() {
            let (head, tail) = self.states.split_at_mut(l + 1);
            let cur = &mut head[l];
            let next = &tail[0];
            let coef = layer.coefficients();
            let w = layer.basis().width();
            let n_in = cur.v.len();
            let n_out = coef.rows();
            let cols = n_in * w;
            let g = &mut grads[l];
            for o in 0..n_out {
                let grow = &mut g[o * cols..(o + 1) * cols];
                axpy(grow, next.vbar[o], &cur.f);
                for k in 0..nd {
                    axpy(grow, next.d1bar[k * n_out + o], &cur.f1[k * cols..(k + 1) * cols]);
                    axpy(grow, next.d2bar[k * n_out + o], &cur.f2[k * cols..(k + 1) * cols]);
                }
            }
            if l == 0 && !to_input {
                break;
            }
            let fbar = &mut self.fbar[..cols];
            fbar.fill(0.0);
            let f1bar = &mut self.f1bar[..nd * cols];
            let f2bar = &mut self.f2bar[..nd * cols];
            f1bar.fill(0.0);
            f2bar.fill(0.0);
            for o in 0..n_out {
                let row = coef.row(o);
                axpy(fbar, next.vbar[o], row);
                for k in 0..nd {
                    axpy(&mut f1bar[k * cols..(k + 1) * cols], next.d1bar[k * n_out + o], row);
                    axpy(&mut f2bar[k * cols..(k + 1) * cols], next.d2bar[k * n_out + o], row);
                }
            }
            for i in 0..n_in {
                let hd = &cur.hd[i * 4 * w..(i + 1) * 4 * w];
                let (h1, rest) = hd[w..].split_at(w);
                let fb = &fbar[i * w..(i + 1) * w];
                let mut vbar: f64 = fb.iter().zip(h1).map(|(a, b)| a * b).sum();
                for k in 0..nd {
                    let a = cur.d1[k * n_in + i];
                    let b = cur.d2[k * n_in + i];
                    let f1b = &f1bar[k * cols + i * w..k * cols + (i + 1) * w];
                    let f2b = &f2bar[k * cols + i * w..k * cols + (i + 1) * w];
                    let (mut s_v, mut s_d1, mut s_d2) = (0.0, 0.0, 0.0);
                    for gi in 0..w {
                        let (h2, h3) = (rest[gi], rest[w + gi]);
                        s_v += f1b[gi] * h2 * a + f2b[gi] * (h3 * a * a + h2 * b);
                        s_d1 += f1b[gi] * h1[gi] + 2.0 * f2b[gi] * h2 * a;
                        s_d2 += f2b[gi] * h1[gi];
                    }
                    vbar += s_v;
                    cur.d1bar[k * n_in + i] = s_d1;
                    cur.d2bar[k * n_in + i] = s_d2;
                }
                cur.vbar[i] = vbar;
            }
        }
    }
}

/// Chain rule for `h(v) = φ(m(v))`, in place on `hd` (raw φ derivatives on entry).
#[inline]
fn compose(hd: &mut [f64], w: usize, m: &[f64; 4], order: usize) {
    let (m1, m2, m3) = (m[1], m[2], m[3]);
    for g in 0..w {
        let p1 = if order >= 1 { hd[w + g] } else { 0.0 };
        let p2 = if order >= 2 { hd[2 * w + g] } else { 0.0 };
        let p3 = if order >= 3 { hd[3 * w + g] } else { 0.0 };
        if order >= 1 {
            hd[w + g] = p1 * m1;
        }
        if order >= 2 {
            hd[2 * w + g] = p2 * m1 * m1 + p1 * m2;
        }
        if order >= 3 {
            hd[3 * w + g] = p3 * m1 * m1 * m1 + 3.0 * p2 * m1 * m2 + p1 * m3;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    if a == 0.0 {
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn zero_grads(net: &KanNetwork) -> Vec<Vec<f64>> {
    net.layers()
        .iter()
        .map(|l| vec![0.0; l.coefficients().rows() * l.coefficients().cols()])
        .collect()
}

fn add_into(acc: &mut [Vec<f64>], part: &[Vec<f64>]) {
    for (a, p) in acc.iter_mut().zip(part) {
        for (x, y) in a.iter_mut().zip(p) {
            *x += y;
        }
    }
}

/// Runs `point` over `n` indices in fixed chunks and reduces the per-chunk
/// gradient and loss sums in chunk order.
fn accumulate<F>(net: &KanNetwork, n: usize, dirs: &[usize], point: F) -> Result<(Vec<Vec<f64>>, f64)>
where
    F: Fn(&mut Engine, &mut [Vec<f64>], usize) -> Result<f64> + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let parts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut engine = Engine::new(net, dirs.to_vec(), true);
            let mut grads = zero_grads(net);
            let mut loss = 0.0;
            for idx in c * CHUNK..((c + 1) * CHUNK).min(n) {
                loss += point(&mut engine, &mut grads, idx)?;
            }
            Ok((grads, loss))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = zero_grads(net);
    let mut loss = 0.0;
    for (g, l) in &parts {
        add_into(&mut grads, g);
        loss += l;
    }
    Ok((grads, loss))
}

fn to_gradient_set(net: &KanNetwork, grads: Vec<Vec<f64>>, loss: f64) -> Result<GradientSet> {
    let layers = net
        .layers()
        .iter()
        .zip(grads)
        .map(|(l, g)| Matrix::from_row_major(l.coefficients().rows(), l.coefficients().cols(), g))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientSet { layers, loss })
}

fn check_scalar(net: &KanNetwork) -> Result<()> {
    if net.arch().output_dim() != 1 {
        return Err(KanError::Config(format!(
            "scalar-output network required, output width is {}",
            net.arch().output_dim()
        )));
    }
    Ok(())
}

fn check_points(net: &KanNetwork, pts: &PointSet) -> Result<()> {
    if pts.dim() != net.arch().input_dim() {
        return Err(KanError::InvalidInput(format!(
            "points have dimension {}, network input is {}",
            pts.dim(),
            net.arch().input_dim()
        )));
    }
    Ok(())
}

/// Gradient of the mean pointwise loss over `batch` with respect to every coefficient.
pub fn loss_gradients(
    net: &KanNetwork,
    batch: &PointSet,
    targets: &[f64],
    loss: LossSpec,
) -> Result<GradientSet> {
    check_scalar(net)?;
    check_points(net, batch)?;
    if targets.len() != batch.len() {
        return Err(KanError::InvalidInput(format!(
            "{} targets for {} points",
            targets.len(),
            batch.len()
        )));
    }
    let scale = loss.factor() / batch.len() as f64;
    let (grads, total) = accumulate(net, batch.len(), &[], |eng, grads, i| {
        eng.forward(batch.point(i))?;
        let r = eng.output().v[0] - targets[i];
        let last = eng.states.last_mut().unwrap();
        last.vbar[0] = 2.0 * scale * r;
        eng.backward(grads, false);
        Ok(r * r)
    })?;
    to_gradient_set(net, grads, scale * total)
}

/// `u(x)`, `∂u/∂x_coord` and `∂²u/∂x_coord²` for a scalar-output network.
pub fn input_jet(net: &KanNetwork, x: &[f64], coord: usize) -> Result<Jet2> {
    check_scalar(net)?;
    let d = net.arch().input_dim();
    if x.len() != d {
        return Err(KanError::InvalidInput(format!("input has {} coordinates, expected {d}", x.len())));
    }
    if coord >= d {
        return Err(KanError::IndexOutOfRange { index: coord, layers: d });
    }
    let mut eng = Engine::new(net, vec![coord], false);
    eng.forward(x)?;
    let out = eng.output();
    Ok(Jet2 {
        value: out.v[0],
        first: out.d1[0],
        second: out.d2[0],
    })
}

/// Jets along every input coordinate at once: `(u, [∂_i u], [∂_ii u])`.
pub fn input_jets(net: &KanNetwork, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_scalar(net)?;
    let d = net.arch().input_dim();
    if x.len() != d {
        return Err(KanError::InvalidInput(format!("input has {} coordinates, expected {d}", x.len())));
    }
    let mut eng = Engine::new(net, (0..d).collect(), false);
    eng.forward(x)?;
    let out = eng.output();
    Ok((out.v[0], out.d1.clone(), out.d2.clone()))
}

/// Reverse-mode gradient of a scalar output with respect to the input.
pub fn input_gradient(net: &KanNetwork, x: &[f64]) -> Result<Vec<f64>> {
    check_scalar(net)?;
    if x.len() != net.arch().input_dim() {
        return Err(KanError::InvalidInput("input dimension mismatch".into()));
    }
    let mut eng = Engine::new(net, vec![], true);
    eng.forward(x)?;
    eng.states.last_mut().unwrap().vbar[0] = 1.0;
    let mut grads = zero_grads(net);
    eng.backward(&mut grads, true);
    Ok(eng.states[0].vbar.clone())
}

fn residual_from(terms: &OperatorTerms, u: f64, d1: &[f64], d2: &[f64]) -> f64 {
    let mut r = terms.zeroth * u - terms.source;
    for i in 0..d1.len() {
        r += terms.first[i] * d1[i] + terms.second[i] * d2[i];
    }
    r
}

/// Strong-form residual `R[u](x)` of the network at each point.
pub fn residuals(net: &KanNetwork, obj: &dyn PinnObjective, pts: &PointSet) -> Result<Vec<f64>> {
    check_scalar(net)?;
    check_points(net, pts)?;
    let d = pts.dim();
    let mut eng = Engine::new(net, (0..d).collect(), false);
    pts.iter()
        .map(|x| {
            eng.forward(x)?;
            let out = eng.output();
            Ok(residual_from(&obj.terms(x), out.v[0], &out.d1, &out.d2))
        })
        .collect()
}

/// Gradient of `w_pde mean_interior(R²) + w_bc mean_boundary((u - g)²)`.
pub fn residual_gradients(
    net: &KanNetwork,
    obj: &dyn PinnObjective,
    interior: &PointSet,
    boundary: &PointSet,
) -> Result<GradientSet> {
    check_scalar(net)?;
    check_points(net, interior)?;
    check_points(net, boundary)?;
    if obj.input_dim() != net.arch().input_dim() {
        return Err(KanError::Config("problem and network input dimensions differ".into()));
    }
    let (w_pde, w_bc) = obj.weights();
    let d = interior.dim();
    let dirs: Vec<usize> = (0..d).collect();
    let s_int = w_pde / interior.len() as f64;
    let (mut grads, pde_sum) = accumulate(net, interior.len(), &dirs, |eng, grads, i| {
        let x = interior.point(i);
        eng.forward(x)?;
        let terms = obj.terms(x);
        let out = eng.output();
        let r = residual_from(&terms, out.v[0], &out.d1, &out.d2);
        let c = 2.0 * s_int * r;
        let last = eng.states.last_mut().unwrap();
        last.vbar[0] = c * terms.zeroth;
        for k in 0..d {
            last.d1bar[k] = c * terms.first[k];
            last.d2bar[k] = c * terms.second[k];
        }
        eng.backward(grads, false);
        Ok(r * r)
    })?;
    let s_bc = w_bc / boundary.len() as f64;
    let (bc_grads, bc_sum) = accumulate(net, boundary.len(), &[], |eng, grads, i| {
        let x = boundary.point(i);
        eng.forward(x)?;
        let r = eng.output().v[0] - obj.boundary_value(x);
        eng.states.last_mut().unwrap().vbar[0] = 2.0 * s_bc * r;
        eng.backward(grads, false);
        Ok(r * r)
    })?;
    add_into(&mut grads, &bc_grads);
    to_gradient_set(net, grads, s_int * pde_sum + s_bc * bc_sum)
}

/// Loss value only, matching [`residual_gradients`].
pub fn residual_loss(
    net: &KanNetwork,
    obj: &dyn PinnObjective,
    interior: &PointSet,
    boundary: &PointSet,
) -> Result<f64> {
    let (w_pde, w_bc) = obj.weights();
    let r = residuals(net, obj, interior)?;
    let pde = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    let u = net.predict(boundary)?;
    let bc = boundary
        .iter()
        .zip(&u)
        .map(|(x, ui)| (ui - obj.boundary_value(x)).powi(2))
        .sum::<f64>()
        / u.len() as f64;
    Ok(w_pde * pde + w_bc * bc)
}
