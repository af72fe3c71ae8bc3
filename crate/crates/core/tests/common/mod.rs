#![allow(dead_code)]

use kanscale::autodiff::{OperatorTerms, PinnObjective};
use kanscale::basis::{BasisSpec, MaternNu};
use kanscale::network::{init_network, Architecture, KanNetwork};
use kanscale::rng::SeededRng;
use kanscale::sampling::uniform_centers;

/// A random linear second-order operator with smooth coefficients.
pub struct RandomOperator {
    pub dim: usize,
    pub a0: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub w: (f64, f64),
}

impl RandomOperator {
    pub fn new(dim: usize, rng: &mut SeededRng) -> Self {
        Self {
            dim,
            a0: rng.uniform(-2.0, 2.0),
            b: (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            c: (0..dim).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            w: (rng.uniform(0.5, 2.0), rng.uniform(0.5, 20.0)),
        }
    }
}

impl PinnObjective for RandomOperator {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn terms(&self, x: &[f64]) -> OperatorTerms {
        let s: f64 = x.iter().sum();
        OperatorTerms {
            zeroth: self.a0,
            first: self.b.iter().map(|b| b * (1.0 + 0.5 * s)).collect(),
            second: self.c.iter().zip(x).map(|(c, xi)| c * (1.0 + xi * xi)).collect(),
            source: (3.0 * s).sin(),
        }
    }

    fn boundary_value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() - 0.3
    }

    fn weights(&self) -> (f64, f64) {
        self.w
    }
}

/// Families cycled through by the randomized checks.
pub const FAMILIES: [&str; 6] = ["gaussian", "gaussian-variable", "matern1", "matern3", "matern5", "chebyshev"];

pub fn basis_for(family: &str, g: usize, rng: &mut SeededRng) -> BasisSpec {
    let grid = uniform_centers(g).unwrap();
    let eps = rng.uniform(0.15, 0.6);
    match family {
        "gaussian" => BasisSpec::gaussian(grid, eps).unwrap(),
        "gaussian-variable" => {
            let scales = (0..g).map(|_| rng.uniform(0.15, 0.6)).collect();
            BasisSpec::gaussian_variable(grid, scales).unwrap()
        }
        "matern1" => BasisSpec::matern(MaternNu::One, grid, eps).unwrap(),
        "matern3" => BasisSpec::matern(MaternNu::Three, grid, eps).unwrap(),
        "matern5" => BasisSpec::matern(MaternNu::Five, grid, eps).unwrap(),
        "chebyshev" => BasisSpec::chebyshev(g - 1).unwrap(),
        other => panic!("unknown family {other}"),
    }
}

pub fn random_network(family: &str, widths: Vec<usize>, rng: &mut SeededRng) -> KanNetwork {
    let g = 4 + rng.below(5) as usize;
    let basis = basis_for(family, g, rng);
    let arch = Architecture::new(widths).unwrap();
    let mut net = init_network(&arch, &basis, None, rng.next_u32() as u64).unwrap();
    // Larger coefficients than the default initialization so every layer matters.
    for l in 0..net.layers().len() {
        for v in net.coefficients_mut(l).unwrap().as_mut_slice() {
            *v = rng.uniform(-1.0, 1.0);
        }
    }
    net
}

/// `‖a - b‖_∞ / ‖b‖_∞`.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den.max(1e-300)
}

/// Central differences of `f` with respect to every coefficient of `net`.
pub fn fd_coefficient_gradient(net: &KanNetwork, h: f64, f: impl Fn(&KanNetwork) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut work = net.clone();
    for l in 0..net.layers().len() {
        let n = net.coefficients(l).unwrap().as_slice().len();
        for k in 0..n {
            let orig = work.coefficients(l).unwrap().as_slice()[k];
            work.coefficients_mut(l).unwrap().as_mut_slice()[k] = orig + h;
            let up = f(&work);
            work.coefficients_mut(l).unwrap().as_mut_slice()[k] = orig - h;
            let down = f(&work);
            work.coefficients_mut(l).unwrap().as_mut_slice()[k] = orig;
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

const WIDTHS: [&[usize]; 5] = [&[2, 3, 1], &[2, 4, 3, 1], &[1, 5, 1], &[3, 2, 2, 1], &[2, 1]];

fn smooth(family: &str) -> bool {
    !matches!(family, "matern1" | "matern3")
}

/// Worst relative error of reverse-mode gradients against central
/// differences for randomized configuration `i`: the regression loss for
/// every family, plus the residual loss for families with two continuous
/// derivatives.
pub fn gradient_check(i: usize) -> f64 {
    use kanscale::autodiff::{loss_gradients, residual_gradients, residual_loss, LossSpec};
    use kanscale::sampling::halton;

    let mut rng = SeededRng::new(1000 + i as u64);
    let family = FAMILIES[i % FAMILIES.len()];
    let widths = WIDTHS[rng.below(WIDTHS.len() as u32) as usize].to_vec();
    let d = widths[0];
    let net = random_network(family, widths, &mut rng);
    let batch = halton(15, d, 15 * i as u64).unwrap();
    let targets: Vec<f64> = (0..batch.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();

    let g = loss_gradients(&net, &batch, &targets, LossSpec::MeanSquared).unwrap();
    let analytic: Vec<f64> = g.layers.iter().flat_map(|m| m.as_slice().to_vec()).collect();
    let fd = fd_coefficient_gradient(&net, 1e-5, |n| {
        let u = n.predict(&batch).unwrap();
        u.iter().zip(&targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / u.len() as f64
    });
    let mut worst = max_rel_error(&analytic, &fd);

    if smooth(family) {
        let obj = RandomOperator::new(d, &mut rng);
        let interior = halton(12, d, 500 + i as u64).unwrap();
        let boundary = halton(6, d, 900 + i as u64).unwrap();
        let g = residual_gradients(&net, &obj, &interior, &boundary).unwrap();
        let analytic: Vec<f64> = g.layers.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        let fd = fd_coefficient_gradient(&net, 1e-5, |n| residual_loss(n, &obj, &interior, &boundary).unwrap());
        worst = worst.max(max_rel_error(&analytic, &fd));
    }
    worst
}

/// Worst relative error (floored at 1) of input jets and the reverse-mode
/// input gradient against central differences of the plain forward pass.
pub fn jet_check(i: usize) -> f64 {
    use kanscale::autodiff::{input_gradient, input_jet};
    use kanscale::sampling::halton;

    let mut rng = SeededRng::new(2000 + i as u64);
    let family = FAMILIES[i % FAMILIES.len()];
    let widths = WIDTHS[rng.below(WIDTHS.len() as u32) as usize].to_vec();
    let d = widths[0];
    let net = random_network(family, widths, &mut rng);
    let f = |x: &[f64]| net.forward(x).unwrap()[0];
    // Plain central stencils with a short step: deep Chebyshev networks with
    // O(1) coefficients have very large higher derivatives, and Matérn 1/2
    // and 3/2 have kinks at the centers.
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    for p in halton(5, d, 77 + 5 * i as u64).unwrap().iter() {
        // Keep the stencil inside the unit cube for the Chebyshev map.
        let x: Vec<f64> = p.iter().map(|v| 0.05 + 0.9 * v).collect();
        let grad = input_gradient(&net, &x).unwrap();
        for k in 0..d {
            let at = |m: f64| {
                let mut y = x.clone();
                y[k] += m * h;
                f(&y)
            };
            let (f1, f0, fm1) = (at(1.0), at(0.0), at(-1.0));
            let first = (f1 - fm1) / (2.0 * h);
            let jet = input_jet(&net, &x, k).unwrap();
            worst = worst.max(rel(jet.value, f0)).max(rel(jet.first, first)).max(rel(grad[k], first));
            if smooth(family) {
                let second = (f1 - 2.0 * f0 + fm1) / (h * h);
                worst = worst.max(rel(jet.second, second));
            }
        }
    }
    worst
}

/// Largest Black–Scholes residual `V_t + ½σ²S²V_SS + rSV_S − rV` of the
/// closed form, by central differences, over interior points with
/// `S ∈ [0.05, 1]` and `t ∈ [0, T − 0.1]`.
pub fn bs_fd_residual() -> f64 {
    use kanscale::problems::{bs_exact, BsParams};
    use kanscale::sampling::halton;

    let p = BsParams::default();
    let v = |s: f64, t: f64| bs_exact(s, t, &p).unwrap();
    let (hs, ht) = (1e-4, 1e-5);
    let mut worst: f64 = 0.0;
    for q in halton(400, 2, 0).unwrap().iter() {
        let s = 0.05 + 0.95 * q[0] * p.s_max;
        let t = q[1] * (p.maturity - 0.1);
        let vt = (v(s, t + ht) - v(s, t - ht)) / (2.0 * ht);
        let vs = (v(s + hs, t) - v(s - hs, t)) / (2.0 * hs);
        let vss = (v(s + hs, t) - 2.0 * v(s, t) + v(s - hs, t)) / (hs * hs);
        let r = vt + 0.5 * p.sigma * p.sigma * s * s * vss + p.r * s * vs - p.r * v(s, t);
        worst = worst.max(r.abs());
    }
    worst
}

/// Largest `|−Δu − λu − f|` of the Helmholtz pair over 1000 Halton points,
/// with `Δu` from term-by-term differentiation of `sin(a1πx) sin(a2πy)`.
pub fn helmholtz_residual(lambda: f64, a1: f64, a2: f64) -> f64 {
    use kanscale::problems::helmholtz_data;
    use kanscale::sampling::halton;
    use std::f64::consts::PI;

    let mut worst: f64 = 0.0;
    for p in halton(1000, 2, 0).unwrap().iter() {
        let (u, f) = helmholtz_data(lambda, a1, a2, p);
        let (sx, sy) = ((a1 * PI * p[0]).sin(), (a2 * PI * p[1]).sin());
        let uxx = -(a1 * PI).powi(2) * sx * sy;
        let uyy = -(a2 * PI).powi(2) * sx * sy;
        worst = worst.max((u - sx * sy).abs()).max((-(uxx + uyy) - lambda * u - f).abs());
    }
    worst
}
