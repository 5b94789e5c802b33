//! Quadrature rules and interpolation helpers.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// A Gauss-Legendre rule kept in reference form.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Composite Gauss-Legendre over `panels` equal pieces of `[a, b]`.
pub fn composite<F: FnMut(f64) -> f64>(rule: &GaussRule, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| rule.integrate(a + p as f64 * h, a + (p + 1) as f64 * h, &mut f))
        .sum()
}

/// Trapezoid sum on a uniform grid of values.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Chebyshev points of the first kind on `[a, b]`, ascending.
pub fn chebyshev_points(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let th = PI * (2 * (n - 1 - j) + 1) as f64 / (2 * n) as f64;
            0.5 * (a + b) + 0.5 * (b - a) * th.cos()
        })
        .collect()
}

/// Barycentric weights matching [`chebyshev_points`].
pub fn chebyshev_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let jj = n - 1 - j;
            let th = PI * (2 * jj + 1) as f64 / (2 * n) as f64;
            let s = if jj % 2 == 0 { 1.0 } else { -1.0 };
            s * th.sin()
        })
        .collect()
}

/// Coefficients `c_j` with `f(x) ≈ Σ c_j f(x_j)` for barycentric interpolation.
pub fn barycentric_coeffs(nodes: &[f64], weights: &[f64], x: f64, out: &mut [f64]) {
    for (j, &xj) in nodes.iter().enumerate() {
        if x == xj {
            out.iter_mut().for_each(|c| *c = 0.0);
            out[j] = 1.0;
            return;
        }
    }
    let mut den = 0.0;
    for j in 0..nodes.len() {
        let t = weights[j] / (x - nodes[j]);
        out[j] = t;
        den += t;
    }
    out.iter_mut().for_each(|c| *c /= den);
}

/// Values on a uniform grid `x0 + i*h`, interpolated with a local 6-point Lagrange stencil.
/// Returns 0 outside the grid.
#[derive(Debug, Clone)]
pub struct UniformTable {
    pub x0: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

impl UniformTable {
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 6 && h > 0.0);
        Self { x0, h, values }
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.values.len() - 1) as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.x0) / self.h;
        if !(0.0..=(n - 1) as f64).contains(&s) {
            return 0.0;
        }
        let i = (s.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
        let u = s - i as f64;
        lagrange6(&self.values[i..i + 6], u)
    }

    pub fn eval_extend(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
        lagrange6(&self.values[i..i + 6], s - i as f64)
    }
}

/// 6-point Lagrange interpolation at offset `u` from the first of six unit-spaced samples.
#[inline]
pub fn lagrange6(v: &[f64], u: f64) -> f64 {
    let d = [u, u - 1.0, u - 2.0, u - 3.0, u - 4.0, u - 5.0];
    const DEN: [f64; 6] = [-120.0, 24.0, -12.0, 12.0, -24.0, 120.0];
    let mut acc = 0.0;
    for j in 0..6 {
        let mut num = 1.0;
        for (k, dk) in d.iter().enumerate() {
            if k != j {
                num *= dk;
            }
        }
        acc += v[j] * num / DEN[j];
    }
    acc
}
