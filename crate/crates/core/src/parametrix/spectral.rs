//! Densities of weighted innovation sums `Σ √γ_{i+1} ξ_{i+1}` by spectral inversion.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{InnovationLaw, InnovationSpec, TimeGrid};
use crate::quad::lagrange6;

/// Samples per standard deviation of the base resolution.
pub const BASE_RESOLUTION: usize = 16;
/// Half-width of the table in standard deviations.
pub const HALF_WIDTH_SD: f64 = 24.0;
/// Tolerance of the resolution-doubling loop, relative to the peak.
pub const REFINE_TOL: f64 = 1e-7;

/// Density (and derivatives up to order 3) of `S = Σ_i √γ_i ξ_i` for symmetric ξ.
/// Gaussian ξ is kept in closed form; other laws are tabulated on `s ≥ 0`.
#[derive(Debug, Clone)]
pub struct SumDensity {
    pub variance: f64,
    pub n_terms: usize,
    h: f64,
    /// `tables[n][j]` is the n-th derivative at `s = j h`.
    tables: Vec<Vec<f64>>,
    gaussian: bool,
}

impl SumDensity {
    /// Builds the law of `Σ_{i} √w_i ξ_i` with ξ = σ η.
    pub fn new(innovations: &InnovationSpec, sigma: f64, weights: &[f64], orders: usize) -> Result<Self> {
        Self::with_resolution(innovations, sigma, weights, orders, BASE_RESOLUTION)
    }

    pub fn with_resolution(
        innovations: &InnovationSpec,
        sigma: f64,
        weights: &[f64],
        orders: usize,
        per_sd: usize,
    ) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Invalid("sum needs at least one positive weight".into()));
        }
        if orders > 3 {
            return Err(Error::Invalid("derivatives above order 3 are not tabulated".into()));
        }
        let variance = sigma * sigma * weights.iter().sum::<f64>();
        match innovations.law {
            InnovationLaw::Gaussian => {
                return Ok(Self { variance, n_terms: weights.len(), h: 0.0, tables: Vec::new(), gaussian: true })
            }
            InnovationLaw::Zero => return Err(Error::Invalid("degenerate innovations have no density".into())),
            InnovationLaw::Logistic => {}
        }
        let sd = variance.sqrt();
        let h = sd / per_sd as f64;
        let n = 2 * (HALF_WIDTH_SD * per_sd as f64).ceil() as usize;
        let dw = 2.0 * PI / (n as f64 * h);
        let scales: Vec<f64> = weights.iter().map(|w| sigma * w.sqrt()).collect();
        // cf of S on ω_m = m dω, m = 0..n/2; both laws have decreasing |cf| in |ω|
        let mut cf = vec![0.0; n / 2 + 1];
        for (m, c) in cf.iter_mut().enumerate() {
            let w = m as f64 * dw;
            let mut p = 1.0;
            for s in &scales {
                p *= innovations.cf(s * w);
                if p < 1e-300 {
                    p = 0.0;
                    break;
                }
            }
            *c = p;
            if p == 0.0 {
                break;
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_inverse(n);
        let half = n / 2;
        let mut tables = Vec::with_capacity(orders + 1);
        for order in 0..=orders {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for (m, item) in buf.iter_mut().enumerate() {
                let (mm, c) = if m <= half { (m as f64, cf[m]) } else { ((m as f64) - n as f64, cf[n - m]) };
                let iw = Complex64::new(0.0, mm * dw);
                *item = iw.powu(order as u32) * c;
            }
            fft.process(&mut buf);
            let scale = dw / (2.0 * PI);
            // positive half plus a few mirrored samples for the stencil near 0
            tables.push(buf[..half].iter().map(|c| c.re * scale).collect());
        }
        Ok(Self { variance, n_terms: weights.len(), h, tables, gaussian: false })
    }

    /// Doubles the resolution until the sup change of the density falls below
    /// `REFINE_TOL` times its peak.
    pub fn refined(innovations: &InnovationSpec, sigma: f64, weights: &[f64], orders: usize) -> Result<Self> {
        let mut per_sd = 4;
        let mut cur = Self::with_resolution(innovations, sigma, weights, orders, per_sd)?;
        if cur.gaussian {
            return Ok(cur);
        }
        while per_sd < 512 {
            per_sd *= 2;
            let next = Self::with_resolution(innovations, sigma, weights, orders, per_sd)?;
            let peak = next.eval(0, 0.0).abs();
            let mut change = 0.0f64;
            let sd = cur.variance.sqrt();
            for i in 0..=2000 {
                let s = -12.0 * sd + 24.0 * sd * i as f64 / 2000.0;
                change = change.max((next.eval(0, s) - cur.eval(0, s)).abs());
            }
            cur = next;
            if change < REFINE_TOL * peak {
                return Ok(cur);
            }
        }
        Err(Error::Quadrature("sum density grid did not resolve".into()))
    }

    /// The `order`-th derivative of the density at `s`.
    pub fn eval(&self, order: usize, s: f64) -> f64 {
        if self.gaussian {
            return gaussian_derivative(order, self.variance, s);
        }
        let t = &self.tables[order];
        let u = s.abs() / self.h;
        let n = t.len();
        if u > (n - 4) as f64 {
            return 0.0;
        }
        let sign = if order % 2 == 1 && s < 0.0 { -1.0 } else { 1.0 };
        let odd = order % 2 == 1;
        let base = u.floor() as isize - 2;
        let mut v = [0.0; 6];
        for (j, vj) in v.iter_mut().enumerate() {
            let idx = base + j as isize;
            *vj = if idx >= 0 {
                t[idx as usize]
            } else if odd {
                -t[(-idx) as usize]
            } else {
                t[(-idx) as usize]
            };
        }
        sign * lagrange6(&v, u - base as f64)
    }

    #[inline]
    pub fn pdf(&self, s: f64) -> f64 {
        self.eval(0, s)
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn is_gaussian(&self) -> bool {
        self.gaussian
    }

    /// Table spacing (0 for the closed form).
    pub fn spacing(&self) -> f64 {
        self.h
    }
}

/// n-th derivative of the centred Gaussian density with variance `v`.
pub fn gaussian_derivative(order: usize, v: f64, s: f64) -> f64 {
    let g = (-0.5 * s * s / v).exp() / (2.0 * PI * v).sqrt();
    let x = s / v;
    match order {
        0 => g,
        1 => -x * g,
        2 => (x * x - 1.0 / v) * g,
        3 => (-x * x * x + 3.0 * x / v) * g,
        _ => f64::NAN,
    }
}

/// `p_{S_N}` for `S = Σ_{i=k}^{j−1} √γ_{i+1} ξ_{i+1}` on a grid, refined by resolution doubling.
pub fn innovation_sum_density(grid: &TimeGrid, innovations: &InnovationSpec, sigma: f64, k: usize, j: usize) -> Result<SumDensity> {
    if k >= j || j > grid.m_of_n {
        return Err(Error::Invalid(format!("need k < j ≤ M, got k={k}, j={j}")));
    }
    SumDensity::refined(innovations, sigma, &grid.gammas[k + 1..=j], 2)
}
