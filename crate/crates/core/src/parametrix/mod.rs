//! Parametrix expansions of the transition densities of the limit diffusion,
//! the cut-off diffusion and the cut-off chain.

mod continuous;
mod discrete;
mod flowchart;
mod series;
pub mod spectral;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::estimate::DensityGrid;
use crate::flows::{CutoffDrift, FlowBundle};
use crate::ode::{self, OdeOptions};

pub use continuous::{conv_continuous, kernel_h, kernel_h_generic, kernel_h_n, ConvEstimate, QuadConfig, Window};
pub use discrete::{
    conv_discrete, discrete_kernel_calk, discrete_kernel_calk_direct, discrete_kernel_k, discrete_kernel_m, discrete_second_order_term,
    frozen_chain_density,
    discrete_terms_at, one_step_density, series_discrete, ChainKernels, DiscreteSeriesConfig,
};
pub use flowchart::{flowchart_pipeline, FlowchartConfig, FlowchartReport, StageGap};
pub use series::{series_continuous, series_terms_at, ContinuousSeriesConfig};
pub use spectral::{innovation_sum_density, SumDensity};

pub use crate::diffusions::{g_c, g_sigma};

/// `g_C(t, z) = exp(−z²/(C t)) / (C √t)`, the Gaussian-type majorant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelBound {
    pub c: f64,
}

impl GaussianKernelBound {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Invalid("bound constant must be positive".into()));
        }
        Ok(Self { c })
    }

    #[inline]
    pub fn eval(&self, t: f64, z: f64) -> f64 {
        g_c(self.c, t, z)
    }

    /// `∫ g_{C}(t₁, z − w) g_{C'}(t₂, w) dw` in closed form.
    pub fn convolve(&self, other: &Self, t1: f64, t2: f64, z: f64) -> f64 {
        // g_C(t, ·) = √(π/C) N(0, C t / 2)
        let v = 0.5 * (self.c * t1 + other.c * t2);
        let pref = std::f64::consts::PI / (self.c * other.c).sqrt();
        pref * (-0.5 * z * z / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }
}

/// `B(a, b)`.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// `Π_{j=1}^{r} B(j/2, 1/2)`.
pub fn beta_product(r: usize) -> f64 {
    (1..=r).map(|j| beta_fn(j as f64 / 2.0, 0.5)).product()
}

/// Drift of a one-dimensional dynamics `dX = b(t, X) dt + σ dW`.
pub trait Drift: Sync {
    fn b(&self, t: f64, x: f64) -> f64;
    fn db(&self, t: f64, x: f64) -> f64;
    fn sigma(&self) -> f64;
    /// Times at which `b` may jump.
    fn breaks(&self) -> &[f64] {
        &[]
    }
}

/// `b(t, x) = A(t) x`.
#[derive(Debug, Clone, Copy)]
pub struct LimitDrift<'a>(pub &'a FlowBundle);

impl Drift for LimitDrift<'_> {
    #[inline]
    fn b(&self, t: f64, x: f64) -> f64 {
        self.0.a_coef(t) * x
    }
    #[inline]
    fn db(&self, t: f64, _x: f64) -> f64 {
        self.0.a_coef(t)
    }
    fn sigma(&self) -> f64 {
        self.0.model.sigma
    }
}

impl Drift for CutoffDrift {
    #[inline]
    fn b(&self, t: f64, x: f64) -> f64 {
        CutoffDrift::b(self, t, x)
    }
    #[inline]
    fn db(&self, t: f64, x: f64) -> f64 {
        self.db_dx(t, x)
    }
    fn sigma(&self) -> f64 {
        self.model().sigma
    }
    fn breaks(&self) -> &[f64] {
        &self.grid.points
    }
}

/// Solution of `z' = b(s, z)` through `(from, x)`, evaluated at each of `at`.
pub fn flow_values<D: Drift + ?Sized>(d: &D, from: f64, x: f64, to: f64, at: &[f64], tol: f64) -> Result<Vec<f64>> {
    if from == to {
        return Ok(vec![x; at.len()]);
    }
    let sol = ode::solve(|s, z: &[f64; 1]| [d.b(s, z[0])], from, [x], to, d.breaks(), &OdeOptions::with_tol(tol))?;
    Ok(at.iter().map(|&s| sol.eval(s)[0]).collect())
}

/// Backward flow `θ_{t,T}(y)` of a drift: solution at `t` with terminal value `y` at `T`.
pub fn backward_flow<D: Drift + ?Sized>(d: &D, t: f64, t_term: f64, y: f64, tol: f64) -> Result<f64> {
    Ok(flow_values(d, t_term, y, t, &[t], tol)?[0])
}

/// Kinds of kernels handled by the module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    H,
    HN,
    CalKN,
    KN,
    MN,
}

/// Terms and partial sums of a parametrix series on an `(x, y)` grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesAccumulator {
    pub terms: Vec<DensityGrid>,
    pub partial_sums: Vec<DensityGrid>,
    pub r_max: usize,
    pub term_norms: Vec<f64>,
    /// Fitted `C` in `‖term_{r}‖ ≤ C √(T−t) B(r/2, 1/2) ‖term_{r−1}‖`.
    pub ratio_constant: f64,
    /// Tail `Σ_{r > r_max}` bounded with the fitted ratio.
    pub truncation_estimate: f64,
    pub horizon: f64,
}

impl SeriesAccumulator {
    pub fn from_terms(terms: Vec<DensityGrid>, horizon: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Invalid("series needs at least the base term".into()));
        }
        let r_max = terms.len() - 1;
        let term_norms: Vec<f64> = terms.iter().map(|t| t.max_abs()).collect();
        for (r, w) in term_norms.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] > 1e3 * w[0].max(1e-300) {
                return Err(Error::Quadrature(format!("term {} grows from {:.3e} to {:.3e}", r + 1, w[0], w[1])));
            }
        }
        let mut partial_sums: Vec<DensityGrid> = Vec::with_capacity(terms.len());
        for t in &terms {
            let mut next = t.clone();
            if let Some(prev) = partial_sums.last() {
                for (row, prow) in next.values.iter_mut().zip(&prev.values) {
                    for (v, p) in row.iter_mut().zip(prow) {
                        *v += p;
                    }
                }
            }
            partial_sums.push(next);
        }
        let sq = horizon.max(0.0).sqrt();
        let ratio_constant = (1..=r_max)
            .map(|r| term_norms[r] / (term_norms[r - 1].max(1e-300) * sq * beta_fn(r as f64 / 2.0, 0.5)))
            .fold(0.0, f64::max);
        let truncation_estimate = beta_tail(term_norms[r_max], r_max, ratio_constant, sq);
        Ok(Self { terms, partial_sums, r_max, term_norms, ratio_constant, truncation_estimate, horizon })
    }

    pub fn sum(&self) -> &DensityGrid {
        self.partial_sums.last().expect("non-empty")
    }

    /// Whether every observed ratio respects the fitted Beta envelope (true by
    /// construction) and the envelope ratio drops below one past `r_max`.
    pub fn ratios_decay(&self) -> bool {
        let sq = self.horizon.max(0.0).sqrt();
        self.ratio_constant * sq * beta_fn((self.r_max + 1) as f64 / 2.0, 0.5) < 1.0
    }
}

/// `Σ_{r > r0} last Π_{j=r0+1}^{r} C √τ B(j/2, 1/2)`.
pub fn beta_tail(last: f64, r0: usize, c: f64, sqrt_tau: f64) -> f64 {
    if last == 0.0 || c == 0.0 {
        return 0.0;
    }
    let mut term = last;
    let mut sum = 0.0;
    for j in r0 + 1..r0 + 400 {
        term *= c * sqrt_tau * beta_fn(j as f64 / 2.0, 0.5);
        sum += term;
        if term < 1e-17 * sum.max(1e-300) {
            return sum;
        }
    }
    f64::INFINITY
}
