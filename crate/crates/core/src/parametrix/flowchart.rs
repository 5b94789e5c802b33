//! The chain of substitutions leading from the cut-off diffusion density `q_N`
//! to the chain density `p_N`, with the gap of each stage at one point.

use serde::{Deserialize, Serialize};

use super::continuous::{kernel_h_generic, windowed_integral, QuadConfig};
use super::discrete::{discrete_terms_at, ChainKernels, DiscreteSeriesConfig};
use super::series::{series_terms_at, ContinuousSeriesConfig};
use super::{beta_tail, flow_values};
use crate::diffusions::g_sigma;
use crate::error::{Error, Result};
use crate::quad::GaussRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowchartConfig {
    pub r_max: usize,
    pub quad: QuadConfig,
    pub series: ContinuousSeriesConfig,
    pub discrete: DiscreteSeriesConfig,
    pub ode_tol: f64,
}

impl Default for FlowchartConfig {
    fn default() -> Self {
        Self {
            r_max: 3,
            quad: QuadConfig::default(),
            series: ContinuousSeriesConfig::default(),
            discrete: DiscreteSeriesConfig::default(),
            ode_tol: 1e-10,
        }
    }
}

/// One substitution with its gap and, when the stage has one, the predicted rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGap {
    pub stage: usize,
    pub name: String,
    pub gap: f64,
    /// Value of the predicted rate (`√γ_0^N`), if any.
    pub rate: Option<f64>,
    /// `gap / rate`.
    pub constant: Option<f64>,
    /// Bound the gap is compared with, if any.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowchartReport {
    pub n: u64,
    pub gamma0: f64,
    pub a_n: f64,
    pub t: f64,
    pub t_term: f64,
    pub x: f64,
    pub y: f64,
    /// Set when fewer than two chain steps remain; no gaps are computed then.
    pub singular: bool,
    pub stages: Vec<StageGap>,
}

/// Runs the five substitutions at `(t_i, T_N, x, y)`:
/// 1. `q̃_N ⊗ H_N → q̃_N ⊗_N H_N` (time discretisation of the first-order term);
/// 2. truncation of the continuous series after `r_max`;
/// 3. `q̃_N ⊗_N H_N → q̃_N ⊗_N (K_N + M_N)`;
/// 4. `q̃_N → p̃_N` in the zeroth and first-order terms;
/// 5. `K_N + M_N → 𝒦_N`, exact by construction of `M_N`.
pub fn flowchart_pipeline(ck: &ChainKernels, n: u64, i: usize, x: f64, y: f64, cfg: &FlowchartConfig) -> Result<FlowchartReport> {
    let m = ck.m();
    let grid = ck.grid();
    if i >= m {
        return Err(Error::Invalid(format!("start index {i} must be below M = {m}")));
    }
    let (t, tt) = (grid.points[i], grid.points[m]);
    let gamma0 = grid.gamma0();
    let mut report = FlowchartReport { n, gamma0, a_n: ck.drift.a_n, t, t_term: tt, x, y, singular: false, stages: Vec::new() };
    if m - i < 2 {
        report.singular = true;
        return Ok(report);
    }
    let drift = &ck.drift;
    let sigma = ck.sigma();
    let rate = gamma0.sqrt();

    // continuous series terms at (x, y), one beyond r_max
    let scfg = ContinuousSeriesConfig { r_max: cfg.r_max + 1, ..cfg.series };
    let cont = series_terms_at(drift, t, tt, x, &[y], &scfg)?;
    let a1 = cont[1][0];

    // cut-off backward flow from (T, y) at each grid time, and the forward path of x
    let times: Vec<f64> = grid.points[i..=m].to_vec();
    let theta_n = flow_values(drift, tt, y, t, &times, cfg.ode_tol)?;
    let centre = flow_values(drift, t, x, tt, &times, cfg.ode_tol)?;
    let euler = ck.euler_path(i, m, y)?;
    let rule = GaussRule::new(cfg.quad.gl_nodes);

    // q̃_N(t_i, t_k, x, z) = g_σ(t_k − t_i, θ^N_{t_i,t_k}(z) − x)
    let q_tilde = |k: usize, z: f64| -> f64 {
        let back = flow_values(drift, grid.points[k], z, t, &[t], cfg.ode_tol).map(|v| v[0]).unwrap_or(f64::NAN);
        g_sigma(sigma, grid.points[k] - t, back - x)
    };
    let h_n = |k: usize, z: f64| kernel_h_generic(drift, grid.points[k], tt, z, theta_n[k - i]);
    let calk = |k: usize, z: f64| -> f64 {
        let s = ck.sum(k, m).expect("valid pair");
        let g = ck.gamma(k + 1);
        (s.pdf(euler[k + 1 - i] - z - ck.b(k, z) * g) - s.pdf(euler[k - i] - z)) / g
    };
    let conv = |kernel: &dyn Fn(usize, f64) -> f64| -> f64 {
        let mut total = grid.gammas[i + 1] * kernel(i, x);
        for k in i + 1..m {
            let w = [
                (centre[k - i], sigma * (grid.points[k] - t).sqrt()),
                (theta_n[k - i], sigma * (tt - grid.points[k]).sqrt()),
                (euler[k - i], sigma * (tt - grid.points[k]).sqrt()),
            ];
            total += grid.gammas[k + 1]
                * windowed_integral(&rule, &w, cfg.quad.width_sd, cfg.quad.panels_per_sd, |z| q_tilde(k, z) * kernel(k, z));
        }
        total
    };
    let b1 = conv(&h_n);
    let c1 = conv(&calk);
    let dcfg = DiscreteSeriesConfig { r_max: 1, ..cfg.discrete };
    let disc = discrete_terms_at(ck, i, x, &[y], &dcfg)?;
    let q0 = cont[0][0];
    let p0 = disc[0][0];
    let d1 = disc[1][0];

    let head: f64 = cont[..=cfg.r_max].iter().map(|v| v[0]).sum();
    let next = head + cont[cfg.r_max + 1][0];
    let norms: Vec<f64> = cont.iter().map(|v| v[0].abs()).collect();
    let sq = (tt - t).sqrt();
    let c_fit = (1..=cfg.r_max)
        .map(|r| norms[r] / (norms[r - 1].max(1e-300) * sq * super::beta_fn(r as f64 / 2.0, 0.5)))
        .fold(0.0, f64::max);
    let tail = beta_tail(norms[cfg.r_max], cfg.r_max, c_fit, sq);

    // stage 5 on the kernels at a few points around the flow
    let mut ident = 0.0f64;
    for k in [i, (i + m) / 2, m - 2] {
        for dz in [-1.0, 0.0, 1.0] {
            let z = euler[k - i] + dz * sigma * (tt - grid.points[k]).sqrt();
            let kk = super::discrete_kernel_k(ck, k, m, z, y)?;
            let mm = super::discrete_kernel_m(ck, k, m, z, y)?;
            let cc = super::discrete_kernel_calk(ck, k, m, z, y)?;
            ident = ident.max((kk + mm - cc).abs() / cc.abs().max(1e-300));
        }
    }

    let mk = |stage: usize, name: &str, gap: f64, rated: bool, bound: Option<f64>| StageGap {
        stage,
        name: name.to_string(),
        gap,
        rate: rated.then_some(rate),
        constant: rated.then_some(gap / rate),
        bound,
    };
    report.stages = vec![
        mk(1, "continuous to discrete time convolution", (a1 - b1).abs(), true, None),
        mk(2, "series truncation", (next - head).abs(), false, Some(tail)),
        mk(3, "H_N to K_N + M_N", (b1 - c1).abs(), true, None),
        mk(4, "q_tilde_N to p_tilde_N", ((q0 + c1) - (p0 + d1)).abs(), true, None),
        mk(5, "K_N + M_N to calK_N (relative)", ident, false, None),
    ];
    if report.stages.iter().any(|s| !s.gap.is_finite()) {
        return Err(Error::Quadrature("non-finite stage gap".into()));
    }
    Ok(report)
}
