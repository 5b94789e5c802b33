//! Continuous parametrix kernels `H`, `H_N` and the time-space convolution.

use serde::{Deserialize, Serialize};

use super::{backward_flow, Drift};
use crate::diffusions::g_sigma;
use crate::error::{Error, Result};
use crate::flows::{CutoffDrift, FlowBundle};
use crate::quad::GaussRule;

/// `(b(t,x) − b(t,θ)) ∂_x g_σ(T − t, θ − x)` for a frozen point `θ = θ_{t,T}(y)`.
#[inline]
pub fn kernel_h_generic<D: Drift + ?Sized>(d: &D, t: f64, t_term: f64, x: f64, flow: f64) -> f64 {
    let tau = t_term - t;
    let s2 = d.sigma() * d.sigma();
    (d.b(t, x) - d.b(t, flow)) * (flow - x) / (s2 * tau) * g_sigma(d.sigma(), tau, flow - x)
}

/// `H(t, T, x, y) = A(t)(x − θ_{t,T}(y)) ∂_x p̃(t, T, x, y)`.
pub fn kernel_h(flows: &FlowBundle, t: f64, t_term: f64, x: f64, y: f64) -> Result<f64> {
    if !(t < t_term) {
        return Err(Error::Invalid(format!("kernel needs t < T, got t={t}, T={t_term}")));
    }
    let th = flows.limit_flow(t, t_term, y);
    let tau = t_term - t;
    let s = flows.model.sigma;
    Ok(flows.a_coef(t) * (x - th) * (th - x) / (s * s * tau) * g_sigma(s, tau, th - x))
}

/// `H_N(t, T, x, y)` with the cut-off backward flow solved to `tol`.
pub fn kernel_h_n(drift: &CutoffDrift, t: f64, t_term: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    if !(t < t_term) {
        return Err(Error::Invalid(format!("kernel needs t < T, got t={t}, T={t_term}")));
    }
    let th = backward_flow(drift, t, t_term, y, tol)?;
    Ok(kernel_h_generic(drift, t, t_term, x, th))
}

/// Quadrature settings for [`conv_continuous`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Spatial truncation in standard deviations around each window centre.
    pub width_sd: f64,
    /// Gauss-Legendre nodes of the time rule.
    pub time_nodes: usize,
    /// Spatial panels per standard deviation of the narrowest active window.
    pub panels_per_sd: f64,
    pub gl_nodes: usize,
    pub tol: f64,
    pub max_doublings: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { width_sd: 8.0, time_nodes: 24, panels_per_sd: 1.0, gl_nodes: 6, tol: 1e-8, max_doublings: 4 }
    }
}

/// Value with the change observed under node doubling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvEstimate {
    pub value: f64,
    pub error: f64,
}

/// Where the integrand in `z` lives at time `u`: a list of `(centre, sd)`.
pub type Window<'a> = dyn Fn(f64) -> Vec<(f64, f64)> + Sync + 'a;

/// Integrates `h` over the union of `[c − L s, c + L s]`, with panels sized by the
/// narrowest window covering each piece.
pub(crate) fn windowed_integral<F: FnMut(f64) -> f64>(
    rule: &GaussRule,
    windows: &[(f64, f64)],
    width_sd: f64,
    panels_per_sd: f64,
    mut h: F,
) -> f64 {
    let mut cuts: Vec<f64> = Vec::with_capacity(2 * windows.len());
    for &(c, s) in windows {
        if s > 0.0 && s.is_finite() && c.is_finite() {
            cuts.push(c - width_sd * s);
            cuts.push(c + width_sd * s);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let scale = windows
            .iter()
            .filter(|&&(c, s)| (mid - c).abs() <= width_sd * s)
            .map(|w| w.1)
            .fold(f64::INFINITY, f64::min);
        if !scale.is_finite() {
            continue;
        }
        let panels = (((b - a) / scale) * panels_per_sd).ceil().max(1.0) as usize;
        let step = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * step;
            total += rule.integrate(lo, lo + step, &mut h);
        }
    }
    total
}

fn conv_once<F, G>(f: &F, g: &G, t: f64, t_term: f64, window: &Window<'_>, cfg: &QuadConfig, time_nodes: usize, pps: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    // u = T − v², du = 2 v dv
    let rule_t = GaussRule::new(time_nodes);
    let rule_s = GaussRule::new(cfg.gl_nodes);
    let vmax = (t_term - t).sqrt();
    rule_t.integrate(0.0, vmax, |v| {
        let u = t_term - v * v;
        if u <= t || u >= t_term {
            return 0.0;
        }
        let w = window(u);
        2.0 * v * windowed_integral(&rule_s, &w, cfg.width_sd, pps, |z| f(u, z) * g(u, z))
    })
}

/// `f ⊗ g (t, T, x, y) = ∫_t^T du ∫ dz f(t,u,x,z) g(u,T,z,y)`, with `f` and `g`
/// passed as functions of `(u, z)`. The time integral uses `u = T − v²`; the
/// error estimate is the change under doubling of all node counts.
pub fn conv_continuous<F, G>(f: F, g: G, t: f64, t_term: f64, window: &Window<'_>, cfg: &QuadConfig) -> Result<ConvEstimate>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    if !(t < t_term) {
        return Err(Error::Invalid("convolution needs t < T".into()));
    }
    let mut nt = cfg.time_nodes;
    let mut pps = cfg.panels_per_sd;
    let mut prev = conv_once(&f, &g, t, t_term, window, cfg, nt, pps);
    for _ in 0..=cfg.max_doublings {
        nt *= 2;
        pps *= 2.0;
        let next = conv_once(&f, &g, t, t_term, window, cfg, nt, pps);
        let err = (next - prev).abs();
        if !next.is_finite() {
            return Err(Error::Quadrature("non-finite convolution".into()));
        }
        if err <= cfg.tol * (1.0 + next.abs()) {
            return Ok(ConvEstimate { value: next, error: err });
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("refinement did not converge below {}", cfg.tol)))
}
