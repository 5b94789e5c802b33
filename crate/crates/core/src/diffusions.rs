//! The limiting diffusion `dX = A(t) X dt + σ dW`, the cut-off diffusion
//! `dX = F_N(t, X) X dt + σ dW` and the frozen Gaussian densities.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{CutoffDrift, DeltaRule, FlowBundle};
use crate::quad::GaussRule;
use crate::rng::stream;

/// `g_σ(t, z) = exp(−z²/(2σ²t)) / (σ√(2πt))`.
#[inline]
pub fn g_sigma(sigma: f64, t: f64, z: f64) -> f64 {
    let v = sigma * sigma * t;
    (-0.5 * z * z / v).exp() / (2.0 * PI * v).sqrt()
}

/// `g_C(t, z) = exp(−z²/(C t)) / (C √t)`.
#[inline]
pub fn g_c(c: f64, t: f64, z: f64) -> f64 {
    (-z * z / (c * t)).exp() / (c * t.sqrt())
}

/// Law of `X_T` given `X_t = x` for the limiting diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTransition {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianTransition {
    /// Mean `Φ(T,t) x`, variance `σ² ∫_t^T Φ(T,u)² du`.
    pub fn new(flows: &FlowBundle, t: f64, t_term: f64, x: f64) -> Result<Self> {
        if !(t < t_term) {
            return Err(Error::Invalid(format!("need t < T, got t={t}, T={t_term}")));
        }
        let sigma = flows.model.sigma;
        let rule = GaussRule::new(24);
        let panels = ((t_term - t) / 0.05).ceil().max(1.0) as usize;
        let var = sigma * sigma * crate::quad::composite(&rule, t, t_term, panels, |u| flows.resolvent(t_term, u).powi(2));
        Ok(Self { mean: flows.resolvent(t_term, t) * x, variance: var })
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let d = y - self.mean;
        (-0.5 * d * d / self.variance).exp() / (2.0 * PI * self.variance).sqrt()
    }
}

/// Transition density `p(t, T, x, y)` of the limiting diffusion.
pub fn density_p(flows: &FlowBundle, t: f64, t_term: f64, x: f64, y: f64) -> Result<f64> {
    Ok(GaussianTransition::new(flows, t, t_term, x)?.pdf(y))
}

/// Exact draws of `X_T` given `X_t = x`.
pub fn sample_limit_sde(flows: &FlowBundle, t: f64, t_term: f64, x: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let gt = GaussianTransition::new(flows, t, t_term, x)?;
    let sd = gt.variance.sqrt();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut stream(seed, i as u64));
            gt.mean + sd * z
        })
        .collect())
}

/// Euler-Maruyama for the cut-off diffusion from `(t, x)` to `T` with `substeps`
/// equal steps. Brownian increments are drawn one per substep.
pub fn simulate_cutoff_sde(
    drift: &CutoffDrift,
    t: f64,
    t_term: f64,
    x: f64,
    n_paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let m = drift.grid.m_of_n;
    let steps_in_span = drift.grid.points.iter().filter(|&&p| p > t && p <= t_term + 1e-15).count();
    if substeps < steps_in_span.max(1) {
        return Err(Error::Invalid(format!("substeps {substeps} below grid resolution {steps_in_span} (M = {m})")));
    }
    let fast = drift.clone().with_rule(DeltaRule::Secant);
    let sigma = fast.model().sigma;
    let dt = (t_term - t) / substeps as f64;
    let sdt = dt.sqrt();
    let times: Vec<f64> = (0..substeps).map(|i| t + i as f64 * dt).collect();
    let ks: Vec<usize> = times.iter().map(|&s| fast.grid.index_of(s)).collect();
    let tbs: Vec<f64> = times.iter().map(|&s| fast.flows.theta_bar(s)).collect();
    let bound = 50.0 * (1.0 + x.abs() + if fast.a_n.is_finite() { fast.a_n } else { 0.0 });
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut v = x;
            for s in 0..substeps {
                let z: f64 = StandardNormal.sample(&mut rng);
                v += fast.f_at(ks[s], tbs[s], v) * v * dt + sigma * sdt * z;
                if !(v.abs() <= bound) {
                    return Err(Error::Explosion { value: v, bound, t: times[s] + dt });
                }
            }
            Ok(v)
        })
        .collect()
}

/// `p̃(t, T, x, y) = g_σ(T − t, θ_{t,T}(y) − x)`.
pub fn frozen_density_p_tilde(flows: &FlowBundle, t: f64, t_term: f64, x: f64, y: f64) -> Result<f64> {
    if !(t < t_term) {
        return Err(Error::Invalid("need t < T".into()));
    }
    Ok(g_sigma(flows.model.sigma, t_term - t, flows.limit_flow(t, t_term, y) - x))
}

/// `q̃_N(t, T, x, y) = g_σ(T − t, θ^N_{t,T}(y) − x)` given the cut-off flow value.
pub fn frozen_density_q_tilde(sigma: f64, t: f64, t_term: f64, x: f64, flow_value: f64) -> Result<f64> {
    if !(t < t_term) {
        return Err(Error::Invalid("need t < T".into()));
    }
    Ok(g_sigma(sigma, t_term - t, flow_value - x))
}
