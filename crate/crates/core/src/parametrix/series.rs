//! Continuous parametrix series `Σ_r q̃ ⊗ H^{(r)}` by forward recursion in the
//! terminal variable.
//!
//! For a fixed start `(t, x)` the r-th term `Ξ_r(v, w) = (q̃ ⊗ H^{(r)})(t, v, x, w)`
//! satisfies `Ξ_{r+1}(v, w) = ∫_t^v du ∫ dz Ξ_r(u, z) H(u, v, z, w)`. Each `Ξ_r` is
//! stored on a Chebyshev grid in `τ = √(v − t)` times a uniform grid in the scaled
//! offset `ζ = (w − c(v)) / (σ τ)` from the noise-free forward path `c`, with the
//! factor `τ^{r−1}` divided out. Time integrals use `u = t + (v − t)(1 − cos φ)/2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Drift, SeriesAccumulator};
use crate::diffusions::g_sigma;
use crate::error::{Error, Result};
use crate::estimate::{DensityGrid, GridMeta};
use crate::ode::{self, OdeOptions};
use crate::quad::{barycentric_coeffs, chebyshev_points, chebyshev_weights, lagrange6, GaussRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSeriesConfig {
    pub r_max: usize,
    pub tau_nodes: usize,
    pub zeta_half_width: f64,
    pub zeta_step: f64,
    pub time_nodes: usize,
    /// Truncation of the kernel's Gaussian factor, in standard deviations.
    pub width_sd: f64,
    pub gl_nodes: usize,
    pub panels_per_sd: f64,
    pub ode_tol: f64,
}

impl Default for ContinuousSeriesConfig {
    fn default() -> Self {
        Self {
            r_max: 3,
            tau_nodes: 20,
            zeta_half_width: 9.0,
            zeta_step: 0.1,
            time_nodes: 24,
            width_sd: 8.0,
            gl_nodes: 6,
            panels_per_sd: 1.0,
            ode_tol: 1e-10,
        }
    }
}

/// Partial sums of the continuous parametrix series for `drift` on `x_nodes × y_nodes`.
/// With [`super::LimitDrift`] this is `Σ p̃ ⊗ H^{(r)}`; with a cut-off drift
/// `Σ q̃_N ⊗ H_N^{(r)}`.
pub fn series_continuous<D: Drift>(
    drift: &D,
    t: f64,
    t_term: f64,
    x_nodes: &[f64],
    y_nodes: &[f64],
    cfg: &ContinuousSeriesConfig,
) -> Result<SeriesAccumulator> {
    if !(t < t_term) {
        return Err(Error::Invalid("series needs t < T".into()));
    }
    if x_nodes.is_empty() || y_nodes.is_empty() {
        return Err(Error::Invalid("empty evaluation grid".into()));
    }
    let mut per_x = Vec::with_capacity(x_nodes.len());
    for &x in x_nodes {
        per_x.push(series_terms_at(drift, t, t_term, x, y_nodes, cfg)?);
    }
    let terms = (0..=cfg.r_max)
        .map(|r| DensityGrid {
            x_nodes: x_nodes.to_vec(),
            y_nodes: y_nodes.to_vec(),
            values: per_x.iter().map(|p| p[r].clone()).collect(),
            stderr: vec![vec![0.0; y_nodes.len()]; x_nodes.len()],
            meta: GridMeta { t, t_term, method: format!("continuous parametrix term {r}") },
        })
        .collect();
    SeriesAccumulator::from_terms(terms, t_term - t)
}

/// One target point `(v, w)` with the backward flow at the time nodes.
struct Target {
    v: f64,
    w: f64,
    /// Index of the node group (storage column or the terminal group).
    group: usize,
    /// `θ_{u_q, v}(w)` for each time node, then `θ_{t, v}(w)`.
    flow: Vec<f64>,
}

/// Terms `Ξ_r(T, y)` for `r = 0..=r_max` and each `y`.
pub fn series_terms_at<D: Drift>(
    drift: &D,
    t: f64,
    t_term: f64,
    x: f64,
    ys: &[f64],
    cfg: &ContinuousSeriesConfig,
) -> Result<Vec<Vec<f64>>> {
    let sigma = drift.sigma();
    let opts = OdeOptions::with_tol(cfg.ode_tol);
    let centre = ode::solve(|s, z: &[f64; 1]| [drift.b(s, z[0])], t, [x], t_term, drift.breaks(), &opts)?;
    let c_at = |u: f64| centre.eval(u)[0];

    let tau_max = (t_term - t).sqrt();
    let taus = chebyshev_points(cfg.tau_nodes, 0.0, tau_max);
    let bw = chebyshev_weights(cfg.tau_nodes);
    let nz = (2.0 * cfg.zeta_half_width / cfg.zeta_step).round() as usize + 1;
    let z0 = -cfg.zeta_half_width;
    let phi_rule = GaussRule::new(cfg.time_nodes);
    let nq = cfg.time_nodes;

    // node groups: storage columns a = 0..n_tau, then the terminal time
    let mut group_v: Vec<f64> = taus.iter().map(|tau| t + tau * tau).collect();
    group_v.push(t_term);
    let ng = group_v.len();
    // time nodes and weights per group
    let mut u_nodes = vec![vec![0.0; nq]; ng];
    let mut u_weights = vec![vec![0.0; nq]; ng];
    for g in 0..ng {
        let len = group_v[g] - t;
        for (q, (ph, w)) in phi_rule.on(0.0, std::f64::consts::PI).enumerate() {
            u_nodes[g][q] = t + 0.5 * len * (1.0 - ph.cos());
            u_weights[g][q] = 0.5 * len * ph.sin() * w;
        }
    }
    // barycentric coefficients of τ_u for each (group, q)
    let mut bary = vec![vec![vec![0.0; cfg.tau_nodes]; nq]; ng];
    for g in 0..ng {
        for q in 0..nq {
            barycentric_coeffs(&taus, &bw, (u_nodes[g][q] - t).sqrt(), &mut bary[g][q]);
        }
    }

    let mut targets = Vec::with_capacity(cfg.tau_nodes * nz + ys.len());
    for (a, tau) in taus.iter().enumerate() {
        let v = group_v[a];
        let c = c_at(v);
        for b in 0..nz {
            let w = c + sigma * tau * (z0 + b as f64 * cfg.zeta_step);
            targets.push(Target { v, w, group: a, flow: Vec::new() });
        }
    }
    for &y in ys {
        targets.push(Target { v: t_term, w: y, group: ng - 1, flow: Vec::new() });
    }
    targets.par_iter_mut().try_for_each(|tg| -> Result<()> {
        let sol = ode::solve(|s, z: &[f64; 1]| [drift.b(s, z[0])], tg.v, [tg.w], t, drift.breaks(), &opts)?;
        let mut fl: Vec<f64> = u_nodes[tg.group].iter().map(|&u| sol.eval(u)[0]).collect();
        fl.push(sol.eval(t)[0]);
        tg.flow = fl;
        Ok(())
    })?;

    let n_store = cfg.tau_nodes * nz;
    let ys_n = ys.len();
    let mut out = vec![vec![0.0; ys_n]; cfg.r_max + 1];
    // ξ_0 = τ Ξ_0 on the storage grid
    let mut xi: Vec<f64> = targets[..n_store]
        .iter()
        .map(|tg| {
            let tau = (tg.v - t).sqrt();
            tau * g_sigma(sigma, tg.v - t, tg.flow[nq] - x)
        })
        .collect();
    for (j, tg) in targets[n_store..].iter().enumerate() {
        out[0][j] = g_sigma(sigma, t_term - t, tg.flow[nq] - x);
    }
    let rule = GaussRule::new(cfg.gl_nodes);
    let centres: Vec<Vec<f64>> = u_nodes.iter().map(|us| us.iter().map(|&u| c_at(u)).collect()).collect();

    for r in 0..cfg.r_max {
        // Ξ_r rows interpolated to each (group, q) time node
        let rows: Vec<Vec<Vec<f64>>> = (0..ng)
            .into_par_iter()
            .map(|g| {
                (0..nq)
                    .map(|q| {
                        let coef = &bary[g][q];
                        let mut row = vec![0.0; nz];
                        for (a, c) in coef.iter().enumerate() {
                            if *c == 0.0 {
                                continue;
                            }
                            let col = &xi[a * nz..(a + 1) * nz];
                            for (rv, xv) in row.iter_mut().zip(col) {
                                *rv += c * xv;
                            }
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        let need_store = r + 1 < cfg.r_max;
        let range = if need_store { 0..targets.len() } else { n_store..targets.len() };
        let vals: Vec<f64> = targets[range.clone()]
            .par_iter()
            .map(|tg| {
                let mut acc = 0.0;
                for q in 0..nq {
                    let u = u_nodes[tg.group][q];
                    let tau_u = (u - t).sqrt();
                    let dv = tg.v - u;
                    if tau_u <= 0.0 || dv <= 0.0 {
                        continue;
                    }
                    let th = tg.flow[q];
                    let sk = sigma * dv.sqrt();
                    let sx = sigma * tau_u;
                    let c = centres[tg.group][q];
                    let lo = (th - cfg.width_sd * sk).max(c - cfg.zeta_half_width * sx);
                    let hi = (th + cfg.width_sd * sk).min(c + cfg.zeta_half_width * sx);
                    if hi <= lo {
                        continue;
                    }
                    let row = &rows[tg.group][q];
                    let amp = tau_u.powi(r as i32 - 1);
                    let b_th = drift.b(u, th);
                    let scale = sk.min(sx);
                    let panels = ((hi - lo) / scale * cfg.panels_per_sd).ceil().max(1.0) as usize;
                    let step = (hi - lo) / panels as f64;
                    let mut inner = 0.0;
                    for p in 0..panels {
                        let a0 = lo + p as f64 * step;
                        inner += rule.integrate(a0, a0 + step, |z| {
                            let xi_val = interp_row(row, (z - c) / sx, z0, cfg.zeta_step);
                            let h = (drift.b(u, z) - b_th) * (th - z) / (sk * sk) * g_sigma(sigma, dv, th - z);
                            xi_val * h
                        });
                    }
                    acc += u_weights[tg.group][q] * amp * inner;
                }
                acc
            })
            .collect();
        if need_store {
            for (i, tg) in targets[..n_store].iter().enumerate() {
                let tau = (tg.v - t).sqrt();
                xi[i] = vals[i] / tau.powi(r as i32);
            }
            out[r + 1].copy_from_slice(&vals[n_store..]);
        } else {
            out[r + 1].copy_from_slice(&vals);
        }
        if out[r + 1].iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature(format!("non-finite term {}", r + 1)));
        }
    }
    Ok(out)
}

/// Uniform-grid interpolation of a stored row; zero outside.
#[inline]
fn interp_row(row: &[f64], zeta: f64, z0: f64, h: f64) -> f64 {
    let n = row.len();
    let s = (zeta - z0) / h;
    if !(0.0..=(n - 1) as f64).contains(&s) {
        return 0.0;
    }
    let i = (s.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
    lagrange6(&row[i..i + 6], s - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusions::{density_p, frozen_density_p_tilde};
    use crate::flows::FlowBundle;
    use crate::model::ModelSpec;
    use crate::parametrix::LimitDrift;

    #[test]
    fn zeroth_term_is_frozen_density() {
        let fb = FlowBundle::solve(&ModelSpec::sine_perturbed(0.2, 1.0, 1.0), 1.0, 1e-12).unwrap();
        let ys = [-1.0, 0.0, 0.4, 2.0];
        let cfg = ContinuousSeriesConfig { r_max: 0, ..Default::default() };
        let terms = series_terms_at(&LimitDrift(&fb), 0.0, 1.0, 0.5, &ys, &cfg).unwrap();
        for (j, &y) in ys.iter().enumerate() {
            let want = frozen_density_p_tilde(&fb, 0.0, 1.0, 0.5, y).unwrap();
            assert!((terms[0][j] - want).abs() < 1e-9 * want.max(1e-3), "{} {want}", terms[0][j]);
        }
    }

    #[test]
    fn linear_series_converges_to_gaussian_transition() {
        let fb = FlowBundle::solve(&ModelSpec::linear(1.0, 1.0, 1.0), 1.0, 1e-12).unwrap();
        let ys = crate::estimate::linspace(-3.0, 3.0, 13);
        let mut last_gap = f64::INFINITY;
        for r_max in [1, 3, 4] {
            let cfg = ContinuousSeriesConfig { r_max, ..Default::default() };
            let acc = series_continuous(&LimitDrift(&fb), 0.0, 1.0, &[0.5], &ys, &cfg).unwrap();
            let gap = ys
                .iter()
                .enumerate()
                .map(|(j, &y)| (acc.sum().values[0][j] - density_p(&fb, 0.0, 1.0, 0.5, y).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(gap < last_gap);
            assert!(gap <= 2.0 * acc.truncation_estimate + 1e-7, "r={r_max}: gap {gap:.3e} tail {:.3e}", acc.truncation_estimate);
            assert!(acc.ratios_decay());
            last_gap = gap;
        }
        assert!(last_gap < 1e-4);
    }
}
