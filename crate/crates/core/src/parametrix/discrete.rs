//! Discrete parametrix for the cut-off chain: one-step and frozen densities, the
//! kernels `𝒦_N`, `K_N`, `M_N`, the discrete convolution and the series.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::continuous::{windowed_integral, QuadConfig};
use super::spectral::SumDensity;
use super::SeriesAccumulator;
use crate::error::{Error, Result};
use crate::estimate::{DensityGrid, GridMeta};
use crate::flows::{CutoffDrift, DeltaRule};
use crate::model::{InnovationSpec, TimeGrid};
use crate::quad::{lagrange6, GaussRule};

/// The cut-off chain on its grid together with lazily built sum densities
/// `p_{S_{k,l}}` of `Σ_{i=k}^{l−1} √γ_{i+1} ξ_{i+1}`.
pub struct ChainKernels {
    pub drift: CutoffDrift,
    pub innovations: InnovationSpec,
    theta_bar: Vec<f64>,
    sums: Vec<OnceLock<SumDensity>>,
}

impl std::fmt::Debug for ChainKernels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChainKernels").field("m", &self.m()).field("innovations", &self.innovations).finish()
    }
}

#[inline]
fn pair_index(k: usize, l: usize) -> usize {
    l * (l - 1) / 2 + k
}

impl ChainKernels {
    pub fn new(drift: &CutoffDrift, innovations: &InnovationSpec) -> Self {
        let drift = drift.clone().with_rule(DeltaRule::Secant);
        let m = drift.grid.m_of_n;
        let theta_bar = drift.grid.points.iter().map(|&t| drift.flows.theta_bar(t)).collect();
        let sums = (0..pair_index(0, m + 1)).map(|_| OnceLock::new()).collect();
        Self { drift, innovations: *innovations, theta_bar, sums }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.drift.grid
    }

    pub fn m(&self) -> usize {
        self.drift.grid.m_of_n
    }

    pub fn sigma(&self) -> f64 {
        self.drift.model().sigma
    }

    #[inline]
    pub fn gamma(&self, k: usize) -> f64 {
        self.drift.grid.gammas[k]
    }

    /// `F_N(t_k, x) x`.
    #[inline]
    pub fn b(&self, k: usize, x: f64) -> f64 {
        self.drift.f_at(k, self.theta_bar[k], x) * x
    }

    /// Law of `S_{k,l}`.
    pub fn sum(&self, k: usize, l: usize) -> Result<&SumDensity> {
        if k >= l || l > self.m() {
            return Err(Error::Invalid(format!("need k < l ≤ M, got k={k}, l={l}")));
        }
        let cell = &self.sums[pair_index(k, l)];
        if let Some(s) = cell.get() {
            return Ok(s);
        }
        let s = SumDensity::new(&self.innovations, self.sigma(), &self.drift.grid.gammas[k + 1..=l], 2)?;
        Ok(cell.get_or_init(|| s))
    }

    /// Backward Euler path `θ̂_i, …, θ̂_l` from `(t_l, w)`, indexed from `i`.
    pub fn euler_path(&self, i: usize, l: usize, w: f64) -> Result<Vec<f64>> {
        if i > l || l > self.m() {
            return Err(Error::Invalid(format!("need i ≤ l ≤ M, got i={i}, l={l}")));
        }
        let mut out = vec![0.0; l - i + 1];
        out[l - i] = w;
        let bound = 1e12 * (1.0 + w.abs());
        for k in (i..l).rev() {
            let z = out[k + 1 - i];
            let next = z - self.b(k + 1, z) * self.gamma(k + 1);
            if !next.is_finite() || next.abs() > bound {
                return Err(Error::Explosion { value: next, bound, t: self.drift.grid.points[k] });
            }
            out[k - i] = next;
        }
        Ok(out)
    }

    fn check_indices(&self, k: usize, l: usize) -> Result<()> {
        if k >= l || l > self.m() {
            return Err(Error::Invalid(format!("need k < l ≤ M, got k={k}, l={l}")));
        }
        Ok(())
    }
}

/// `p_N(t_k, t_{k+1}, x, z) = γ^{−1/2} ρ_ξ((z − x − F_N(t_k,x) x γ)/√γ)`, `γ = γ_{k+1}`.
pub fn one_step_density(ck: &ChainKernels, k: usize, x: f64, z: f64) -> Result<f64> {
    ck.check_indices(k, k + 1)?;
    let g = ck.gamma(k + 1);
    let sg = g.sqrt();
    Ok(ck.innovations.rho_xi((z - x - ck.b(k, x) * g) / sg, ck.sigma()) / sg)
}

/// Frozen one-step density from `x` with the drift increment of the Euler path.
fn frozen_one_step(ck: &ChainKernels, k: usize, x: f64, z: f64, increment: f64) -> f64 {
    let g = ck.gamma(k + 1);
    let sg = g.sqrt();
    ck.innovations.rho_xi((z - x - increment) / sg, ck.sigma()) / sg
}

/// `p̃_N(t_k, t_j, x, y) = p_{S_{k,j}}(θ̂_{t_k}(y) − x)` with the Euler path from `(t_j, y)`.
pub fn frozen_chain_density(ck: &ChainKernels, k: usize, j: usize, x: f64, y: f64) -> Result<f64> {
    ck.check_indices(k, j)?;
    let path = ck.euler_path(k, j, y)?;
    Ok(ck.sum(k, j)?.pdf(path[0] - x))
}

/// `𝒦_N(t_k, t_l, x, y) = (ℒ_N − ℒ̃_N) p̃_N(t_{k+1}, t_l, ·, y)(x)` in closed form:
/// `γ^{−1}[p_{S_{k,l}}(θ̂_{k+1} − x − F_N(t_k,x) x γ) − p_{S_{k,l}}(θ̂_k − x)]`.
pub fn discrete_kernel_calk(ck: &ChainKernels, k: usize, l: usize, x: f64, y: f64) -> Result<f64> {
    ck.check_indices(k, l)?;
    let path = ck.euler_path(k, l, y)?;
    let s = ck.sum(k, l)?;
    let g = ck.gamma(k + 1);
    Ok((s.pdf(path[1] - x - ck.b(k, x) * g) - s.pdf(path[0] - x)) / g)
}

/// `𝒦_N` by direct quadrature of `γ^{−1}∫[φ(z) − φ(x)](p_N − p̃_N)(t_k, t_{k+1}, x, z) dz`
/// with `φ = p̃_N(t_{k+1}, t_l, ·, y)`. Needs `k + 1 < l`.
pub fn discrete_kernel_calk_direct(ck: &ChainKernels, k: usize, l: usize, x: f64, y: f64, cfg: &QuadConfig) -> Result<f64> {
    ck.check_indices(k + 1, l)?;
    let path = ck.euler_path(k, l, y)?;
    let s_next = ck.sum(k + 1, l)?;
    let g = ck.gamma(k + 1);
    let inc_true = ck.b(k, x) * g;
    let inc_frozen = path[1] - path[0];
    let phi = |z: f64| s_next.pdf(path[1] - z);
    let phi_x = phi(x);
    let sd = ck.sigma() * g.sqrt();
    let windows = [(x + inc_true, sd), (x + inc_frozen, sd)];
    let rule = GaussRule::new(cfg.gl_nodes.max(8));
    let r = cfg.width_sd.max(20.0);
    let val = windowed_integral(&rule, &windows, r, cfg.panels_per_sd.max(4.0), |z| {
        (phi(z) - phi_x) * (one_step_density(ck, k, x, z).unwrap_or(0.0) - frozen_one_step(ck, k, x, z, inc_frozen))
    });
    Ok(val / g)
}

/// `K_N(t_k, t_l, x, y) = (F_N(t_k,x)x − F_N(t_{k+1}, θ̂_{k+1})θ̂_{k+1}) ∂_x p̃_N(t_{k+1}, t_l, x, y)`.
/// Needs `k + 1 < l`.
pub fn discrete_kernel_k(ck: &ChainKernels, k: usize, l: usize, x: f64, y: f64) -> Result<f64> {
    ck.check_indices(k + 1, l)?;
    let path = ck.euler_path(k, l, y)?;
    let g = ck.gamma(k + 1);
    let frozen = (path[1] - path[0]) / g;
    let dp = -ck.sum(k + 1, l)?.eval(1, path[1] - x);
    Ok((ck.b(k, x) - frozen) * dp)
}

/// `M_N = 𝒦_N − K_N`.
pub fn discrete_kernel_m(ck: &ChainKernels, k: usize, l: usize, x: f64, y: f64) -> Result<f64> {
    Ok(discrete_kernel_calk(ck, k, l, x, y)? - discrete_kernel_k(ck, k, l, x, y)?)
}

/// `(γ/2) ∂²_x p̃_N(t_{k+1}, t_l, x, y) ((F_N(t_k,x)x)² − (F_N(t_{k+1},θ̂_{k+1})θ̂_{k+1})²)`.
pub fn discrete_second_order_term(ck: &ChainKernels, k: usize, l: usize, x: f64, y: f64) -> Result<f64> {
    ck.check_indices(k + 1, l)?;
    let path = ck.euler_path(k, l, y)?;
    let g = ck.gamma(k + 1);
    let frozen = (path[1] - path[0]) / g;
    let d2 = ck.sum(k + 1, l)?.eval(2, path[1] - x);
    let b = ck.b(k, x);
    Ok(0.5 * g * d2 * (b * b - frozen * frozen))
}

/// `f ⊗_N g (t_i, t_j, x, y) = Σ_{k=i}^{j−1} γ_{k+1} ∫ f(t_i, t_k, x, z) g(t_k, t_j, z, y) dz`.
///
/// `f` and `g` are given as functions of `(k, z)`. `f(t_i, t_i, x, ·)` is the Dirac
/// mass at `x`, so the `k = i` term is `γ_{i+1} g(i, x)`. `g = None` is the
/// identity kernel, for which the result is `f(j, y)`. `window(k)` lists the
/// `(centre, sd)` pairs locating the integrand at step `k`.
pub fn conv_discrete(
    f: &(dyn Fn(usize, f64) -> f64 + Sync),
    g: Option<&(dyn Fn(usize, f64) -> f64 + Sync)>,
    i: usize,
    j: usize,
    x: f64,
    y: f64,
    grid: &TimeGrid,
    window: &(dyn Fn(usize) -> Vec<(f64, f64)> + Sync),
    cfg: &QuadConfig,
) -> Result<f64> {
    if i >= j || j > grid.m_of_n {
        return Err(Error::Invalid(format!("need i < j ≤ M, got i={i}, j={j}")));
    }
    let Some(g) = g else {
        return Ok(f(j, y));
    };
    let rule = GaussRule::new(cfg.gl_nodes);
    let mut total = grid.gammas[i + 1] * g(i, x);
    for k in i + 1..j {
        let w = window(k);
        total += grid.gammas[k + 1] * windowed_integral(&rule, &w, cfg.width_sd, cfg.panels_per_sd, |z| f(k, z) * g(k, z));
    }
    if !total.is_finite() {
        return Err(Error::Quadrature("non-finite discrete convolution".into()));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSeriesConfig {
    pub r_max: usize,
    pub zeta_half_width: f64,
    pub zeta_step: f64,
    pub width_sd: f64,
    pub gl_nodes: usize,
    pub panels_per_sd: f64,
}

impl Default for DiscreteSeriesConfig {
    fn default() -> Self {
        Self { r_max: 3, zeta_half_width: 9.0, zeta_step: 0.1, width_sd: 9.0, gl_nodes: 6, panels_per_sd: 1.0 }
    }
}

/// Partial sums of `Σ_r p̃_N ⊗_N 𝒦_N^{(r)}` from `t_i` to `t_M` on `x_nodes × y_nodes`.
pub fn series_discrete(
    ck: &ChainKernels,
    i: usize,
    x_nodes: &[f64],
    y_nodes: &[f64],
    cfg: &DiscreteSeriesConfig,
) -> Result<SeriesAccumulator> {
    let m = ck.m();
    if i >= m {
        return Err(Error::Invalid(format!("start index {i} must be below M = {m}")));
    }
    if cfg.r_max > m - i {
        return Err(Error::Invalid(format!("r_max {} exceeds the {} remaining steps", cfg.r_max, m - i)));
    }
    if x_nodes.is_empty() || y_nodes.is_empty() {
        return Err(Error::Invalid("empty evaluation grid".into()));
    }
    let mut per_x = Vec::with_capacity(x_nodes.len());
    for &x in x_nodes {
        per_x.push(discrete_terms_at(ck, i, x, y_nodes, cfg)?);
    }
    let grid = ck.grid();
    let terms = (0..=cfg.r_max)
        .map(|r| DensityGrid {
            x_nodes: x_nodes.to_vec(),
            y_nodes: y_nodes.to_vec(),
            values: per_x.iter().map(|p| p[r].clone()).collect(),
            stderr: vec![vec![0.0; y_nodes.len()]; x_nodes.len()],
            meta: GridMeta { t: grid.points[i], t_term: grid.points[m], method: format!("discrete parametrix term {r}") },
        })
        .collect();
    SeriesAccumulator::from_terms(terms, grid.points[m] - grid.points[i])
}

struct DTarget {
    l: usize,
    w: f64,
    path: Vec<f64>,
}

/// Terms `(p̃_N ⊗_N 𝒦_N^{(r)})(t_i, t_M, x, y)` for `r = 0..=r_max`, by forward
/// recursion `Ξ_{r+1}(t_l, w) = Σ_{k<l} γ_{k+1} ∫ Ξ_r(t_k, z) 𝒦_N(t_k, t_l, z, w) dz`.
/// Each `Ξ_r(t_l, ·)` is stored on a uniform grid in `(w − c_l)/(σ√(t_l − t_i))`
/// around the noise-free forward path `c`.
pub fn discrete_terms_at(ck: &ChainKernels, i: usize, x: f64, ys: &[f64], cfg: &DiscreteSeriesConfig) -> Result<Vec<Vec<f64>>> {
    let m = ck.m();
    let grid = ck.grid();
    let sigma = ck.sigma();
    let mut c = vec![0.0; m + 1];
    c[i] = x;
    for k in i..m {
        c[k + 1] = c[k] + ck.b(k, c[k]) * ck.gamma(k + 1);
    }
    let scale: Vec<f64> = (0..=m).map(|k| sigma * (grid.points[k] - grid.points[i]).max(0.0).sqrt()).collect();
    let nz = (2.0 * cfg.zeta_half_width / cfg.zeta_step).round() as usize + 1;
    let z0 = -cfg.zeta_half_width;

    // warm the sum densities in parallel
    let pairs: Vec<(usize, usize)> = (i + 1..=m).flat_map(|l| (i..l).map(move |k| (k, l))).collect();
    pairs.par_iter().try_for_each(|&(k, l)| ck.sum(k, l).map(|_| ()))?;

    let mut targets = Vec::with_capacity((m - i) * nz + ys.len());
    for l in i + 1..m {
        for b in 0..nz {
            targets.push(DTarget { l, w: c[l] + scale[l] * (z0 + b as f64 * cfg.zeta_step), path: Vec::new() });
        }
    }
    let n_store = targets.len();
    for &y in ys {
        targets.push(DTarget { l: m, w: y, path: Vec::new() });
    }
    targets.par_iter_mut().try_for_each(|tg| -> Result<()> {
        tg.path = ck.euler_path(i, tg.l, tg.w)?;
        Ok(())
    })?;

    // Ξ_0 on storage, stored per l
    let mut store: Vec<f64> = targets[..n_store]
        .iter()
        .map(|tg| ck.sum(i, tg.l).map(|s| s.pdf(tg.path[0] - x)))
        .collect::<Result<_>>()?;
    let mut out = vec![vec![0.0; ys.len()]; cfg.r_max + 1];
    for (j, tg) in targets[n_store..].iter().enumerate() {
        out[0][j] = ck.sum(i, m)?.pdf(tg.path[0] - x);
    }
    let rule = GaussRule::new(cfg.gl_nodes);
    let b_start = ck.b(i, x) * ck.gamma(i + 1);

    for r in 0..cfg.r_max {
        let need_store = r + 1 < cfg.r_max;
        let range = if need_store { 0..targets.len() } else { n_store..targets.len() };
        let prev = &store;
        let vals: Vec<f64> = targets[range]
            .par_iter()
            .map(|tg| {
                let l = tg.l;
                let p = &tg.path;
                let mut acc = 0.0;
                if r == 0 {
                    let s = ck.sum(i, l).expect("warmed");
                    acc += s.pdf(p[1] - x - b_start) - s.pdf(p[0] - x);
                }
                if r == 0 && l == i + 1 {
                    return acc;
                }
                for k in i + 1..l {
                    let s = ck.sum(k, l).expect("warmed");
                    let sd_s = s.sd();
                    let th_k = p[k - i];
                    let th_k1 = p[k + 1 - i];
                    let g = ck.gamma(k + 1);
                    let lo = (th_k - cfg.width_sd * sd_s).max(c[k] - cfg.zeta_half_width * scale[k]);
                    let hi = (th_k + cfg.width_sd * sd_s).min(c[k] + cfg.zeta_half_width * scale[k]);
                    if hi <= lo {
                        continue;
                    }
                    let row = &prev[(k - i - 1) * nz..(k - i) * nz];
                    let panels = ((hi - lo) / sd_s.min(scale[k]) * cfg.panels_per_sd).ceil().max(1.0) as usize;
                    let step = (hi - lo) / panels as f64;
                    for q in 0..panels {
                        let a0 = lo + q as f64 * step;
                        acc += rule.integrate(a0, a0 + step, |z| {
                            let xi = interp(row, (z - c[k]) / scale[k], z0, cfg.zeta_step);
                            xi * (s.pdf(th_k1 - z - ck.b(k, z) * g) - s.pdf(th_k - z))
                        });
                    }
                }
                acc
            })
            .collect();
        if need_store {
            store = vals[..n_store].to_vec();
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

#[inline]
fn interp(row: &[f64], zeta: f64, z0: f64, h: f64) -> f64 {
    let n = row.len();
    let s = (zeta - z0) / h;
    if !(0.0..=(n - 1) as f64).contains(&s) {
        return 0.0;
    }
    let i = (s.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
    lagrange6(&row[i..i + 6], s - i as f64)
}
