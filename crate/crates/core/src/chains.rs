//! Stochastic simulation: the Robbins-Monro recursion, the renormalized chain
//! `U^N`, the cut-off chain `V^N`, their coupling and the generator diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{CutoffDrift, DeltaRule, FlowBundle};
use crate::model::{build_grid, CutoffRule, InnovationSpec, ModelSpec, StepFamily, StepSchedule, TimeGrid};
use crate::quad::{composite, GaussRule};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Rm,
    U,
    V,
}

/// Simulated paths, one row per path over `t_0, …, t_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub kind: PathKind,
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
}

/// `θ_{n+1} = θ_n − γ_{n+1} σ (m(θ_n) − η_{n+1})` for `n_steps` steps of the
/// (shifted) schedule, starting at `θ_0`.
pub fn simulate_rm(
    model: &ModelSpec,
    schedule: &StepSchedule,
    innovations: &InnovationSpec,
    n_steps: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::Invalid("n_steps must be at least 1".into()));
    }
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut th = model.theta0;
    path.push(th);
    for n in 0..n_steps {
        let g = schedule.gamma(n as u64 + 1);
        let eta = innovations.sample(rng);
        th -= g * model.sigma * ((model.m)(th) - eta);
        if !th.is_finite() {
            return Err(Error::NonFinite { step: n + 1 });
        }
        path.push(th);
    }
    Ok(path)
}

/// `U_k = (θ_k^N − θ̄_{t_k}) / √γ_k^N` for each shifted path.
pub fn renormalize(shifted: &[Vec<f64>], flows: &FlowBundle, grid: &TimeGrid, seed: u64) -> Result<PathEnsemble> {
    let m = grid.m_of_n;
    let centre: Vec<f64> = grid.points.iter().map(|&t| flows.theta_bar(t)).collect();
    let mut paths = Vec::with_capacity(shifted.len());
    for p in shifted {
        if p.len() != m + 1 {
            return Err(Error::GridMismatch(format!("path has {} points, grid {}", p.len(), m + 1)));
        }
        paths.push((0..=m).map(|k| (p[k] - centre[k]) / grid.gammas[k].sqrt()).collect());
    }
    Ok(PathEnsemble { kind: PathKind::U, paths, seed })
}

/// `β_{k+1} = √γ_{k+1} (h(θ̄_{t_k}) − (θ̄_{t_{k+1}} − θ̄_{t_k}) / γ_{k+1})`.
pub fn beta_term(k: usize, flows: &FlowBundle, grid: &TimeGrid) -> f64 {
    let g = grid.gammas[k + 1];
    let a = flows.theta_bar(grid.points[k]);
    let b = flows.theta_bar(grid.points[k + 1]);
    g.sqrt() * (flows.model.h(a) - (b - a) / g)
}

/// `β_1, …, β_M`.
pub fn beta_terms(flows: &FlowBundle, grid: &TimeGrid) -> Vec<f64> {
    (0..grid.m_of_n).map(|k| beta_term(k, flows, grid)).collect()
}

/// Terms of one step of `U`: `(drift, noise, beta)` with
/// `U_{k+1} = U_k + drift + noise + beta`.
pub fn u_step_terms(drift: &CutoffDrift, k: usize, u: f64, xi: f64) -> (f64, f64, f64) {
    let grid = &drift.grid;
    let g1 = grid.gammas[k + 1];
    let tb = drift.flows.theta_bar(grid.points[k]);
    (drift.g_at(k, tb, u) * u * g1, g1.sqrt() * xi, beta_term(k, &drift.flows, grid))
}

/// Per-step constants shared by all paths.
struct StepTable {
    theta_bar: Vec<f64>,
    gamma: Vec<f64>,
    sqrt_gamma: Vec<f64>,
}

impl StepTable {
    fn new(drift: &CutoffDrift) -> Self {
        let g = &drift.grid;
        Self {
            theta_bar: g.points.iter().map(|&t| drift.flows.theta_bar(t)).collect(),
            gamma: g.gammas.clone(),
            sqrt_gamma: g.gammas.iter().map(|x| x.sqrt()).collect(),
        }
    }
}

/// Runs `V` from `(t_{k0}, x0)` to `t_M` on one stream, calling `visit(k, v)` at each point.
fn run_v<F: FnMut(usize, f64)>(
    drift: &CutoffDrift,
    tab: &StepTable,
    innovations: &InnovationSpec,
    k0: usize,
    x0: f64,
    rng: &mut Stream,
    mut visit: F,
) -> Result<f64> {
    let sigma = drift.model().sigma;
    let mut v = x0;
    visit(k0, v);
    for k in k0..drift.grid.m_of_n {
        let xi = sigma * innovations.sample(rng);
        v += drift.f_at(k, tab.theta_bar[k], v) * v * tab.gamma[k + 1] + tab.sqrt_gamma[k + 1] * xi;
        if !v.is_finite() {
            return Err(Error::NonFinite { step: k + 1 });
        }
        visit(k + 1, v);
    }
    Ok(v)
}

/// Full paths of `V_{k+1} = V_k + F_N(t_k, V_k) V_k γ_{k+1} + √γ_{k+1} ξ_{k+1}` from `(0, x0)`.
pub fn simulate_v(drift: &CutoffDrift, innovations: &InnovationSpec, x0: f64, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    let fast = drift.clone().with_rule(DeltaRule::Secant);
    let tab = StepTable::new(&fast);
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut p = Vec::with_capacity(fast.grid.m_of_n + 1);
            run_v(&fast, &tab, innovations, 0, x0, &mut rng, |_, v| p.push(v))?;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble { kind: PathKind::V, paths, seed })
}

/// Terminal values `V_{t_M}` started from `(t_{k0}, x0)`.
pub fn simulate_v_terminal(
    drift: &CutoffDrift,
    innovations: &InnovationSpec,
    k0: usize,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let fast = drift.clone().with_rule(DeltaRule::Secant);
    let tab = StepTable::new(&fast);
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            run_v(&fast, &tab, innovations, k0, x0, &mut rng, |_, _| {})
        })
        .collect()
}

/// Probabilities estimated by [`coupling_experiment`] for one N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub n: u64,
    pub gamma0: f64,
    pub a_n: f64,
    pub threshold: f64,
    pub prob_exceed: f64,
    pub stderr: f64,
    pub exit_fraction: f64,
    pub exit_stderr: f64,
    /// Paths on which the pathwise bound before exit failed (should be 0).
    pub bound_violations: usize,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub c: f64,
    pub rows: Vec<CouplingRow>,
}

/// Settings of [`coupling_experiment`].
#[derive(Debug, Clone)]
pub struct CouplingConfig {
    pub family: StepFamily,
    pub horizon: f64,
    pub n_list: Vec<u64>,
    pub cutoff: CutoffRule,
    /// Threshold constant; `None` uses the β-sum constant times `e^{LT}`.
    pub c: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub ode_tol: f64,
}

/// Sup of `|∂_x(F_N(t,x) x)|` over grid times and a spatial scan.
pub fn lipschitz_constant(drift: &CutoffDrift) -> f64 {
    let g = &drift.grid;
    let reach = if drift.a_n.is_finite() { drift.a_n * 1.5 } else { 20.0 };
    let stride = (g.m_of_n / 50).max(1);
    let mut l = 0.0f64;
    for k in (0..=g.m_of_n).step_by(stride) {
        for i in 0..=200 {
            let x = -reach + 2.0 * reach * i as f64 / 200.0;
            l = l.max(drift.db_dx(g.points[k], x).abs());
        }
    }
    l
}

/// Estimates `P(sup_k |U_k − V_k| > C√γ_0^N)` and `P(τ_{a_N} ≤ M(N))` with shared noise.
pub fn coupling_experiment(
    model: &ModelSpec,
    innovations: &InnovationSpec,
    cfg: &CouplingConfig,
) -> Result<CouplingReport> {
    if cfg.n_paths < 100 {
        return Err(Error::Invalid("coupling needs at least 100 paths".into()));
    }
    let mut setups = Vec::new();
    for &n in &cfg.n_list {
        let sched = StepSchedule::new(cfg.family, n, cfg.horizon);
        let grid = build_grid(&sched)?;
        let flows = FlowBundle::solve(model, grid.t_n, cfg.ode_tol)?;
        let a_n = cfg.cutoff.level(grid.gamma0());
        let drift = CutoffDrift::new(&flows, &grid, a_n).with_rule(DeltaRule::Secant);
        let betas = beta_terms(&flows, &grid);
        setups.push((n, grid, drift, betas));
    }
    let c = match cfg.c {
        Some(c) => c,
        None => {
            let mut cb = 0.0f64;
            let mut lip = 0.0f64;
            for (_, grid, drift, betas) in &setups {
                cb = cb.max(betas.iter().map(|b| b.abs()).sum::<f64>() / grid.gamma0().sqrt());
                lip = lip.max(lipschitz_constant(drift));
            }
            cb * (lip * cfg.horizon).exp()
        }
    };
    let mut rows = Vec::new();
    for (n, grid, drift, betas) in &setups {
        let tab = StepTable::new(drift);
        let lip = lipschitz_constant(drift);
        let thr = c * grid.gamma0().sqrt();
        let m = grid.m_of_n;
        // pathwise envelope Π(1+Lγ_{i+1}) Σ|β_i|
        let mut env = vec![0.0; m + 1];
        let (mut prod, mut sum) = (1.0, 0.0);
        for k in 1..=m {
            sum += betas[k - 1].abs();
            env[k] = prod * sum;
            prod *= 1.0 + lip * grid.gammas[(k + 1).min(m + 1)];
        }
        let outcomes = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(cfg.seed ^ n.wrapping_mul(0x9E37_79B9), i as u64);
                let sigma = model.sigma;
                let mut th = model.theta0;
                let mut v = (th - tab.theta_bar[0]) / tab.sqrt_gamma[0];
                let mut sup_gap = 0.0f64;
                let mut exited = false;
                let mut violated = false;
                for k in 0..m {
                    let eta = innovations.sample(&mut rng);
                    th -= tab.gamma[k + 1] * sigma * ((model.m)(th) - eta);
                    v += drift.f_at(k, tab.theta_bar[k], v) * v * tab.gamma[k + 1] + tab.sqrt_gamma[k + 1] * sigma * eta;
                    let u = (th - tab.theta_bar[k + 1]) / tab.sqrt_gamma[k + 1];
                    if !u.is_finite() || !v.is_finite() {
                        return Err(Error::NonFinite { step: k + 1 });
                    }
                    let gap = (u - v).abs();
                    sup_gap = sup_gap.max(gap);
                    if !exited && gap > env[k + 1] * (1.0 + 1e-9) + 1e-12 {
                        violated = true;
                    }
                    if v.abs() >= drift.a_n {
                        exited = true;
                    }
                }
                Ok((sup_gap, exited, violated))
            })
            .collect::<Result<Vec<_>>>()?;
        let np = cfg.n_paths as f64;
        let exceed = outcomes.iter().filter(|o| o.0 > thr).count() as f64 / np;
        let exit = outcomes.iter().filter(|o| o.1).count() as f64 / np;
        rows.push(CouplingRow {
            n: *n,
            gamma0: grid.gamma0(),
            a_n: drift.a_n,
            threshold: thr,
            prob_exceed: exceed,
            stderr: (exceed * (1.0 - exceed) / np).sqrt(),
            exit_fraction: exit,
            exit_stderr: (exit * (1.0 - exit) / np).sqrt(),
            bound_violations: outcomes.iter().filter(|o| o.2).count(),
            max_gap: outcomes.iter().map(|o| o.0).fold(0.0, f64::max),
        });
    }
    Ok(CouplingReport { c, rows })
}

/// Stroock-Varadhan quantities of the one-step kernel `Π_γ(x, ·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvDiagnostics {
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub delta_gamma: f64,
    pub gamma: f64,
}

/// `a_γ`, `b_γ`, `Δ_γ^ε` at `(t, x)`, with `γ = γ_{k(t)+1}` and the kernel
/// `Π_γ(x, dy) = γ^{−1/2} ρ_ξ((y − x − F_N(t,x) x γ)/√γ) dy`.
pub fn sv_diagnostics(drift: &CutoffDrift, innovations: &InnovationSpec, t: f64, x: f64, eps: f64) -> Result<SvDiagnostics> {
    if !(eps > 0.0) {
        return Err(Error::Invalid("epsilon must be positive".into()));
    }
    let k = drift.grid.index_of(t);
    let g = drift.grid.gammas[(k + 1).min(drift.grid.gammas.len() - 1)];
    let sg = g.sqrt();
    let mu = drift.f(t, x) * x * g;
    let sigma = drift.model().sigma;
    let rule = GaussRule::new(20);
    let r = innovations.support_radius() * sigma;
    // with y − x = μ + √γ u, u has density ρ_ξ
    let integrate = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let (lo, hi) = (lo.max(-r), hi.min(r));
        if hi <= lo {
            return 0.0;
        }
        let panels = (((hi - lo) / (0.25 * sigma)).ceil() as usize).clamp(1, 4000);
        composite(&rule, lo, hi, panels, |u| f(u) * innovations.rho_xi(u, sigma))
    };
    let lo1 = (-1.0 - mu) / sg;
    let hi1 = (1.0 - mu) / sg;
    let a = integrate(lo1, hi1, &|u| (mu + sg * u).powi(2)) / g;
    let b = integrate(lo1, hi1, &|u| mu + sg * u) / g;
    let inside = integrate((-eps - mu) / sg, (eps - mu) / sg, &|_| 1.0);
    let delta = ((1.0 - inside) / g).max(0.0);
    if !(a.is_finite() && b.is_finite() && delta.is_finite()) {
        return Err(Error::Quadrature("non-finite diagnostic".into()));
    }
    Ok(SvDiagnostics { a_gamma: a, b_gamma: b, delta_gamma: delta, gamma: g })
}

/// `ε_N = (γ_{M(N)}^N)^{3/8}`.
pub fn epsilon_n(grid: &TimeGrid) -> f64 {
    grid.gammas[grid.m_of_n].powf(0.375)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InnovationLaw;

    fn setup(n: u64) -> CutoffDrift {
        let m = ModelSpec::sine_perturbed(0.2, 1.0, 1.0);
        let s = StepSchedule::new(StepFamily::Harmonic { c: 1.0 }, n, 1.0);
        let g = build_grid(&s).unwrap();
        let f = FlowBundle::solve(&m, g.t_n, 1e-10).unwrap();
        CutoffDrift::new(&f, &g, CutoffRule::default().level(g.gamma0()))
    }

    #[test]
    fn frozen_when_sigma_zero() {
        let m = ModelSpec::linear(1.0, 1.0, 0.7).with_sigma(0.0);
        let s = StepSchedule::new(StepFamily::Harmonic { c: 1.0 }, 10, 1.0);
        let p = simulate_rm(&m, &s, &InnovationSpec::gaussian(), 50, &mut stream(1, 0)).unwrap();
        assert!(p.iter().all(|&x| x == 0.7));
    }

    #[test]
    fn noise_free_is_explicit_euler() {
        let m = ModelSpec::sine_perturbed(0.2, 1.0, 1.0);
        let s = StepSchedule::new(StepFamily::Harmonic { c: 1.0 }, 10, 1.0);
        let p = simulate_rm(&m, &s, &InnovationSpec::new(InnovationLaw::Zero), 30, &mut stream(1, 0)).unwrap();
        let mut x = 1.0;
        for n in 0..30 {
            x += s.gamma(n + 1) * m.h(x);
            assert_eq!(p[n as usize + 1], x);
        }
    }

    #[test]
    fn one_step_decomposition_is_exact() {
        let d = setup(50);
        let model = d.model().clone();
        let grid = d.grid.clone();
        let mut rng = stream(3, 0);
        let inn = InnovationSpec::logistic();
        let mut th = vec![model.theta0];
        let mut etas = Vec::new();
        for k in 0..grid.m_of_n {
            let e = inn.sample(&mut rng);
            etas.push(e);
            let x = th[k] - grid.gammas[k + 1] * model.sigma * ((model.m)(th[k]) - e);
            th.push(x);
        }
        let u = renormalize(&[th], &d.flows, &grid, 3).unwrap().paths.remove(0);
        for k in 0..grid.m_of_n {
            let (a, b, c) = u_step_terms(&d, k, u[k], model.sigma * etas[k]);
            let rebuilt = u[k] + a + b + c;
            assert!((rebuilt - u[k + 1]).abs() < 1e-9 * (1.0 + u[k + 1].abs()), "k={k}");
        }
    }

    #[test]
    fn sv_diagnostics_approach_limits() {
        let inn = InnovationSpec::gaussian();
        let mut prev_a = f64::INFINITY;
        for n in [100, 1600] {
            let d = setup(n);
            let s = sv_diagnostics(&d, &inn, 0.3, 1.5, 0.5).unwrap();
            let gap = (s.a_gamma - 1.0).abs();
            assert!(gap < prev_a);
            prev_a = gap;
            assert!((s.b_gamma - d.flows.a_coef(0.3) * 1.5).abs() < 0.05);
        }
    }
}
