//! Acceptance criteria at their stated tolerances. Prints one PASS/FAIL line per
//! criterion. Exits non-zero on failure only when `RMLLT_ACCEPTANCE_STRICT=1`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use rmllt::chains::{coupling_experiment, simulate_v_terminal, sv_diagnostics, CouplingConfig};
use rmllt::diffusions::{
    density_p, frozen_density_p_tilde, frozen_density_q_tilde, g_sigma, sample_limit_sde, simulate_cutoff_sde,
};
use rmllt::estimate::{fit_rate, kde, linspace, max_z_score, Bandwidth};
use rmllt::model::alpha;
use rmllt::parametrix::{
    backward_flow, discrete_kernel_calk, discrete_kernel_calk_direct, discrete_kernel_k, discrete_terms_at,
    frozen_chain_density, innovation_sum_density, kernel_h, kernel_h_n, series_continuous, series_discrete,
    series_terms_at, ChainKernels, ContinuousSeriesConfig, DiscreteSeriesConfig, LimitDrift, QuadConfig,
};
use rmllt::*;

/// Density comparisons use an undersmoothed KDE so that smoothing bias stays
/// well below the standard error.
const KDE_RULE: Bandwidth = Bandwidth::ScaledSilverman(0.5);
const PATHS: usize = 1_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Ctx {
    fb: FlowBundle,
    drift: CutoffDrift,
}

fn ctx(model: &ModelSpec, family: StepFamily, n: u64) -> Ctx {
    let grid = build_grid(&StepSchedule::new(family, n, 1.0)).unwrap();
    let fb = FlowBundle::solve(model, grid.t_n, 1e-12).unwrap();
    let drift = CutoffDrift::new(&fb, &grid, CutoffRule::default().level(grid.gamma0())).with_rule(DeltaRule::Secant);
    Ctx { fb, drift }
}

fn harmonic() -> StepFamily {
    StepFamily::Harmonic { c: 1.0 }
}

fn sine() -> ModelSpec {
    Preset::SineLogistic.model()
}

fn c1_alpha_limit() -> Outcome {
    let s = StepSchedule::new(StepFamily::HarmonicLog, 10_000, 1.0);
    // Σγ ≈ ln ln(N + k) − ln ln N, so M(N) ≈ N^{e^T}; far too many steps to build the grid
    let m_of_n = (10_000f64.powf(1f64.exp()) - 10_000.0) as u64;
    let mut worst: f64 = 0.0;
    let mut k = 0u64;
    while k <= m_of_n {
        worst = worst.max((alpha(k, &s) - 0.5).abs());
        k = if k < 10 { k + 1 } else { k + k / 10 };
    }
    worst = worst.max((alpha(m_of_n, &s) - 0.5).abs());
    let harmonic = StepSchedule::new(harmonic(), 10_000, 1.0);
    let m = build_grid(&harmonic).unwrap().m_of_n as u64;
    let h_worst = (0..=m).map(|k| (alpha(k, &harmonic) - 0.5).abs()).fold(0.0, f64::max);
    outcome(
        worst < 0.05,
        format!("max |alpha - 1/2| = {worst:.3} over k <= M(N) = {m_of_n:.2e} for 1/(k ln k), N = 1e4 (for 1/k: {h_worst:.2e})"),
    )
}

fn c2_closed_form_anchor() -> Outcome {
    let fb = FlowBundle::solve(&Preset::LinearGaussian.model(), 1.0, 1e-12).unwrap();
    let nodes = linspace(-3.0, 3.0, 61);
    let mut worst: f64 = 0.0;
    for (i, &x) in nodes.iter().enumerate() {
        let s = sample_limit_sde(&fb, 0.0, 1.0, x, PATHS, 1000 + i as u64).unwrap();
        let est = kde(&s, KDE_RULE, &nodes).unwrap();
        let exact: Vec<f64> = nodes.iter().map(|&y| density_p(&fb, 0.0, 1.0, x, y).unwrap()).collect();
        worst = worst.max(max_z_score(&est, &exact));
    }
    outcome(worst < 3.0, format!("sup |kde - p| / se = {worst:.3} over 61x61"))
}

fn c3_flow_distance() -> Outcome {
    let ys: Vec<f64> = linspace(-3.0, 3.0, 25).into_iter().filter(|y| y.abs() > 1e-9).collect();
    let mut pts = Vec::new();
    let mut pts_root = Vec::new();
    for n in [50u64, 100, 200, 400, 800] {
        let c = ctx(&sine(), harmonic(), n);
        let tt = c.drift.grid.t_n;
        let mut sup: f64 = 0.0;
        for &y in &ys {
            let limit = rmllt::flows::backward_flow_limit(&c.fb, tt, y, 1e-12).unwrap();
            let cut = c.drift.backward_flow_cutoff(tt, y, 1e-12).unwrap();
            for &t in &linspace(0.0, tt, 41) {
                sup = sup.max((limit.eval(t) - cut.eval(t)).abs() / y.abs());
            }
        }
        let g0 = c.drift.grid.gamma0();
        pts.push((c.drift.a_n * g0.sqrt(), sup));
        pts_root.push((g0.sqrt(), sup));
    }
    let fit = fit_rate(&pts).unwrap();
    let root = fit_rate(&pts_root).unwrap();
    outcome(
        (0.85..=1.15).contains(&fit.slope) && fit.r2 > 0.98,
        format!("slope vs a_N sqrt(gamma0) = {:.3}, r2 = {:.4} (vs sqrt(gamma0): {:.3})", fit.slope, fit.r2, root.slope),
    )
}

fn c4_coupling() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for preset in [Preset::LinearGaussian, Preset::SineLogistic] {
        let cfg = CouplingConfig {
            family: preset.family(),
            horizon: 1.0,
            n_list: vec![50, 100, 200, 400, 800],
            cutoff: CutoffRule::default(),
            c: None,
            n_paths: 10_000,
            seed: 44,
            ode_tol: 1e-10,
        };
        let rep = coupling_experiment(&preset.model(), &preset.innovations(), &cfg).unwrap();
        let pe: Vec<f64> = rep.rows.iter().map(|r| r.prob_exceed).collect();
        let px: Vec<f64> = rep.rows.iter().map(|r| r.exit_fraction).collect();
        let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        let ok = dec(&pe) && dec(&px) && *pe.last().unwrap() < 0.05 && *px.last().unwrap() < 0.05;
        pass &= ok;
        let viol: usize = rep.rows.iter().map(|r| r.bound_violations).sum();
        lines.push(format!("{preset:?}: C = {:.3}, P(gap) = {pe:?}, P(exit) = {px:?}, envelope violations = {viol}", rep.c));
    }
    outcome(pass, lines.join("; "))
}

fn c5_stroock_varadhan() -> Outcome {
    let sup = |n: u64| {
        let c = ctx(&sine(), harmonic(), n);
        let tt = c.drift.grid.t_n;
        let sigma2 = c.fb.model.sigma.powi(2);
        let (mut da, mut db) = (0.0f64, 0.0f64);
        for &t in &linspace(0.0, tt * (1.0 - 1e-9), 21) {
            for &x in &linspace(-2.0, 2.0, 21) {
                let d = sv_diagnostics(&c.drift, &InnovationSpec::logistic(), t, x, 1.0).unwrap();
                da = da.max((d.a_gamma - sigma2).abs());
                db = db.max((d.b_gamma - c.fb.a_coef(t) * x).abs());
            }
        }
        (da, db)
    };
    let (a0, b0) = sup(50);
    let (a1, b1) = sup(3200);
    outcome(
        a0 / a1 >= 4.0 && b0 / b1 >= 4.0,
        format!("|a - s2|: {a0:.3e} -> {a1:.3e} ({:.1}x); |b - Ax|: {b0:.3e} -> {b1:.3e} ({:.1}x); N 50 -> 3200", a0 / a1, b0 / b1),
    )
}

/// Largest excess of `|series − kde|` over `3 se + tail`, as a multiple of the allowance.
fn tolerance_check(series: &[f64], est: &rmllt::estimate::Kde1, tail: f64) -> (bool, f64) {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (j, &s) in series.iter().enumerate() {
        let se = est.stderr_at(est.values[j].max(s));
        let allow = 3.0 * se + tail;
        let gap = (s - est.values[j]).abs();
        ok &= gap < allow;
        worst = worst.max(gap / allow);
    }
    (ok, worst)
}

fn c6_continuous_parametrix() -> Outcome {
    let c = ctx(&sine(), harmonic(), 50);
    let tt = c.drift.grid.t_n;
    let xs = [-1.0, 0.5, 1.5];
    let ys = linspace(-3.0, 3.0, 25);
    let cfg = ContinuousSeriesConfig { r_max: 3, ..Default::default() };
    let acc = series_continuous(&c.drift, 0.0, tt, &xs, &ys, &cfg).unwrap();
    let mut pass = acc.ratios_decay();
    let mut worst: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let samples = simulate_cutoff_sde(&c.drift, 0.0, tt, x, PATHS, 8 * c.drift.grid.m_of_n, 600 + i as u64).unwrap();
        let est = kde(&samples, KDE_RULE, &ys).unwrap();
        let (ok, w) = tolerance_check(&acc.sum().values[i], &est, acc.truncation_estimate);
        pass &= ok;
        worst = worst.max(w);
    }
    outcome(
        pass,
        format!(
            "N = 50, max gap / (3 se + tail) = {worst:.3}, tail = {:.2e}, term norms {}, ratio C = {:.3}, decay {}",
            acc.truncation_estimate,
            sci(&acc.term_norms),
            acc.ratio_constant,
            acc.ratios_decay()
        ),
    )
}

fn affine_gaussian(ck: &ChainKernels, x: f64) -> (f64, f64) {
    let (mut mean, mut var) = (x, 0.0);
    for k in 0..ck.m() {
        let a = 1.0 + ck.b(k, 1.0) * ck.gamma(k + 1);
        mean *= a;
        var = var * a * a + ck.sigma().powi(2) * ck.gamma(k + 1);
    }
    (mean, var)
}

fn c7_discrete_parametrix() -> Outcome {
    let c = ctx(&sine(), harmonic(), 50);
    let ck = ChainKernels::new(&c.drift, &InnovationSpec::logistic());
    let xs = [-1.0, 0.5, 1.5];
    let ys = linspace(-3.0, 3.0, 25);
    let acc = series_discrete(&ck, 0, &xs, &ys, &DiscreteSeriesConfig::default()).unwrap();
    let mut pass = acc.ratios_decay();
    let mut worst: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let v = simulate_v_terminal(&c.drift, &InnovationSpec::logistic(), 0, x, PATHS, 700 + i as u64).unwrap();
        let est = kde(&v, KDE_RULE, &ys).unwrap();
        let (ok, w) = tolerance_check(&acc.sum().values[i], &est, acc.truncation_estimate);
        pass &= ok;
        worst = worst.max(w);
    }
    // affine-Gaussian oracle
    let lin = ctx(&Preset::LinearGaussian.model(), harmonic(), 50);
    let lck = ChainKernels::new(&lin.drift, &InnovationSpec::gaussian());
    let x = 0.5;
    let (mean, var) = affine_gaussian(&lck, x);
    let exact: Vec<f64> = ys.iter().map(|&y| g_sigma(1.0, var, y - mean)).collect();
    let gap = |r_max: usize| {
        let terms = discrete_terms_at(&lck, 0, x, &ys, &DiscreteSeriesConfig { r_max, ..Default::default() }).unwrap();
        let acc = series_discrete(&lck, 0, &[x], &ys, &DiscreteSeriesConfig { r_max, ..Default::default() }).unwrap();
        let g = ys
            .iter()
            .enumerate()
            .map(|(j, _)| (terms.iter().map(|t| t[j]).sum::<f64>() - exact[j]).abs())
            .fold(0.0, f64::max);
        (g, acc.truncation_estimate)
    };
    let (g3, tail3) = gap(3);
    let (g8, tail8) = gap(8);
    pass &= g3 < 1e-5 + tail3 && g8 < 1e-5;
    outcome(
        pass,
        format!(
            "N = 50, max gap / (3 se + tail) = {worst:.3}, tail = {:.2e}; oracle: r=3 gap {g3:.2e} (tail {tail3:.2e}), r=8 gap {g8:.2e} (tail {tail8:.2e})",
            acc.truncation_estimate
        ),
    )
}

fn tail_weight(s: f64, tau: f64, flow: f64, x: f64) -> f64 {
    let st = tau.sqrt();
    1.0 / (st * (1.0 + (flow - x).abs() / st).powf(s - 7.0))
}

fn c8_chain_vs_cutoff_diffusion() -> Outcome {
    let x = 0.5;
    let ys = linspace(-3.0, 3.0, 25);
    let innov = InnovationSpec::logistic();
    let mut pts = Vec::new();
    let mut series_pts = Vec::new();
    for n in [25u64, 50, 100, 200] {
        let c = ctx(&sine(), harmonic(), n);
        let tt = c.drift.grid.t_n;
        let seed = 800 + n;
        let v = simulate_v_terminal(&c.drift, &innov, 0, x, PATHS, seed).unwrap();
        let xn = simulate_cutoff_sde(&c.drift, 0.0, tt, x, PATHS, 4 * c.drift.grid.m_of_n, seed).unwrap();
        let pn = kde(&v, KDE_RULE, &ys).unwrap();
        let qn = kde(&xn, KDE_RULE, &ys).unwrap();
        let flows: Vec<f64> = ys.iter().map(|&y| backward_flow(&c.drift, 0.0, tt, y, 1e-11).unwrap()).collect();
        let w = |j: usize| tail_weight(innov.smooth_order, tt, flows[j], x);
        let sup = (0..ys.len()).map(|j| (pn.values[j] - qn.values[j]).abs() / w(j)).fold(0.0, f64::max);
        pts.push((c.drift.grid.gamma0().sqrt(), sup));
        // the same gap from the two parametrix series
        let ck = ChainKernels::new(&c.drift, &innov);
        let d = discrete_terms_at(&ck, 0, x, &ys, &DiscreteSeriesConfig { r_max: 5, ..Default::default() }).unwrap();
        let q = series_terms_at(&c.drift, 0.0, tt, x, &ys, &ContinuousSeriesConfig { r_max: 5, ..Default::default() }).unwrap();
        let sup_s = (0..ys.len())
            .map(|j| (d.iter().map(|t| t[j]).sum::<f64>() - q.iter().map(|t| t[j]).sum::<f64>()).abs() / w(j))
            .fold(0.0, f64::max);
        series_pts.push((c.drift.grid.gamma0().sqrt(), sup_s));
    }
    let fit = fit_rate(&pts).unwrap();
    let sfit = fit_rate(&series_pts).unwrap();
    outcome(
        (0.7..=1.3).contains(&fit.slope),
        format!(
            "MC slope vs sqrt(gamma0) = {:.3} (sups {}); series-based slope = {:.3} (sups {})",
            fit.slope,
            sci(&pts.iter().map(|p| p.1).collect::<Vec<_>>()),
            sfit.slope,
            sci(&series_pts.iter().map(|p| p.1).collect::<Vec<_>>())
        ),
    )
}

fn c9_diffusion_vs_cutoff() -> Outcome {
    let ys = linspace(-2.5, 2.5, 11);
    let cfg = ContinuousSeriesConfig { r_max: 5, ..Default::default() };
    let mut pts = Vec::new();
    let mut root = Vec::new();
    for n in [50u64, 100, 200, 400, 800] {
        let c = ctx(&sine(), harmonic(), n);
        let tt = c.drift.grid.t_n;
        let mut sup: f64 = 0.0;
        for &y in &ys {
            let x = c.fb.limit_flow(0.0, tt, y);
            let q: f64 = series_terms_at(&c.drift, 0.0, tt, x, &[y], &cfg).unwrap().iter().map(|t| t[0]).sum();
            sup = sup.max((density_p(&c.fb, 0.0, tt, x, y).unwrap() - q).abs());
        }
        let g0 = c.drift.grid.gamma0();
        pts.push((c.drift.a_n * g0.sqrt(), sup));
        root.push((g0.sqrt(), sup));
    }
    let fit = fit_rate(&pts).unwrap();
    let rfit = fit_rate(&root).unwrap();
    outcome(
        (0.7..=1.3).contains(&fit.slope),
        format!(
            "slope vs a_N sqrt(gamma0) = {:.3}, r2 = {:.4} (vs sqrt(gamma0): {:.3}); sups {}",
            fit.slope,
            fit.r2,
            rfit.slope,
            sci(&pts.iter().map(|p| p.1).collect::<Vec<_>>())
        ),
    )
}

fn edgeworth_sup(ck: &ChainKernels, k: usize, innov: &InnovationSpec) -> (f64, f64) {
    let grid = ck.grid();
    let m = grid.m_of_n;
    let sum = innovation_sum_density(grid, innov, ck.sigma(), k, m).unwrap();
    let tau: f64 = grid.gammas[k + 1..=m].iter().sum();
    let sd = ck.sigma() * tau.sqrt();
    let mut sup: f64 = 0.0;
    for i in -240..=240 {
        let z = i as f64 * sd / 20.0;
        let w = tau.sqrt() * (1.0 + z.abs() / tau.sqrt()).powf(innov.smooth_order - 7.0);
        sup = sup.max((g_sigma(ck.sigma(), tau, z) - sum.pdf(z)).abs() * w);
    }
    (sup, tau)
}

fn c10_edgeworth() -> Outcome {
    let mut pts = Vec::new();
    let mut gauss: f64 = 0.0;
    for n in [50u64, 100, 200, 400, 800] {
        let c = ctx(&sine(), harmonic(), n);
        for (innov, logistic) in [(InnovationSpec::logistic(), true), (InnovationSpec::gaussian(), false)] {
            let ck = ChainKernels::new(&c.drift, &innov);
            let (sup, tau) = edgeworth_sup(&ck, 0, &innov);
            if logistic {
                pts.push(((c.drift.grid.gamma0() / tau).sqrt(), sup));
            } else {
                gauss = gauss.max(sup);
            }
        }
    }
    let fit = fit_rate(&pts).unwrap();
    outcome(
        (0.8..=1.2).contains(&fit.slope) && gauss < 1e-7,
        format!(
            "logistic slope vs sqrt(gamma0/(T-t)) = {:.3} (sups {}); Gaussian sup = {gauss:.2e}",
            fit.slope,
            sci(&pts.iter().map(|p| p.1).collect::<Vec<_>>())
        ),
    )
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn c11_kernel_identities() -> Outcome {
    let c = ctx(&sine(), harmonic(), 50);
    let ck = ChainKernels::new(&c.drift, &InnovationSpec::logistic());
    let tt = c.drift.grid.t_n;
    let m = ck.m();
    let mut rng = rmllt::rng::stream(1111, 0);
    let (mut e_h, mut e_hn, mut e_calk, mut e_k) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut z_h, mut z_hn) = (0.0f64, 0.0f64);
    let cfg = QuadConfig::default();
    let limit = LimitDrift(&c.fb);
    for _ in 0..100 {
        let t: f64 = rng.random_range(0.0..0.9);
        let x: f64 = rng.random_range(-3.0..3.0);
        let y: f64 = rng.random_range(-3.0..3.0);
        let tau = tt - t;
        let hx = 1e-4 * tau.sqrt();
        // H = (L_t − L̃_t) p̃(t, T, ·, y)(x)
        let th = backward_flow(&limit, t, tt, y, 1e-12).unwrap();
        let p = |z: f64| frozen_density_p_tilde(&c.fb, t, tt, z, y).unwrap();
        let d1 = (p(x + hx) - p(x - hx)) / (2.0 * hx);
        let d2 = (p(x + hx) - 2.0 * p(x) + p(x - hx)) / (hx * hx);
        let a = c.fb.a_coef(t);
        let gen = (a * x * d1 + 0.5 * d2) - (a * th * d1 + 0.5 * d2);
        let h = kernel_h(&c.fb, t, tt, x, y).unwrap();
        e_h = e_h.max(rel(h, gen, 1e-3 * p(th).max(1e-300) / tau));
        // H_N with the cut-off flow
        let thn = backward_flow(&c.drift, t, tt, y, 1e-12).unwrap();
        let q = |z: f64| frozen_density_q_tilde(1.0, t, tt, z, thn).unwrap();
        let d1 = (q(x + hx) - q(x - hx)) / (2.0 * hx);
        let d2 = (q(x + hx) - 2.0 * q(x) + q(x - hx)) / (hx * hx);
        let gen = (c.drift.b(t, x) * d1 + 0.5 * d2) - (c.drift.b(t, thn) * d1 + 0.5 * d2);
        let hn = kernel_h_n(&c.drift, t, tt, x, y, 1e-12).unwrap();
        e_hn = e_hn.max(rel(hn, gen, 1e-3 * q(thn) / tau));
        z_h = z_h.max(kernel_h(&c.fb, t, tt, th, y).unwrap().abs());
        z_hn = z_hn.max(kernel_h_n(&c.drift, t, tt, thn, y, 1e-12).unwrap().abs());
        // discrete kernels at the grid index of t
        let k = c.drift.grid.index_of(t).min(m - 2);
        let calk = discrete_kernel_calk(&ck, k, m, x, y).unwrap();
        let direct = discrete_kernel_calk_direct(&ck, k, m, x, y, &cfg).unwrap();
        let path = ck.euler_path(k, m, y).unwrap();
        let sd = ck.sum(k, m).unwrap().sd();
        // relative errors are floored at 1e-3 of each kernel's sup over x
        let scan = |f: &dyn Fn(f64) -> f64| (-60..=60).map(|i| f(path[0] + i as f64 * sd / 10.0).abs()).fold(0.0, f64::max);
        let calk_sup = scan(&|z| discrete_kernel_calk(&ck, k, m, z, y).unwrap());
        e_calk = e_calk.max(rel(calk, direct, 1e-3 * calk_sup));
        let bt = (path[1] - path[0]) / ck.gamma(k + 1);
        let hd = 1e-4 * ck.sum(k + 1, m).unwrap().sd();
        let fd = (frozen_chain_density(&ck, k + 1, m, x + hd, y).unwrap() - frozen_chain_density(&ck, k + 1, m, x - hd, y).unwrap()) / (2.0 * hd);
        let kk = discrete_kernel_k(&ck, k, m, x, y).unwrap();
        let k_sup = scan(&|z| discrete_kernel_k(&ck, k, m, z, y).unwrap());
        e_k = e_k.max(rel(kk, (ck.b(k, x) - bt) * fd, 1e-3 * k_sup));
    }
    let pass = e_h < 1e-5 && e_hn < 1e-5 && e_calk < 1e-5 && e_k < 1e-5 && z_h < 1e-10 && z_hn < 1e-10;
    outcome(
        pass,
        format!("max rel err H {e_h:.1e}, H_N {e_hn:.1e}, calK_N {e_calk:.1e}, K_N {e_k:.1e}; on-flow |H| {z_h:.1e}, |H_N| {z_hn:.1e}"),
    )
}

fn main() {
    let criteria: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("C1", "alpha limit", c1_alpha_limit),
        ("C2", "closed-form anchor", c2_closed_form_anchor),
        ("C3", "flow distance rate", c3_flow_distance),
        ("C4", "coupling probabilities", c4_coupling),
        ("C5", "Stroock-Varadhan diagnostics", c5_stroock_varadhan),
        ("C6", "continuous parametrix vs MC", c6_continuous_parametrix),
        ("C7", "discrete parametrix vs MC and oracle", c7_discrete_parametrix),
        ("C8", "p_N - q_N rate", c8_chain_vs_cutoff_diffusion),
        ("C9", "p - q_N rate", c9_diffusion_vs_cutoff),
        ("C10", "Edgeworth gap", c10_edgeworth),
        ("C11", "kernel identities", c11_kernel_identities),
    ];
    let only: Option<String> = std::env::var("RMLLT_ACCEPTANCE_ONLY").ok();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if let Some(o) = &only {
            if !o.split(',').any(|s| s == id) {
                continue;
            }
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("error: {}", msg.unwrap_or_default()))
        });
        if !res.pass {
            failed += 1;
        }
        println!(
            "{} {id} {name}: {} [{:.1}s]",
            if res.pass { "PASS" } else { "FAIL" },
            res.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var("RMLLT_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
