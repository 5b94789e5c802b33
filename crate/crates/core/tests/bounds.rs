//! Fitted-constant checks of the density and kernel estimates on compact grids.

use rmllt::diffusions::{density_p, frozen_density_p_tilde, g_c, simulate_cutoff_sde, GaussianTransition};
use rmllt::estimate::{fit_bound, linspace, mean_sd};
use rmllt::flows::lambda_factor;
use rmllt::parametrix::{
    backward_flow, beta_fn, discrete_terms_at, kernel_h, kernel_h_n, series_terms_at, ChainKernels,
    ContinuousSeriesConfig, DiscreteSeriesConfig,
};
use rmllt::*;

fn setup(model: &ModelSpec, n: u64) -> (FlowBundle, CutoffDrift) {
    let grid = build_grid(&StepSchedule::new(StepFamily::Harmonic { c: 1.0 }, n, 1.0)).unwrap();
    let fb = FlowBundle::solve(model, grid.t_n, 1e-12).unwrap();
    let drift = CutoffDrift::new(&fb, &grid, CutoffRule::default().level(grid.gamma0())).with_rule(DeltaRule::Secant);
    (fb, drift)
}

fn sine() -> ModelSpec {
    ModelSpec::sine_perturbed(0.2, 1.0, 1.0)
}

fn stable(cs: &[f64]) -> bool {
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().cloned().fold(0.0, f64::max);
    lo > 0.0 && hi.is_finite() && hi <= 2.0 * lo
}

#[test]
fn drift_gap_bound_holds_with_one_constant() {
    let mut cs = Vec::new();
    for n in [50u64, 200, 800] {
        let (fb, d) = setup(&sine(), n);
        let tt = 1.0;
        let scale = d.a_n * d.grid.gamma0().sqrt();
        let (mut vals, mut shapes) = (Vec::new(), Vec::new());
        for &y in &linspace(-3.0, 3.0, 13) {
            for &t in &linspace(0.0, 0.95, 12) {
                let th = fb.limit_flow(t, tt, y);
                let thn = backward_flow(&d, t, tt, y, 1e-11).unwrap();
                for &x in &linspace(-3.0, 3.0, 13) {
                    let v = (fb.a_coef(t) * (x - th) - (d.b(t, x) - d.b(t, thn))).abs();
                    let s = scale * ((x - th).abs() + (tt - t) * (y.abs() + y * y));
                    if s > 1e-12 {
                        vals.push(v);
                        shapes.push(s);
                    }
                }
            }
        }
        cs.push(fit_bound(&vals, &shapes).unwrap().c);
    }
    assert!(stable(&cs), "{cs:?}");
}

#[test]
fn frozen_density_gap_bound() {
    let mut cs = Vec::new();
    for n in [50u64, 200, 800] {
        let (fb, d) = setup(&sine(), n);
        let tt = 1.0;
        let (g0, a_n) = (d.grid.gamma0(), d.a_n);
        let (mut vals, mut shapes) = (Vec::new(), Vec::new());
        for &y in &linspace(-3.0, 3.0, 13) {
            for &t in &linspace(0.0, 0.9, 10) {
                let tau = tt - t;
                let th = fb.limit_flow(t, tt, y);
                let thn = backward_flow(&d, t, tt, y, 1e-11).unwrap();
                for &x in &linspace(-3.0, 3.0, 13) {
                    let p = frozen_density_p_tilde(&fb, t, tt, x, y).unwrap();
                    let q = rmllt::diffusions::frozen_density_q_tilde(1.0, t, tt, x, thn).unwrap();
                    let s = tau.sqrt() * a_n * g0.sqrt() * y.abs() * (tau * tau * a_n * a_n * g0 * y * y).exp() * g_c(4.0, tau, th - x);
                    if s > 0.0 {
                        vals.push((p - q).abs());
                        shapes.push(s);
                    }
                }
            }
        }
        cs.push(fit_bound(&vals, &shapes).unwrap().c);
    }
    assert!(stable(&cs), "{cs:?}");
}

#[test]
fn kernel_sensitivity_bound() {
    let mut cs = Vec::new();
    for n in [50u64, 200, 800] {
        let (fb, d) = setup(&sine(), n);
        let tt = 1.0;
        let (g0, a_n) = (d.grid.gamma0(), d.a_n);
        let (mut vals, mut shapes) = (Vec::new(), Vec::new());
        for &y in &linspace(-3.0, 3.0, 13) {
            for &t in &linspace(0.0, 0.9, 10) {
                let tau = tt - t;
                let th = fb.limit_flow(t, tt, y);
                for &x in &linspace(-3.0, 3.0, 13) {
                    let h = kernel_h(&fb, t, tt, x, y).unwrap();
                    let hn = kernel_h_n(&d, t, tt, x, y, 1e-11).unwrap();
                    vals.push((h - hn).abs());
                    shapes.push(a_n * g0.sqrt() * lambda_factor(tau, y, 1.0, a_n, g0) * g_c(4.0, tau, th - x));
                }
            }
        }
        cs.push(fit_bound(&vals, &shapes).unwrap().c);
    }
    assert!(stable(&cs), "{cs:?}");
}

#[test]
fn diffusion_density_gap_bound() {
    let mut cs = Vec::new();
    let ys = linspace(-3.0, 3.0, 13);
    let cfg = ContinuousSeriesConfig { r_max: 4, ..Default::default() };
    for n in [50u64, 200, 800] {
        let (fb, d) = setup(&sine(), n);
        let (g0, a_n) = (d.grid.gamma0(), d.a_n);
        let tt = d.grid.t_n;
        let (mut vals, mut shapes) = (Vec::new(), Vec::new());
        for x in [-1.0, 0.0, 1.0] {
            let q = series_terms_at(&d, 0.0, tt, x, &ys, &cfg).unwrap();
            for (j, &y) in ys.iter().enumerate() {
                let qn: f64 = q.iter().map(|r| r[j]).sum();
                let p = density_p(&fb, 0.0, tt, x, y).unwrap();
                vals.push((p - qn).abs());
                shapes.push(a_n * g0.sqrt() * lambda_factor(tt, y, 1.0, a_n, g0) * g_c(4.0, tt, fb.limit_flow(0.0, tt, y) - x));
            }
        }
        cs.push(fit_bound(&vals, &shapes).unwrap().c);
    }
    assert!(stable(&cs), "{cs:?}");
}

#[test]
fn limit_density_two_sided_gaussian_estimate() {
    for model in [ModelSpec::linear(1.0, 1.0, 1.0), sine()] {
        let fb = FlowBundle::solve(&model, 1.0, 1e-12).unwrap();
        let a_max = linspace(0.0, 1.0, 101).iter().map(|&t| fb.a_coef(t).abs()).fold(0.0, f64::max);
        let s2 = model.sigma * model.sigma;
        let (c_lo, c_hi) = (2.0 * s2 * (-2.0 * a_max).exp() * 0.99, 2.0 * s2 * (2.0 * a_max).exp() * 1.01);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &t in &linspace(0.0, 0.9, 10) {
            for &x in &linspace(-3.0, 3.0, 13) {
                let law = GaussianTransition::new(&fb, t, 1.0, x).unwrap();
                for &y in &linspace(-3.0, 3.0, 13) {
                    let z = fb.limit_flow(t, 1.0, y) - x;
                    let p = law.pdf(y);
                    lo = lo.min(p / g_c(c_lo, 1.0 - t, z));
                    hi = hi.max(p / g_c(c_hi, 1.0 - t, z));
                }
            }
        }
        assert!(lo > 0.0 && hi.is_finite(), "{} {lo} {hi}", model.name);
    }
}

#[test]
fn chain_variance_approaches_limit_variance() {
    let model = ModelSpec::linear(1.0, 1.0, 0.0);
    let mut gaps = Vec::new();
    for n in [50u64, 3200] {
        let (fb, d) = setup(&model, n);
        let v = chains::simulate_v_terminal(&d, &InnovationSpec::logistic(), 0, 0.0, 200_000, 21).unwrap();
        let (_, sd) = mean_sd(&v);
        let want = GaussianTransition::new(&fb, 0.0, d.grid.t_n, 0.0).unwrap().variance;
        let se = want * (2.0 / v.len() as f64).sqrt();
        gaps.push(((sd * sd - want).abs(), se));
    }
    let (gap, se) = gaps[1];
    assert!(gap < 4.0 * se, "{gaps:?}");
}

#[test]
fn cutoff_diffusion_variance_approaches_limit() {
    let (fb, d) = setup(&ModelSpec::linear(1.0, 1.0, 0.0), 400);
    let xs = simulate_cutoff_sde(&d, 0.0, d.grid.t_n, 0.0, 100_000, 4 * d.grid.m_of_n, 3).unwrap();
    let (m, sd) = mean_sd(&xs);
    let want = GaussianTransition::new(&fb, 0.0, d.grid.t_n, 0.0).unwrap().variance;
    let se = want * (2.0 / xs.len() as f64).sqrt();
    assert!(m.abs() < 4.0 * (want / xs.len() as f64).sqrt());
    assert!((sd * sd - want).abs() < 4.0 * se + 0.01 * want);
}

fn ratio_bound_holds(norms: &[f64], tau: f64) {
    let ratio = |r: usize| norms[r] / (norms[r - 1] * tau.sqrt() * beta_fn(r as f64 / 2.0, 0.5));
    let c = (1..=3).map(ratio).fold(0.0, f64::max);
    for r in 4..norms.len() {
        assert!(ratio(r) <= c, "r={r}: {} > {c} ({norms:?})", ratio(r));
    }
}

#[test]
fn series_term_norms_obey_the_beta_ratio_bound() {
    let ys = linspace(-3.0, 3.0, 13);
    let (_, d) = setup(&sine(), 20);
    let tt = d.grid.t_n;
    let cont = series_terms_at(&d, 0.0, tt, 0.5, &ys, &ContinuousSeriesConfig { r_max: 5, ..Default::default() }).unwrap();
    let sup = |v: &Vec<f64>| v.iter().map(|a| a.abs()).fold(0.0, f64::max);
    ratio_bound_holds(&cont.iter().map(sup).collect::<Vec<_>>(), tt);
    let ck = ChainKernels::new(&d, &InnovationSpec::logistic());
    let disc = discrete_terms_at(&ck, 0, 0.5, &ys, &DiscreteSeriesConfig { r_max: 5, ..Default::default() }).unwrap();
    ratio_bound_holds(&disc.iter().map(sup).collect::<Vec<_>>(), tt);
}
