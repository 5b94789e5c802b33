//! One function per subcommand. Each returns the artifacts it wrote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rmllt::chains::{coupling_experiment, renormalize, simulate_rm, simulate_v_terminal, sv_diagnostics, CouplingConfig};
use rmllt::diffusions::{density_p, simulate_cutoff_sde};
use rmllt::estimate::{fit_rate, kde, Bandwidth};
use rmllt::model::ValidationOptions;
use rmllt::parametrix::{
    backward_flow, flowchart_pipeline, series_continuous, series_discrete, series_terms_at, ChainKernels, FlowchartConfig,
    SeriesAccumulator,
};
use rmllt::rng::{stream, sub_seed};
use rmllt::{build_grid, validate_assumptions, CutoffDrift, DeltaRule, Error, FlowBundle, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

const ODE_TOL: f64 = 1e-10;
/// ε of the truncated moments in `svdiag`.
const SV_EPSILON: f64 = 1.0;
/// Undersmoothed KDE, so smoothing bias stays below the standard error.
const KDE_RULE: Bandwidth = Bandwidth::ScaledSilverman(0.5);
/// Maximum number of grid times per N in `svdiag`.
const SV_TIMES: usize = 50;

/// Stage tags for [`sub_seed`].
mod stage {
    pub const SIMULATE_U: u64 = 1;
    pub const SIMULATE_V: u64 = 2;
    pub const COUPLE: u64 = 3;
    pub const DENSITY: u64 = 5;
    pub const RATE: u64 = 6;
}

pub struct Ctx {
    pub fb: FlowBundle,
    pub drift: CutoffDrift,
}

impl Ctx {
    pub fn new(cfg: &ExperimentConfig, n: u64) -> Result<Self> {
        let grid = build_grid(&cfg.schedule(n))?;
        let fb = FlowBundle::solve(&cfg.model.build(), grid.t_n, 1e-12)?;
        let a_n = cfg.cutoff.level(grid.gamma0());
        let drift = CutoffDrift::new(&fb, &grid, a_n).with_rule(DeltaRule::Secant);
        Ok(Self { fb, drift })
    }

    fn t_term(&self) -> f64 {
        self.drift.grid.t_n
    }

    fn m(&self) -> usize {
        self.drift.grid.m_of_n
    }
}

pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<std::fs::File>> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        csv::Writer::from_path(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(io)?;
        self.files.push(path);
        Ok(())
    }
}

pub fn io(e: std::io::Error) -> Error {
    Error::Config(e.to_string())
}

fn row<W: std::io::Write>(w: &mut csv::Writer<W>, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(|e| Error::Config(e.to_string()))
}

fn header<W: std::io::Write>(w: &mut csv::Writer<W>, names: &[&str]) -> Result<()> {
    w.write_record(names).map_err(|e| Error::Config(e.to_string()))
}

fn flush<W: std::io::Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(io)
}

macro_rules! fields {
    ($($v:expr),* $(,)?) => { [$(format!("{}", $v)),*] };
}

/// Times of the grid up to `T − δ`, thinned to at most `cap`.
fn eval_times(ctx: &Ctx, delta: f64, cap: usize) -> Vec<(usize, f64)> {
    let stop = ctx.t_term() - delta;
    let all: Vec<(usize, f64)> = ctx.drift.grid.points.iter().copied().enumerate().filter(|&(_, t)| t <= stop).collect();
    let stride = all.len().div_ceil(cap.max(1)).max(1);
    all.into_iter().step_by(stride).collect()
}

/// `validate.json`: the A-1 … A-5 report. Fails when any check fails.
pub fn validate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let opts = ValidationOptions { n_list: cfg.n_list.clone(), ..Default::default() };
    let report = validate_assumptions(&cfg.model.build(), &cfg.schedule(cfg.n_list[0]), &cfg.innovation_spec(), &cfg.cutoff, &opts);
    art.json("validate.json", &report)?;
    if !report.all_pass {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Error::Invalid(format!("assumption checks failed: {}", failed.join(", "))));
    }
    Ok(())
}

/// `simulate.csv`: terminal values of U (renormalized recursion) and V (cut-off chain).
pub fn simulate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let model = cfg.model.build();
    let innov = cfg.innovation_spec();
    let mut w = art.csv("simulate.csv")?;
    header(&mut w, &["n", "path", "u_terminal", "v_terminal"])?;
    for &n in &cfg.n_list {
        let ctx = Ctx::new(cfg, n)?;
        let schedule = cfg.schedule(n);
        let seed_u = sub_seed(cfg.seed, stage::SIMULATE_U) ^ n;
        let raw = (0..cfg.paths.coupling)
            .into_par_iter()
            .map(|i| simulate_rm(&model, &schedule, &innov, ctx.m(), &mut stream(seed_u, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let u = renormalize(&raw, &ctx.fb, &ctx.drift.grid, seed_u)?;
        let v = simulate_v_terminal(&ctx.drift, &innov, 0, 0.0, cfg.paths.coupling, sub_seed(cfg.seed, stage::SIMULATE_V) ^ n)?;
        for (i, (up, vt)) in u.paths.iter().zip(&v).enumerate() {
            row(&mut w, &fields!(n, i, up[ctx.m()], vt))?;
        }
    }
    flush(w)
}

/// `flows.csv`: limit, cut-off and backward-Euler flows from `(T_N, y)` over `y ∈ K_y`.
pub fn flows(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let mut w = art.csv("flows.csv")?;
    header(
        &mut w,
        &["n", "y", "t", "theta_bar", "theta_limit", "theta_cutoff", "theta_euler", "abs_gap_limit_cutoff", "abs_gap_cutoff_euler"],
    )?;
    for &n in &cfg.n_list {
        let ctx = Ctx::new(cfg, n)?;
        let tt = ctx.t_term();
        let times = eval_times(&ctx, cfg.delta, usize::MAX);
        for y in cfg.k_y.nodes() {
            let cut = ctx.drift.backward_flow_cutoff(tt, y, ODE_TOL)?;
            let euler = ctx.drift.backward_euler(y)?;
            for &(k, t) in &times {
                let (lim, c, e) = (ctx.fb.limit_flow(t, tt, y), cut.eval(t), euler[k]);
                row(&mut w, &fields!(n, y, t, ctx.fb.theta_bar(t), lim, c, e, (lim - c).abs(), (c - e).abs()))?;
            }
        }
    }
    flush(w)
}

/// `couple.csv` and `couple.json`: coupling probabilities per N.
pub fn couple(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let cc = CouplingConfig {
        family: cfg.steps,
        horizon: cfg.horizon,
        n_list: cfg.n_list.clone(),
        cutoff: cfg.cutoff,
        c: None,
        n_paths: cfg.paths.coupling,
        seed: sub_seed(cfg.seed, stage::COUPLE),
        ode_tol: ODE_TOL,
    };
    let rep = coupling_experiment(&cfg.model.build(), &cfg.innovation_spec(), &cc)?;
    let mut w = art.csv("couple.csv")?;
    header(&mut w, &["n", "gamma0", "a_n", "prob_exceed", "stderr", "exit_fraction", "exit_stderr", "bound_violations"])?;
    for r in &rep.rows {
        row(&mut w, &fields!(r.n, r.gamma0, r.a_n, r.prob_exceed, r.stderr, r.exit_fraction, r.exit_stderr, r.bound_violations))?;
    }
    flush(w)?;
    art.json("couple.json", &rep)
}

/// `svdiag.csv`: Stroock-Varadhan quantities on `[0, T − δ] × K_x`.
pub fn svdiag(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let innov = cfg.innovation_spec();
    let mut w = art.csv("svdiag.csv")?;
    header(&mut w, &["n", "t", "x", "a_gamma", "b_gamma", "delta_gamma"])?;
    for &n in &cfg.n_list {
        let ctx = Ctx::new(cfg, n)?;
        for (_, t) in eval_times(&ctx, cfg.delta, SV_TIMES) {
            for x in cfg.k_x.nodes() {
                let d = sv_diagnostics(&ctx.drift, &innov, t, x, SV_EPSILON)?;
                row(&mut w, &fields!(n, t, x, d.a_gamma, d.b_gamma, d.delta_gamma))?;
            }
        }
    }
    flush(w)
}

/// `density.csv`: closed-form `p` against a KDE of the cut-off diffusion.
pub fn density(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let mut w = art.csv("density.csv")?;
    header(&mut w, &["n", "t", "T", "x", "y", "p_closed", "q_n_kde", "kde_stderr"])?;
    let ys = cfg.k_y.nodes();
    for &n in &cfg.n_list {
        let ctx = Ctx::new(cfg, n)?;
        let tt = ctx.t_term();
        for (i, x) in cfg.k_x.nodes().into_iter().enumerate() {
            let seed = sub_seed(sub_seed(cfg.seed, stage::DENSITY) ^ n, i as u64);
            let xs = simulate_cutoff_sde(&ctx.drift, 0.0, tt, x, cfg.paths.density, cfg.paths.substeps_per_step * ctx.m(), seed)?;
            let est = kde(&xs, KDE_RULE, &ys)?;
            for (j, &y) in ys.iter().enumerate() {
                let p = density_p(&ctx.fb, 0.0, tt, x, y)?;
                row(&mut w, &fields!(n, 0.0, tt, x, y, p, est.values[j], est.stderr[j]))?;
            }
        }
    }
    flush(w)
}

#[derive(Serialize)]
struct SeriesSummary {
    series: &'static str,
    n: u64,
    r_max: usize,
    term_norms: Vec<f64>,
    ratio_constant: f64,
    truncation_estimate: f64,
    ratios_decay: bool,
}

fn summary(series: &'static str, n: u64, acc: &SeriesAccumulator) -> SeriesSummary {
    SeriesSummary {
        series,
        n,
        r_max: acc.r_max,
        term_norms: acc.term_norms.clone(),
        ratio_constant: acc.ratio_constant,
        truncation_estimate: acc.truncation_estimate,
        ratios_decay: acc.ratios_decay(),
    }
}

/// `parametrix_terms.csv`, `parametrix_series.json` and `flowchart.json` for the first N.
pub fn parametrix(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let n = cfg.n_list[0];
    let ctx = Ctx::new(cfg, n)?;
    let ys = cfg.k_y.nodes();
    let xs = &cfg.parametrix.x;
    let cont = series_continuous(&ctx.drift, 0.0, ctx.t_term(), xs, &ys, &cfg.series_config())?;
    let ck = ChainKernels::new(&ctx.drift, &cfg.innovation_spec());
    let disc = series_discrete(&ck, 0, xs, &ys, &cfg.discrete_config())?;
    let mut w = art.csv("parametrix_terms.csv")?;
    header(&mut w, &["series", "n", "r", "term_norm", "x", "y", "partial_sum"])?;
    for (name, acc) in [("continuous", &cont), ("discrete", &disc)] {
        for (r, ps) in acc.partial_sums.iter().enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    row(&mut w, &fields!(name, n, r, acc.term_norms[r], x, y, ps.values[i][j]))?;
                }
            }
        }
    }
    flush(w)?;
    art.json("parametrix_series.json", &[summary("continuous", n, &cont), summary("discrete", n, &disc)])?;
    let fc = FlowchartConfig { r_max: cfg.parametrix.r_max, ..Default::default() };
    let [x, y] = cfg.parametrix.probe;
    let report = flowchart_pipeline(&ck, n, 0, x, y, &fc)?;
    art.json("flowchart.json", &report)
}

#[derive(Serialize)]
struct RatePoint {
    n: u64,
    abscissa: f64,
    sup: f64,
}

#[derive(Serialize)]
struct BoundRate {
    quantity: &'static str,
    abscissa: &'static str,
    points: Vec<RatePoint>,
    fit: rmllt::RateFit,
}

fn bound_rate(quantity: &'static str, abscissa: &'static str, points: Vec<RatePoint>) -> Result<BoundRate> {
    let fit = fit_rate(&points.iter().map(|p| (p.abscissa, p.sup)).collect::<Vec<_>>())?;
    Ok(BoundRate { quantity, abscissa, points, fit })
}

/// Weight `(T−t)^{-1/2} (1 + |θ − x|/√(T−t))^{−(S−7)}` of the second bound.
fn tail_weight(s: f64, tau: f64, flow: f64, x: f64) -> f64 {
    let st = tau.sqrt();
    1.0 / (st * (1.0 + (flow - x).abs() / st).powf(s - 7.0))
}

/// `rate.json`: log-log fits of both density bounds over the N list.
///
/// The chain-vs-diffusion gap uses KDEs of V and X^N with matched seeds. The
/// diffusion-vs-cut-off gap uses the continuous series for `q_N` at flow-centred
/// probes `x = θ_{0,T}(y)`.
pub fn rate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let innov = cfg.innovation_spec();
    let ys = cfg.k_y.nodes();
    let series = cfg.rate_series_config();
    let (mut second, mut third) = (Vec::new(), Vec::new());
    for &n in &cfg.n_list {
        let ctx = Ctx::new(cfg, n)?;
        let tt = ctx.t_term();
        let g0 = ctx.drift.grid.gamma0();
        let flows = ys.iter().map(|&y| backward_flow(&ctx.drift, 0.0, tt, y, ODE_TOL)).collect::<Result<Vec<_>>>()?;
        let mut sup2: f64 = 0.0;
        for (i, x) in cfg.k_x.nodes().into_iter().enumerate() {
            let seed = sub_seed(sub_seed(cfg.seed, stage::RATE) ^ n, i as u64);
            let v = simulate_v_terminal(&ctx.drift, &innov, 0, x, cfg.paths.density, seed)?;
            let xn = simulate_cutoff_sde(&ctx.drift, 0.0, tt, x, cfg.paths.density, cfg.paths.substeps_per_step * ctx.m(), seed)?;
            let (pn, qn) = (kde(&v, KDE_RULE, &ys)?, kde(&xn, KDE_RULE, &ys)?);
            for j in 0..ys.len() {
                sup2 = sup2.max((pn.values[j] - qn.values[j]).abs() / tail_weight(innov.smooth_order, tt, flows[j], x));
            }
        }
        second.push(RatePoint { n, abscissa: g0.sqrt(), sup: sup2 });
        let mut sup3: f64 = 0.0;
        for &y in &ys {
            let x = ctx.fb.limit_flow(0.0, tt, y);
            let q: f64 = series_terms_at(&ctx.drift, 0.0, tt, x, &[y], &series)?.iter().map(|t| t[0]).sum();
            sup3 = sup3.max((density_p(&ctx.fb, 0.0, tt, x, y)? - q).abs());
        }
        third.push(RatePoint { n, abscissa: ctx.drift.a_n * g0.sqrt(), sup: sup3 });
    }
    #[derive(Serialize)]
    struct Rates {
        chain_vs_cutoff_diffusion: BoundRate,
        diffusion_vs_cutoff_diffusion: BoundRate,
    }
    let rates = Rates {
        chain_vs_cutoff_diffusion: bound_rate("weighted sup |p_N - q_N|", "sqrt(gamma0)", second)?,
        diffusion_vs_cutoff_diffusion: bound_rate("sup |p - q_N| at flow-centred probes", "a_N sqrt(gamma0)", third)?,
    };
    art.json("rate.json", &rates)
}
