//! Problem definition: drift function, innovations, step sequences, grids and cut-off.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{composite, GaussRule};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The mean field `m`, its first four derivatives, σ, the zero θ* and the start θ_0.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub m: RealFn,
    pub m1: RealFn,
    pub m2: RealFn,
    pub m3: RealFn,
    pub m4: RealFn,
    pub sigma: f64,
    pub theta_star: f64,
    pub theta0: f64,
    /// `m` is affine, so the δ-average of `m'` is exact and constant.
    pub affine: bool,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("sigma", &self.sigma)
            .field("theta_star", &self.theta_star)
            .field("theta0", &self.theta0)
            .finish()
    }
}

impl ModelSpec {
    /// `m(θ) = c θ`.
    pub fn linear(c: f64, sigma: f64, theta0: f64) -> Self {
        Self {
            name: format!("linear(c={c})"),
            m: Arc::new(move |x| c * x),
            m1: Arc::new(move |_| c),
            m2: Arc::new(|_| 0.0),
            m3: Arc::new(|_| 0.0),
            m4: Arc::new(|_| 0.0),
            sigma,
            theta_star: 0.0,
            theta0,
            affine: true,
        }
    }

    /// `m(θ) = θ + ε sin θ`.
    pub fn sine_perturbed(eps: f64, sigma: f64, theta0: f64) -> Self {
        Self {
            name: format!("sine_perturbed(eps={eps})"),
            m: Arc::new(move |x| x + eps * x.sin()),
            m1: Arc::new(move |x| 1.0 + eps * x.cos()),
            m2: Arc::new(move |x| -eps * x.sin()),
            m3: Arc::new(move |x| -eps * x.cos()),
            m4: Arc::new(move |x| eps * x.sin()),
            sigma,
            theta_star: 0.0,
            theta0,
            affine: false,
        }
    }

    /// `m(θ) = sin θ`, attractive at 0 for σ > 1/2.
    pub fn sine(sigma: f64, theta0: f64) -> Self {
        Self {
            name: "sine".into(),
            m: Arc::new(|x: f64| x.sin()),
            m1: Arc::new(|x: f64| x.cos()),
            m2: Arc::new(|x: f64| -x.sin()),
            m3: Arc::new(|x: f64| -x.cos()),
            m4: Arc::new(|x: f64| x.sin()),
            sigma,
            theta_star: 0.0,
            theta0,
            affine: false,
        }
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Mean field of the recursion, `h(θ) = −σ m(θ)`.
    #[inline]
    pub fn h(&self, theta: f64) -> f64 {
        -self.sigma * (self.m)(theta)
    }

    /// `−σ m'(θ*) + 1/2`; negative means attractive.
    pub fn attractivity_margin(&self) -> f64 {
        -self.sigma * (self.m1)(self.theta_star) + 0.5
    }

    /// Largest discrepancy between each supplied derivative and a central
    /// difference of the previous one, relative to `max(1, |exact|)`.
    pub fn derivative_mismatch(&self, points: &[f64]) -> f64 {
        let fs = [&self.m, &self.m1, &self.m2, &self.m3, &self.m4];
        let h = 1e-4;
        let mut worst = 0.0f64;
        for &x in points {
            for i in 0..4 {
                let fd = ((fs[i])(x + h) - (fs[i])(x - h)) / (2.0 * h);
                let ex = (fs[i + 1])(x);
                worst = worst.max((fd - ex).abs() / ex.abs().max(1.0));
            }
        }
        worst
    }

    /// Checks the structural invariants of the type.
    pub fn check(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::Invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        let r = (self.m)(self.theta_star);
        if r.abs() > 1e-10 {
            return Err(Error::Invalid(format!("m(theta_star) = {r}, expected 0")));
        }
        if self.attractivity_margin() >= 0.0 {
            return Err(Error::Invalid(format!("attractivity fails: margin {}", self.attractivity_margin())));
        }
        Ok(())
    }
}

/// Step sequence families `γ_n` indexed by the absolute index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepFamily {
    /// `c / n`, `n ≥ 1`.
    Harmonic { c: f64 },
    /// `1 / (n ln n)`, `n ≥ 2`.
    HarmonicLog,
    /// `c / n^p`, `n ≥ 1`.
    Power { c: f64, p: f64 },
    /// `γ` for every index; test use only, it violates the summability conditions.
    Constant { gamma: f64 },
}

impl StepFamily {
    #[inline]
    pub fn gamma(&self, n: u64) -> f64 {
        let x = n as f64;
        match *self {
            StepFamily::Harmonic { c } => c / x,
            StepFamily::HarmonicLog => 1.0 / (x * x.ln()),
            StepFamily::Power { c, p } => c / x.powf(p),
            StepFamily::Constant { gamma } => gamma,
        }
    }

    pub fn min_index(&self) -> u64 {
        match self {
            StepFamily::HarmonicLog => 2,
            StepFamily::Constant { .. } => 0,
            _ => 1,
        }
    }
}

/// `γ_k^N = γ_{N+k}` together with the horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub family: StepFamily,
    pub shift: u64,
    pub horizon: f64,
}

impl StepSchedule {
    pub fn new(family: StepFamily, shift: u64, horizon: f64) -> Self {
        Self { family, shift, horizon }
    }

    pub fn with_shift(&self, shift: u64) -> Self {
        Self { shift, ..*self }
    }

    /// `γ_k^N`.
    #[inline]
    pub fn gamma(&self, k: u64) -> f64 {
        self.family.gamma(self.shift + k)
    }

    /// `γ_0^N`, the coarsest step of the shifted sequence.
    pub fn gamma0(&self) -> f64 {
        self.gamma(0)
    }
}

/// `α_k^N = (√γ_k − √γ_{k+1}) / γ_{k+1}^{3/2}`.
pub fn alpha(k: u64, schedule: &StepSchedule) -> f64 {
    alpha_from(schedule.gamma(k), schedule.gamma(k + 1))
}

#[inline]
pub fn alpha_from(g_k: f64, g_k1: f64) -> f64 {
    let (a, b) = (g_k.sqrt(), g_k1.sqrt());
    (g_k - g_k1) / ((a + b) * g_k1 * b)
}

/// Points `t_k^N = γ_1^N + … + γ_k^N` up to the first one reaching `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub schedule: StepSchedule,
    /// `t_0 = 0, …, t_M`.
    pub points: Vec<f64>,
    /// `γ_0^N, …, γ_{M+1}^N`.
    pub gammas: Vec<f64>,
    /// `M(N)`.
    pub m_of_n: usize,
    /// `t_{M(N)}`, the first grid point at or beyond `T`.
    pub t_n: f64,
}

impl TimeGrid {
    pub fn gamma0(&self) -> f64 {
        self.gammas[0]
    }

    /// Index `k` with `t_k ≤ t < t_{k+1}`, clamped to `0..=M`.
    pub fn index_of(&self, t: f64) -> usize {
        let p = self.points.partition_point(|&s| s <= t);
        p.saturating_sub(1).min(self.m_of_n)
    }
}

pub const DEFAULT_MAX_STEPS: usize = 50_000_000;

/// Builds the grid of the shifted schedule up to the horizon.
pub fn build_grid(schedule: &StepSchedule) -> Result<TimeGrid> {
    build_grid_with(schedule, DEFAULT_MAX_STEPS)
}

pub fn build_grid_with(schedule: &StepSchedule, max_steps: usize) -> Result<TimeGrid> {
    let t_end = schedule.horizon;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Invalid(format!("horizon must be positive, got {t_end}")));
    }
    if schedule.shift < schedule.family.min_index() {
        return Err(Error::Invalid(format!(
            "shift {} below the first admissible index {}",
            schedule.shift,
            schedule.family.min_index()
        )));
    }
    let constant = matches!(schedule.family, StepFamily::Constant { .. });
    let mut points = vec![0.0];
    let mut gammas = vec![schedule.gamma(0)];
    // tolerate accumulation rounding when deciding t_k ≥ T
    let target = t_end * (1.0 - 1e-12);
    let mut t = 0.0;
    let mut k = 0usize;
    loop {
        let g = schedule.gamma(k as u64 + 1);
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::Invalid(format!("non-positive step at index {}", k + 1)));
        }
        if !constant && g >= gammas[k] {
            return Err(Error::NonDecreasingSteps { index: k + 1 });
        }
        gammas.push(g);
        t += g;
        k += 1;
        points.push(t);
        if t >= target {
            break;
        }
        if k >= max_steps {
            return Err(Error::HorizonUnreachable { horizon: t_end, max_steps });
        }
    }
    gammas.push(schedule.gamma(k as u64 + 1));
    Ok(TimeGrid { schedule: *schedule, t_n: t, m_of_n: k, points, gammas })
}

/// Cut-off levels `a_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutoffRule {
    /// `a_N = c (γ_0^N)^{−e}`.
    Power { c: f64, exponent: f64 },
    /// No cut-off (test use).
    Infinite,
}

impl Default for CutoffRule {
    fn default() -> Self {
        CutoffRule::Power { c: 1.0, exponent: 0.25 }
    }
}

impl CutoffRule {
    pub fn level(&self, gamma0: f64) -> f64 {
        match *self {
            CutoffRule::Power { c, exponent } => c * gamma0.powf(-exponent),
            CutoffRule::Infinite => f64::INFINITY,
        }
    }
}

/// Law of the standardized innovation η (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationLaw {
    Gaussian,
    /// Logistic with scale `√3/π`.
    Logistic,
    /// η ≡ 0 (test use: noise-free recursion).
    Zero,
}

pub const LOGISTIC_SCALE: f64 = 0.551_328_895_421_792_1; // √3/π

/// Innovation law with the decay indices `S` and `M` of the smoothness condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnovationSpec {
    pub law: InnovationLaw,
    pub smooth_order: f64,
    pub tail_exponent: f64,
}

impl InnovationSpec {
    pub fn new(law: InnovationLaw) -> Self {
        Self { law, smooth_order: 9.0, tail_exponent: 11.0 }
    }

    pub fn gaussian() -> Self {
        Self::new(InnovationLaw::Gaussian)
    }

    pub fn logistic() -> Self {
        Self::new(InnovationLaw::Logistic)
    }

    /// Density ρ of η.
    #[inline]
    pub fn rho(&self, z: f64) -> f64 {
        match self.law {
            InnovationLaw::Gaussian => (-0.5 * z * z).exp() / (2.0 * PI).sqrt(),
            InnovationLaw::Logistic => {
                let s = LOGISTIC_SCALE;
                let e = (-(z.abs()) / s).exp();
                e / (s * (1.0 + e) * (1.0 + e))
            }
            InnovationLaw::Zero => f64::NAN,
        }
    }

    /// Density of ξ = σ(η − Eη).
    #[inline]
    pub fn rho_xi(&self, z: f64, sigma: f64) -> f64 {
        self.rho(z / sigma) / sigma
    }

    /// Characteristic function of η at ω (real: both laws are symmetric).
    #[inline]
    pub fn cf(&self, w: f64) -> f64 {
        match self.law {
            InnovationLaw::Gaussian => (-0.5 * w * w).exp(),
            InnovationLaw::Logistic => {
                let a = PI * LOGISTIC_SCALE * w;
                if a.abs() < 1e-8 {
                    1.0 - a * a / 6.0
                } else if a.abs() > 700.0 {
                    0.0
                } else {
                    a / a.sinh()
                }
            }
            InnovationLaw::Zero => 1.0,
        }
    }

    /// Excess kurtosis of η.
    pub fn excess_kurtosis(&self) -> f64 {
        match self.law {
            InnovationLaw::Logistic => 1.2,
            _ => 0.0,
        }
    }

    /// Draws one η.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.law {
            InnovationLaw::Gaussian => rng.sample(StandardNormal),
            InnovationLaw::Logistic => {
                let u: f64 = rng.random();
                let u = u.max(f64::MIN_POSITIVE);
                LOGISTIC_SCALE * (u / (1.0 - u)).ln()
            }
            InnovationLaw::Zero => 0.0,
        }
    }

    /// Half-width beyond which ρ is negligible (below 1e-300 relative).
    pub fn support_radius(&self) -> f64 {
        match self.law {
            InnovationLaw::Gaussian => 38.0,
            InnovationLaw::Logistic => 380.0 * LOGISTIC_SCALE,
            InnovationLaw::Zero => 0.0,
        }
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: BTreeMap<String, f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str) -> Self {
        Self { name: name.into(), pass: true, measured: BTreeMap::new(), detail: String::new() }
    }
    fn fail(&mut self, why: impl Into<String>) {
        self.pass = false;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&why.into());
    }
    fn put(&mut self, k: &str, v: f64) {
        self.measured.insert(k.into(), v);
    }
}

/// Per-assumption results of [`validate_assumptions`].
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Settings for [`validate_assumptions`].
#[derive(Debug, Clone)]
pub struct ValidationOptions {
    pub tube_radius: f64,
    pub derivative_bound: f64,
    pub n_list: Vec<u64>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { tube_radius: 1.0, derivative_bound: 1e6, n_list: vec![100, 400, 1600, 6400] }
    }
}

/// Decade increments of `Σ γ_n^p` over `n ∈ [10^lo, 10^hi]`.
fn decade_increments(family: &StepFamily, p: i32, lo: u32, hi: u32) -> Vec<f64> {
    let start = family.min_index().max(10u64.pow(lo));
    let mut out = Vec::new();
    let mut n = start;
    for d in lo..hi {
        let end = 10u64.pow(d + 1);
        // pairwise-ish summation from the small end
        let mut s = 0.0;
        let mut k = end;
        while k > n {
            k -= 1;
            s += family.gamma(k).powi(p);
        }
        out.push(s);
        n = end;
    }
    out
}

/// Checks A-1 … A-5 numerically.
pub fn validate_assumptions(
    model: &ModelSpec,
    schedule: &StepSchedule,
    innovations: &InnovationSpec,
    cutoff: &CutoffRule,
    opts: &ValidationOptions,
) -> AssumptionReport {
    let mut checks = Vec::new();

    // A-1: bounded derivatives on a tube around the trajectory
    let mut a1 = Check::new("A-1");
    let traj = crate::flows::FlowBundle::solve(model, schedule.horizon, 1e-10);
    match &traj {
        Ok(fb) => {
            let mut sup = [0.0f64; 4];
            let mut pts = Vec::new();
            for i in 0..=40 {
                let t = schedule.horizon * i as f64 / 40.0;
                let c = fb.theta_bar(t);
                for j in 0..=20 {
                    let x = c + opts.tube_radius * (2.0 * j as f64 / 20.0 - 1.0);
                    pts.push(x);
                    for (s, f) in sup.iter_mut().zip([&model.m1, &model.m2, &model.m3, &model.m4]) {
                        *s = s.max(f(x).abs());
                    }
                }
            }
            for (i, s) in sup.iter().enumerate() {
                a1.put(&format!("sup_m{}", i + 1), *s);
                if !s.is_finite() || *s > opts.derivative_bound {
                    a1.fail(format!("m{} unbounded on tube", i + 1));
                }
            }
            let mis = model.derivative_mismatch(&pts);
            a1.put("derivative_fd_mismatch", mis);
            if mis > 1e-5 {
                a1.fail(format!("supplied derivatives inconsistent (relative error {mis:.2e})"));
            }
        }
        Err(e) => a1.fail(format!("trajectory: {e}")),
    }
    let r0 = (model.m)(model.theta_star);
    a1.put("m_at_theta_star", r0);
    if r0.abs() > 1e-10 {
        a1.fail("m(theta_star) != 0");
    }
    checks.push(a1);

    // A-2
    let mut a2 = Check::new("A-2");
    let margin = model.attractivity_margin();
    a2.put("margin", margin);
    if !(margin < 0.0) {
        a2.fail("-sigma m'(theta*) + 1/2 must be negative");
    }
    if !(model.sigma > 0.0) {
        a2.fail("sigma must be positive");
    }
    checks.push(a2);

    // A-3
    let mut a3 = Check::new("A-3");
    let fam = &schedule.family;
    match build_grid(schedule) {
        Ok(g) => {
            let c = g.gammas[0] / g.gammas[g.m_of_n];
            a3.put("ratio_c", c);
            a3.put("m_of_n", g.m_of_n as f64);
            if !c.is_finite() {
                a3.fail("ratio constant not finite");
            }
        }
        Err(e) => a3.fail(format!("grid: {e}")),
    }
    if matches!(fam, StepFamily::Constant { .. }) {
        a3.fail("constant steps are not summable-square");
    } else {
        let d1 = decade_increments(fam, 1, 2, 6);
        let d2 = decade_increments(fam, 2, 2, 6);
        let r1 = d1[d1.len() - 1] / d1[0];
        let r2 = d2[d2.len() - 1] / d2[0];
        a3.put("sum_gamma_decade_ratio", r1);
        a3.put("sum_gamma2_decade_ratio", r2);
        // a divergent series keeps decade increments of comparable size,
        // a convergent one sees them collapse geometrically
        if r1 < 0.1 {
            a3.fail("sum of gamma appears finite");
        }
        if r2 > 0.01 {
            a3.fail("sum of gamma^2 appears infinite");
        }
    }
    checks.push(a3);

    // A-4
    checks.push(check_innovations(innovations));

    // A-5
    let mut a5 = Check::new("A-5");
    let mut prev: Option<(f64, f64)> = None;
    for &n in &opts.n_list {
        let g0 = schedule.with_shift(n).gamma0();
        let a = cutoff.level(g0);
        let r = a * g0.sqrt();
        a5.put(&format!("a_N[{n}]"), a);
        a5.put(&format!("a_N_sqrt_gamma0[{n}]"), r);
        if let Some((pa, pr)) = prev {
            if !(a > pa) {
                a5.fail(format!("a_N not increasing at N={n}"));
            }
            if !(r < pr) {
                a5.fail(format!("a_N sqrt(gamma0) not decreasing at N={n}"));
            }
        }
        prev = Some((a, r));
    }
    checks.push(a5);

    let all_pass = checks.iter().all(|c| c.pass);
    AssumptionReport { checks, all_pass }
}

/// Moment, tail and derivative-decay checks of the innovation law.
pub fn check_innovations(spec: &InnovationSpec) -> Check {
    let mut a4 = Check::new("A-4");
    if spec.law == InnovationLaw::Zero {
        a4.fail("degenerate innovation law");
        return a4;
    }
    let s = spec.smooth_order;
    let mexp = spec.tail_exponent;
    a4.put("S", s);
    a4.put("M", mexp);
    if !(s > 8.0) {
        a4.fail("S must exceed 8");
    }
    if !(mexp > s + 1.0) {
        a4.fail("M must exceed S + 1");
    }
    let rule = GaussRule::new(16);
    let mom = |p: i32, l: f64| composite(&rule, -l, l, 400, |z| z.powi(p) * spec.rho(z));
    let m0 = mom(0, 60.0);
    let m1 = mom(1, 60.0);
    let m2 = mom(2, 60.0);
    a4.put("mass_error", (m0 - 1.0).abs());
    a4.put("mean_error", m1.abs());
    a4.put("variance_error", (m2 - 1.0).abs());
    for (name, v) in [("mass", m0 - 1.0), ("mean", m1), ("variance", m2 - 1.0)] {
        if v.abs() > 1e-8 {
            a4.fail(format!("{name} off by {v:.2e}"));
        }
    }
    let abs9 = |l: f64| composite(&rule, -l, l, 400, |z| z.abs().powi(9) * spec.rho(z));
    let (n40, n80) = (abs9(40.0), abs9(80.0));
    a4.put("abs_moment_9", n80);
    if !n80.is_finite() || (n80 - n40).abs() > 1e-8 * n80 {
        a4.fail("ninth absolute moment not finite");
    }
    // derivative decay by finite differences: weighted sup must live in the bulk
    let h = 0.05;
    let binom = [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0, 0.0, 0.0], [1.0, -2.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, -3.0, 3.0, -1.0, 0.0, 0.0], [1.0, -4.0, 6.0, -4.0, 1.0, 0.0], [1.0, -5.0, 10.0, -10.0, 5.0, -1.0]];
    for nu in 0..=5usize {
        let d = |z: f64| {
            let mut acc = 0.0;
            for (j, b) in binom[nu].iter().enumerate().take(nu + 1) {
                acc += b * spec.rho(z + (nu as f64 / 2.0 - j as f64) * h);
            }
            acc / h.powi(nu as i32)
        };
        let mut bulk = 0.0f64;
        let mut tail = 0.0f64;
        for i in 0..=2000 {
            let z = -50.0 + 100.0 * i as f64 / 2000.0;
            let w = d(z).abs() * (1.0 + z.abs().powf(mexp));
            if z.abs() >= 30.0 {
                tail = tail.max(w);
            } else {
                bulk = bulk.max(w);
            }
        }
        a4.put(&format!("weighted_sup_d{nu}"), bulk.max(tail));
        if !(bulk.is_finite() && tail <= 1e-6 * bulk) {
            a4.fail(format!("derivative {nu} does not decay like |z|^-M"));
        }
    }
    a4
}

/// Shipped reference configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `m(θ) = θ`, Gaussian η.
    LinearGaussian,
    /// `m(θ) = θ + 0.2 sin θ`, logistic η.
    SineLogistic,
}

impl Preset {
    pub fn model(&self) -> ModelSpec {
        match self {
            Preset::LinearGaussian => ModelSpec::linear(1.0, 1.0, 1.0),
            Preset::SineLogistic => ModelSpec::sine_perturbed(0.2, 1.0, 1.0),
        }
    }

    pub fn innovations(&self) -> InnovationSpec {
        match self {
            Preset::LinearGaussian => InnovationSpec::gaussian(),
            Preset::SineLogistic => InnovationSpec::logistic(),
        }
    }

    pub fn family(&self) -> StepFamily {
        StepFamily::Harmonic { c: 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid() {
        let s = StepSchedule::new(StepFamily::Constant { gamma: 0.1 }, 0, 1.0);
        let g = build_grid(&s).unwrap();
        assert_eq!(g.m_of_n, 10);
        for (k, p) in g.points.iter().enumerate() {
            assert!((p - 0.1 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_grid_matches_partial_sums() {
        let s = StepSchedule::new(StepFamily::Harmonic { c: 1.0 }, 50, 0.5);
        let g = build_grid(&s).unwrap();
        let mut t = 0.0;
        let mut k = 0;
        while t < 0.5 {
            k += 1;
            t += 1.0 / (50 + k) as f64;
        }
        assert_eq!(g.m_of_n, k);
        for k in 0..g.m_of_n {
            assert!((g.points[k + 1] - g.points[k] - g.gammas[k + 1]).abs() < 1e-15);
        }
    }

    #[test]
    fn harmonic_log_grid_increases() {
        let s = StepSchedule::new(StepFamily::HarmonicLog, 100, 1.0);
        let g = build_grid(&s).unwrap();
        assert!(g.points.windows(2).all(|w| w[1] > w[0]));
        assert!(g.t_n >= 1.0);
    }

    #[test]
    fn grid_errors() {
        let s = StepSchedule::new(StepFamily::Power { c: 1.0, p: -0.5 }, 1, 1.0);
        assert!(matches!(build_grid(&s), Err(Error::NonDecreasingSteps { .. })));
        let s = StepSchedule::new(StepFamily::Power { c: 1.0, p: 2.0 }, 1, 10.0);
        assert!(matches!(build_grid_with(&s, 10_000), Err(Error::HorizonUnreachable { .. })));
    }

    #[test]
    fn alpha_values() {
        let c = StepSchedule::new(StepFamily::Constant { gamma: 0.3 }, 0, 1.0);
        assert_eq!(alpha(5, &c), 0.0);
        let h = StepSchedule::new(StepFamily::Harmonic { c: 1.0 }, 0, 1.0);
        let k = 10.0f64;
        let exact = (k + 1.0) * ((k + 1.0).sqrt() - k.sqrt()) / k.sqrt();
        assert!((alpha(10, &h) - exact).abs() < 1e-13);
        assert!((alpha(10, &h) - 0.5369).abs() < 1e-4);
    }

    #[test]
    fn validation_examples() {
        let opts = ValidationOptions::default();
        let m = ModelSpec::linear(1.0, 1.0, 1.0);
        let s = StepSchedule::new(StepFamily::Harmonic { c: 1.0 }, 100, 1.0);
        let r = validate_assumptions(&m, &s, &InnovationSpec::gaussian(), &CutoffRule::default(), &opts);
        assert!(r.all_pass, "{r:?}");
        assert_eq!(r.get("A-2").unwrap().measured["margin"], -0.5);
        let sq = StepSchedule::new(StepFamily::Power { c: 1.0, p: 2.0 }, 1, 0.5);
        let r = validate_assumptions(&m, &sq, &InnovationSpec::gaussian(), &CutoffRule::default(), &opts);
        assert!(!r.get("A-3").unwrap().pass);
        let r = validate_assumptions(&m, &s, &InnovationSpec::logistic(), &CutoffRule::default(), &opts);
        assert!(r.get("A-4").unwrap().pass, "{:?}", r.get("A-4"));
    }

    #[test]
    fn logistic_moments_and_cf() {
        let l = InnovationSpec::logistic();
        let rule = GaussRule::new(16);
        let m4 = composite(&rule, -80.0, 80.0, 400, |z| z.powi(4) * l.rho(z));
        assert!((m4 - 4.2).abs() < 1e-8);
        let w = 0.7;
        let cf = composite(&rule, -80.0, 80.0, 400, |z| (w * z).cos() * l.rho(z));
        assert!((cf - l.cf(w)).abs() < 1e-10);
    }
}
