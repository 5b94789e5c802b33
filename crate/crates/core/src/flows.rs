//! Deterministic layer: the mean-field trajectory θ̄, the linearized drift A(t),
//! the resolvent, the chain drifts G_N / F_N and the three backward flows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{alpha_from, ModelSpec, TimeGrid};
use crate::ode::{self, DenseSolution, OdeOptions};
use crate::quad::GaussRule;

/// θ̄ on `[0, t_end]` with `I(t) = ∫_0^t A(u) du`, so `Φ(s, t) = e^{I(s) − I(t)}`.
#[derive(Debug, Clone)]
pub struct FlowBundle {
    pub model: ModelSpec,
    sol: DenseSolution<2>,
    t_end: f64,
}

impl FlowBundle {
    /// Solves `θ̄' = −σ m(θ̄)`, `θ̄_0 = θ_0` up to `t_end`.
    pub fn solve(model: &ModelSpec, t_end: f64, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Invalid("tolerance must be positive".into()));
        }
        let m = model.clone();
        let rhs = move |_t: f64, y: &[f64; 2]| [-m.sigma * (m.m)(y[0]), -m.sigma * (m.m1)(y[0]) + 0.5];
        let sol = ode::solve(rhs, 0.0, [model.theta0, 0.0], t_end, &[], &OdeOptions::with_tol(tol))?;
        Ok(Self { model: model.clone(), sol, t_end })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    #[inline]
    pub fn theta_bar(&self, t: f64) -> f64 {
        self.sol.eval(t.clamp(0.0, self.t_end))[0]
    }

    /// `A(t) = −σ m'(θ̄_t) + 1/2`.
    #[inline]
    pub fn a_coef(&self, t: f64) -> f64 {
        -self.model.sigma * (self.model.m1)(self.theta_bar(t)) + 0.5
    }

    #[inline]
    pub fn int_a(&self, t: f64) -> f64 {
        self.sol.eval(t.clamp(0.0, self.t_end))[1]
    }

    /// `Φ(s, t) = exp(∫_t^s A)`.
    #[inline]
    pub fn resolvent(&self, s: f64, t: f64) -> f64 {
        (self.int_a(s) - self.int_a(t)).exp()
    }

    /// Limit flow through the resolvent: `θ_{t,T}(y) = Φ(t, T) y`.
    #[inline]
    pub fn limit_flow(&self, t: f64, t_term: f64, y: f64) -> f64 {
        self.resolvent(t, t_term) * y
    }
}

/// How the δ-average `∫_0^1 m'(a + δ s) dδ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaRule {
    /// 16-node Gauss-Legendre.
    Gauss16,
    /// `(m(a+s) − m(a))/s`, with Gauss16 when `|s| < 1e-3`.
    Secant,
}

/// Drift coefficients `G_N`, `F_N` of the renormalized and cut-off chains on a grid.
#[derive(Debug, Clone)]
pub struct CutoffDrift {
    pub flows: FlowBundle,
    pub grid: TimeGrid,
    pub a_n: f64,
    pub rule: DeltaRule,
    alpha: Vec<f64>,
    ratio: Vec<f64>,
    sqrt_g: Vec<f64>,
    gl: GaussRule,
}

impl CutoffDrift {
    pub fn new(flows: &FlowBundle, grid: &TimeGrid, a_n: f64) -> Self {
        let n = grid.m_of_n + 1;
        let g = &grid.gammas;
        Self {
            flows: flows.clone(),
            grid: grid.clone(),
            a_n,
            rule: DeltaRule::Gauss16,
            alpha: (0..n).map(|k| alpha_from(g[k], g[k + 1])).collect(),
            ratio: (0..n).map(|k| (g[k] / g[k + 1]).sqrt()).collect(),
            sqrt_g: (0..n).map(|k| g[k].sqrt()).collect(),
            gl: GaussRule::new(16),
        }
    }

    pub fn with_rule(mut self, rule: DeltaRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn model(&self) -> &ModelSpec {
        &self.flows.model
    }

    #[inline]
    pub fn alpha_k(&self, k: usize) -> f64 {
        self.alpha[k]
    }

    /// `∫_0^1 m'(a + δ s) dδ`.
    #[inline]
    pub fn delta_avg(&self, a: f64, s: f64) -> f64 {
        let m = &self.flows.model;
        if m.affine {
            return (m.m1)(a);
        }
        if self.rule == DeltaRule::Secant && s.abs() >= 1e-3 {
            return ((m.m)(a + s) - (m.m)(a)) / s;
        }
        delta_avg_gauss(&self.gl, m, a, s)
    }

    /// `∫_0^1 δ m''(a + δ s) dδ`, the s-derivative of the δ-average.
    fn delta_avg_ds(&self, a: f64, s: f64) -> f64 {
        let m = &self.flows.model;
        if m.affine {
            return 0.0;
        }
        self.gl.integrate(0.0, 1.0, |d| d * (m.m2)(a + d * s))
    }

    /// `G_N(t, x)` with `k` resolved from `t`.
    pub fn g(&self, t: f64, x: f64) -> f64 {
        let k = self.grid.index_of(t);
        self.g_at(k, self.flows.theta_bar(t), x)
    }

    /// `G_N` with the grid index and θ̄ supplied.
    #[inline]
    pub fn g_at(&self, k: usize, theta_bar: f64, x: f64) -> f64 {
        let m = &self.flows.model;
        self.alpha[k] - m.sigma * self.ratio[k] * self.delta_avg(theta_bar, x * self.sqrt_g[k])
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(-self.a_n, self.a_n)
    }

    /// `F_N(t, x) = G_N(t, sign(x)(|x| ∧ a_N))`.
    pub fn f(&self, t: f64, x: f64) -> f64 {
        self.g(t, self.clamp(x))
    }

    #[inline]
    pub fn f_at(&self, k: usize, theta_bar: f64, x: f64) -> f64 {
        self.g_at(k, theta_bar, self.clamp(x))
    }

    /// Drift of the cut-off dynamics, `F_N(t, x) x`.
    #[inline]
    pub fn b(&self, t: f64, x: f64) -> f64 {
        self.f(t, x) * x
    }

    /// `∂_x (F_N(t, x) x)`.
    pub fn db_dx(&self, t: f64, x: f64) -> f64 {
        let k = self.grid.index_of(t);
        let tb = self.flows.theta_bar(t);
        let f = self.f_at(k, tb, x);
        if x.abs() > self.a_n {
            return f;
        }
        let m = &self.flows.model;
        let df = -m.sigma * self.ratio[k] * self.sqrt_g[k] * self.delta_avg_ds(tb, x * self.sqrt_g[k]);
        f + x * df
    }

    /// `∂_x F_N(t, x)`; identically 0 beyond the cut-off.
    pub fn df_dx(&self, t: f64, x: f64) -> f64 {
        if x.abs() > self.a_n {
            return 0.0;
        }
        let k = self.grid.index_of(t);
        let tb = self.flows.theta_bar(t);
        let m = &self.flows.model;
        -m.sigma * self.ratio[k] * self.sqrt_g[k] * self.delta_avg_ds(tb, x * self.sqrt_g[k])
    }

    /// Solves `z' = F_N(t, z) z`, `z_T = y` backward to 0.
    pub fn backward_flow_cutoff(&self, t_term: f64, y: f64, tol: f64) -> Result<BackwardFlow> {
        let rhs = |t: f64, z: &[f64; 1]| [self.b(t, z[0])];
        let sol = ode::solve(rhs, t_term, [y], 0.0, &self.grid.points, &OdeOptions::with_tol(tol))?;
        Ok(BackwardFlow { kind: FlowKind::Cutoff, t_term, y, sol })
    }

    /// Backward Euler from `(t_M, y)`: `x_k = x_{k+1} − F_N(t_{k+1}, x_{k+1}) x_{k+1} γ_{k+1}`.
    pub fn backward_euler(&self, y: f64) -> Result<Vec<f64>> {
        self.backward_euler_from(self.grid.m_of_n, y)
    }

    /// Backward Euler from `(t_j, y)`, returning `x_0, …, x_j`.
    pub fn backward_euler_from(&self, j: usize, y: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; j + 1];
        out[j] = y;
        let bound = 1e12 * (1.0 + y.abs());
        for k in (0..j).rev() {
            let x = out[k + 1];
            let tb = self.flows.theta_bar(self.grid.points[k + 1]);
            let next = x - self.f_at(k + 1, tb, x) * x * self.grid.gammas[k + 1];
            if !next.is_finite() || next.abs() > bound {
                return Err(Error::Explosion { value: next, bound, t: self.grid.points[k] });
            }
            out[k] = next;
        }
        Ok(out)
    }
}

#[inline]
fn delta_avg_gauss(gl: &GaussRule, m: &ModelSpec, a: f64, s: f64) -> f64 {
    gl.integrate(0.0, 1.0, |d| (m.m1)(a + d * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Limit,
    Cutoff,
}

/// A terminal-value solution `t ↦ z_t` with `z_T = y`.
#[derive(Debug, Clone)]
pub struct BackwardFlow {
    pub kind: FlowKind,
    pub t_term: f64,
    pub y: f64,
    sol: DenseSolution<1>,
}

impl BackwardFlow {
    pub fn eval(&self, t: f64) -> f64 {
        self.sol.eval(t.clamp(0.0, self.t_term))[0]
    }
}

/// Solves `z' = A(t) z`, `z_T = y` backward to 0.
pub fn backward_flow_limit(flows: &FlowBundle, t_term: f64, y: f64, tol: f64) -> Result<BackwardFlow> {
    let rhs = |t: f64, z: &[f64; 1]| [flows.a_coef(t) * z[0]];
    let sol = ode::solve(rhs, t_term, [y], 0.0, &[], &OdeOptions::with_tol(tol))?;
    Ok(BackwardFlow { kind: FlowKind::Limit, t_term, y, sol })
}

/// `Λ_{T−t}^N(y) = 1 + √(T−t)(1+|y|²) + |y| e^{C(T−t) a_N² γ_0 |y|²}(√(T−t) + (T−t)(1+|y|²))`.
pub fn lambda_factor(tau: f64, y: f64, c: f64, a_n: f64, gamma0: f64) -> f64 {
    let tau = tau.max(0.0);
    let y2 = y * y;
    let e = (c * tau * a_n * a_n * gamma0 * y2).exp();
    1.0 + tau.sqrt() * (1.0 + y2) + y.abs() * e * (tau.sqrt() + tau * (1.0 + y2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, StepFamily, StepSchedule};

    #[test]
    fn linear_trajectory_closed_form() {
        let fb = FlowBundle::solve(&ModelSpec::linear(1.0, 1.0, 1.0), 2.0, 1e-10).unwrap();
        for i in 0..=40 {
            let t = i as f64 / 20.0;
            assert!((fb.theta_bar(t) - (-t).exp()).abs() < 1e-9);
            assert!((fb.a_coef(t) + 0.5).abs() < 1e-14);
        }
        assert!((fb.resolvent(1.0, 0.0) - (-0.5f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn equilibrium_start_stays() {
        let fb = FlowBundle::solve(&ModelSpec::sine_perturbed(0.2, 1.0, 0.0), 1.0, 1e-10).unwrap();
        assert!(fb.theta_bar(0.7).abs() < 1e-14);
    }

    #[test]
    fn euler_constant_drift_product() {
        let m = ModelSpec::linear(1.0, 1.0, 1.0);
        let s = StepSchedule::new(StepFamily::Constant { gamma: 0.05 }, 0, 1.0);
        let g = build_grid(&s).unwrap();
        let fb = FlowBundle::solve(&m, g.t_n, 1e-10).unwrap();
        let d = CutoffDrift::new(&fb, &g, f64::INFINITY);
        // constant steps: α = 0, F = −σ m' = −1
        let xs = d.backward_euler(2.0).unwrap();
        for (k, x) in xs.iter().enumerate() {
            let steps = (g.m_of_n - k) as i32;
            assert!((x - 2.0 * (1.05f64).powi(steps)).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_edges() {
        assert!((lambda_factor(0.3, 0.0, 1.0, 3.0, 0.01) - (1.0 + 0.3f64.sqrt())).abs() < 1e-15);
        assert_eq!(lambda_factor(0.0, 2.0, 1.0, 3.0, 0.01), 1.0);
    }
}
