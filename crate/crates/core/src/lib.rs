//! Robbins-Monro recursions, their renormalized and cut-off chains, the
//! limiting Gaussian diffusion and parametrix expansions of the transition
//! densities of both.
//!
//! The recursion is `θ_{n+1} = θ_n − γ_{n+1} σ (m(θ_n) − η_{n+1})`, whose mean
//! field ODE is `θ̄' = −σ m(θ̄)`. Fluctuations `U_k = (θ_k^N − θ̄_{t_k})/√γ_k^N`
//! around it behave like the diffusion `dX = A(t) X dt + σ dW` with
//! `A(t) = −σ m'(θ̄_t) + 1/2`.

pub mod chains;
pub mod diffusions;
pub mod error;
pub mod estimate;
pub mod flows;
pub mod model;
pub mod ode;
pub mod parametrix;
pub mod quad;
pub mod rng;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use estimate::{DensityGrid, RateFit};
pub use flows::{BackwardFlow, CutoffDrift, DeltaRule, FlowBundle, FlowKind};
pub use model::{
    alpha, build_grid, validate_assumptions, AssumptionReport, CutoffRule, InnovationLaw, InnovationSpec, ModelSpec,
    Preset, StepFamily, StepSchedule, TimeGrid,
};
