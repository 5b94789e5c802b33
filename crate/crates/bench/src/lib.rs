//! Shared fixtures for the benchmarks.

use rmllt::{build_grid, CutoffDrift, CutoffRule, DeltaRule, FlowBundle, Preset, StepSchedule};

/// Flows and the cut-off drift of the sine/logistic preset at shift `n`.
pub fn sine_fixture(n: u64) -> (FlowBundle, CutoffDrift) {
    let preset = Preset::SineLogistic;
    let grid = build_grid(&StepSchedule::new(preset.family(), n, 1.0)).expect("grid");
    let fb = FlowBundle::solve(&preset.model(), grid.t_n, 1e-12).expect("flows");
    let drift = CutoffDrift::new(&fb, &grid, CutoffRule::default().level(grid.gamma0())).with_rule(DeltaRule::Secant);
    (fb, drift)
}
