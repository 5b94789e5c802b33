//! Dormand-Prince 5(4) with step control and continuous output.
//!
//! Integration may run forward or backward in time. Right-hand sides that are
//! only piecewise smooth in `t` are handled by passing the break points, which
//! the integrator never steps across.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
struct Segment<const D: usize> {
    t0: f64,
    h: f64,
    r: [[f64; D]; 5],
}

/// Continuous solution produced by [`solve`].
#[derive(Debug, Clone)]
pub struct DenseSolution<const D: usize> {
    segs: Vec<Segment<D>>,
    t_start: f64,
    t_end: f64,
    y_end: [f64; D],
}

impl<const D: usize> DenseSolution<D> {
    pub fn t_start(&self) -> f64 {
        self.t_start
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }
    pub fn y_end(&self) -> [f64; D] {
        self.y_end
    }
    pub fn steps(&self) -> usize {
        self.segs.len()
    }

    /// State at `t`, which must lie between the start and end times.
    pub fn eval(&self, t: f64) -> [f64; D] {
        let fwd = self.t_end >= self.t_start;
        // segments are stored in integration order
        let idx = if fwd {
            self.segs.partition_point(|s| s.t0 + s.h <= t)
        } else {
            self.segs.partition_point(|s| s.t0 + s.h >= t)
        };
        let s = &self.segs[idx.min(self.segs.len() - 1)];
        let th = ((t - s.t0) / s.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = s.r[0][i] + th * (s.r[1][i] + th1 * (s.r[2][i] + th * (s.r[3][i] + th1 * s.r[4][i])));
        }
        out
    }
}

/// Options for [`solve`].
#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, h_min: 1e-14, max_steps: 5_000_000 }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self::with_tol(1e-10)
    }
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` to `t1`; `breaks` lists times the
/// right-hand side may jump at (any order, any values).
pub fn solve<const D: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; D],
    t1: f64,
    breaks: &[f64],
    opts: &OdeOptions,
) -> Result<DenseSolution<D>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut stops: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| (b - t0) * dir > 0.0 && (t1 - b) * dir > 0.0)
        .collect();
    stops.sort_by(|a, b| (dir * a).partial_cmp(&(dir * b)).unwrap());
    stops.dedup();
    stops.push(t1);

    let mut segs = Vec::new();
    let mut t = t0;
    let mut y = y0;
    let span = (t1 - t0).abs();
    let mut h_abs = (span * 1e-3).max(1e-6).min(span.max(1e-300));
    let mut steps = 0usize;
    for &stop in &stops {
        // keep evaluations strictly inside the current piece so a jump at
        // either end is seen from the correct side
        let (lo, hi) = if dir > 0.0 { (t, stop) } else { (stop, t) };
        let pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        let (lo, hi) = if hi - lo > 4.0 * pad { (lo + pad, hi - pad) } else { (lo, hi) };
        let f = |s: f64, y: &[f64; D]| f(s.clamp(lo, hi), y);
        let mut k1 = f(t, &y);
        while (stop - t) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Integrator { t, reason: "maximum step count exceeded".into() });
            }
            let rem = (stop - t).abs();
            let last = h_abs >= rem;
            let h = dir * if last { rem } else { h_abs };
            let step = |a: &[f64; D], coeffs: &[(f64, &[f64; D])]| {
                let mut o = *a;
                for (c, k) in coeffs {
                    for i in 0..D {
                        o[i] += h * c * k[i];
                    }
                }
                o
            };
            let k2 = f(t + C2 * h, &step(&y, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &step(&y, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &step(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(t + C5 * h, &step(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = f(t + h, &step(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
            let y1 = step(&y, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(t + h, &y1);
            let mut err = 0.0f64;
            for i in 0..D {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                return Err(Error::Integrator { t, reason: "non-finite state".into() });
            }
            if err <= 1.0 {
                let mut r = [[0.0; D]; 5];
                for i in 0..D {
                    let dy = y1[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    r[0][i] = y[i];
                    r[1][i] = dy;
                    r[2][i] = bspl;
                    r[3][i] = dy - h * k7[i] - bspl;
                    r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                segs.push(Segment { t0: t, h, r });
                t = if last { stop } else { t + h };
                y = y1;
                k1 = k7;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err > 1.0 || !last {
                h_abs *= fac;
            }
            if h_abs < opts.h_min {
                return Err(Error::Integrator { t, reason: "step size underflow".into() });
            }
        }
    }
    if segs.is_empty() {
        // zero-length span: a degenerate constant segment
        segs.push(Segment { t0, h: if dir > 0.0 { 1.0 } else { -1.0 }, r: [y0, [0.0; D], [0.0; D], [0.0; D], [0.0; D]] });
    }
    Ok(DenseSolution { segs, t_start: t0, t_end: t1, y_end: y })
}
