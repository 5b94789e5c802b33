//! Density estimation and comparison metrics.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `∫K²` for the Gaussian kernel.
pub const GAUSS_KERNEL_ROUGHNESS: f64 = 0.282_094_791_773_878_14;

/// Evaluation surface of a transition density on an `(x, y)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    /// `values[i][j]` at `(x_i, y_j)`.
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub meta: GridMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub t: f64,
    pub t_term: f64,
    pub method: String,
}

/// `n` equispaced nodes on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl DensityGrid {
    /// Evaluates `f(x, y)` on the grid with zero error bars.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(x_nodes: &[f64], y_nodes: &[f64], meta: GridMeta, f: F) -> Self {
        let values: Vec<Vec<f64>> = x_nodes.iter().map(|&x| y_nodes.iter().map(|&y| f(x, y)).collect()).collect();
        let stderr = vec![vec![0.0; y_nodes.len()]; x_nodes.len()];
        Self { x_nodes: x_nodes.to_vec(), y_nodes: y_nodes.to_vec(), values, stderr, meta }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x_nodes.len(), self.y_nodes.len())
    }

    pub fn same_nodes(&self, other: &DensityGrid) -> bool {
        self.x_nodes == other.x_nodes && self.y_nodes == other.y_nodes
    }

    /// Trapezoid mass of each x-slice over the y nodes.
    pub fn slice_mass(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| {
                row.windows(2)
                    .zip(self.y_nodes.windows(2))
                    .map(|(v, y)| 0.5 * (v[0] + v[1]) * (y[1] - y[0]))
                    .sum()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Writes `x,y,value,stderr` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        wr.write_record(["x", "y", "value", "stderr"]).map_err(io)?;
        for (i, x) in self.x_nodes.iter().enumerate() {
            for (j, y) in self.y_nodes.iter().enumerate() {
                wr.write_record(&[x.to_string(), y.to_string(), self.values[i][j].to_string(), self.stderr[i][j].to_string()])
                    .map_err(io)?;
            }
        }
        wr.flush().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        Ok(())
    }

    /// Reads the format of [`DensityGrid::write_csv`]; rows must form a full tensor grid.
    pub fn read_csv<R: Read>(r: R, meta: GridMeta) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Invalid(format!("csv: {e}")))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Invalid(format!("csv: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(Error::Invalid("expected 4 columns".into()));
            }
            rows.push(v);
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        xs.dedup();
        let ny = rows.len() / xs.len().max(1);
        if xs.is_empty() || ny * xs.len() != rows.len() {
            return Err(Error::GridMismatch("rows do not form a tensor grid".into()));
        }
        let ys: Vec<f64> = rows[..ny].iter().map(|r| r[1]).collect();
        let values = rows.chunks(ny).map(|c| c.iter().map(|r| r[2]).collect()).collect();
        let stderr = rows.chunks(ny).map(|c| c.iter().map(|r| r[3]).collect()).collect();
        Ok(Self { x_nodes: xs, y_nodes: ys, values, stderr, meta })
    }
}

/// Bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// `1.06 ŝ n^{−1/5}`.
    Silverman,
    /// Silverman scaled by a factor.
    ScaledSilverman(f64),
    Fixed(f64),
}

/// One-dimensional KDE on a node set.
#[derive(Debug, Clone)]
pub struct Kde1 {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub bandwidth: f64,
    pub n: usize,
}

impl Kde1 {
    /// Asymptotic standard error `√(f R(K)/(n h))` at density level `f`.
    pub fn stderr_at(&self, f: f64) -> f64 {
        (f.max(0.0) * GAUSS_KERNEL_ROUGHNESS / (self.n as f64 * self.bandwidth)).sqrt()
    }
}

/// Sample mean and standard deviation.
pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Gaussian-kernel estimate at `nodes`, via linear binning on a grid of width `h/50`.
pub fn kde(samples: &[f64], rule: Bandwidth, nodes: &[f64]) -> Result<Kde1> {
    let n = samples.len();
    if n < 1000 {
        return Err(Error::Invalid(format!("kde needs at least 1000 samples, got {n}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let (_, sd) = mean_sd(samples);
    if !(sd > 1e-12) {
        return Err(Error::Degenerate("sample variance is zero".into()));
    }
    let h = match rule {
        Bandwidth::Silverman => 1.06 * sd * (n as f64).powf(-0.2),
        Bandwidth::ScaledSilverman(f) => f * 1.06 * sd * (n as f64).powf(-0.2),
        Bandwidth::Fixed(h) => h,
    };
    if !(h > 0.0) {
        return Err(Error::Invalid("bandwidth must be positive".into()));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dx = h / 50.0;
    let nb = ((hi - lo) / dx).ceil() as usize + 2;
    let mut bins = vec![0.0f64; nb];
    for &s in samples {
        let u = (s - lo) / dx;
        let i = (u.floor() as usize).min(nb - 2);
        let fr = u - i as f64;
        bins[i] += 1.0 - fr;
        bins[i + 1] += fr;
    }
    let reach = (9.0 * h / dx).ceil() as isize;
    let norm = 1.0 / (n as f64 * h * (2.0 * PI).sqrt());
    let values: Vec<f64> = nodes
        .iter()
        .map(|&y| {
            let c = ((y - lo) / dx).round() as isize;
            let mut acc = 0.0;
            for i in (c - reach).max(0)..=(c + reach).min(nb as isize - 1) {
                let b = bins[i as usize];
                if b != 0.0 {
                    let u = (y - (lo + i as f64 * dx)) / h;
                    acc += b * (-0.5 * u * u).exp();
                }
            }
            acc * norm
        })
        .collect();
    let stderr = values.iter().map(|&f| (f * GAUSS_KERNEL_ROUGHNESS / (n as f64 * h)).sqrt()).collect();
    Ok(Kde1 { values, stderr, bandwidth: h, n })
}

/// KDE surface from per-x sample sets.
pub fn kde_grid(x_nodes: &[f64], samples: &[Vec<f64>], rule: Bandwidth, y_nodes: &[f64], meta: GridMeta) -> Result<DensityGrid> {
    if samples.len() != x_nodes.len() {
        return Err(Error::GridMismatch("one sample set per x node required".into()));
    }
    let mut values = Vec::new();
    let mut stderr = Vec::new();
    for s in samples {
        let k = kde(s, rule, y_nodes)?;
        values.push(k.values);
        stderr.push(k.stderr);
    }
    Ok(DensityGrid { x_nodes: x_nodes.to_vec(), y_nodes: y_nodes.to_vec(), values, stderr, meta })
}

/// Largest `|kde − ref| / se`, with `se` the asymptotic standard error at
/// `max(kde, ref)` so empty tail bins are judged against the reference level.
pub fn max_z_score(est: &Kde1, reference: &[f64]) -> f64 {
    est.values
        .iter()
        .zip(reference)
        .map(|(&f, &p)| {
            let se = est.stderr_at(f.max(p));
            if se == 0.0 {
                if f == p { 0.0 } else { f64::INFINITY }
            } else {
                (f - p).abs() / se
            }
        })
        .fold(0.0, f64::max)
}

/// Weight applied by [`weighted_gap`].
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    None,
    /// `τ^{−1/2} / (1 + |flow(y) − x|/√τ)^{exponent}` with one flow value per y node.
    Tail { exponent: f64, tau: f64, flow: Vec<f64> },
}

impl Weight {
    pub fn at(&self, x: f64, j: usize) -> f64 {
        match self {
            Weight::None => 1.0,
            Weight::Tail { exponent, tau, flow } => {
                let st = tau.sqrt();
                1.0 / (st * (1.0 + (flow[j] - x).abs() / st).powf(*exponent))
            }
        }
    }
}

/// `sup |a − b| / weight` over shared nodes.
pub fn weighted_gap(a: &DensityGrid, b: &DensityGrid, weight: &Weight) -> Result<f64> {
    if !a.same_nodes(b) {
        return Err(Error::GridMismatch("grids do not share nodes".into()));
    }
    if let Weight::Tail { flow, .. } = weight {
        if flow.len() != a.y_nodes.len() {
            return Err(Error::GridMismatch("one flow value per y node required".into()));
        }
    }
    let mut sup = 0.0f64;
    for (i, &x) in a.x_nodes.iter().enumerate() {
        for j in 0..a.y_nodes.len() {
            sup = sup.max((a.values[i][j] - b.values[i][j]).abs() / weight.at(x, j));
        }
    }
    Ok(sup)
}

/// Least-squares fit of `log y = intercept + slope log x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Minimum spread `max x / min x` accepted by [`fit_rate`].
pub const MIN_RATE_SPAN: f64 = 2.0;

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::Invalid(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(Error::Invalid("abscissa and ordinate must be positive".into()));
    }
    let xmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if xmax / xmin < MIN_RATE_SPAN {
        return Err(Error::Invalid(format!("abscissa spans only a factor {:.3}", xmax / xmin)));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit {
        abscissa: points.iter().map(|p| p.0).collect(),
        ordinate: points.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        r2,
    })
}

/// Constant of a bound `value ≤ C · shape`: the log-domain least-squares
/// level and the smallest constant that makes all residuals one-sided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub c_ls: f64,
    pub c: f64,
    pub n: usize,
}

pub fn fit_bound(values: &[f64], shapes: &[f64]) -> Result<BoundFit> {
    let mut logs = Vec::new();
    for (&v, &s) in values.iter().zip(shapes) {
        if !(s > 0.0) || !v.is_finite() {
            return Err(Error::Invalid("bound shape must be positive and value finite".into()));
        }
        if v.abs() > 0.0 {
            logs.push((v.abs() / s).ln());
        }
    }
    if logs.is_empty() {
        return Ok(BoundFit { c_ls: 0.0, c: 0.0, n: values.len() });
    }
    let ls = logs.iter().sum::<f64>() / logs.len() as f64;
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundFit { c_ls: ls.exp(), c: mx.exp(), n: values.len() })
}
