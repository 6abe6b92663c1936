//! Bayesian optimization of classifier hyperparameters.
//!
//! A Gaussian-process surrogate (squared-exponential kernel with one
//! length-scale per input) is refit after every evaluation; the next point
//! maximizes expected improvement. Grid search is available for exhaustive
//! comparisons.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::ml_classifiers::{self, Distance, MlFamily, MlHyperparams, NbMode};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DimKind {
    /// Searched uniformly in ln x.
    LogReal {
        lower: f64,
        upper: f64,
    },
    Real {
        lower: f64,
        upper: f64,
    },
    /// Searched as a real and rounded at evaluation.
    Integer {
        lower: i64,
        upper: i64,
    },
    Categorical {
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub kind: DimKind,
}

impl Dim {
    pub fn new(name: &str, kind: DimKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }

    fn encoded_width(&self) -> usize {
        match &self.kind {
            DimKind::Categorical { levels } => levels.len(),
            _ => 1,
        }
    }

    /// Maps u ∈ [0, 1] onto the dimension.
    fn decode(&self, u: f64) -> ParamValue {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DimKind::LogReal { lower, upper } => {
                ParamValue::Real((lower.ln() + u * (upper.ln() - lower.ln())).exp())
            }
            DimKind::Real { lower, upper } => ParamValue::Real(lower + u * (upper - lower)),
            DimKind::Integer { lower, upper } => {
                ParamValue::Integer((*lower as f64 + u * (upper - lower) as f64).round() as i64)
            }
            DimKind::Categorical { levels } => {
                let i = ((u * levels.len() as f64).floor() as usize).min(levels.len() - 1);
                ParamValue::Categorical(levels[i].clone())
            }
        }
    }

    /// Surrogate-input coordinates of a value (one-hot for categoricals).
    fn encode(&self, v: &ParamValue, out: &mut Vec<f64>) {
        match (&self.kind, v) {
            (DimKind::LogReal { lower, upper }, ParamValue::Real(x)) => {
                out.push((x.ln() - lower.ln()) / (upper.ln() - lower.ln()))
            }
            (DimKind::Real { lower, upper }, ParamValue::Real(x)) => {
                out.push((x - lower) / (upper - lower))
            }
            (DimKind::Integer { lower, upper }, ParamValue::Integer(x)) => {
                out.push(if upper > lower {
                    (x - lower) as f64 / (upper - lower) as f64
                } else {
                    0.5
                })
            }
            (DimKind::Categorical { levels }, ParamValue::Categorical(s)) => {
                out.extend(levels.iter().map(|l| if l == s { 1.0 } else { 0.0 }))
            }
            _ => out.extend(std::iter::repeat_n(0.0, self.encoded_width())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Integer(i64),
    Real(f64),
    Categorical(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Real(x) => Some(*x),
            ParamValue::Integer(i) => Some(*i as f64),
            ParamValue::Categorical(_) => None,
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Integer(i) => write!(f, "{i}"),
            ParamValue::Real(x) => write!(f, "{x}"),
            ParamValue::Categorical(s) => f.write_str(s),
        }
    }
}

/// Values aligned with [`SearchSpace::dims`].
pub type Point = Vec<ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Validation("search space has no dimensions".into()));
        }
        for d in &dims {
            let ok = match &d.kind {
                DimKind::LogReal { lower, upper } => {
                    *lower > 0.0 && lower < upper && upper.is_finite()
                }
                DimKind::Real { lower, upper } => {
                    lower.is_finite() && upper.is_finite() && lower < upper
                }
                DimKind::Integer { lower, upper } => lower <= upper,
                DimKind::Categorical { levels } => !levels.is_empty(),
            };
            if !ok {
                return Err(Error::Validation(format!(
                    "invalid bounds for dimension `{}`",
                    d.name
                )));
            }
        }
        Ok(Self { dims })
    }

    pub fn decode(&self, u: &[f64]) -> Point {
        self.dims.iter().zip(u).map(|(d, &x)| d.decode(x)).collect()
    }

    pub fn encode(&self, p: &Point) -> Vec<f64> {
        let mut out = Vec::new();
        for (d, v) in self.dims.iter().zip(p) {
            d.encode(v, &mut out);
        }
        out
    }

    pub fn named(&self, p: &Point) -> BTreeMap<String, ParamValue> {
        self.dims
            .iter()
            .map(|d| d.name.clone())
            .zip(p.iter().cloned())
            .collect()
    }

    /// Full factorial grid: `per_dim` values for real dimensions, every
    /// integer or level when there are at most `per_dim` of them.
    pub fn grid(&self, per_dim: usize) -> Vec<Point> {
        let axes: Vec<Vec<ParamValue>> = self
            .dims
            .iter()
            .map(|d| match &d.kind {
                DimKind::Categorical { levels } => levels
                    .iter()
                    .cloned()
                    .map(ParamValue::Categorical)
                    .collect(),
                DimKind::Integer { lower, upper } if (upper - lower + 1) as usize <= per_dim => {
                    (*lower..=*upper).map(ParamValue::Integer).collect()
                }
                _ => {
                    let mut vals: Vec<ParamValue> = (0..per_dim)
                        .map(|i| {
                            d.decode(if per_dim == 1 {
                                0.5
                            } else {
                                i as f64 / (per_dim - 1) as f64
                            })
                        })
                        .collect();
                    vals.dedup();
                    vals
                }
            })
            .collect();
        let mut out: Vec<Point> = vec![vec![]];
        for axis in axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v.clone());
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub point: Point,
    /// +∞ when the objective failed at this point.
    pub loss: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateGrid {
    pub dims: Vec<String>,
    /// (coordinates, posterior mean, posterior std) in loss units.
    pub rows: Vec<(Vec<f64>, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_point: Point,
    pub best_objective: f64,
    pub trace: Vec<TraceEntry>,
    pub surrogate: Option<SurrogateGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub budget: usize,
    pub initial_points: usize,
    pub candidates: usize,
    pub seed: u64,
    /// Evaluate the final surrogate on a grid over the first two numeric dims.
    pub surrogate_grid: bool,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            initial_points: 5,
            candidates: 1024,
            seed: 0,
            surrogate_grid: false,
        }
    }
}

pub const NOISE_VARIANCE: f64 = 1e-6;

/// Zero-mean GP regression on standardized targets.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    ln_lengths: Vec<f64>,
    ln_signal: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn se_kernel(a: &[f64], b: &[f64], ln_lengths: &[f64], signal: f64) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .zip(ln_lengths)
        .map(|((x, y), l)| ((x - y) / l.exp()).powi(2))
        .sum();
    signal * (-0.5 * d2).exp()
}

const LN_LENGTH_RANGE: (f64, f64) = (-4.6, 2.3);
const LN_SIGNAL_RANGE: (f64, f64) = (-4.6, 4.6);

impl GaussianProcess {
    fn gram(x: &[Vec<f64>], ln_lengths: &[f64], ln_signal: f64) -> DMatrix<f64> {
        let n = x.len();
        let s = ln_signal.exp();
        DMatrix::from_fn(n, n, |i, j| {
            se_kernel(&x[i], &x[j], ln_lengths, s) + if i == j { NOISE_VARIANCE } else { 0.0 }
        })
    }

    /// Log marginal likelihood and its gradient in (ln ℓ₁…ln ℓ_d, ln σ_f²).
    fn lml(x: &[Vec<f64>], y: &DVector<f64>, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let d = theta.len() - 1;
        let (ln_l, ln_s) = (&theta[..d], theta[d]);
        let k = Self::gram(x, ln_l, ln_s);
        let chol = k.clone().cholesky()?;
        let alpha = chol.solve(y);
        let n = x.len() as f64;
        let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let value =
            -0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        let w = &alpha * alpha.transpose() - chol.inverse();
        let kf = k - DMatrix::identity(x.len(), x.len()) * NOISE_VARIANCE;
        let mut grad = vec![0.0; d + 1];
        for i in 0..x.len() {
            for j in 0..x.len() {
                let base = w[(i, j)] * kf[(i, j)];
                for (dd, g) in grad.iter_mut().enumerate().take(d) {
                    *g += 0.5 * base * ((x[i][dd] - x[j][dd]) / ln_l[dd].exp()).powi(2);
                }
                grad[d] += 0.5 * base;
            }
        }
        Some((value, grad))
    }

    /// Fits length-scales and signal variance by gradient ascent on the log
    /// marginal likelihood from each of `starts`.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], starts: &[Vec<f64>]) -> Result<Self> {
        let n = y.len();
        if n == 0 || x.len() != n {
            return Err(Error::Validation(
                "GP needs matching, non-empty inputs".into(),
            ));
        }
        let dim = x[0].len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let y_scale = if sd > 1e-12 { sd } else { 1.0 };
        let yn = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
        let clamp = |t: &mut Vec<f64>| {
            for (i, v) in t.iter_mut().enumerate() {
                let (lo, hi) = if i < dim {
                    LN_LENGTH_RANGE
                } else {
                    LN_SIGNAL_RANGE
                };
                *v = v.clamp(lo, hi);
            }
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts.iter().filter(|s| s.len() == dim + 1) {
            let mut theta = start.clone();
            clamp(&mut theta);
            let Some((mut val, mut grad)) = Self::lml(&x, &yn, &theta) else {
                continue;
            };
            let mut step = 0.1;
            for _ in 0..60 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm < 1e-6 {
                    break;
                }
                let mut improved = false;
                while step > 1e-6 {
                    let mut cand: Vec<f64> = theta
                        .iter()
                        .zip(&grad)
                        .map(|(t, g)| t + step * g / norm)
                        .collect();
                    clamp(&mut cand);
                    if let Some((v, g)) = Self::lml(&x, &yn, &cand) {
                        if v > val {
                            theta = cand;
                            val = v;
                            grad = g;
                            step *= 1.5;
                            improved = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !improved {
                    break;
                }
            }
            if best.as_ref().is_none_or(|b| val > b.0) {
                best = Some((val, theta));
            }
        }
        let (_, theta) =
            best.ok_or_else(|| Error::Numeric("GP kernel matrix is not positive definite".into()))?;
        let ln_lengths = theta[..dim].to_vec();
        let ln_signal = theta[dim];
        let chol = Self::gram(&x, &ln_lengths, ln_signal)
            .cholesky()
            .ok_or_else(|| Error::Numeric("GP kernel matrix is not positive definite".into()))?;
        let alpha = chol.solve(&yn);
        Ok(Self {
            x,
            y_mean,
            y_scale,
            ln_lengths,
            ln_signal,
            chol,
            alpha,
        })
    }

    pub fn hyperparameters(&self) -> Vec<f64> {
        let mut t = self.ln_lengths.clone();
        t.push(self.ln_signal);
        t
    }

    /// Posterior mean and standard deviation in standardized units.
    fn predict_normalized(&self, z: &[f64]) -> (f64, f64) {
        let s = self.ln_signal.exp();
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|xi| se_kernel(xi, z, &self.ln_lengths, s)),
        );
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .unwrap_or_else(|| DVector::zeros(ks.len()));
        let var = (s - v.dot(&v)).max(1e-12);
        (mean, var.sqrt())
    }

    /// Posterior mean and standard deviation in target units.
    pub fn predict(&self, z: &[f64]) -> (f64, f64) {
        let (m, s) = self.predict_normalized(z);
        (self.y_mean + m * self.y_scale, s * self.y_scale)
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a Gaussian posterior.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    if std <= 0.0 {
        return (best - mean).max(0.0);
    }
    let imp = best - mean;
    let z = imp / std;
    imp * normal_cdf(z) + std * normal_pdf(z)
}

/// Latin-hypercube sample of `n` points in [0, 1]^d.
pub fn latin_hypercube(n: usize, d: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            pts[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

fn eval_loss<F: Fn(&Point) -> Result<f64>>(objective: &F, p: &Point) -> f64 {
    match objective(p) {
        Ok(v) if !v.is_nan() => v,
        _ => f64::INFINITY,
    }
}

fn push_trace(trace: &mut Vec<TraceEntry>, point: Point, loss: f64) {
    let prev = trace.last().map_or(f64::INFINITY, |t| t.incumbent);
    trace.push(TraceEntry {
        iteration: trace.len() + 1,
        point,
        loss,
        incumbent: prev.min(loss),
    });
}

fn finish(trace: Vec<TraceEntry>, surrogate: Option<SurrogateGrid>) -> Result<OptResult> {
    let best = trace
        .iter()
        .filter(|t| t.loss == t.incumbent)
        .min_by(|a, b| a.loss.total_cmp(&b.loss))
        .ok_or_else(|| Error::Validation("no evaluations".into()))?;
    Ok(OptResult {
        best_point: best.point.clone(),
        best_objective: best.loss,
        trace,
        surrogate,
    })
}

/// GP/EI minimization of `objective` over `space`.
pub fn optimize<F>(objective: F, space: &SearchSpace, cfg: &OptConfig) -> Result<OptResult>
where
    F: Fn(&Point) -> Result<f64> + Sync,
{
    if cfg.budget < 5 {
        return Err(Error::Validation(format!(
            "budget {} is below the minimum of 5",
            cfg.budget
        )));
    }
    let d = space.dims.len();
    let mut rng = seed::rng(cfg.seed);
    let n0 = cfg.initial_points.min(cfg.budget).max(1);
    let design: Vec<Point> = latin_hypercube(n0, d, &mut rng)
        .iter()
        .map(|u| space.decode(u))
        .collect();
    let losses: Vec<f64> = design
        .par_iter()
        .map(|p| eval_loss(&objective, p))
        .collect();
    let mut trace = Vec::with_capacity(cfg.budget);
    for (p, l) in design.into_iter().zip(losses) {
        push_trace(&mut trace, p, l);
    }
    let enc_dim = space.encode(&trace[0].point).len();
    let mut theta_prev: Vec<f64> = vec![(0.3f64).ln(); enc_dim];
    theta_prev.push(0.0);
    let mut last_gp = None;
    while trace.len() < cfg.budget {
        let finite: Vec<&TraceEntry> = trace.iter().filter(|t| t.loss.is_finite()).collect();
        let next = if finite.len() < 2 {
            space.decode(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>())
        } else {
            let x: Vec<Vec<f64>> = finite.iter().map(|t| space.encode(&t.point)).collect();
            let y: Vec<f64> = finite.iter().map(|t| t.loss).collect();
            let mut default = vec![(0.3f64).ln(); enc_dim];
            default.push(0.0);
            let gp = GaussianProcess::fit(x, &y, &[default, theta_prev.clone()])?;
            theta_prev = gp.hyperparameters();
            let best = y.iter().copied().fold(f64::INFINITY, f64::min);
            let choice = maximize_ei(&gp, space, best, cfg.candidates, &trace, &mut rng);
            last_gp = Some(gp);
            choice
        };
        let loss = eval_loss(&objective, &next);
        push_trace(&mut trace, next, loss);
    }
    let surrogate = if cfg.surrogate_grid {
        last_gp
            .as_ref()
            .and_then(|gp| surrogate_grid(gp, space, &trace))
    } else {
        None
    };
    finish(trace, surrogate)
}

fn maximize_ei(
    gp: &GaussianProcess,
    space: &SearchSpace,
    best: f64,
    candidates: usize,
    trace: &[TraceEntry],
    rng: &mut seed::Rng,
) -> Point {
    let d = space.dims.len();
    let ei = |u: &[f64]| {
        let (m, s) = gp.predict(&space.encode(&space.decode(u)));
        expected_improvement(m, s, best)
    };
    let mut cands: Vec<(f64, Vec<f64>)> = (0..candidates.max(1))
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            (ei(&u), u)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    // Local refinement of the best few candidates by shrinking random steps.
    let mut refined: Vec<(f64, Vec<f64>)> = Vec::new();
    for (v0, u0) in cands.iter().take(5) {
        let (mut v, mut u) = (*v0, u0.clone());
        let mut step = 0.05;
        for _ in 0..40 {
            let cand: Vec<f64> = u
                .iter()
                .map(|x| (x + step * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0))
                .collect();
            let cv = ei(&cand);
            if cv > v {
                v = cv;
                u = cand;
            } else {
                step *= 0.9;
            }
        }
        refined.push((v, u));
    }
    refined.extend(cands);
    refined.sort_by(|a, b| b.0.total_cmp(&a.0));
    let seen = |p: &Point| trace.iter().any(|t| &t.point == p);
    refined
        .iter()
        .map(|(_, u)| space.decode(u))
        .find(|p| !seen(p))
        .unwrap_or_else(|| space.decode(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
}

fn surrogate_grid(
    gp: &GaussianProcess,
    space: &SearchSpace,
    trace: &[TraceEntry],
) -> Option<SurrogateGrid> {
    let best = trace
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss))?
        .point
        .clone();
    let numeric: Vec<usize> = space
        .dims
        .iter()
        .enumerate()
        .filter(|(_, d)| !matches!(d.kind, DimKind::Categorical { .. }))
        .map(|(i, _)| i)
        .take(2)
        .collect();
    if numeric.is_empty() {
        return None;
    }
    let steps = if numeric.len() == 1 { 50 } else { 25 };
    let mut rows = Vec::new();
    let mut idx = vec![0usize; numeric.len()];
    loop {
        let mut p = best.clone();
        let mut u_all: Vec<f64> = Vec::new();
        for (k, &dim) in numeric.iter().enumerate() {
            let u = idx[k] as f64 / (steps - 1) as f64;
            p[dim] = space.dims[dim].decode(u);
            u_all.push(p[dim].as_f64().unwrap_or(u));
        }
        let (m, s) = gp.predict(&space.encode(&p));
        rows.push((u_all, m, s));
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    Some(SurrogateGrid {
        dims: numeric
            .iter()
            .map(|&i| space.dims[i].name.clone())
            .collect(),
        rows,
    })
}

/// Exhaustive evaluation of [`SearchSpace::grid`]; the first minimum wins.
pub fn grid_search<F>(objective: F, space: &SearchSpace, per_dim: usize) -> Result<OptResult>
where
    F: Fn(&Point) -> Result<f64> + Sync,
{
    let points = space.grid(per_dim.max(1));
    let losses: Vec<f64> = points
        .par_iter()
        .map(|p| eval_loss(&objective, p))
        .collect();
    let mut trace = Vec::with_capacity(points.len());
    for (p, l) in points.into_iter().zip(losses) {
        push_trace(&mut trace, p, l);
    }
    finish(trace, None)
}

/// `iteration,<dim…>,loss,incumbent`
pub fn write_trace_csv<W: Write>(result: &OptResult, space: &SearchSpace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["iteration".to_string()];
    header.extend(space.dims.iter().map(|d| d.name.clone()));
    header.extend(["loss".to_string(), "incumbent".to_string()]);
    w.write_record(&header)?;
    for t in &result.trace {
        let mut rec = vec![t.iteration.to_string()];
        rec.extend(t.point.iter().map(|v| v.to_string()));
        rec.extend([t.loss.to_string(), t.incumbent.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `<dim…>,mean,std`
pub fn write_surrogate_csv<W: Write>(grid: &SurrogateGrid, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = grid.dims.clone();
    header.extend(["mean".to_string(), "std".to_string()]);
    w.write_record(&header)?;
    for (coords, m, s) in &grid.rows {
        let mut rec: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
        rec.extend([m.to_string(), s.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Default search space per family (at most three dimensions).
pub fn default_space(family: MlFamily) -> SearchSpace {
    let log =
        |name: &str, lower: f64, upper: f64| Dim::new(name, DimKind::LogReal { lower, upper });
    let int =
        |name: &str, lower: i64, upper: i64| Dim::new(name, DimKind::Integer { lower, upper });
    let cat = |name: &str, levels: &[&str]| {
        Dim::new(
            name,
            DimKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        )
    };
    let dims = match family {
        MlFamily::Knn => vec![
            int("num_neighbors", 1, 30),
            cat("distance", &["euclidean", "chebyshev", "cityblock"]),
        ],
        MlFamily::Tree => vec![int("min_leaf_size", 1, 100)],
        MlFamily::Discriminant => vec![
            log("delta", 1e-6, 1e-1),
            Dim::new(
                "gamma",
                DimKind::Real {
                    lower: 0.0,
                    upper: 1.0,
                },
            ),
        ],
        MlFamily::NaiveBayes => vec![
            cat("nb_mode", &["gaussian", "kernel"]),
            log("kernel_width", 1e-3, 10.0),
        ],
        MlFamily::Svm => vec![
            log("box_constraint", 1e-3, 1e3),
            log("kernel_scale", 1e-3, 1e3),
        ],
        MlFamily::Ensemble => vec![
            int("num_learning_cycles", 10, 100),
            int("min_leaf_size", 1, 100),
        ],
    };
    SearchSpace { dims }
}

/// Overrides the named fields of `base` with the point's values. Unknown
/// names are a validation error.
pub fn apply_point(
    family: MlFamily,
    base: &MlHyperparams,
    space: &SearchSpace,
    point: &Point,
) -> Result<MlHyperparams> {
    let mut hp = *base;
    for (d, v) in space.dims.iter().zip(point) {
        let num = || {
            v.as_f64()
                .ok_or_else(|| Error::Validation(format!("`{}` must be numeric", d.name)))
        };
        let uint = || num().map(|x| x.round().max(1.0) as usize);
        match d.name.as_str() {
            "num_neighbors" => hp.knn.num_neighbors = uint()?,
            "distance" => hp.knn.distance = v.to_string().parse::<Distance>()?,
            "min_leaf_size" if family == MlFamily::Ensemble => hp.ensemble.min_leaf_size = uint()?,
            "min_leaf_size" => hp.tree.min_leaf_size = uint()?,
            "delta" => hp.da.delta = num()?,
            "gamma" => hp.da.gamma = num()?,
            "nb_mode" => hp.nb.mode = v.to_string().parse::<NbMode>()?,
            "kernel_width" => hp.nb.kernel_width = num()?,
            "box_constraint" => hp.svm.box_constraint = num()?,
            "kernel_scale" => hp.svm.kernel_scale = num()?,
            "num_learning_cycles" => hp.ensemble.num_learning_cycles = uint()?,
            other => {
                return Err(Error::Validation(format!(
                    "unknown hyperparameter `{other}`"
                )))
            }
        }
    }
    Ok(hp)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// Per class, a seeded `holdout_fraction` share (at least one sample, and at
/// least one left for training) goes to the holdout set.
pub fn stratified_split(
    labels: &[String],
    holdout_fraction: f64,
    seed_: u64,
) -> Result<HoldoutSplit> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "split fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    let mut classes: Vec<&String> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let mut rng = seed::rng(seed_);
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == c).collect();
        if idx.len() < 2 {
            return Err(Error::Validation(format!(
                "class `{c}` has fewer than 2 samples to split"
            )));
        }
        idx.shuffle(&mut rng);
        let h = ((idx.len() as f64 * holdout_fraction).round() as usize).clamp(1, idx.len() - 1);
        holdout.extend_from_slice(&idx[..h]);
        train.extend_from_slice(&idx[h..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok(HoldoutSplit { train, holdout })
}

/// Misclassification rate on a fixed stratified holdout split as a function
/// of the hyperparameter point. Training failures score +∞.
pub fn holdout_objective<'a>(
    x: &'a [Vec<f64>],
    labels: &'a [String],
    family: MlFamily,
    base: MlHyperparams,
    space: &'a SearchSpace,
    split_fraction: f64,
    seed_: u64,
) -> Result<impl Fn(&Point) -> Result<f64> + Sync + 'a> {
    let split = stratified_split(labels, split_fraction, seed::derive_label(seed_, "split"))?;
    let tx: Vec<Vec<f64>> = split.train.iter().map(|&i| x[i].clone()).collect();
    let ty: Vec<String> = split.train.iter().map(|&i| labels[i].clone()).collect();
    let train_seed = seed::derive_label(seed_, "train");
    Ok(move |p: &Point| {
        let hp = apply_point(family, &base, space, p)?;
        let clf = match ml_classifiers::train(family, &tx, &ty, &hp, train_seed) {
            Ok(c) => c,
            Err(_) => return Ok(f64::INFINITY),
        };
        let mut wrong = 0usize;
        for &i in &split.holdout {
            if clf.predict(&x[i])?.class != labels[i] {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / split.holdout.len() as f64)
    })
}
