//! Unimodal class-conditional RCS densities and their maximum-likelihood fits.
//!
//! All three families live on σ ≥ 0 (linear m²):
//!
//! * chi-square with 2m degrees of freedom and mean σ̄ (Swerling 1/2 for
//!   m = 1, Swerling 3/4 for m = 2),
//! * two-parameter gamma with shape α and rate β,
//! * Lomax (generalized Pareto type II) with shape α and scale λ.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::signatures::RCS_FLOOR_M2;

/// A density on the real line (zero outside its support).
pub trait Density {
    fn ln_pdf(&self, x: f64) -> f64;

    fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Σ ln pdf(xᵢ). Returns −∞ when any datum has zero density.
    fn log_likelihood(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

/// Log-likelihood together with the number of data points of zero density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlaggedLogLikelihood {
    pub value: f64,
    pub zero_density_points: usize,
}

pub fn log_likelihood_flagged<D: Density + ?Sized>(
    density: &D,
    data: &[f64],
) -> FlaggedLogLikelihood {
    let mut zero = 0;
    let mut value = 0.0;
    for &x in data {
        let l = density.ln_pdf(x);
        if l == f64::NEG_INFINITY {
            zero += 1;
        }
        value += l;
    }
    FlaggedLogLikelihood {
        value,
        zero_density_points: zero,
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `(a - 1) * ln(x)` with the convention `0 * ln 0 = 0`.
fn power_term(a_minus_one: f64, x: f64) -> f64 {
    if a_minus_one == 0.0 {
        0.0
    } else {
        a_minus_one * x.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareParams {
    /// Half the degrees of freedom.
    pub m: f64,
    /// Mean RCS σ̄ in m².
    pub mean_rcs: f64,
}

impl ChiSquareParams {
    pub fn new(m: f64, mean_rcs: f64) -> Result<Self> {
        check_positive("m", m)?;
        check_positive("mean RCS", mean_rcs)?;
        Ok(Self { m, mean_rcs })
    }
}

impl Density for ChiSquareParams {
    fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NEG_INFINITY;
        }
        let m = self.m;
        let z = m * x / self.mean_rcs;
        m.ln() - ln_gamma(m) - self.mean_rcs.ln() + power_term(m - 1.0, z) - z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    /// Rate β (the density decays as e^{-βσ}).
    pub beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("beta", beta)?;
        Ok(Self { alpha, beta })
    }
}

impl Density for GammaParams {
    fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NEG_INFINITY;
        }
        self.alpha * self.beta.ln() + power_term(self.alpha - 1.0, x)
            - ln_gamma(self.alpha)
            - self.beta * x
    }
}

/// Lomax parameters; κ = 1/α and ξ = λ/α in the generalized Pareto form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl GpdParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("lambda", lambda)?;
        Ok(Self { alpha, lambda })
    }

    /// From the generalized Pareto shape κ > 0 and scale ξ > 0.
    pub fn from_shape_scale(kappa: f64, xi: f64) -> Result<Self> {
        check_positive("kappa", kappa)?;
        Self::new(1.0 / kappa, xi / kappa)
    }

    pub fn kappa(&self) -> f64 {
        1.0 / self.alpha
    }

    pub fn xi(&self) -> f64 {
        self.lambda / self.alpha
    }
}

impl Density for GpdParams {
    fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NEG_INFINITY;
        }
        self.alpha.ln() - self.lambda.ln() - (self.alpha + 1.0) * (x / self.lambda).ln_1p()
    }
}

/// Closed-form Lomax log-likelihood
/// `n ln α − n ln λ − (1+α) Σ ln(1 + σᵢ/λ)`.
pub fn lomax_log_likelihood(params: &GpdParams, data: &[f64]) -> f64 {
    if data.iter().any(|&x| x < 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = data.len() as f64;
    let s: f64 = data.iter().map(|&x| (x / params.lambda).ln_1p()).sum();
    n * params.alpha.ln() - n * params.lambda.ln() - (1.0 + params.alpha) * s
}

/// Trigamma ψ'(x) for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0))))
}

fn validate_sample(data: &[f64], what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Validation(format!("{what}: empty data")));
    }
    if let Some(bad) = data.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Validation(format!(
            "{what}: data must be finite and non-negative, got {bad}"
        )));
    }
    Ok(())
}

fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Chi-square fit with the Swerling order fixed by the caller: σ̄ is the
/// sample mean and `m` passes through.
pub fn fit_chi_square(data: &[f64], m: u32) -> Result<ChiSquareParams> {
    validate_sample(data, "chi-square fit")?;
    if !(m == 1 || m == 2) {
        return Err(Error::Domain(format!(
            "chi-square order must be 1 or 2, got {m}"
        )));
    }
    let mu = mean(data);
    if mu <= 0.0 {
        return Err(Error::DegenerateData("all RCS samples are zero".into()));
    }
    ChiSquareParams::new(m as f64, mu)
}

/// Zero samples are lifted to [`RCS_FLOOR_M2`] before gamma fitting.
pub fn clamp_for_gamma(data: &[f64]) -> Vec<f64> {
    data.iter().map(|&x| x.max(RCS_FLOOR_M2)).collect()
}

/// Moment-matched starting point (α = mean²/var, β = mean/var).
pub fn gamma_moment_init(data: &[f64]) -> Result<GammaParams> {
    validate_sample(data, "gamma fit")?;
    let x = clamp_for_gamma(data);
    let mu = mean(&x);
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64;
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::DegenerateData(
            "zero sample variance; gamma moments undefined".into(),
        ));
    }
    GammaParams::new(mu * mu / var, mu / var)
}

pub const GAMMA_MAX_ITER: usize = 100;
pub const GAMMA_TOL: f64 = 1e-10;

/// Gamma MLE: Newton iteration on `ln α − ψ(α) = ln mean − mean(ln σ)`,
/// then β = α / mean.
pub fn fit_gamma_mle(data: &[f64]) -> Result<GammaParams> {
    let init = gamma_moment_init(data)?;
    let x = clamp_for_gamma(data);
    let mu = mean(&x);
    let mean_ln = x.iter().map(|v| v.ln()).sum::<f64>() / x.len() as f64;
    let s = mu.ln() - mean_ln;
    if s <= 0.0 {
        return Err(Error::DegenerateData("no spread in log RCS".into()));
    }
    let mut alpha = init.alpha;
    for _ in 0..GAMMA_MAX_ITER {
        let g = alpha.ln() - digamma(alpha) - s;
        let dg = 1.0 / alpha - trigamma(alpha);
        let mut next = alpha - g / dg;
        if !(next > 0.0) || !next.is_finite() {
            next = alpha / 2.0;
        }
        let step = (next - alpha).abs();
        alpha = next;
        if step < GAMMA_TOL * alpha.max(1.0) {
            return GammaParams::new(alpha, alpha / mu);
        }
    }
    Err(Error::Estimation {
        message: format!("gamma Newton did not converge in {GAMMA_MAX_ITER} iterations"),
        last_iterate: vec![alpha, alpha / mu],
    })
}

/// How the Lomax optimum was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GpdFitMethod {
    Newton,
    ProfileLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub params: GpdParams,
    pub method: GpdFitMethod,
    pub iterations: usize,
    /// The profile optimum sat on the upper λ bound: the data are lighter
    /// tailed than any Lomax and the fit approximates the exponential limit.
    pub at_bound: bool,
    pub log_likelihood: f64,
}

pub const GPD_GRAD_TOL: f64 = 1e-8;
const GPD_MAX_NEWTON: usize = 200;
const GPD_LAMBDA_SPAN: f64 = 1e6;
const NEWTON_RIDGE_RATIO: f64 = 1e3;

struct LomaxSums {
    /// Σ ln(1 + x/λ)
    s: f64,
    /// Σ x/(λ + x)
    t: f64,
    /// Σ λx/(λ + x)²
    w: f64,
}

fn lomax_sums(data: &[f64], lambda: f64) -> LomaxSums {
    let mut out = LomaxSums {
        s: 0.0,
        t: 0.0,
        w: 0.0,
    };
    for &x in data {
        let d = lambda + x;
        out.s += (x / lambda).ln_1p();
        out.t += x / d;
        out.w += lambda * x / (d * d);
    }
    out
}

/// α maximizing the Lomax likelihood for fixed λ: n / Σ ln(1 + σᵢ/λ).
pub fn lomax_profile_alpha(data: &[f64], lambda: f64) -> f64 {
    data.len() as f64 / data.iter().map(|&x| (x / lambda).ln_1p()).sum::<f64>()
}

fn profile_ll(data: &[f64], ln_lambda: f64) -> f64 {
    let lambda = ln_lambda.exp();
    let n = data.len() as f64;
    let s: f64 = data.iter().map(|&x| (x / lambda).ln_1p()).sum();
    if s <= 0.0 {
        return f64::NEG_INFINITY;
    }
    n * (n / s).ln() - n * ln_lambda - s - n
}

/// Starting point: moment matching when the sample is heavier tailed than
/// exponential (CV > 1), otherwise λ = mean with the profile α.
pub fn gpd_initial_guess(data: &[f64]) -> Result<GpdParams> {
    validate_sample(data, "GPD fit")?;
    let mu = mean(data);
    if mu <= 0.0 {
        return Err(Error::DegenerateData("all RCS samples are zero".into()));
    }
    let var = data.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / data.len() as f64;
    let cv2 = var / (mu * mu);
    if cv2 > 1.0 + 1e-6 {
        let alpha = 2.0 * cv2 / (cv2 - 1.0);
        GpdParams::new(alpha, mu * (alpha - 1.0))
    } else {
        GpdParams::new(lomax_profile_alpha(data, mu), mu)
    }
}

fn gpd_newton(
    data: &[f64],
    start: GpdParams,
) -> std::result::Result<(GpdParams, usize), GpdParams> {
    let n = data.len() as f64;
    let (mut u, mut v) = (start.alpha.ln(), start.lambda.ln());
    let ll = |u: f64, v: f64| {
        lomax_log_likelihood(
            &GpdParams {
                alpha: u.exp(),
                lambda: v.exp(),
            },
            data,
        )
    };
    let mut cur = ll(u, v);
    for iter in 0..GPD_MAX_NEWTON {
        let (alpha, lambda) = (u.exp(), v.exp());
        let sums = lomax_sums(data, lambda);
        let gu = n - alpha * sums.s;
        let gv = -n + (1.0 + alpha) * sums.t;
        if (gu * gu + gv * gv).sqrt() / n < GPD_GRAD_TOL {
            return Ok((GpdParams { alpha, lambda }, iter));
        }
        let huu = -alpha * sums.s;
        let huv = alpha * sums.t;
        let hvv = -(1.0 + alpha) * sums.w;
        let det = huu * hvv - huv * huv;
        // Negative definite and not too badly conditioned.
        let tr = huu + hvv;
        let disc = ((huu - hvv).powi(2) + 4.0 * huv * huv).sqrt();
        let (e_small, e_big) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
        if !(huu < 0.0 && det > 0.0 && e_small < 0.0 && e_big / e_small < 1e12) {
            return Err(GpdParams { alpha, lambda });
        }
        let mut du = -(hvv * gu - huv * gv) / det;
        let mut dv = -(-huv * gu + huu * gv) / det;
        let longest = du.abs().max(dv.abs());
        if longest > 2.0 {
            du *= 2.0 / longest;
            dv *= 2.0 / longest;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = ll(u + t * du, v + t * dv);
            if cand.is_finite() && cand >= cur - 1e-12 * cur.abs().max(1.0) {
                u += t * du;
                v += t * dv;
                cur = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(GpdParams { alpha, lambda });
        }
    }
    Err(GpdParams {
        alpha: u.exp(),
        lambda: v.exp(),
    })
}

/// Maximize the profile likelihood over ln λ ∈ [ln(scale/1e6), ln(scale·1e6)]
/// by a log grid scan followed by golden-section refinement.
fn gpd_profile(data: &[f64], scale: f64) -> Result<(f64, bool)> {
    let lo = (scale / GPD_LAMBDA_SPAN).ln();
    let hi = (scale * GPD_LAMBDA_SPAN).ln();
    let grid: usize = 241;
    let step = (hi - lo) / (grid - 1) as f64;
    let (best_i, best) = (0..grid)
        .map(|i| (i, profile_ll(data, lo + step * i as f64)))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, l)| if l > acc.1 { (i, l) } else { acc },
        );
    if !best.is_finite() {
        return Err(Error::Estimation {
            message: "profile likelihood is not finite anywhere".into(),
            last_iterate: vec![],
        });
    }
    if best_i == grid - 1 {
        return Ok((hi, true));
    }
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = lo + step * (best_i + 1).min(grid - 1) as f64;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (profile_ll(data, c), profile_ll(data, d));
    while (b - a).abs() > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = profile_ll(data, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = profile_ll(data, d);
        }
    }
    Ok(((a + b) / 2.0, false))
}

/// Lomax MLE: safeguarded Newton–Raphson in (ln α, ln λ), with a
/// profile-likelihood search over λ when Newton cannot proceed.
///
/// When the sample is lighter tailed than every Lomax, the likelihood keeps
/// increasing towards the exponential limit; the search is then bounded at
/// λ = 1e6 × mean and `at_bound` is set.
pub fn fit_gpd_mle_detailed(data: &[f64]) -> Result<GpdFit> {
    let init = gpd_initial_guess(data)?;
    let scale = mean(data);
    let finish = |lambda: f64, method, iterations, at_bound| -> Result<GpdFit> {
        let alpha = lomax_profile_alpha(data, lambda);
        let params = GpdParams::new(alpha, lambda).map_err(|_| Error::Estimation {
            message: "Lomax fit left the parameter domain".into(),
            last_iterate: vec![alpha, lambda],
        })?;
        Ok(GpdFit {
            params,
            method,
            iterations,
            at_bound,
            log_likelihood: lomax_log_likelihood(&params, data),
        })
    };
    match gpd_newton(data, init) {
        // A vanishing gradient far out on the exponential ridge is not an
        // interior optimum; the profile search decides between the two.
        Ok((p, iters)) if p.lambda < NEWTON_RIDGE_RATIO * scale => {
            finish(p.lambda, GpdFitMethod::Newton, iters, false)
        }
        _ => {
            let (ln_lambda, at_bound) = gpd_profile(data, scale)?;
            // Polish an interior profile optimum with Newton when possible.
            if !at_bound {
                let start = GpdParams {
                    alpha: lomax_profile_alpha(data, ln_lambda.exp()),
                    lambda: ln_lambda.exp(),
                };
                if let Ok((p, iters)) = gpd_newton(data, start) {
                    return finish(p.lambda, GpdFitMethod::ProfileLikelihood, iters, false);
                }
            }
            finish(
                ln_lambda.exp(),
                GpdFitMethod::ProfileLikelihood,
                0,
                at_bound,
            )
        }
    }
}

pub fn fit_gpd_mle(data: &[f64]) -> Result<GpdParams> {
    fit_gpd_mle_detailed(data).map(|f| f.params)
}
