//! Independent numerical oracles shared by the integration targets.

#![allow(dead_code)]

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1]; the Gauss points are
// the odd-indexed Kronrod nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One G7/K15 panel: (Kronrod estimate, |Kronrod − Gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let (v, e) = gk15(f, a, b);
    if e <= tol || depth == 0 {
        return (v, e);
    }
    let m = 0.5 * (a + b);
    let (l, el) = adapt(f, a, m, 0.5 * tol, depth - 1);
    let (r, er) = adapt(f, m, b, 0.5 * tol, depth - 1);
    (l + r, el + er)
}

/// ∫ₐᵇ f with absolute tolerance `tol`; returns (value, error estimate).
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    adapt(f, a, b, tol, 50)
}

/// ∫₀^∞ pdf(σ) dσ through σ = u^p, u = t/(1 − t), t ∈ (0, 1). A power p ≥ 1/α
/// removes an integrable σ^(α−1) singularity at the origin. GK nodes never
/// touch the endpoints.
pub fn integrate_half_line(pdf: &dyn Fn(f64) -> f64, p: f64, tol: f64) -> (f64, f64) {
    let g = move |t: f64| {
        let u = t / (1.0 - t);
        let jac = p * u.powf(p - 1.0) / ((1.0 - t) * (1.0 - t));
        let v = pdf(u.powf(p)) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(&g, 0.0, 1.0, tol)
}
