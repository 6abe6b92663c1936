//! SNR-calibrated AWGN injected in the complex amplitude domain.

use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signatures::RcsSignature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::Validation(format!(
                "SNR must be finite, got {snr_db}"
            )));
        }
        Ok(Self { snr_db, seed })
    }
}

/// Average power of the return: the mean of the linear RCS samples.
pub fn signal_power(rcs_m2: &[f64]) -> Result<f64> {
    if rcs_m2.is_empty() {
        return Err(Error::Validation(
            "signal power of an empty signature".into(),
        ));
    }
    Ok(rcs_m2.iter().sum::<f64>() / rcs_m2.len() as f64)
}

/// Noise power for a signal of power `signal_power` at `snr_db`.
pub fn noise_power(signal_power: f64, snr_db: f64) -> f64 {
    signal_power * 10f64.powf(-snr_db / 10.0)
}

/// Output of [`add_noise_traced`]: the noisy RCS plus the complex noise drawn.
#[derive(Debug, Clone)]
pub struct NoisyDraw {
    pub rcs_m2: Vec<f64>,
    /// (in-phase, quadrature) per sample.
    pub noise: Vec<(f64, f64)>,
    pub noise_power: f64,
}

/// Perturb each amplitude `sqrt(rcs) * e^{jθ}` with circular complex
/// Gaussian noise of total variance σ_N² and return `|a + n|²`.
pub fn add_noise_traced(rcs_m2: &[f64], spec: &NoiseSpec) -> Result<NoisyDraw> {
    let power = signal_power(rcs_m2)?;
    inject_noise(rcs_m2, noise_power(power, spec.snr_db), spec.seed)
}

/// Amplitude-domain injection at an absolute noise power.
pub fn inject_noise(rcs_m2: &[f64], variance: f64, seed: u64) -> Result<NoisyDraw> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::Numeric(format!(
            "noise power {variance} is not usable"
        )));
    }
    let per_quadrature = (variance / 2.0).sqrt();
    let mut rng = seed::rng(seed);
    let mut noise = Vec::with_capacity(rcs_m2.len());
    let out = rcs_m2
        .iter()
        .map(|&s| {
            let theta: f64 = rng.random::<f64>() * TAU;
            let a = s.sqrt();
            let ni: f64 = StandardNormal.sample(&mut rng);
            let nq: f64 = StandardNormal.sample(&mut rng);
            let (ni, nq) = (ni * per_quadrature, nq * per_quadrature);
            noise.push((ni, nq));
            let re = a * theta.cos() + ni;
            let im = a * theta.sin() + nq;
            re * re + im * im
        })
        .collect();
    Ok(NoisyDraw {
        rcs_m2: out,
        noise,
        noise_power: variance,
    })
}

pub fn add_noise(sig: &RcsSignature, spec: &NoiseSpec) -> Result<RcsSignature> {
    let draw = add_noise_traced(sig.rcs_m2(), spec)?;
    sig.with_rcs(draw.rcs_m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signatures::Polarization;
    use proptest::prelude::*;

    fn sig(rcs: Vec<f64>) -> RcsSignature {
        let angles = (0..rcs.len()).map(|i| i as f64).collect();
        RcsSignature::new("t", 15.0, Polarization::VV, angles, rcs).unwrap()
    }

    #[test]
    fn power_examples() {
        assert_eq!(signal_power(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(signal_power(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(signal_power(&[]).is_err());
        assert_eq!(noise_power(1.0, 0.0), 1.0);
        assert!((noise_power(1.0, 10.0) - 0.1).abs() < 1e-15);
        assert!((noise_power(2.5, -5.0) - 7.905_694_150_420_948).abs() < 1e-12);
    }

    #[test]
    fn signal_power_matches_naive_sum() {
        let mut rng = seed::rng(11);
        let rcs: Vec<f64> = (0..180).map(|_| rng.random::<f64>() * 5.0).collect();
        let mut acc = 0.0;
        for v in &rcs {
            acc += *v;
        }
        assert_eq!(signal_power(&rcs).unwrap(), acc / 180.0);
    }

    #[test]
    fn vanishing_noise_is_identity() {
        let s = sig((1..50).map(|i| i as f64 * 0.3).collect());
        let noisy = add_noise(&s, &NoiseSpec::new(200.0, 4).unwrap()).unwrap();
        for (a, b) in s.rcs_m2().iter().zip(noisy.rcs_m2()) {
            assert!(((a - b) / a).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = sig(vec![1.0; 180]);
        let spec = NoiseSpec::new(3.0, 99).unwrap();
        assert_eq!(add_noise(&s, &spec).unwrap(), add_noise(&s, &spec).unwrap());
    }

    #[test]
    fn non_finite_snr_rejected() {
        assert!(NoiseSpec::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn empirical_snr_within_tolerance() {
        let rcs = vec![2.0; 20_000];
        for snr in [-5.0, 0.0, 7.0] {
            let draw = add_noise_traced(&rcs, &NoiseSpec::new(snr, 5).unwrap()).unwrap();
            let emp: f64 = draw.noise.iter().map(|(i, q)| i * i + q * q).sum::<f64>()
                / draw.noise.len() as f64;
            let snr_emp = 10.0 * (2.0 / emp).log10();
            assert!((snr_emp - snr).abs() < 0.2, "{snr}: {snr_emp}");
        }
    }

    #[test]
    fn zero_signal_output_power_is_noise_power() {
        let draw = inject_noise(&vec![0.0; 100_000], 1.0, 21).unwrap();
        let mean = draw.rcs_m2.iter().sum::<f64>() / draw.rcs_m2.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    proptest! {
        #[test]
        fn output_non_negative(seed in any::<u64>(), snr in -20.0f64..40.0) {
            let s = sig((0..40).map(|i| (i % 7) as f64).collect());
            let noisy = add_noise(&s, &NoiseSpec::new(snr, seed).unwrap()).unwrap();
            prop_assert!(noisy.rcs_m2().iter().all(|v| *v >= 0.0));
        }
    }
}
