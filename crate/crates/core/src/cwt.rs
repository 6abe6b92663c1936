//! Continuous wavelet transform of 1-D RCS sequences and rendering of the
//! magnitude (scalogram) as a Jet-colored RGB image.

use std::io::Write;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageFormat, Rgb, RgbImage};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Center frequency of the mother wavelet, rad/sample.
pub const MORLET_OMEGA0: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalogram {
    /// `magnitudes[row][col]`, rows by increasing scale.
    pub magnitudes: Vec<Vec<f64>>,
    /// Scale of each row in samples.
    pub scales: Vec<f64>,
    pub positions: Vec<usize>,
    /// max |x| of the transformed signal; sets the degeneracy threshold.
    pub signal_peak: f64,
}

impl Scalogram {
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Center frequency of each row, cycles/sample.
    pub fn frequencies(&self) -> Vec<f64> {
        self.scales
            .iter()
            .map(|s| MORLET_OMEGA0 / (2.0 * std::f64::consts::PI * s))
            .collect()
    }
}

/// Fourier transform of the analytic Morlet wavelet at ω (zero for ω ≤ 0).
/// Peak value 2, so a unit cosine yields unit magnitude at its matched scale.
pub fn morlet_hat(omega: f64) -> f64 {
    if omega > 0.0 {
        2.0 * (-0.5 * (omega - MORLET_OMEGA0).powi(2)).exp()
    } else {
        0.0
    }
}

/// `num_scales` log-spaced scales from 2 to `len / 4` samples.
pub fn scales_for(len: usize, num_scales: usize) -> Vec<f64> {
    let (lo, hi) = (2.0f64.ln(), (len as f64 / 4.0).ln());
    (0..num_scales)
        .map(|i| (lo + (hi - lo) * i as f64 / (num_scales - 1) as f64).exp())
        .collect()
}

/// L1-normalized CWT magnitude. The signal is extended by its mirror image
/// on both sides before the frequency-domain convolution.
pub fn cwt_transform(signal: &[f64], num_scales: usize) -> Result<Scalogram> {
    let n = signal.len();
    if n < 8 {
        return Err(Error::Validation(format!(
            "CWT needs at least 8 samples, got {n}"
        )));
    }
    if num_scales < 4 {
        return Err(Error::Validation(format!(
            "CWT needs at least 4 scales, got {num_scales}"
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "CWT input contains non-finite samples".into(),
        ));
    }
    let len = 3 * n;
    let mut buf: Vec<Complex64> = signal
        .iter()
        .rev()
        .chain(signal)
        .chain(signal.iter().rev())
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut buf);
    let omega: Vec<f64> = (0..len)
        .map(|k| {
            let k = if k <= len / 2 {
                k as f64
            } else {
                k as f64 - len as f64
            };
            2.0 * std::f64::consts::PI * k / len as f64
        })
        .collect();
    let scales = scales_for(n, num_scales);
    let magnitudes: Vec<Vec<f64>> = scales
        .par_iter()
        .map(|&s| {
            let mut row: Vec<Complex64> = buf
                .iter()
                .zip(&omega)
                .map(|(x, &w)| x * morlet_hat(s * w))
                .collect();
            inv.process(&mut row);
            row[n..2 * n]
                .iter()
                .map(|c| c.norm() / len as f64)
                .collect()
        })
        .collect();
    Ok(Scalogram {
        magnitudes,
        scales,
        positions: (0..n).collect(),
        signal_peak: signal.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

/// Jet colormap with 128 levels, blue (0) through red (127).
pub const JET_128: [[u8; 3]; 128] = [
    [0, 0, 135],
    [0, 0, 143],
    [0, 0, 151],
    [0, 0, 159],
    [0, 0, 167],
    [0, 0, 175],
    [0, 0, 183],
    [0, 0, 191],
    [0, 0, 199],
    [0, 0, 207],
    [0, 0, 215],
    [0, 0, 223],
    [0, 0, 231],
    [0, 0, 239],
    [0, 0, 247],
    [0, 0, 255],
    [0, 8, 255],
    [0, 16, 255],
    [0, 24, 255],
    [0, 32, 255],
    [0, 40, 255],
    [0, 48, 255],
    [0, 56, 255],
    [0, 64, 255],
    [0, 72, 255],
    [0, 80, 255],
    [0, 88, 255],
    [0, 96, 255],
    [0, 104, 255],
    [0, 112, 255],
    [0, 120, 255],
    [0, 128, 255],
    [0, 135, 255],
    [0, 143, 255],
    [0, 151, 255],
    [0, 159, 255],
    [0, 167, 255],
    [0, 175, 255],
    [0, 183, 255],
    [0, 191, 255],
    [0, 199, 255],
    [0, 207, 255],
    [0, 215, 255],
    [0, 223, 255],
    [0, 231, 255],
    [0, 239, 255],
    [0, 247, 255],
    [0, 255, 255],
    [8, 255, 247],
    [16, 255, 239],
    [24, 255, 231],
    [32, 255, 223],
    [40, 255, 215],
    [48, 255, 207],
    [56, 255, 199],
    [64, 255, 191],
    [72, 255, 183],
    [80, 255, 175],
    [88, 255, 167],
    [96, 255, 159],
    [104, 255, 151],
    [112, 255, 143],
    [120, 255, 135],
    [128, 255, 128],
    [135, 255, 120],
    [143, 255, 112],
    [151, 255, 104],
    [159, 255, 96],
    [167, 255, 88],
    [175, 255, 80],
    [183, 255, 72],
    [191, 255, 64],
    [199, 255, 56],
    [207, 255, 48],
    [215, 255, 40],
    [223, 255, 32],
    [231, 255, 24],
    [239, 255, 16],
    [247, 255, 8],
    [255, 255, 0],
    [255, 247, 0],
    [255, 239, 0],
    [255, 231, 0],
    [255, 223, 0],
    [255, 215, 0],
    [255, 207, 0],
    [255, 199, 0],
    [255, 191, 0],
    [255, 183, 0],
    [255, 175, 0],
    [255, 167, 0],
    [255, 159, 0],
    [255, 151, 0],
    [255, 143, 0],
    [255, 135, 0],
    [255, 128, 0],
    [255, 120, 0],
    [255, 112, 0],
    [255, 104, 0],
    [255, 96, 0],
    [255, 88, 0],
    [255, 80, 0],
    [255, 72, 0],
    [255, 64, 0],
    [255, 56, 0],
    [255, 48, 0],
    [255, 40, 0],
    [255, 32, 0],
    [255, 24, 0],
    [255, 16, 0],
    [255, 8, 0],
    [255, 0, 0],
    [247, 0, 0],
    [239, 0, 0],
    [231, 0, 0],
    [223, 0, 0],
    [215, 0, 0],
    [207, 0, 0],
    [199, 0, 0],
    [191, 0, 0],
    [183, 0, 0],
    [175, 0, 0],
    [167, 0, 0],
    [159, 0, 0],
    [151, 0, 0],
    [143, 0, 0],
    [135, 0, 0],
    [128, 0, 0],
];

pub const DEFAULT_LEVELS: usize = 128;

/// Min-max rescale to integer levels `0..levels`. Returns `None` when the
/// matrix spans less than 1e-12 of `reference` (or nothing at all).
pub fn rescale_indices(matrix: &[Vec<f64>], levels: usize, reference: f64) -> Option<Vec<Vec<u8>>> {
    let (lo, hi) = matrix
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) || range <= 1e-12 * reference {
        return None;
    }
    let top = (levels - 1) as f64;
    Some(
        matrix
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| ((v - lo) / range * top).round() as u8)
                    .collect()
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedImage {
    pub image: RgbImage,
    /// The magnitudes were all equal; the image is a uniform mid-colormap fill.
    pub degenerate: bool,
}

/// Jet-colored scalogram resized (bilinear) to `out_size` × `out_size`.
/// The smallest scale is the top row.
pub fn process_scalogram(s: &Scalogram, out_size: u32, levels: usize) -> Result<ProcessedImage> {
    if out_size == 0 {
        return Err(Error::Validation(
            "output image size must be positive".into(),
        ));
    }
    if !(2..=JET_128.len()).contains(&levels) {
        return Err(Error::Validation(format!(
            "colormap levels must be in 2..=128, got {levels}"
        )));
    }
    if s.magnitudes.is_empty() || s.magnitudes[0].is_empty() {
        return Err(Error::Validation("empty scalogram".into()));
    }
    let (h, w) = (s.magnitudes.len() as u32, s.magnitudes[0].len() as u32);
    let color = |idx: u8| {
        let j = (idx as usize * (JET_128.len() - 1) + (levels - 1) / 2) / (levels - 1);
        Rgb(JET_128[j])
    };
    let Some(indices) = rescale_indices(&s.magnitudes, levels, s.signal_peak) else {
        let fill = Rgb(JET_128[JET_128.len() / 2]);
        return Ok(ProcessedImage {
            image: RgbImage::from_pixel(out_size, out_size, fill),
            degenerate: true,
        });
    };
    let raw = RgbImage::from_fn(w, h, |x, y| color(indices[y as usize][x as usize]));
    Ok(ProcessedImage {
        image: imageops::resize(&raw, out_size, out_size, FilterType::Triangle),
        degenerate: false,
    })
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))
}

/// `scale,<position…>` header, one row per scale.
pub fn write_scalogram_csv<W: Write>(s: &Scalogram, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["scale".to_string()];
    header.extend(s.positions.iter().map(|p| p.to_string()));
    w.write_record(&header)?;
    for (scale, row) in s.scales.iter().zip(&s.magnitudes) {
        let mut rec = vec![scale.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
