//! RCS signature data model, scattering-center synthesis and CSV interchange.
//!
//! Signatures are stored in linear square metres. dBsm only appears at the
//! file boundary (`load_csv` / `save_csv`) and in reports.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Smallest RCS used whenever a logarithm of the RCS is required.
pub const RCS_FLOOR_M2: f64 = 1e-12;

pub const CSV_HEADER: [&str; 5] = [
    "target_id",
    "frequency_ghz",
    "polarization",
    "angle_deg",
    "rcs_dbsm",
];

pub fn dbsm_to_m2(dbsm: f64) -> f64 {
    10f64.powf(dbsm / 10.0)
}

pub fn m2_to_dbsm(m2: f64) -> f64 {
    10.0 * m2.log10()
}

/// dBsm value with zero RCS clamped to [`RCS_FLOOR_M2`].
pub fn m2_to_dbsm_floored(m2: f64) -> f64 {
    m2_to_dbsm(m2.max(RCS_FLOOR_M2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    VV,
    HH,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::VV => f.write_str("VV"),
            Polarization::HH => f.write_str("HH"),
        }
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VV" => Ok(Polarization::VV),
            "HH" => Ok(Polarization::HH),
            other => Err(Error::Validation(format!("unknown polarization `{other}`"))),
        }
    }
}

/// One target's RCS versus azimuth at a fixed frequency and polarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsSignature {
    pub target_id: String,
    pub frequency_ghz: f64,
    pub polarization: Polarization,
    angles_deg: Vec<f64>,
    rcs_m2: Vec<f64>,
}

impl RcsSignature {
    pub fn new(
        target_id: impl Into<String>,
        frequency_ghz: f64,
        polarization: Polarization,
        angles_deg: Vec<f64>,
        rcs_m2: Vec<f64>,
    ) -> Result<Self> {
        let sig = Self {
            target_id: target_id.into(),
            frequency_ghz,
            polarization,
            angles_deg,
            rcs_m2,
        };
        sig.validate()?;
        Ok(sig)
    }

    fn validate(&self) -> Result<()> {
        if self.angles_deg.len() != self.rcs_m2.len() {
            return Err(Error::Validation(format!(
                "{} angles but {} RCS values",
                self.angles_deg.len(),
                self.rcs_m2.len()
            )));
        }
        if !self.frequency_ghz.is_finite() || self.frequency_ghz <= 0.0 {
            return Err(Error::Validation(format!(
                "frequency must be positive, got {}",
                self.frequency_ghz
            )));
        }
        for (i, &a) in self.angles_deg.iter().enumerate() {
            if !(0.0..360.0).contains(&a) {
                return Err(Error::Validation(format!("angle {a} outside [0, 360)")));
            }
            if i > 0 && a <= self.angles_deg[i - 1] {
                return Err(Error::Validation(format!(
                    "angles not strictly increasing at index {i} ({} then {a})",
                    self.angles_deg[i - 1]
                )));
            }
        }
        if let Some(bad) = self.rcs_m2.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "RCS values must be finite and non-negative, got {bad}"
            )));
        }
        Ok(())
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn rcs_m2(&self) -> &[f64] {
        &self.rcs_m2
    }

    pub fn len(&self) -> usize {
        self.rcs_m2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rcs_m2.is_empty()
    }

    /// Same metadata and angles, new RCS values.
    pub fn with_rcs(&self, rcs_m2: Vec<f64>) -> Result<Self> {
        Self::new(
            self.target_id.clone(),
            self.frequency_ghz,
            self.polarization,
            self.angles_deg.clone(),
            rcs_m2,
        )
    }

    pub fn rcs_dbsm(&self) -> Vec<f64> {
        self.rcs_m2.iter().map(|&v| m2_to_dbsm_floored(v)).collect()
    }
}

/// Azimuth grid from 0° to 358° in 2° steps (180 samples).
pub fn default_grid() -> Vec<f64> {
    uniform_grid(2.0)
}

pub fn uniform_grid(step_deg: f64) -> Vec<f64> {
    let n = (360.0 / step_deg).ceil() as usize;
    (0..n)
        .map(|i| i as f64 * step_deg)
        .filter(|a| *a < 360.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringCenter {
    /// Point reflectivity in m².
    pub sigma_m2: f64,
    /// Radial distance from the radar in m.
    pub range_m: f64,
    /// Angular location of the center on the body, in degrees.
    pub angle_offset_deg: f64,
}

/// Point-scatterer description of a target.
///
/// Each center sits at `body_radius_m` from the rotation axis at its angular
/// offset, so its range at azimuth φ is
/// `range_m + body_radius_m * cos(φ - angle_offset_deg)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringCenterModel {
    pub centers: Vec<ScatteringCenter>,
    pub wavelength_m: f64,
    pub body_radius_m: f64,
    /// Standard deviation of a seeded static range perturbation applied to
    /// every center (mounting tolerance). Zero makes synthesis seed-independent.
    pub range_jitter_m: f64,
}

impl ScatteringCenterModel {
    pub fn new(centers: Vec<ScatteringCenter>, frequency_ghz: f64, body_radius_m: f64) -> Self {
        Self {
            centers,
            wavelength_m: SPEED_OF_LIGHT / (frequency_ghz * 1e9),
            body_radius_m,
            range_jitter_m: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::InvalidModel("no scattering centers".into()));
        }
        for (i, c) in self.centers.iter().enumerate() {
            if !(c.sigma_m2 > 0.0 && c.sigma_m2.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "center {i}: sigma must be positive, got {}",
                    c.sigma_m2
                )));
            }
            if !(c.range_m > 0.0 && c.range_m.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "center {i}: range must be positive, got {}",
                    c.range_m
                )));
            }
            if !c.angle_offset_deg.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "center {i}: non-finite offset"
                )));
            }
        }
        if !(self.wavelength_m > 0.0 && self.wavelength_m.is_finite()) {
            return Err(Error::InvalidModel("wavelength must be positive".into()));
        }
        if !(self.body_radius_m >= 0.0 && self.body_radius_m.is_finite()) {
            return Err(Error::InvalidModel(
                "body radius must be non-negative".into(),
            ));
        }
        if !(self.range_jitter_m >= 0.0 && self.range_jitter_m.is_finite()) {
            return Err(Error::InvalidModel(
                "range jitter must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn total_sigma(&self) -> f64 {
        self.centers.iter().map(|c| c.sigma_m2).sum()
    }

    /// Random model with `n` centers whose reflectivities sum to `total_sigma_m2`.
    ///
    /// `dominance` ≥ 0 skews the reflectivities: 0 gives equal centers, larger
    /// values concentrate power in the first center.
    pub fn random(
        n: usize,
        total_sigma_m2: f64,
        dominance: f64,
        frequency_ghz: f64,
        body_radius_m: f64,
        seed: u64,
    ) -> Self {
        let mut rng = seed::rng(seed);
        let raw: Vec<f64> = (0..n)
            .map(|i| (-dominance * i as f64).exp() * rng.random_range(0.5..1.5))
            .collect();
        let norm: f64 = raw.iter().sum();
        let centers = raw
            .iter()
            .map(|w| ScatteringCenter {
                sigma_m2: total_sigma_m2 * w / norm,
                range_m: 100.0 + rng.random_range(-0.5..0.5),
                angle_offset_deg: rng.random_range(0.0..360.0),
            })
            .collect();
        Self::new(centers, frequency_ghz, body_radius_m)
    }
}

/// Coherent sum of the centers' echoes at each azimuth; returns |sum|².
pub fn synthesize_signature(
    model: &ScatteringCenterModel,
    angles_deg: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    model.validate()?;
    if angles_deg.is_empty() {
        return Err(Error::Validation("no angles to synthesize".into()));
    }
    let ranges: Vec<f64> = if model.range_jitter_m > 0.0 {
        let mut rng = seed::rng(seed);
        let jitter = Normal::new(0.0, model.range_jitter_m)
            .map_err(|e| Error::InvalidModel(e.to_string()))?;
        model
            .centers
            .iter()
            .map(|c| c.range_m + jitter.sample(&mut rng))
            .collect()
    } else {
        model.centers.iter().map(|c| c.range_m).collect()
    };
    let k = 4.0 * PI / model.wavelength_m;
    angles_deg
        .iter()
        .map(|&phi| {
            let (re, im) =
                model
                    .centers
                    .iter()
                    .zip(&ranges)
                    .fold((0.0, 0.0), |(re, im), (c, &r0)| {
                        let r = r0
                            + model.body_radius_m * (phi - c.angle_offset_deg).to_radians().cos();
                        let amp = c.sigma_m2.sqrt();
                        let (s, co) = (k * r).sin_cos();
                        (re + amp * co, im + amp * s)
                    });
            let p = re * re + im * im;
            if p.is_finite() {
                Ok(p)
            } else {
                Err(Error::Numeric(format!("non-finite RCS at {phi}°")))
            }
        })
        .collect()
}

/// Synthesize and wrap into a validated signature.
pub fn synthesize(
    target_id: &str,
    model: &ScatteringCenterModel,
    frequency_ghz: f64,
    polarization: Polarization,
    angles_deg: &[f64],
    seed: u64,
) -> Result<RcsSignature> {
    let rcs = synthesize_signature(model, angles_deg, seed)?;
    RcsSignature::new(
        target_id,
        frequency_ghz,
        polarization,
        angles_deg.to_vec(),
        rcs,
    )
}

/// Keep the samples whose circular distance from `center_deg` is at most
/// `half_width_deg`.
pub fn restrict_azimuth(
    sig: &RcsSignature,
    center_deg: f64,
    half_width_deg: f64,
) -> Result<RcsSignature> {
    if !(half_width_deg > 0.0 && half_width_deg <= 180.0) {
        return Err(Error::Validation(format!(
            "half width must lie in (0, 180], got {half_width_deg}"
        )));
    }
    let (angles, rcs): (Vec<f64>, Vec<f64>) = sig
        .angles_deg
        .iter()
        .zip(&sig.rcs_m2)
        .filter(|(a, _)| circular_distance_deg(**a, center_deg) <= half_width_deg + 1e-9)
        .map(|(a, r)| (*a, *r))
        .unzip();
    if angles.is_empty() {
        return Err(Error::EmptySegment);
    }
    RcsSignature::new(
        sig.target_id.clone(),
        sig.frequency_ghz,
        sig.polarization,
        angles,
        rcs,
    )
}

pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// A labelled collection of signatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    signatures: Vec<RcsSignature>,
    /// Sorted, unique target ids.
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(signatures: Vec<RcsSignature>) -> Result<Self> {
        let class_names: Vec<String> = signatures
            .iter()
            .map(|s| s.target_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if class_names.len() < 2 {
            return Err(Error::Validation(format!(
                "a dataset needs at least 2 classes, found {}",
                class_names.len()
            )));
        }
        Ok(Self {
            signatures,
            class_names,
        })
    }

    pub fn signatures(&self) -> &[RcsSignature] {
        &self.signatures
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names
            .binary_search_by(|c| c.as_str().cmp(name))
            .ok()
    }

    pub fn signatures_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a RcsSignature> {
        self.signatures.iter().filter(move |s| s.target_id == class)
    }

    /// All RCS samples of one class, concatenated.
    pub fn pooled_samples(&self, class: &str) -> Vec<f64> {
        self.signatures_of(class)
            .flat_map(|s| s.rcs_m2.iter().copied())
            .collect()
    }
}

/// Parse the CSV interchange format into a [`Dataset`].
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    Dataset::new(read_signatures_csv(reader)?)
}

/// Parse the CSV interchange format without the dataset's class-count
/// requirement. Consecutive rows sharing (target_id, frequency,
/// polarization) form one signature.
pub fn read_signatures_csv<R: Read>(reader: R) -> Result<Vec<RcsSignature>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    struct Pending {
        key: (String, f64, Polarization),
        angles: Vec<f64>,
        rcs: Vec<f64>,
        first_line: u64,
    }
    let mut out = Vec::new();
    let mut pending: Option<Pending> = None;
    let finish = |p: Pending, out: &mut Vec<RcsSignature>| -> Result<()> {
        let sig = RcsSignature::new(p.key.0, p.key.1, p.key.2, p.angles, p.rcs).map_err(|e| {
            Error::Parse {
                line: p.first_line,
                message: e.to_string(),
            }
        })?;
        out.push(sig);
        Ok(())
    };

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let perr = |message: String| Error::Parse { line, message };
        if record.len() != CSV_HEADER.len() {
            return Err(perr(format!(
                "expected {} fields, found {}",
                CSV_HEADER.len(),
                record.len()
            )));
        }
        let target = record[0].to_string();
        if target.is_empty() {
            return Err(perr("empty target_id".into()));
        }
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|_| perr(format!("bad {} `{}`", CSV_HEADER[i], &record[i])))
        };
        let freq = num(1)?;
        let pol: Polarization = record[2].parse().map_err(|e: Error| perr(e.to_string()))?;
        let angle = num(3)?;
        let dbsm = num(4)?;
        if dbsm.is_nan() || dbsm == f64::INFINITY {
            return Err(perr(format!("bad rcs_dbsm `{}`", &record[4])));
        }
        let key = (target, freq, pol);
        match pending.as_mut() {
            Some(p) if p.key == key => {
                let last = *p.angles.last().expect("pending group is non-empty");
                if angle <= last {
                    return Err(Error::Validation(format!(
                        "line {line}: angles of `{}` not strictly increasing ({last} then {angle})",
                        key.0
                    )));
                }
                p.angles.push(angle);
                p.rcs.push(dbsm_to_m2(dbsm));
            }
            _ => {
                if let Some(done) = pending.take() {
                    finish(done, &mut out)?;
                }
                pending = Some(Pending {
                    key,
                    angles: vec![angle],
                    rcs: vec![dbsm_to_m2(dbsm)],
                    first_line: line,
                });
            }
        }
    }
    if let Some(done) = pending.take() {
        finish(done, &mut out)?;
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    write_signatures_csv(dataset.signatures(), writer)
}

pub fn write_signatures_csv<W: Write>(signatures: &[RcsSignature], writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for sig in signatures {
        let freq = format!("{:.6}", sig.frequency_ghz);
        let pol = sig.polarization.to_string();
        for (a, r) in sig.angles_deg.iter().zip(&sig.rcs_m2) {
            wtr.write_record([
                sig.target_id.as_str(),
                &freq,
                &pol,
                &format!("{a:.6}"),
                &format!("{:.6}", m2_to_dbsm(*r)),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(file))
}

pub fn load_signatures_csv(path: impl AsRef<Path>) -> Result<Vec<RcsSignature>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_signatures_csv(std::io::BufReader::new(file))
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

/// Per-class recipe for a synthetic fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecipe {
    pub name: String,
    pub num_centers: usize,
    pub mean_rcs_dbsm: f64,
    pub dominance: f64,
    pub body_radius_m: f64,
}

/// Recipes for the reference fleet: `classes` targets whose mean RCS levels
/// step by `level_step_db` and whose scatterer counts and dominance vary, so
/// both level and distribution shape differ between classes.
pub fn reference_recipes(classes: usize, level_step_db: f64) -> Vec<ClassRecipe> {
    (0..classes)
        .map(|k| ClassRecipe {
            name: format!("uav_{:02}", k + 1),
            num_centers: 3 + 4 * (k % 4),
            mean_rcs_dbsm: -20.0 + level_step_db * k as f64,
            dominance: [0.0, 0.8, 0.3, 1.5][k % 4],
            body_radius_m: 0.15 + 0.05 * (k % 3) as f64,
        })
        .collect()
}

/// Default fleet for sweeps and acceptance checks: 15 GHz, VV, class mean
/// levels 3 dB apart.
pub const REFERENCE_FREQUENCY_GHZ: f64 = 15.0;
pub const REFERENCE_LEVEL_STEP_DB: f64 = 3.0;

pub fn reference_fleet(classes: usize, seed: u64) -> Result<Dataset> {
    generate_fleet(
        &reference_recipes(classes, REFERENCE_LEVEL_STEP_DB),
        REFERENCE_FREQUENCY_GHZ,
        Polarization::VV,
        seed,
    )
}

/// One clean full-azimuth signature per recipe, on the default 2° grid.
pub fn generate_fleet(
    recipes: &[ClassRecipe],
    frequency_ghz: f64,
    polarization: Polarization,
    seed: u64,
) -> Result<Dataset> {
    let grid = default_grid();
    let sigs = recipes
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if r.num_centers == 0 {
                return Err(Error::InvalidModel(format!(
                    "class {} has no centers",
                    r.name
                )));
            }
            let model_seed = seed::derive(seed, &[k as u64, 0]);
            let model = ScatteringCenterModel::random(
                r.num_centers,
                dbsm_to_m2(r.mean_rcs_dbsm),
                r.dominance,
                frequency_ghz,
                r.body_radius_m,
                model_seed,
            );
            synthesize(
                &r.name,
                &model,
                frequency_ghz,
                polarization,
                &grid,
                seed::derive(seed, &[k as u64, 1]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sigs)
}
