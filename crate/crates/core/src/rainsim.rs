//! Rain injection.
//!
//! Drop diameters follow the Marshall-Palmer exponential
//! `N(D) = n0 * exp(-lambda * D)` truncated to `[d_min, d_max]`, with
//! `lambda = 4.1 * rate^-0.21` (rate in mm/h, D in mm). A drop intercepts a
//! beam when its centre lies within `radius + t * tan(divergence)` of the
//! beam axis at along-beam distance `t`.
//!
//! [`inject_rain`] never materializes the full drop field over the scan
//! volume (tens of millions of drops at 50 mm/h). Each beam instead samples
//! the Poisson process of drops inside its own interception cone, in order
//! of increasing range, and stops at the first drop that actually intercepts
//! it. For cones that do not overlap this has exactly the distribution of
//! the full field seen through the beams.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cross, dot, sub};
use crate::pgm::{beam_direction, PolarGridMap};
use crate::seed::{stage_seed, stream_rng};
use crate::types::{Class, LabelSet, SensorCalibration};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RainError {
    #[error("rain rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("invalid rain config: {0}")]
    InvalidConfig(String),
    #[error("degenerate drop-field bounds")]
    DegenerateBounds,
    #[error("label count {labels} does not match grid size {cells}")]
    LabelLengthMismatch { labels: usize, cells: usize },
}

/// Paper-named rain regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RainDensity {
    Light,
    Medium,
    Heavy,
}

impl RainDensity {
    pub const ALL: [RainDensity; 3] = [RainDensity::Heavy, RainDensity::Medium, RainDensity::Light];

    pub fn rate(self) -> f64 {
        match self {
            RainDensity::Light => 10.0,
            RainDensity::Medium => 25.0,
            RainDensity::Heavy => 50.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RainDensity::Light => "light",
            RainDensity::Medium => "medium",
            RainDensity::Heavy => "heavy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "light" => Some(RainDensity::Light),
            "medium" => Some(RainDensity::Medium),
            "heavy" => Some(RainDensity::Heavy),
            _ => None,
        }
    }

    pub fn from_rate(rate: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.rate() == rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RainConfig {
    /// Rain rate in mm/h.
    pub rate: f64,
    /// Smallest drop diameter, mm.
    pub d_min: f64,
    /// Largest drop diameter, mm.
    pub d_max: f64,
    /// Marshall-Palmer intercept, m^-3 mm^-1.
    pub n0: f64,
    /// Beam half-angle divergence, rad.
    pub beam_divergence: f64,
    /// Intensity given to rain returns.
    pub rain_reflectance: f64,
    pub seed: u64,
    /// Drops in front of an existing return replace it.
    pub occlusion: bool,
}

impl Default for RainConfig {
    fn default() -> Self {
        Self {
            rate: 10.0,
            d_min: 0.5,
            d_max: 6.0,
            n0: 8000.0,
            beam_divergence: 1e-3,
            rain_reflectance: 0.05,
            seed: 0,
            occlusion: true,
        }
    }
}

impl RainConfig {
    pub fn with_rate(rate: f64, seed: u64) -> Self {
        Self { rate, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RainError> {
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(RainError::NonPositiveRate(self.rate));
        }
        let bad = |m: &str| Err(RainError::InvalidConfig(m.to_string()));
        if !(self.d_min > 0.0 && self.d_min <= self.d_max && self.d_max.is_finite()) {
            return bad("need 0 < d_min <= d_max");
        }
        if !(self.n0 >= 0.0 && self.n0.is_finite()) {
            return bad("n0 must be non-negative");
        }
        if !(self.beam_divergence >= 0.0 && self.beam_divergence < PI / 2.0) {
            return bad("beam divergence must be in [0, pi/2)");
        }
        if !(0.0..=1.0).contains(&self.rain_reflectance) {
            return bad("rain reflectance must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainDrop {
    pub center: [f64; 3],
    /// Diameter, mm.
    pub diameter: f64,
}

impl RainDrop {
    pub fn radius_m(&self) -> f64 {
        self.diameter * 5e-4
    }
}

/// Axis-aligned volume, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }
}

/// Marshall-Palmer slope, mm^-1.
pub fn marshall_palmer_lambda(rate: f64) -> Result<f64, RainError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(RainError::NonPositiveRate(rate));
    }
    Ok(4.1 * rate.powf(-0.21))
}

/// Drops per cubic metre with diameter in `[d_min, d_max]`.
pub fn expected_drop_concentration(config: &RainConfig) -> Result<f64, RainError> {
    config.validate()?;
    let lambda = marshall_palmer_lambda(config.rate)?;
    Ok(config.n0 / lambda
        * ((-lambda * config.d_min).exp() - (-lambda * config.d_max).exp()))
}

/// Inverse-CDF draw from the truncated exponential on `[d_min, d_max]`.
fn sample_diameter<R: Rng>(rng: &mut R, lambda: f64, d_min: f64, d_max: f64) -> f64 {
    let u: f64 = rng.random();
    let span = d_max - d_min;
    let d = d_min - (u * (-lambda * span).exp_m1()).ln_1p() / lambda;
    d.clamp(d_min, d_max)
}

/// Poisson-distributed drop field inside `bounds`.
pub fn sample_drop_field(config: &RainConfig, bounds: &Bounds) -> Result<Vec<RainDrop>, RainError> {
    config.validate()?;
    let finite = bounds.min.iter().chain(&bounds.max).all(|v| v.is_finite());
    if !finite || (0..3).any(|k| bounds.max[k] < bounds.min[k]) {
        return Err(RainError::DegenerateBounds);
    }
    let mean = expected_drop_concentration(config)? * bounds.volume();
    if mean <= 0.0 {
        return Ok(Vec::new());
    }
    let lambda = marshall_palmer_lambda(config.rate)?;
    let mut rng = stream_rng(stage_seed(config.seed, "drop-field"), 0);
    let count = Poisson::new(mean)
        .map_err(|e| RainError::InvalidConfig(e.to_string()))?
        .sample(&mut rng) as usize;
    let drops = (0..count)
        .map(|_| {
            let mut center = [0.0; 3];
            for k in 0..3 {
                let u: f64 = rng.random();
                center[k] = bounds.min[k] + u * (bounds.max[k] - bounds.min[k]);
            }
            let diameter = sample_diameter(&mut rng, lambda, config.d_min, config.d_max);
            RainDrop { center, diameter }
        })
        .collect();
    Ok(drops)
}

/// Along-beam distance at which `drop` intercepts the beam, if it does.
pub fn intersect_beam(
    origin: &[f64; 3],
    direction: &[f64; 3],
    drop: &RainDrop,
    divergence: f64,
) -> Option<f64> {
    let rel = sub(&drop.center, origin);
    let t = dot(&rel, direction);
    if t <= 0.0 {
        return None;
    }
    let perp = [rel[0] - t * direction[0], rel[1] - t * direction[1], rel[2] - t * direction[2]];
    let dist = dot(&perp, &perp).sqrt();
    (dist <= drop.radius_m() + t * divergence.tan()).then_some(t)
}

/// Two unit vectors orthogonal to `d` and to each other.
fn orthonormal_basis(d: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = cross(d, &helper);
    let n1 = dot(&e1, &e1).sqrt();
    let e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    (e1, cross(d, &e1))
}

/// Per-beam sampler of the drop process inside the interception cone.
struct ConeSampler {
    concentration: f64,
    lambda: f64,
    d_min: f64,
    d_max: f64,
    max_radius: f64,
    slope: f64,
    divergence: f64,
}

impl ConeSampler {
    fn new(config: &RainConfig) -> Result<Self, RainError> {
        Ok(Self {
            concentration: expected_drop_concentration(config)?,
            lambda: marshall_palmer_lambda(config.rate)?,
            d_min: config.d_min,
            d_max: config.d_max,
            max_radius: config.d_max * 5e-4,
            slope: config.beam_divergence.tan(),
            divergence: config.beam_divergence,
        })
    }

    /// Range where the expected number of drop centres in the cone between
    /// `t0` and the result equals `mass`.
    fn range_at_mass(&self, t0: f64, mass: f64) -> f64 {
        let density = self.concentration * PI;
        let a = self.max_radius;
        if self.slope > 0.0 {
            let r0 = a + self.slope * t0;
            ((r0 * r0 * r0 + 3.0 * self.slope * mass / density).cbrt() - a) / self.slope
        } else {
            t0 + mass / (density * a * a)
        }
    }

    /// Nearest intercepting drop with range in `[r_min, limit)`.
    fn first_hit(&self, dir: &[f64; 3], r_min: f64, limit: f64, seed: u64, cell: u64) -> Option<f64> {
        if self.concentration <= 0.0 || limit <= r_min {
            return None;
        }
        let mut rng = stream_rng(seed, cell);
        let (e1, e2) = orthonormal_basis(dir);
        let origin = [0.0; 3];
        let mut mass = 0.0;
        loop {
            let step: f64 = Exp1.sample(&mut rng);
            mass += step;
            let t = self.range_at_mass(r_min, mass);
            if !(t < limit) {
                return None;
            }
            let cone_radius = self.max_radius + self.slope * t;
            let r_perp = cone_radius * rng.random::<f64>().sqrt();
            let (s, c) = (2.0 * PI * rng.random::<f64>()).sin_cos();
            let diameter = sample_diameter(&mut rng, self.lambda, self.d_min, self.d_max);
            let center = [
                t * dir[0] + r_perp * (c * e1[0] + s * e2[0]),
                t * dir[1] + r_perp * (c * e1[1] + s * e2[1]),
                t * dir[2] + r_perp * (c * e1[2] + s * e2[2]),
            ];
            let drop = RainDrop { center, diameter };
            if let Some(hit) = intersect_beam(&origin, dir, &drop, self.divergence) {
                if hit >= r_min && hit < limit {
                    return Some(hit);
                }
            }
        }
    }
}

/// Upper bound a drop must beat on this cell, or `None` if the cell cannot change.
fn beam_limit(pgm: &PolarGridMap, cell: usize, calib: &SensorCalibration, occlusion: bool) -> Option<f64> {
    if pgm.unreturned[cell] {
        Some(calib.r_max)
    } else if occlusion {
        Some(pgm.range[cell])
    } else {
        None
    }
}

fn check_inputs(
    pgm: &PolarGridMap,
    labels: &LabelSet,
    calib: &SensorCalibration,
    config: &RainConfig,
) -> Result<(), RainError> {
    config.validate()?;
    if labels.len() != pgm.len() || calib.v() * calib.h() != pgm.len() {
        return Err(RainError::LabelLengthMismatch { labels: labels.len(), cells: pgm.len() });
    }
    Ok(())
}

fn apply_hits(
    pgm: &PolarGridMap,
    labels: &LabelSet,
    calib: &SensorCalibration,
    config: &RainConfig,
    hits: Vec<Option<f64>>,
) -> (PolarGridMap, LabelSet) {
    let mut out = pgm.clone();
    let mut out_labels = labels.clone();
    for (cell, hit) in hits.into_iter().enumerate() {
        if let Some(t) = hit {
            let (row, col) = pgm.row_col(cell);
            let d = beam_direction(calib.azimuths[col], calib.elevations[row]);
            out.set_return(cell, [t * d[0], t * d[1], t * d[2]], config.rain_reflectance);
            out.range[cell] = t;
            out_labels.labels[cell] = Class::Rain;
        }
    }
    (out, out_labels)
}

/// Adds rain to a clean grid.
///
/// A beam whose nearest intercepting drop lies in `[r_min, limit)` becomes a
/// rain return at the drop's range, where `limit` is `r_max` for unreturned
/// beams and the existing range for returned ones (only when
/// `config.occlusion` is set). All other cells are left untouched.
pub fn inject_rain(
    pgm: &PolarGridMap,
    labels: &LabelSet,
    calib: &SensorCalibration,
    config: &RainConfig,
) -> Result<(PolarGridMap, LabelSet), RainError> {
    check_inputs(pgm, labels, calib, config)?;
    let sampler = ConeSampler::new(config)?;
    let seed = stage_seed(config.seed, "rain");
    let h = calib.h();
    let hits: Vec<Option<f64>> = (0..pgm.len())
        .into_par_iter()
        .map(|cell| {
            let limit = beam_limit(pgm, cell, calib, config.occlusion)?;
            let dir = beam_direction(calib.azimuths[cell % h], calib.elevations[cell / h]);
            sampler.first_hit(&dir, calib.r_min, limit, seed, cell as u64)
        })
        .collect();
    Ok(apply_hits(pgm, labels, calib, config, hits))
}

/// Same contract as [`inject_rain`] for an explicit set of drops.
///
/// Every drop is tested against every beam, so this is meant for small
/// hand-built or locally sampled fields.
pub fn inject_drops(
    pgm: &PolarGridMap,
    labels: &LabelSet,
    calib: &SensorCalibration,
    drops: &[RainDrop],
    config: &RainConfig,
) -> Result<(PolarGridMap, LabelSet), RainError> {
    check_inputs(pgm, labels, calib, config)?;
    let h = calib.h();
    let hits: Vec<Option<f64>> = (0..pgm.len())
        .into_par_iter()
        .map(|cell| {
            let limit = beam_limit(pgm, cell, calib, config.occlusion)?;
            let dir = beam_direction(calib.azimuths[cell % h], calib.elevations[cell / h]);
            drops
                .iter()
                .filter_map(|d| intersect_beam(&[0.0; 3], &dir, d, config.beam_divergence))
                .filter(|&t| t >= calib.r_min && t < limit)
                .min_by(f64::total_cmp)
        })
        .collect();
    Ok(apply_hits(pgm, labels, calib, config, hits))
}
