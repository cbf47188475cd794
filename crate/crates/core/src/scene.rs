//! Procedural clean-weather scans.
//!
//! A [`SceneSpec`] is a ground plane, a set of yawed boxes and a road polygon,
//! all in the world frame with the ground near `z = 0`. The sensor sits at
//! `(0, 0, sensor_height)`; returned points are expressed in the sensor frame.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::geometry::{Plane, SceneBox};
use crate::geometry::{polygon_contains, polygon_is_simple};
use crate::pgm::{beam_direction, PolarGridMap};
use crate::seed::stream_rng;
use crate::types::{CalibrationError, Class, LabelSet, SensorCalibration};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("unknown scene '{0}' (expected minimal, corridor or rehearse-like)")]
    UnknownScene(String),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("invalid calibration: {0}")]
    Calibration(#[from] CalibrationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub ground_plane: Plane,
    pub boxes: Vec<SceneBox>,
    pub road_polygon: Vec<[f64; 2]>,
    pub ground_reflectance: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.ground_plane.normal;
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if !((len - 1.0).abs() <= 1e-6 && n[2] > 0.0 && self.ground_plane.offset.is_finite()) {
            return Err(SceneError::InvalidSpec(
                "ground normal must be a unit vector with positive z".into(),
            ));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !b.is_valid() {
                return Err(SceneError::InvalidSpec(format!(
                    "box {i}: half extents must be positive and reflectance in [0, 1]"
                )));
            }
            if !b.class.is_object() {
                return Err(SceneError::InvalidSpec(format!(
                    "box {i}: class {} is not an object class",
                    b.class
                )));
            }
        }
        if !polygon_is_simple(&self.road_polygon) {
            return Err(SceneError::InvalidSpec(
                "road polygon must be simple with at least 3 vertices".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ground_reflectance) {
            return Err(SceneError::InvalidSpec("ground reflectance outside [0, 1]".into()));
        }
        Ok(())
    }
}

const FLAT_GROUND: Plane = Plane { normal: [0.0, 0.0, 1.0], offset: 0.0 };

fn object(center: [f64; 3], half: [f64; 3], yaw: f64, class: Class, reflectance: f64) -> SceneBox {
    SceneBox { center, half_extents: half, yaw, class, reflectance }
}

/// Built-in scenes.
///
/// * `minimal`: flat ground, no objects, 40 m square road ahead of the sensor.
/// * `corridor`: an 8 m wide road with two cars and a target board.
/// * `rehearse-like`: a wide test track with two sprinklers, a car, a
///   pedestrian, a bike and two target boards. The road polygon covers the
///   forward field of view out to 40 m; ground beyond is background.
pub fn builtin_scene(name: &str) -> Result<SceneSpec, SceneError> {
    let spec = match name {
        "minimal" => SceneSpec {
            ground_plane: FLAT_GROUND,
            boxes: Vec::new(),
            road_polygon: vec![[0.0, -20.0], [40.0, -20.0], [40.0, 20.0], [0.0, 20.0]],
            ground_reflectance: 0.2,
        },
        "corridor" => SceneSpec {
            ground_plane: FLAT_GROUND,
            boxes: vec![
                object([14.0, -2.0, 0.75], [2.2, 0.9, 0.75], 0.0, Class::Car, 0.6),
                object([26.0, 2.0, 0.75], [2.2, 0.9, 0.75], 0.05, Class::Car, 0.7),
                object([35.0, 0.0, 1.0], [0.1, 1.0, 1.0], 0.0, Class::Targets, 0.9),
            ],
            road_polygon: vec![[0.0, -4.0], [55.0, -4.0], [55.0, 4.0], [0.0, 4.0]],
            ground_reflectance: 0.15,
        },
        "rehearse-like" => SceneSpec {
            ground_plane: FLAT_GROUND,
            boxes: vec![
                object([8.0, -6.0, 1.5], [0.3, 0.3, 1.5], 0.0, Class::Sprinkler, 0.35),
                object([8.0, 6.0, 1.5], [0.3, 0.3, 1.5], 0.0, Class::Sprinkler, 0.35),
                object([15.0, -2.5, 0.75], [2.2, 0.9, 0.75], 0.1, Class::Car, 0.6),
                object([12.0, 1.5, 0.9], [0.3, 0.3, 0.9], 0.0, Class::Pedestrian, 0.45),
                object([20.0, 3.5, 0.8], [0.9, 0.3, 0.8], 0.3, Class::Bike, 0.5),
                object([30.0, 0.0, 1.0], [0.1, 1.0, 1.0], 0.0, Class::Targets, 0.9),
                object([25.0, -6.0, 0.75], [0.1, 0.75, 0.75], 0.2, Class::Targets, 0.9),
            ],
            road_polygon: vec![[0.3, -1.0], [40.0, -70.0], [40.0, 70.0], [0.3, 1.0]],
            ground_reflectance: 0.2,
        },
        other => return Err(SceneError::UnknownScene(other.to_string())),
    };
    Ok(spec)
}

pub const BUILTIN_SCENES: [&str; 3] = ["minimal", "corridor", "rehearse-like"];

/// First hit along a beam: distance and what was struck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub range: f64,
    pub class: Class,
    pub reflectance: f64,
}

/// Nearest intersection of the ray `origin + t * dir` within `[r_min, r_max]`.
pub fn cast_ray(
    spec: &SceneSpec,
    origin: &[f64; 3],
    dir: &[f64; 3],
    r_min: f64,
    r_max: f64,
) -> Option<Hit> {
    let in_window = |t: f64| t >= r_min && t <= r_max;
    let mut best: Option<Hit> = None;
    for b in &spec.boxes {
        if let Some(t) = b.ray_hit(origin, dir).filter(|&t| in_window(t)) {
            if best.is_none_or(|h| t < h.range) {
                best = Some(Hit { range: t, class: b.class, reflectance: b.reflectance });
            }
        }
    }
    if let Some(t) = spec.ground_plane.ray_hit(origin, dir).filter(|&t| in_window(t)) {
        if best.is_none_or(|h| t < h.range) {
            let x = origin[0] + t * dir[0];
            let y = origin[1] + t * dir[1];
            let class = if polygon_contains([x, y], &spec.road_polygon) {
                Class::Road
            } else {
                Class::Background
            };
            best = Some(Hit { range: t, class, reflectance: spec.ground_reflectance });
        }
    }
    best
}

/// Casts every calibrated beam against the scene.
///
/// Ranges receive zero-mean Gaussian noise of `noise_sigma` metres along the
/// beam, drawn from a per-cell stream of `seed`, and are clamped to the
/// sensor window. Beams with no hit stay unreturned and carry the
/// background label.
pub fn raycast_scene(
    spec: &SceneSpec,
    calib: &SensorCalibration,
    noise_sigma: f64,
    seed: u64,
) -> Result<(PolarGridMap, LabelSet), SceneError> {
    spec.validate()?;
    calib.validate()?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SceneError::InvalidSpec(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let origin = [0.0, 0.0, calib.sensor_height];
    let h = calib.h();
    let hits: Vec<Option<(f64, Hit)>> = (0..calib.v() * h)
        .into_par_iter()
        .map(|cell| {
            let dir = beam_direction(calib.azimuths[cell % h], calib.elevations[cell / h]);
            cast_ray(spec, &origin, &dir, calib.r_min, calib.r_max).map(|hit| {
                let mut r = hit.range;
                if noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut stream_rng(seed, cell as u64));
                    r = (r + noise_sigma * z).clamp(calib.r_min, calib.r_max);
                }
                (r, hit)
            })
        })
        .collect();

    let mut grid = PolarGridMap::unreturned(calib);
    let mut labels = LabelSet::filled(Class::Background, grid.len());
    for (cell, hit) in hits.into_iter().enumerate() {
        if let Some((r, hit)) = hit {
            let dir = beam_direction(calib.azimuths[cell % h], calib.elevations[cell / h]);
            grid.set_return(cell, [r * dir[0], r * dir[1], r * dir[2]], hit.reflectance);
            grid.range[cell] = r;
            labels.labels[cell] = hit.class;
        }
    }
    Ok((grid, labels))
}
