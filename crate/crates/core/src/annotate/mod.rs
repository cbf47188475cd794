//! Automatic point labeling: road plane, scene boxes, road polygon, and
//! rain by elimination, plus nearest-neighbour label transfer.

mod ransac;

pub use ransac::{ransac_plane, PlaneModel};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::SpatialIndex;
use crate::geometry::{polygon_contains, polygon_is_simple, SceneBox};
use crate::scene::SceneSpec;
use crate::types::{Class, LabelSet, PointCloud};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotateError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("every sampled point triple was collinear")]
    NoValidHypothesis,
    #[error("polygon must be simple with at least 3 vertices")]
    DegeneratePolygon,
    #[error("source cloud is empty")]
    EmptySource,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid annotation scene: {0}")]
    InvalidScene(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Even-odd test on the xy plane; points on an edge or vertex are inside.
pub fn point_in_polygon(xy: [f64; 2], polygon: &[[f64; 2]]) -> Result<bool, AnnotateError> {
    if !polygon_is_simple(polygon) {
        return Err(AnnotateError::DegeneratePolygon);
    }
    Ok(polygon_contains(xy, polygon))
}

/// Annotator's view of a scene, in the sensor frame of the clouds it labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationScene {
    pub sprinkler_boxes: Vec<SceneBox>,
    pub object_boxes: Vec<SceneBox>,
    pub road_polygon: Vec<[f64; 2]>,
}

impl AnnotationScene {
    /// Boxes and polygon of a world-frame scene, shifted down by the sensor
    /// height so they line up with simulated scans.
    pub fn from_scene(spec: &SceneSpec, sensor_height: f64) -> Self {
        let shift = |b: &SceneBox| {
            let mut b = b.clone();
            b.center[2] -= sensor_height;
            b
        };
        let (sprinkler_boxes, object_boxes) =
            spec.boxes.iter().map(shift).partition(|b| b.class == Class::Sprinkler);
        Self { sprinkler_boxes, object_boxes, road_polygon: spec.road_polygon.clone() }
    }

    pub fn validate(&self) -> Result<(), AnnotateError> {
        if !polygon_is_simple(&self.road_polygon) {
            return Err(AnnotateError::DegeneratePolygon);
        }
        for (i, b) in self.sprinkler_boxes.iter().enumerate() {
            if !b.is_valid() || b.class != Class::Sprinkler {
                return Err(AnnotateError::InvalidScene(format!("sprinkler box {i}")));
            }
        }
        for (i, b) in self.object_boxes.iter().enumerate() {
            if !b.is_valid() || !b.class.is_object() {
                return Err(AnnotateError::InvalidScene(format!("object box {i}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub iterations: usize,
    pub inlier_threshold: f64,
    /// Height band around the plane that still counts as road.
    pub plane_tolerance: f64,
    /// Growth applied to every box before the containment test.
    pub box_margin: f64,
    pub seed: u64,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self { iterations: 200, inlier_threshold: 0.05, plane_tolerance: 0.1, box_margin: 0.1, seed: 0 }
    }
}

impl AnnotateConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.iterations == 0
            || !(self.inlier_threshold > 0.0)
            || !(self.plane_tolerance >= 0.0)
            || !(self.box_margin >= 0.0)
        {
            return Err(AnnotateError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Labels every point of `cloud`. Boxes win over rain, rain over road, road
/// over background; points below the plane are background regardless.
pub fn auto_annotate(
    cloud: &PointCloud,
    scene: &AnnotationScene,
    cfg: &AnnotateConfig,
) -> Result<LabelSet, AnnotateError> {
    cfg.validate()?;
    scene.validate()?;
    let plane = ransac_plane(cloud, cfg.iterations, cfg.inlier_threshold, cfg.seed)?;
    Ok(classify(cloud, scene, &plane, cfg))
}

/// Label assignment against an already fitted plane.
pub fn classify(cloud: &PointCloud, scene: &AnnotationScene, plane: &PlaneModel, cfg: &AnnotateConfig) -> LabelSet {
    let labels = cloud
        .coords
        .par_iter()
        .map(|p| {
            let h = plane.signed_distance(p);
            if h < -cfg.plane_tolerance {
                return Class::Background;
            }
            let in_box = |boxes: &[SceneBox]| boxes.iter().find(|b| b.contains(p, cfg.box_margin)).map(|b| b.class);
            if let Some(c) = in_box(&scene.sprinkler_boxes).or_else(|| in_box(&scene.object_boxes)) {
                return c;
            }
            if !polygon_contains([p[0], p[1]], &scene.road_polygon) {
                Class::Background
            } else if h > cfg.plane_tolerance {
                Class::Rain
            } else {
                Class::Road
            }
        })
        .collect();
    LabelSet::new(labels)
}

/// Each destination point takes the label of its nearest source point.
pub fn transfer_labels(
    src: &PointCloud,
    src_labels: &LabelSet,
    dst: &PointCloud,
) -> Result<LabelSet, AnnotateError> {
    if src.is_empty() {
        return Err(AnnotateError::EmptySource);
    }
    if src.len() != src_labels.len() {
        return Err(AnnotateError::LengthMismatch(format!(
            "{} source points, {} labels",
            src.len(),
            src_labels.len()
        )));
    }
    let index = SpatialIndex::build(src);
    let labels = dst
        .coords
        .par_iter()
        .map(|q| src_labels.labels[index.nearest(q).expect("index is non-empty")])
        .collect();
    Ok(LabelSet::new(labels))
}
