//! Domain types shared across the pipeline.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by cloud validation and fusion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudError {
    #[error("coordinate and intensity arrays differ in length at index {0}")]
    LengthMismatch(usize),
    #[error("non-finite coordinate at index {0}")]
    NonFiniteCoordinate(usize),
    #[error("intensity outside [0, 1] at index {0}")]
    IntensityOutOfRange(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// N points in the sensor frame (sensor at the origin) with a reflectance per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub coords: Vec<[f64; 3]>,
    pub intensity: Vec<f64>,
}

impl PointCloud {
    pub fn new(coords: Vec<[f64; 3]>, intensity: Vec<f64>) -> Self {
        Self { coords, intensity }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Cloud with every intensity set to `value`.
    pub fn from_coords(coords: Vec<[f64; 3]>, value: f64) -> Self {
        let intensity = vec![value; coords.len()];
        Self { coords, intensity }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Euclidean distance of every point from the sensor origin.
    pub fn ranges(&self) -> Vec<f64> {
        self.coords.iter().map(|p| norm(p)).collect()
    }

    /// Keep the points whose mask entry is `true`.
    pub fn select(&self, keep: &[bool]) -> PointCloud {
        let (coords, intensity) = self
            .coords
            .iter()
            .zip(&self.intensity)
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|((c, i), _)| (*c, *i))
            .unzip();
        PointCloud { coords, intensity }
    }

    /// Checks the cloud invariants and reports the first offending index.
    pub fn validate(&self) -> Result<(), CloudError> {
        if self.coords.len() != self.intensity.len() {
            return Err(CloudError::LengthMismatch(
                self.coords.len().min(self.intensity.len()),
            ));
        }
        for (i, (p, &v)) in self.coords.iter().zip(&self.intensity).enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(CloudError::NonFiniteCoordinate(i));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(CloudError::IntensityOutOfRange(i));
            }
        }
        Ok(())
    }
}

/// Free-function form of [`PointCloud::validate`].
pub fn validate_cloud(cloud: &PointCloud) -> Result<(), CloudError> {
    cloud.validate()
}

pub(crate) fn norm(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Semantic classes. The numeric value is the on-disk class ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
#[repr(u8)]
pub enum Class {
    Background = 0,
    Road = 1,
    Rain = 2,
    Car = 3,
    Pedestrian = 4,
    Bike = 5,
    Sprinkler = 6,
    Targets = 7,
}

impl Class {
    pub const ALL: [Class; 8] = [
        Class::Background,
        Class::Road,
        Class::Rain,
        Class::Car,
        Class::Pedestrian,
        Class::Bike,
        Class::Sprinkler,
        Class::Targets,
    ];

    pub fn id(self) -> u16 {
        self as u16
    }

    pub fn from_id(id: u16) -> Option<Class> {
        Class::ALL.get(usize::from(id)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Background => "background",
            Class::Road => "road",
            Class::Rain => "rain",
            Class::Car => "car",
            Class::Pedestrian => "pedestrian",
            Class::Bike => "bike",
            Class::Sprinkler => "sprinkler",
            Class::Targets => "targets",
        }
    }

    /// Classes that may be attached to a box (3..=7).
    pub fn is_object(self) -> bool {
        self.id() >= 3
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u16> for Class {
    type Error = String;

    fn try_from(id: u16) -> Result<Self, Self::Error> {
        Class::from_id(id).ok_or_else(|| format!("unknown class id {id}"))
    }
}

impl From<Class> for u16 {
    fn from(c: Class) -> u16 {
        c.id()
    }
}

/// Per-point semantic labels paired with a cloud.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    pub labels: Vec<Class>,
}

impl LabelSet {
    pub fn new(labels: Vec<Class>) -> Self {
        Self { labels }
    }

    pub fn filled(class: Class, n: usize) -> Self {
        Self { labels: vec![class; n] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, class: Class) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    pub fn select(&self, keep: &[bool]) -> LabelSet {
        LabelSet {
            labels: self
                .labels
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(c, _)| *c)
                .collect(),
        }
    }
}

/// Binary rain / not-rain tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("{0} table is empty")]
    Empty(&'static str),
    #[error("{0} table is not strictly ascending at index {1}")]
    NotAscending(&'static str, usize),
    #[error("{0} angle out of range at index {1}")]
    AngleOutOfRange(&'static str, usize),
    #[error("invalid range limits: r_min {0}, r_max {1}")]
    RangeLimits(f64, f64),
}

/// Calibrated beam angles and range limits of the LiDAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorCalibration {
    /// Beam elevations in radians, strictly ascending.
    pub elevations: Vec<f64>,
    /// Beam azimuths in radians, strictly ascending, within [-pi, pi).
    pub azimuths: Vec<f64>,
    pub r_max: f64,
    pub r_min: f64,
    /// Height of the sensor origin above the world ground (m).
    pub sensor_height: f64,
}

impl SensorCalibration {
    /// Evenly spaced beams over inclusive elevation and azimuth spans (radians).
    pub fn uniform(
        v: usize,
        elevation_span: (f64, f64),
        h: usize,
        azimuth_span: (f64, f64),
        r_min: f64,
        r_max: f64,
        sensor_height: f64,
    ) -> Self {
        Self {
            elevations: linspace(elevation_span.0, elevation_span.1, v),
            azimuths: linspace(azimuth_span.0, azimuth_span.1, h),
            r_max,
            r_min,
            sensor_height,
        }
    }

    /// Front-facing 64 x 384 pattern used by the built-in simulations:
    /// elevations -25..+5 deg, azimuths -60..+60 deg, ranges 0.5..60 m,
    /// mounted 1.8 m above ground.
    pub fn desk() -> Self {
        let d = PI / 180.0;
        Self::uniform(64, (-25.0 * d, 5.0 * d), 384, (-60.0 * d, 60.0 * d), 0.5, 60.0, 1.8)
    }

    /// Smaller 32 x 192 variant of [`SensorCalibration::desk`] for quick runs.
    pub fn desk_small() -> Self {
        let d = PI / 180.0;
        Self::uniform(32, (-25.0 * d, 5.0 * d), 192, (-60.0 * d, 60.0 * d), 0.5, 60.0, 1.8)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "desk-small" => Some(Self::desk_small()),
            _ => None,
        }
    }

    pub fn v(&self) -> usize {
        self.elevations.len()
    }

    pub fn h(&self) -> usize {
        self.azimuths.len()
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        check_table("elevation", &self.elevations, |a| a > -FRAC_PI_2 && a < FRAC_PI_2)?;
        check_table("azimuth", &self.azimuths, |a| (-PI..PI).contains(&a))?;
        let ok = self.r_max.is_finite()
            && self.r_max > 0.0
            && self.r_min >= 0.0
            && self.r_min < self.r_max;
        if !ok {
            return Err(CalibrationError::RangeLimits(self.r_min, self.r_max));
        }
        Ok(())
    }
}

fn check_table(
    name: &'static str,
    table: &[f64],
    in_range: impl Fn(f64) -> bool,
) -> Result<(), CalibrationError> {
    if table.is_empty() {
        return Err(CalibrationError::Empty(name));
    }
    for (i, &a) in table.iter().enumerate() {
        if !a.is_finite() || !in_range(a) {
            return Err(CalibrationError::AngleOutOfRange(name, i));
        }
        if i > 0 && a <= table[i - 1] {
            return Err(CalibrationError::NotAscending(name, i));
        }
    }
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Early fusion: concatenates two labeled clouds, `a` first.
///
/// Intensities are concatenated as-is; no cross-sensor rescaling is applied.
pub fn merge_clouds(
    a: (&PointCloud, &LabelSet),
    b: (&PointCloud, &LabelSet),
) -> Result<(PointCloud, LabelSet), CloudError> {
    for (name, (cloud, labels)) in [("first", a), ("second", b)] {
        cloud
            .validate()
            .map_err(|e| CloudError::InvalidInput(format!("{name} cloud: {e}")))?;
        if labels.len() != cloud.len() {
            return Err(CloudError::InvalidInput(format!(
                "{name} cloud has {} points but {} labels",
                cloud.len(),
                labels.len()
            )));
        }
    }
    let mut coords = Vec::with_capacity(a.0.len() + b.0.len());
    coords.extend_from_slice(&a.0.coords);
    coords.extend_from_slice(&b.0.coords);
    let mut intensity = Vec::with_capacity(coords.len());
    intensity.extend_from_slice(&a.0.intensity);
    intensity.extend_from_slice(&b.0.intensity);
    let mut labels = Vec::with_capacity(coords.len());
    labels.extend_from_slice(&a.1.labels);
    labels.extend_from_slice(&b.1.labels);
    Ok((PointCloud { coords, intensity }, LabelSet { labels }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(n: usize) -> PointCloud {
        PointCloud::new(
            (0..n).map(|i| [i as f64, 1.0, 2.0]).collect(),
            vec![0.5; n],
        )
    }

    #[test]
    fn empty_cloud_is_valid() {
        assert_eq!(validate_cloud(&PointCloud::empty()), Ok(()));
    }

    #[test]
    fn intensity_out_of_range_names_index() {
        let mut c = cloud(5);
        c.intensity[3] = 1.5;
        assert_eq!(c.validate(), Err(CloudError::IntensityOutOfRange(3)));
    }

    #[test]
    fn nan_coordinate_names_index() {
        let mut c = cloud(2);
        c.coords[0][0] = f64::NAN;
        assert_eq!(c.validate(), Err(CloudError::NonFiniteCoordinate(0)));
    }

    #[test]
    fn length_mismatch() {
        let mut c = cloud(3);
        c.intensity.pop();
        assert!(matches!(c.validate(), Err(CloudError::LengthMismatch(2))));
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let a = cloud(3);
        let la = LabelSet::new(vec![Class::Road, Class::Rain, Class::Car]);
        let (m, ml) = merge_clouds((&a, &la), (&PointCloud::empty(), &LabelSet::default())).unwrap();
        assert_eq!(m, a);
        assert_eq!(ml, la);
        let (e, el) = merge_clouds(
            (&PointCloud::empty(), &LabelSet::default()),
            (&PointCloud::empty(), &LabelSet::default()),
        )
        .unwrap();
        assert!(e.is_empty() && el.is_empty());
    }

    #[test]
    fn merge_lidar_and_radar() {
        let lidar = PointCloud::new(vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![0.1, 0.2]);
        let ll = LabelSet::new(vec![Class::Road, Class::Rain]);
        let radar = PointCloud::new(vec![[9.0, 1.0, 0.5]], vec![0.9]);
        let rl = LabelSet::new(vec![Class::Car]);
        let (m, ml) = merge_clouds((&lidar, &ll), (&radar, &rl)).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.coords[2], [9.0, 1.0, 0.5]);
        assert_eq!(m.intensity, vec![0.1, 0.2, 0.9]);
        assert_eq!(ml.labels, vec![Class::Road, Class::Rain, Class::Car]);
    }

    #[test]
    fn merge_rejects_invalid_input() {
        let mut bad = cloud(2);
        bad.intensity[1] = -0.1;
        let l = LabelSet::filled(Class::Road, 2);
        let err = merge_clouds((&bad, &l), (&cloud(1), &LabelSet::filled(Class::Road, 1)));
        assert!(matches!(err, Err(CloudError::InvalidInput(_))));
        let err = merge_clouds((&cloud(2), &LabelSet::filled(Class::Road, 1)), (&cloud(1), &l));
        assert!(matches!(err, Err(CloudError::InvalidInput(_))));
    }

    #[test]
    fn class_ids_are_stable() {
        for (i, c) in Class::ALL.iter().enumerate() {
            assert_eq!(c.id() as usize, i);
            assert_eq!(Class::from_id(i as u16), Some(*c));
        }
        assert_eq!(Class::from_id(8), None);
    }

    #[test]
    fn calibration_validation() {
        assert!(SensorCalibration::desk().validate().is_ok());
        let mut c = SensorCalibration::desk();
        c.azimuths.swap(0, 1);
        assert!(matches!(c.validate(), Err(CalibrationError::NotAscending("azimuth", 1))));
        let mut c = SensorCalibration::desk();
        c.elevations.clear();
        assert_eq!(c.validate(), Err(CalibrationError::Empty("elevation")));
        let mut c = SensorCalibration::desk();
        c.r_min = c.r_max;
        assert!(c.validate().is_err());
    }

    fn labeled_cloud() -> impl Strategy<Value = (PointCloud, LabelSet)> {
        prop::collection::vec(
            (prop::array::uniform3(-50.0f64..50.0), 0.0f64..=1.0, 0u16..8),
            0..20,
        )
        .prop_map(|pts| {
            let coords = pts.iter().map(|p| p.0).collect();
            let intensity = pts.iter().map(|p| p.1).collect();
            let labels = pts.iter().map(|p| Class::from_id(p.2).unwrap()).collect();
            (PointCloud::new(coords, intensity), LabelSet::new(labels))
        })
    }

    proptest! {
        #[test]
        fn merge_is_additive_and_associative(a in labeled_cloud(), b in labeled_cloud(), c in labeled_cloud()) {
            let ab = merge_clouds((&a.0, &a.1), (&b.0, &b.1)).unwrap();
            prop_assert_eq!(ab.0.len(), a.0.len() + b.0.len());
            prop_assert!(ab.0.validate().is_ok());
            let left = merge_clouds((&ab.0, &ab.1), (&c.0, &c.1)).unwrap();
            let bc = merge_clouds((&b.0, &b.1), (&c.0, &c.1)).unwrap();
            let right = merge_clouds((&a.0, &a.1), (&bc.0, &bc.1)).unwrap();
            prop_assert_eq!(left, right);
        }
    }
}
