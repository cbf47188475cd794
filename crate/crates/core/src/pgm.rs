//! Polar grid maps: dense V x H images of a scan indexed by calibrated beam
//! angles, with beams that produced no return materialized at maximum range.
//!
//! Cells are stored row-major, elevation-major and azimuth-minor, so cell
//! `(row, col)` lives at `row * H + col`.

use thiserror::Error;

use crate::types::{norm, CalibrationError, LabelSet, PointCloud, SensorCalibration};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PgmError {
    #[error("point {0} lies at the sensor origin")]
    OriginPoint(usize),
    #[error("angle table is empty")]
    EmptyTable,
    #[error("calibration has no beams")]
    EmptyCalibration,
    #[error("invalid calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("invalid cloud: {0}")]
    Cloud(#[from] crate::types::CloudError),
}

/// Range, azimuth and elevation of every point.
///
/// Azimuth is `atan2(y, x)` folded into `[-pi, pi)`; elevation is
/// `asin(z / range)`.
pub fn to_polar(coords: &[[f64; 3]]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), PgmError> {
    let mut ranges = Vec::with_capacity(coords.len());
    let mut azimuths = Vec::with_capacity(coords.len());
    let mut elevations = Vec::with_capacity(coords.len());
    for (i, p) in coords.iter().enumerate() {
        let (r, az, el) = point_to_polar(p).ok_or(PgmError::OriginPoint(i))?;
        ranges.push(r);
        azimuths.push(az);
        elevations.push(el);
    }
    Ok((ranges, azimuths, elevations))
}

pub(crate) fn point_to_polar(p: &[f64; 3]) -> Option<(f64, f64, f64)> {
    let r = norm(p);
    if r == 0.0 {
        return None;
    }
    let mut az = p[1].atan2(p[0]);
    if az >= std::f64::consts::PI {
        az = -std::f64::consts::PI;
    }
    let el = (p[2] / r).clamp(-1.0, 1.0).asin();
    Some((r, az, el))
}

/// Inverse of [`to_polar`].
pub fn to_euclidean(ranges: &[f64], azimuths: &[f64], elevations: &[f64]) -> Vec<[f64; 3]> {
    ranges
        .iter()
        .zip(azimuths)
        .zip(elevations)
        .map(|((&r, &az), &el)| polar_point(r, az, el))
        .collect()
}

pub(crate) fn polar_point(r: f64, az: f64, el: f64) -> [f64; 3] {
    let (se, ce) = el.sin_cos();
    let (sa, ca) = az.sin_cos();
    [r * ce * ca, r * ce * sa, r * se]
}

/// Unit direction of the beam at (`azimuth`, `elevation`).
pub fn beam_direction(azimuth: f64, elevation: f64) -> [f64; 3] {
    polar_point(1.0, azimuth, elevation)
}

/// Index of the table entry closest to `angle`; exact ties go to the lower index.
///
/// Angles outside the table clamp to the nearest endpoint.
pub fn nearest_angle_index(angle: f64, table: &[f64]) -> Result<usize, PgmError> {
    if table.is_empty() {
        return Err(PgmError::EmptyTable);
    }
    let hi = table.partition_point(|&a| a < angle);
    if hi == 0 {
        return Ok(0);
    }
    if hi == table.len() {
        return Ok(table.len() - 1);
    }
    let lo = hi - 1;
    if (angle - table[lo]).abs() <= (table[hi] - angle).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

/// Dense grid form of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGridMap {
    v: usize,
    h: usize,
    pub coords: Vec<[f64; 3]>,
    pub intensity: Vec<f64>,
    pub range: Vec<f64>,
    pub unreturned: Vec<bool>,
}

impl PolarGridMap {
    /// Grid where every beam is unreturned: range `r_max`, intensity 0.
    pub fn unreturned(calib: &SensorCalibration) -> Self {
        let (v, h) = (calib.v(), calib.h());
        let mut coords = Vec::with_capacity(v * h);
        for &el in &calib.elevations {
            for &az in &calib.azimuths {
                coords.push(polar_point(calib.r_max, az, el));
            }
        }
        Self {
            v,
            h,
            coords,
            intensity: vec![0.0; v * h],
            range: vec![calib.r_max; v * h],
            unreturned: vec![true; v * h],
        }
    }

    pub fn rows(&self) -> usize {
        self.v
    }

    pub fn cols(&self) -> usize {
        self.h
    }

    pub fn len(&self) -> usize {
        self.v * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.h + col
    }

    /// (row, col) of a flat cell index.
    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.h, cell % self.h)
    }

    /// Marks `cell` as a return at `point`.
    pub fn set_return(&mut self, cell: usize, point: [f64; 3], intensity: f64) {
        self.range[cell] = norm(&point);
        self.coords[cell] = point;
        self.intensity[cell] = intensity;
        self.unreturned[cell] = false;
    }

    pub fn returned_count(&self) -> usize {
        self.unreturned.iter().filter(|&&u| !u).count()
    }

    /// Returned cells only, in cell order, with their labels.
    pub fn returned_cloud(&self, labels: &LabelSet) -> (PointCloud, LabelSet) {
        let keep: Vec<bool> = self.unreturned.iter().map(|u| !u).collect();
        let (cloud, _) = flatten(self);
        (cloud.select(&keep), labels.select(&keep))
    }
}

/// Projects a list-form cloud onto the calibrated grid.
///
/// Each point lands in the cell of its nearest elevation and azimuth. When
/// several points share a cell the nearest one wins (equal ranges keep the
/// earlier point). Points outside `[r_min, r_max]` cannot be sensor returns
/// and are skipped. Cells without a point become unreturned beams.
pub fn project_to_pgm(
    cloud: &PointCloud,
    calib: &SensorCalibration,
) -> Result<PolarGridMap, PgmError> {
    if calib.elevations.is_empty() || calib.azimuths.is_empty() {
        return Err(PgmError::EmptyCalibration);
    }
    calib.validate()?;
    cloud.validate()?;
    let (ranges, azimuths, elevations) = to_polar(&cloud.coords)?;

    let mut grid = PolarGridMap::unreturned(calib);
    for i in 0..cloud.len() {
        if ranges[i] < calib.r_min || ranges[i] > calib.r_max {
            continue;
        }
        let row = nearest_angle_index(elevations[i], &calib.elevations)?;
        let col = nearest_angle_index(azimuths[i], &calib.azimuths)?;
        let cell = grid.cell(row, col);
        if grid.unreturned[cell] || ranges[i] < grid.range[cell] {
            grid.coords[cell] = cloud.coords[i];
            grid.intensity[cell] = cloud.intensity[i];
            grid.range[cell] = ranges[i];
            grid.unreturned[cell] = false;
        }
    }
    Ok(grid)
}

/// Reshapes the grid into a V*H point list plus the unreturned mask.
pub fn flatten(pgm: &PolarGridMap) -> (PointCloud, Vec<bool>) {
    (
        PointCloud::new(pgm.coords.clone(), pgm.intensity.clone()),
        pgm.unreturned.clone(),
    )
}
