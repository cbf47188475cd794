//! Statistical de-raining filters.
//!
//! Every filter returns an inlier mask in input order: `true` keeps the
//! point, `false` flags it as rain. Neighbour counts exclude the point
//! itself, statistics use the population standard deviation, and a value
//! exactly on a threshold is kept.
//!
//! * ROR keeps a point with at least `min_neighbors` others within `radius`.
//! * SOR keeps a point whose mean distance to its `k` nearest neighbours is
//!   at most `mean + s * std` over the cloud.
//! * DROR scales the ROR radius with range: `max(sr_min, beta * alpha * R)`.
//! * DSOR scales the SOR threshold with range: `(mean + s * std) * r * R`.

mod index;
mod oracle;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{dist2, SpatialIndex};
pub use oracle::{brute_force_mask, ORACLE_MAX_POINTS};

use crate::types::PointCloud;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("query on an empty index")]
    EmptyIndex,
    #[error("point index {0} out of bounds")]
    IndexOutOfBounds(usize),
    #[error("cloud has {points} points but the filter needs at least {needed}")]
    TooFewPoints { points: usize, needed: usize },
    #[error("cloud has {0} points, over the exhaustive-search limit")]
    TooLarge(usize),
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ror,
    Sor,
    Dror,
    Dsor,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Ror, FilterKind::Sor, FilterKind::Dror, FilterKind::Dsor];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Ror => "ror",
            FilterKind::Sor => "sor",
            FilterKind::Dror => "dror",
            FilterKind::Dsor => "dsor",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name.to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterParams {
    Ror { radius: f64, min_neighbors: usize },
    Sor { k: usize, s: f64 },
    Dror { alpha: f64, beta: f64, k_min: usize, sr_min: f64 },
    Dsor { k: usize, s: f64, r: f64 },
}

impl FilterParams {
    pub fn kind(&self) -> FilterKind {
        match self {
            FilterParams::Ror { .. } => FilterKind::Ror,
            FilterParams::Sor { .. } => FilterKind::Sor,
            FilterParams::Dror { .. } => FilterKind::Dror,
            FilterParams::Dsor { .. } => FilterKind::Dsor,
        }
    }

    /// Starting points before tuning. DROR's `alpha` matches the 0.31 deg
    /// azimuth step of the built-in calibration.
    pub fn default_for(kind: FilterKind) -> Self {
        match kind {
            FilterKind::Ror => FilterParams::Ror { radius: 0.25, min_neighbors: 3 },
            FilterKind::Sor => FilterParams::Sor { k: 5, s: 1.0 },
            FilterKind::Dror => FilterParams::Dror {
                alpha: 0.3125f64.to_radians(),
                beta: 3.0,
                k_min: 3,
                sr_min: 0.04,
            },
            FilterKind::Dsor => FilterParams::Dsor { k: 5, s: 0.01, r: 0.05 },
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::InvalidParams(m.to_string()));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match *self {
            FilterParams::Ror { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
                bad("ror radius must be > 0")
            }
            FilterParams::Sor { k, s } | FilterParams::Dsor { k, s, .. } if k == 0 || !finite_nonneg(s) => {
                bad("k must be >= 1 and s >= 0")
            }
            FilterParams::Dsor { r, .. } if !(r > 0.0 && r.is_finite()) => bad("dsor r must be > 0"),
            FilterParams::Dror { alpha, beta, sr_min, .. }
                if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() && finite_nonneg(sr_min)) =>
            {
                bad("dror needs alpha > 0, beta > 0, sr_min >= 0")
            }
            _ => Ok(()),
        }
    }
}

/// A cloud with its spatial index, ranges and memoized kNN statistics, so
/// repeated filter runs (parameter search) reuse the neighbour work.
pub struct PreparedCloud<'a> {
    cloud: &'a PointCloud,
    index: SpatialIndex,
    ranges: Vec<f64>,
    knn_cache: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
}

impl<'a> PreparedCloud<'a> {
    pub fn new(cloud: &'a PointCloud) -> Self {
        Self {
            cloud,
            index: SpatialIndex::build(cloud),
            ranges: cloud.ranges(),
            knn_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cloud(&self) -> &PointCloud {
        self.cloud
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Mean distance from every point to its `k` nearest neighbours.
    pub fn knn_mean(&self, k: usize) -> Result<Arc<Vec<f64>>, FilterError> {
        let n = self.len();
        if n < k + 1 {
            return Err(FilterError::TooFewPoints { points: n, needed: k + 1 });
        }
        if let Some(hit) = self.knn_cache.lock().unwrap().get(&k) {
            return Ok(Arc::clone(hit));
        }
        let means: Result<Vec<f64>, FilterError> = (0..n)
            .into_par_iter()
            .map(|i| self.index.knn_dist2(i, k).map(|d| mean_of_roots(&d)))
            .collect();
        let means = Arc::new(means?);
        self.knn_cache.lock().unwrap().insert(k, Arc::clone(&means));
        Ok(means)
    }
}

/// Mean of square roots, summed in the given (ascending) order.
pub(crate) fn mean_of_roots(d2: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &d in d2 {
        sum += d.sqrt();
    }
    sum / d2.len() as f64
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for &v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &v in values {
        sq += (v - mean) * (v - mean);
    }
    (mean, (sq / n).sqrt())
}

pub fn ror(cloud: &PointCloud, radius: f64, min_neighbors: usize) -> Result<Vec<bool>, FilterError> {
    apply(&PreparedCloud::new(cloud), &FilterParams::Ror { radius, min_neighbors })
}

pub fn sor(cloud: &PointCloud, k: usize, s: f64) -> Result<Vec<bool>, FilterError> {
    apply(&PreparedCloud::new(cloud), &FilterParams::Sor { k, s })
}

pub fn dror(cloud: &PointCloud, alpha: f64, beta: f64, k_min: usize, sr_min: f64) -> Result<Vec<bool>, FilterError> {
    apply(&PreparedCloud::new(cloud), &FilterParams::Dror { alpha, beta, k_min, sr_min })
}

pub fn dsor(cloud: &PointCloud, k: usize, s: f64, r: f64) -> Result<Vec<bool>, FilterError> {
    apply(&PreparedCloud::new(cloud), &FilterParams::Dsor { k, s, r })
}

/// Runs any filter on a cloud.
pub fn filter_mask(cloud: &PointCloud, params: &FilterParams) -> Result<Vec<bool>, FilterError> {
    apply(&PreparedCloud::new(cloud), params)
}

/// Runs a filter on a prepared cloud.
pub fn apply(prepared: &PreparedCloud<'_>, params: &FilterParams) -> Result<Vec<bool>, FilterError> {
    params.validate()?;
    let n = prepared.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let index = &prepared.index;
    match *params {
        FilterParams::Ror { radius, min_neighbors } => {
            if min_neighbors == 0 {
                return Ok(vec![true; n]);
            }
            (0..n)
                .into_par_iter()
                .map(|i| Ok(index.radius_count(i, radius)? >= min_neighbors))
                .collect()
        }
        FilterParams::Dror { alpha, beta, k_min, sr_min } => {
            if k_min == 0 {
                return Ok(vec![true; n]);
            }
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let radius = sr_min.max(beta * alpha * prepared.ranges[i]);
                    Ok(index.radius_count(i, radius)? >= k_min)
                })
                .collect()
        }
        FilterParams::Sor { k, s } => {
            let d = prepared.knn_mean(k)?;
            let (mean, std) = mean_std(&d);
            let threshold = mean + s * std;
            Ok(d.iter().map(|&di| di <= threshold).collect())
        }
        FilterParams::Dsor { k, s, r } => {
            let d = prepared.knn_mean(k)?;
            let (mean, std) = mean_std(&d);
            let global = mean + s * std;
            Ok(d.iter()
                .zip(&prepared.ranges)
                .map(|(&di, &range)| di <= global * r * range)
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointCloud {
        PointCloud::from_coords(xs.iter().map(|&x| [x, 0.0, 0.0]).collect(), 0.5)
    }

    #[test]
    fn ror_examples() {
        let c = line(&[0.0, 0.1, 5.0]);
        assert_eq!(ror(&c, 0.5, 1).unwrap(), vec![true, true, false]);
        assert_eq!(ror(&c, 0.5, 0).unwrap(), vec![true; 3]);
        assert!(ror(&PointCloud::empty(), 0.5, 2).unwrap().is_empty());
        assert_eq!(ror(&line(&[1.0]), 10.0, 1).unwrap(), vec![false]);
    }

    #[test]
    fn sor_collinear_example() {
        // d = {1, 1, 9}, mean 11/3
        let c = line(&[0.0, 1.0, 10.0]);
        assert_eq!(sor(&c, 1, 0.0).unwrap(), vec![true, true, false]);
        assert_eq!(sor(&c, 1, 100.0).unwrap(), vec![true; 3]);
        assert_eq!(
            sor(&line(&[0.0, 1.0]), 2, 0.0),
            Err(FilterError::TooFewPoints { points: 2, needed: 3 })
        );
    }

    #[test]
    fn sor_regular_grid_keeps_everything_with_large_s() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                pts.push([i as f64, j as f64, 0.0]);
            }
        }
        let c = PointCloud::from_coords(pts, 0.2);
        assert!(sor(&c, 4, 50.0).unwrap().iter().all(|&k| k));
    }

    #[test]
    fn dror_examples() {
        // 20 m out, 0.2 m apart: radius max(0.04, 0.02 * 20) = 0.4
        let far = PointCloud::from_coords(vec![[20.0, 0.0, 0.0], [20.0, 0.2, 0.0]], 0.5);
        assert_eq!(dror(&far, 0.01, 2.0, 1, 0.04).unwrap(), vec![true, true]);
        assert_eq!(dror(&far, 0.01, 2.0, 0, 0.04).unwrap(), vec![true, true]);
        // at 1 m: radius max(0.04, 0.02) = 0.04 < 0.2
        let near = PointCloud::from_coords(vec![[1.0, 0.0, 0.0], [1.0, 0.2, 0.0]], 0.5);
        assert_eq!(dror(&near, 0.01, 2.0, 1, 0.04).unwrap(), vec![false, false]);
    }

    #[test]
    fn dsor_reduces_to_sor_at_constant_range() {
        // integer points on the sphere of radius 9
        let pts = vec![
            [9.0, 0.0, 0.0], [1.0, 4.0, 8.0], [4.0, 1.0, 8.0], [8.0, 4.0, 1.0],
            [4.0, 8.0, 1.0], [1.0, 8.0, 4.0], [7.0, 4.0, 4.0], [4.0, 4.0, 7.0],
            [0.0, 0.0, 9.0], [0.0, -9.0, 0.0],
        ];
        let c = PointCloud::from_coords(pts, 0.5);
        for k in 1..4 {
            for s in [0.0, 0.5, 1.0] {
                assert_eq!(dsor(&c, k, s, 1.0 / 9.0).unwrap(), sor(&c, k, s).unwrap());
            }
        }
        assert!(!sor(&c, 1, 0.0).unwrap().iter().all(|&k| k));
    }

    #[test]
    fn dsor_keeps_sparse_far_points_that_sor_drops() {
        // dense patch near the sensor, a sparser patch far away
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                pts.push([3.0, 0.05 * i as f64, 0.05 * j as f64]);
                pts.push([30.0, 0.5 * i as f64, 0.5 * j as f64]);
            }
        }
        let c = PointCloud::from_coords(pts, 0.5);
        let sor_mask = sor(&c, 3, 0.0).unwrap();
        let dsor_mask = dsor(&c, 3, 0.0, 0.1).unwrap();
        let far = |i: usize| c.coords[i][0] > 10.0;
        assert!((0..c.len()).any(|i| far(i) && !sor_mask[i]));
        assert!((0..c.len()).filter(|&i| far(i)).all(|i| dsor_mask[i]));
        assert_eq!(brute_force_mask(&c, &FilterParams::Dsor { k: 3, s: 0.0, r: 0.1 }).unwrap(), dsor_mask);
    }

    #[test]
    fn dsor_with_generous_r_keeps_all() {
        let c = line(&[1.0, 2.0, 2.5, 9.0, 30.0]);
        assert!(dsor(&c, 2, 0.0, 100.0).unwrap().iter().all(|&k| k));
    }

    #[test]
    fn params_json_shape() {
        let p: FilterParams = serde_json::from_str(r#"{"kind": "dsor", "k": 5, "s": 0.01, "r": 0.05}"#).unwrap();
        assert_eq!(p, FilterParams::Dsor { k: 5, s: 0.01, r: 0.05 });
        let text = serde_json::to_string(&FilterParams::Ror { radius: 0.5, min_neighbors: 2 }).unwrap();
        assert_eq!(text, r#"{"kind":"ror","radius":0.5,"min_neighbors":2}"#);
        assert!(serde_json::from_str::<FilterParams>(r#"{"kind": "sor", "k": 5}"#).is_err());
    }

    #[test]
    fn invalid_params() {
        let c = line(&[0.0, 1.0]);
        assert!(matches!(filter_mask(&c, &FilterParams::Ror { radius: 0.0, min_neighbors: 1 }), Err(FilterError::InvalidParams(_))));
        assert!(filter_mask(&c, &FilterParams::Sor { k: 0, s: 1.0 }).is_err());
        assert!(filter_mask(&c, &FilterParams::Dsor { k: 1, s: 1.0, r: 0.0 }).is_err());
        assert!(filter_mask(&c, &FilterParams::Dror { alpha: 0.0, beta: 1.0, k_min: 1, sr_min: 0.0 }).is_err());
    }

    #[test]
    fn prepared_cloud_reuses_knn() {
        let c = line(&[0.0, 1.0, 3.0, 7.0]);
        let p = PreparedCloud::new(&c);
        let a = p.knn_mean(2).unwrap();
        let b = p.knn_mean(2).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a[0], 2.0);
    }
}
