//! Exhaustive O(n^2) reference for the filters. It shares nothing with the
//! fast path except [`dist2`], so agreement between the two checks the
//! spatial index and the per-filter bookkeeping together.

use super::{dist2, FilterError, FilterParams};
use crate::types::PointCloud;

pub const ORACLE_MAX_POINTS: usize = 2000;

fn sorted_neighbour_dist2(points: &[[f64; 3]], i: usize) -> Vec<f64> {
    let mut d: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| dist2(&points[i], p))
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

fn knn_means(points: &[[f64; 3]], k: usize) -> Result<Vec<f64>, FilterError> {
    if points.len() < k + 1 {
        return Err(FilterError::TooFewPoints { points: points.len(), needed: k + 1 });
    }
    Ok((0..points.len())
        .map(|i| {
            let d = sorted_neighbour_dist2(points, i);
            let mut sum = 0.0;
            for &v in &d[..k] {
                sum += v.sqrt();
            }
            sum / k as f64
        })
        .collect())
}

fn threshold(values: &[f64], s: f64) -> f64 {
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
    mean + s * (sq / n).sqrt()
}

/// Same contract as [`super::apply`], by exhaustive pairwise distances.
pub fn brute_force_mask(cloud: &PointCloud, params: &FilterParams) -> Result<Vec<bool>, FilterError> {
    params.validate()?;
    let pts = &cloud.coords;
    let n = pts.len();
    if n > ORACLE_MAX_POINTS {
        return Err(FilterError::TooLarge(n));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let count_within = |i: usize, radius: f64| {
        let r2 = radius * radius;
        (0..n).filter(|&j| j != i && dist2(&pts[i], &pts[j]) <= r2).count()
    };
    let range = |i: usize| {
        let p = pts[i];
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    };
    Ok(match *params {
        FilterParams::Ror { radius, min_neighbors } => {
            (0..n).map(|i| count_within(i, radius) >= min_neighbors).collect()
        }
        FilterParams::Dror { alpha, beta, k_min, sr_min } => (0..n)
            .map(|i| count_within(i, sr_min.max(beta * alpha * range(i))) >= k_min)
            .collect(),
        FilterParams::Sor { k, s } => {
            let d = knn_means(pts, k)?;
            let t = threshold(&d, s);
            d.iter().map(|&v| v <= t).collect()
        }
        FilterParams::Dsor { k, s, r } => {
            let d = knn_means(pts, k)?;
            let t = threshold(&d, s);
            (0..n).map(|i| d[i] <= t * r * range(i)).collect()
        }
    })
}
