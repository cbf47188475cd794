use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnnotateError;
use crate::geometry::{cross, dot, sub, Plane};
use crate::seed::{stage_seed, stream_rng};
use crate::types::PointCloud;

/// Fitted plane `{p : normal . p + offset = 0}` with `normal.z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub offset: f64,
    /// Inliers of the winning three-point hypothesis.
    pub inlier_count: usize,
}

impl PlaneModel {
    pub fn plane(&self) -> Plane {
        Plane { normal: self.normal, offset: self.offset }
    }

    pub fn signed_distance(&self, p: &[f64; 3]) -> f64 {
        dot(&self.normal, p) + self.offset
    }
}

fn canonical(normal: [f64; 3], offset: f64) -> ([f64; 3], f64) {
    let len = dot(&normal, &normal).sqrt();
    let (mut n, mut d) = ([normal[0] / len, normal[1] / len, normal[2] / len], offset / len);
    if n[2] < 0.0 {
        n = [-n[0], -n[1], -n[2]];
        d = -d;
    }
    (n, d)
}

/// Plane through three points, or `None` when they are (nearly) collinear.
fn hypothesis(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<([f64; 3], f64)> {
    let (u, v) = (sub(b, a), sub(c, a));
    let n = cross(&u, &v);
    let len = dot(&n, &n).sqrt();
    let scale = dot(&u, &u).sqrt() * dot(&v, &v).sqrt();
    if !(len > 1e-12 * scale) {
        return None;
    }
    Some(canonical(n, -dot(&n, a)))
}

/// Least-squares plane through `points`: centroid plus the eigenvector of the
/// smallest covariance eigenvalue.
fn refit(points: &[[f64; 3]]) -> ([f64; 3], f64) {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    let c = Vector3::new(c[0] / n, c[1] / n, c[2] / n);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::new(p[0], p[1], p[2]) - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (min_i, _) = eig.eigenvalues.argmin();
    let v = eig.eigenvectors.column(min_i);
    let normal = [v[0], v[1], v[2]];
    canonical(normal, -(normal[0] * c[0] + normal[1] * c[1] + normal[2] * c[2]))
}

/// Best-of-`iterations` three-point RANSAC followed by a least-squares refit
/// on the winning inliers.
///
/// Iteration `i` draws its sample from its own stream of `seed`, so the
/// result does not depend on thread scheduling, and adding iterations never
/// lowers the winning inlier count. Collinear samples use up their
/// iteration. Ties go to the earliest iteration.
pub fn ransac_plane(
    cloud: &PointCloud,
    iterations: usize,
    inlier_threshold: f64,
    seed: u64,
) -> Result<PlaneModel, AnnotateError> {
    let pts = &cloud.coords;
    if pts.len() < 3 {
        return Err(AnnotateError::TooFewPoints(pts.len()));
    }
    if iterations == 0 || !(inlier_threshold > 0.0) {
        return Err(AnnotateError::InvalidConfig(
            "ransac needs iterations >= 1 and threshold > 0".into(),
        ));
    }
    let stream_seed = stage_seed(seed, "ransac");
    let inliers = |normal: &[f64; 3], offset: f64| {
        pts.iter().filter(|p| (dot(normal, p) + offset).abs() <= inlier_threshold).count()
    };
    let best = (0..iterations)
        .into_par_iter()
        .filter_map(|it| {
            let mut rng = stream_rng(stream_seed, it as u64);
            let idx = sample(&mut rng, pts.len(), 3);
            let (n, d) = hypothesis(&pts[idx.index(0)], &pts[idx.index(1)], &pts[idx.index(2)])?;
            Some((inliers(&n, d), it, n, d))
        })
        .reduce_with(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        });
    let (count, _, n, d) = best.ok_or(AnnotateError::NoValidHypothesis)?;
    let support: Vec<[f64; 3]> =
        pts.iter().copied().filter(|p| (dot(&n, p) + d).abs() <= inlier_threshold).collect();
    let (normal, offset) = refit(&support);
    Ok(PlaneModel { normal, offset, inlier_count: count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_plane() {
        let mut rng = stream_rng(1, 0);
        let pts: Vec<[f64; 3]> = (0..100)
            .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0])
            .collect();
        let m = ransac_plane(&PointCloud::from_coords(pts, 0.3), 20, 0.01, 3).unwrap();
        assert!(m.normal[0].abs() < 1e-9 && m.normal[1].abs() < 1e-9);
        assert!((m.normal[2] - 1.0).abs() < 1e-9);
        assert!(m.offset.abs() < 1e-9);
        assert_eq!(m.inlier_count, 100);
    }

    #[test]
    fn tilted_plane_with_outliers() {
        // z = 0.1 x - 2
        let mut rng = stream_rng(2, 0);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut pts = Vec::new();
        for _ in 0..400 {
            let (x, y) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            pts.push([x, y, 0.1 * x - 2.0 + noise.sample(&mut rng)]);
        }
        for _ in 0..100 {
            pts.push([rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.0..5.0)]);
        }
        let m = ransac_plane(&PointCloud::from_coords(pts, 0.3), 100, 0.05, 9).unwrap();
        let expected = canonical([-0.1, 0.0, 1.0], 2.0);
        for k in 0..3 {
            assert!((m.normal[k] - expected.0[k]).abs() < 0.01);
        }
        assert!((m.offset - expected.1).abs() < 0.02);
    }

    #[test]
    fn errors() {
        let two = PointCloud::from_coords(vec![[0.0; 3], [1.0, 0.0, 0.0]], 0.1);
        assert_eq!(ransac_plane(&two, 10, 0.1, 0), Err(AnnotateError::TooFewPoints(2)));
        let line = PointCloud::from_coords((0..10).map(|i| [i as f64, 0.0, 0.0]).collect(), 0.1);
        assert_eq!(ransac_plane(&line, 10, 0.1, 0), Err(AnnotateError::NoValidHypothesis));
    }

    #[test]
    fn more_iterations_never_lose_inliers() {
        let mut rng = stream_rng(5, 0);
        let pts: Vec<[f64; 3]> = (0..300)
            .map(|i| {
                let (x, y) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                let z = if i % 3 == 0 { rng.random_range(0.0..3.0) } else { 0.02 * rng.random::<f64>() };
                [x, y, z]
            })
            .collect();
        let cloud = PointCloud::from_coords(pts, 0.1);
        let mut last = 0;
        for it in [1, 2, 5, 10, 40, 100] {
            let m = ransac_plane(&cloud, it, 0.05, 17).unwrap();
            assert!(m.inlier_count >= last);
            last = m.inlier_count;
        }
    }
}
