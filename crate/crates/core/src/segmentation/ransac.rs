//! Area-weighted RANSAC plane fitting over face samples.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Plane, RansacParams, SegmentationError};
use crate::geometry::{derive_seed, Vec3};
use crate::mesh::LabeledMesh;

/// Centroid, unit normal and area of one face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceSample {
    pub face: u32,
    pub centroid: Vec3,
    pub normal: Vec3,
    pub area: f64,
}

pub fn face_samples(mesh: &LabeledMesh, faces: &[usize]) -> Vec<FaceSample> {
    faces
        .iter()
        .map(|&f| FaceSample {
            face: f as u32,
            centroid: mesh.face_centroid(f),
            normal: mesh.face_normal(f),
            area: mesh.face_area(f),
        })
        .collect()
}

/// Probability of having drawn at least one all-inlier triple before stopping.
const CONFIDENCE: f64 = 0.9999;

/// Fits one plane; returns it (least-squares refit on its inliers) together
/// with the inlier faces in ascending order.
pub fn fit_plane_ransac(
    samples: &[FaceSample],
    params: &RansacParams,
    seed: u64,
) -> Result<(Plane, Vec<u32>), SegmentationError> {
    params.validate()?;
    if samples.len() < 3 || collinear(samples) {
        return Err(SegmentationError::TooFewSamples(samples.len()));
    }
    let cos_gate = params.normal_agreement.to_radians().cos();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = samples.iter().map(|s| s.area.max(0.0)).collect();
    let weighted = WeightedIndex::new(&weights).ok();
    let draw = |rng: &mut ChaCha8Rng| match &weighted {
        Some(w) => w.sample(rng),
        None => rng.random_range(0..samples.len()),
    };

    let scale = bbox_diagonal(samples);
    let mut best: Option<(Plane, usize)> = None;
    let mut budget = params.max_iterations;
    let mut iter = 0;
    while iter < budget {
        iter += 1;
        let i = draw(&mut rng);
        let j = draw(&mut rng);
        let k = draw(&mut rng);
        if i == j || j == k || i == k {
            continue;
        }
        let (a, b, c) = (
            samples[i].centroid,
            samples[j].centroid,
            samples[k].centroid,
        );
        let n = (b - a).cross(&(c - a));
        if n.norm() <= 1e-12 * scale * scale {
            continue;
        }
        let Some(plane) = Plane::through(&a, n) else {
            continue;
        };
        let count = samples
            .iter()
            .filter(|s| is_inlier(s, &plane, params.inlier_dist, cos_gate))
            .count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
            let w = count as f64 / samples.len() as f64;
            budget = budget.min(adaptive_budget(w).max(iter));
        }
    }

    let Some((hypothesis, count)) = best else {
        return Err(SegmentationError::NoPlane {
            min: params.min_inlier_faces,
            best: 0,
        });
    };
    if count < params.min_inlier_faces {
        return Err(SegmentationError::NoPlane {
            min: params.min_inlier_faces,
            best: count,
        });
    }

    // Two rounds of refit + reselect; keep the hypothesis if a refit loses support.
    let mut plane = hypothesis;
    let mut inliers = select(samples, &plane, params.inlier_dist, cos_gate);
    for _ in 0..2 {
        let pts: Vec<&FaceSample> = inliers.iter().map(|&i| &samples[i]).collect();
        let Some(refit) = refit_plane(&pts) else {
            break;
        };
        let next = select(samples, &refit, params.inlier_dist, cos_gate);
        if next.len() < params.min_inlier_faces {
            break;
        }
        plane = refit;
        inliers = next;
    }
    let mut faces: Vec<u32> = inliers.iter().map(|&i| samples[i].face).collect();
    faces.sort_unstable();
    Ok((plane, faces))
}

/// Repeated fit-and-remove until fewer than `min_inlier_faces` samples remain
/// or no further plane is supported. Returns the planes (in extraction order)
/// and the unclaimed samples.
pub fn extract_planes(
    samples: &[FaceSample],
    params: &RansacParams,
    seed: u64,
) -> (Vec<(Plane, Vec<u32>)>, Vec<FaceSample>) {
    let mut remaining: Vec<FaceSample> = samples.to_vec();
    let mut planes = Vec::new();
    let mut round = 0i64;
    while remaining.len() >= params.min_inlier_faces.max(3) {
        let Ok((plane, faces)) = fit_plane_ransac(&remaining, params, derive_seed(seed, &[round]))
        else {
            break;
        };
        round += 1;
        let claimed: std::collections::HashSet<u32> = faces.iter().copied().collect();
        remaining.retain(|s| !claimed.contains(&s.face));
        planes.push((plane, faces));
    }
    (planes, remaining)
}

/// Least-squares plane: area-weighted centroid and the eigenvector of the
/// smallest eigenvalue of the weighted scatter matrix.
pub fn refit_plane(points: &[&FaceSample]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let weight = |s: &FaceSample| if s.area > 0.0 { s.area } else { 1e-300 };
    let total: f64 = points.iter().map(|s| weight(s)).sum();
    let centroid = points
        .iter()
        .fold(Vec3::zeros(), |acc, s| acc + s.centroid * weight(s))
        / total;
    let mut scatter = Matrix3::zeros();
    for s in points {
        let d = s.centroid - centroid;
        scatter += d * d.transpose() * (weight(s) / total);
    }
    let eig = SymmetricEigen::new(scatter);
    let k = eig.eigenvalues.imin();
    let n: Vec3 = eig.eigenvectors.column(k).into_owned();
    Plane::through(&centroid, n)
}

#[inline]
fn is_inlier(s: &FaceSample, plane: &Plane, dist: f64, cos_gate: f64) -> bool {
    plane.signed_distance(&s.centroid).abs() <= dist
        && s.normal.dot(&plane.normal).abs() >= cos_gate
}

fn select(samples: &[FaceSample], plane: &Plane, dist: f64, cos_gate: f64) -> Vec<usize> {
    (0..samples.len())
        .filter(|&i| is_inlier(&samples[i], plane, dist, cos_gate))
        .collect()
}

fn adaptive_budget(inlier_ratio: f64) -> usize {
    let p3 = inlier_ratio.powi(3);
    if p3 >= 1.0 {
        return 1;
    }
    if p3 <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - CONFIDENCE).ln() / (1.0 - p3).ln();
    n.ceil().min(usize::MAX as f64 / 2.0) as usize
}

fn bbox_diagonal(samples: &[FaceSample]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for s in samples {
        lo = lo.inf(&s.centroid);
        hi = hi.sup(&s.centroid);
    }
    (hi - lo).norm()
}

/// True when every centroid lies on one line.
fn collinear(samples: &[FaceSample]) -> bool {
    let p0 = samples[0].centroid;
    let Some(p1) = samples
        .iter()
        .map(|s| s.centroid)
        .max_by(|a, b| (a - p0).norm_squared().total_cmp(&(b - p0).norm_squared()))
    else {
        return true;
    };
    let d = p1 - p0;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return true;
    }
    samples
        .iter()
        .all(|s| (s.centroid - p0).cross(&d).norm() <= 1e-12 * len2)
}
