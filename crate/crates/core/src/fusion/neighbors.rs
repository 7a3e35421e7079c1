use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::geom::{intersection_angle, CameraView, GeomError};

/// Side of the stratified pixel grid used to estimate view overlap.
pub const OVERLAP_GRID: usize = 16;

/// Selected neighbours of one base image, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub base_id: u32,
    pub neighbor_ids: Vec<u32>,
    pub scores: Vec<f64>,
}

/// Weight of a pair's intersection angle: 1 on `[5, 45]` degrees, falling
/// linearly to 0 at 0 and 60 degrees.
pub fn angle_weight(theta_deg: f64) -> f64 {
    if theta_deg <= 0.0 || theta_deg >= 60.0 {
        0.0
    } else if theta_deg < 5.0 {
        theta_deg / 5.0
    } else if theta_deg <= 45.0 {
        1.0
    } else {
        (60.0 - theta_deg) / 15.0
    }
}

fn mid_depth(base: &CameraView<f64>) -> Result<f64, GeomError> {
    let [near, far] = base.depth_prior.ok_or_else(|| {
        GeomError::InvalidCamera(format!("view {} has no depth prior", base.image_id))
    })?;
    Ok(0.5 * (near + far))
}

/// Intersection angle, in degrees, at the point on the base optical axis at
/// the middle of the base depth prior.
pub fn view_pair_angle(base: &CameraView<f64>, other: &CameraView<f64>) -> Result<f64, GeomError> {
    let point = base.center + base.optical_axis() * mid_depth(base)?;
    intersection_angle(&point, &base.center, &other.center)
}

/// Fraction of a stratified grid of base pixels, lifted to the middle of the
/// depth prior, that lands inside `other`.
fn overlap(base: &CameraView<f64>, other: &CameraView<f64>) -> Result<f64, GeomError> {
    let z = mid_depth(base)?;
    let mut hits = 0;
    for gy in 0..OVERLAP_GRID {
        for gx in 0..OVERLAP_GRID {
            let px = Vector2::new(
                (gx as f64 + 0.5) * base.width as f64 / OVERLAP_GRID as f64 - 0.5,
                (gy as f64 + 0.5) * base.height as f64 / OVERLAP_GRID as f64 - 0.5,
            );
            let point = base.backproject(&px, z);
            if other.project(&point).is_ok_and(|q| other.in_bounds(&q)) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (OVERLAP_GRID * OVERLAP_GRID) as f64)
}

/// Ranks all other views by overlap times angle weight and keeps the best
/// `n` with positive score (ties go to the lower image id).
pub fn select_neighbors(
    views: &[CameraView<f64>],
    base_id: u32,
    n: usize,
    k: usize,
) -> Result<NeighborSet, FusionError> {
    let base = views
        .iter()
        .find(|v| v.image_id == base_id)
        .ok_or(FusionError::UnknownImage(base_id))?;
    let mut scored = Vec::new();
    for v in views.iter().filter(|v| v.image_id != base_id) {
        if (v.center - base.center).norm() < 1e-6 {
            continue;
        }
        let score = overlap(base, v)? * angle_weight(view_pair_angle(base, v)?);
        if score > 0.0 {
            scored.push((score, v.image_id));
        }
    }
    if scored.len() < k {
        return Err(FusionError::InsufficientViews {
            base_id,
            found: scored.len(),
            required: k,
        });
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(n);
    Ok(NeighborSet {
        base_id,
        neighbor_ids: scored.iter().map(|s| s.1).collect(),
        scores: scored.iter().map(|s| s.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Rotation3, Vector3};

    /// Camera at `center` looking at `target`, image x roughly along world x.
    pub(crate) fn look_at(id: u32, center: Vector3<f64>, target: Vector3<f64>) -> CameraView<f64> {
        let z = (target - center).normalize();
        let up = if z.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let y = z.cross(&up).normalize();
        let x = y.cross(&z);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let d = (target - center).norm();
        CameraView::new(id, 64, 48, [60.0, 60.0], [32.0, 24.0], r, center)
            .unwrap()
            .with_depth_prior(0.5 * d, 1.5 * d)
    }

    #[test]
    fn weight_profile() {
        assert_eq!(angle_weight(0.0), 0.0);
        assert_eq!(angle_weight(2.5), 0.5);
        assert_eq!(angle_weight(5.0), 1.0);
        assert_eq!(angle_weight(45.0), 1.0);
        assert_eq!(angle_weight(52.5), 0.5);
        assert_eq!(angle_weight(60.0), 0.0);
        assert_eq!(angle_weight(90.0), 0.0);
    }

    #[test]
    fn all_overlapping_views_selected() {
        let target = Vector3::new(0.0, 0.0, 0.0);
        let views: Vec<_> = (0..11)
            .map(|i| {
                let a = i as f64 * 0.3;
                look_at(
                    i,
                    Vector3::new(20.0 * a.cos(), 20.0 * a.sin(), 100.0),
                    target,
                )
            })
            .collect();
        let set = select_neighbors(&views, 0, 10, 2).unwrap();
        assert_eq!(set.neighbor_ids.len(), 10);
        assert!(!set.neighbor_ids.contains(&0));
        assert!(set.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn disjoint_views_excluded() {
        let a = look_at(0, Vector3::zeros(), Vector3::new(0.0, 0.0, 10.0));
        let b = look_at(
            1,
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, -10.0),
        );
        assert!(matches!(
            select_neighbors(&[a, b], 0, 10, 1),
            Err(FusionError::InsufficientViews { found: 0, .. })
        ));
    }

    #[test]
    fn single_view_is_insufficient() {
        let a = look_at(0, Vector3::zeros(), Vector3::new(0.0, 0.0, 10.0));
        assert!(matches!(
            select_neighbors(&[a], 0, 10, 2),
            Err(FusionError::InsufficientViews { .. })
        ));
    }

    #[test]
    fn ring_order_matches_exhaustive_scoring() {
        let target = Vector3::new(0.0, 0.0, 0.0);
        let views: Vec<_> = (0..5)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 5.0;
                let c = Vector3::new(30.0 * a.cos(), 30.0 * a.sin(), 60.0 + 5.0 * i as f64);
                let mut v = look_at(i, c, target);
                v.rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.05 * i as f64)
                    .matrix()
                    * v.rotation;
                v
            })
            .collect();
        for base in &views {
            // score every candidate directly by projecting the full pixel grid
            let z = 0.5 * (base.depth_prior.unwrap()[0] + base.depth_prior.unwrap()[1]);
            let mut expected: Vec<(f64, u32)> = Vec::new();
            for other in views.iter().filter(|v| v.image_id != base.image_id) {
                let mut hits = 0.0;
                for gy in 0..16 {
                    for gx in 0..16 {
                        let px = Vector2::new(
                            (gx as f64 + 0.5) * 4.0 - 0.5,
                            (gy as f64 + 0.5) * 3.0 - 0.5,
                        );
                        let cam =
                            Vector3::new((px.x - 32.0) / 60.0 * z, (px.y - 24.0) / 60.0 * z, z);
                        let world = base.rotation.transpose() * cam + base.center;
                        let q = other.rotation * (world - other.center);
                        let (u, v) = (60.0 * q.x / q.z + 32.0, 60.0 * q.y / q.z + 24.0);
                        if q.z > 0.0 && (0.0..=63.0).contains(&u) && (0.0..=47.0).contains(&v) {
                            hits += 1.0;
                        }
                    }
                }
                let p = base.center + base.rotation.row(2).transpose() * z;
                let (a, b) = (base.center - p, other.center - p);
                let theta = (a.dot(&b) / (a.norm() * b.norm())).acos().to_degrees();
                let s = hits / 256.0 * angle_weight(theta);
                if s > 0.0 {
                    expected.push((s, other.image_id));
                }
            }
            expected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let got = select_neighbors(&views, base.image_id, 10, 1).unwrap();
            assert_eq!(
                got.neighbor_ids,
                expected.iter().map(|e| e.1).collect::<Vec<_>>()
            );
        }
    }
}
