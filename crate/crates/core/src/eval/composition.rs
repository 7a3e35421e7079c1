use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::stats::{
    error_stats, intersection_angle_histogram, per_point_error, ErrorStats, Histogram,
};
use super::{EvalError, KdTree, RigidTransform};
use crate::fusion::PairDepthMap;
use crate::geom::{intersection_angle, CameraView, PairComposition};

/// Points triangulated by a single stereo pair.
#[derive(Clone, Debug, PartialEq)]
pub struct StereoCloud {
    pub base_id: u32,
    pub neighbor_id: u32,
    pub composition: PairComposition,
    pub points: Vec<Vector3<f64>>,
    /// Intersection angle at each point, degrees.
    pub angles_deg: Vec<f64>,
}

impl StereoCloud {
    /// Back-projects every valid pixel of a pair depth map.
    pub fn from_depth_map(
        base: &CameraView<f64>,
        map: &PairDepthMap,
        composition: PairComposition,
    ) -> Self {
        let mut points = Vec::new();
        let mut angles_deg = Vec::new();
        for y in 0..map.height {
            for x in 0..map.width {
                let d = map.depth[y * map.width + x];
                if d.is_nan() {
                    continue;
                }
                let p = base.backproject(&Vector2::new(x as f64, y as f64), d as f64);
                if let Ok(a) = intersection_angle(&p, &base.center, &map.neighbor_center) {
                    points.push(p);
                    angles_deg.push(a);
                }
            }
        }
        Self {
            base_id: map.base_id,
            neighbor_id: map.neighbor_id,
            composition,
            points,
            angles_deg,
        }
    }

    /// Intersection angle at the centroid of the pair's points, or `None`
    /// when the pair produced no points.
    pub fn pair_angle(
        &self,
        base_center: &Vector3<f64>,
        neighbor_center: &Vector3<f64>,
    ) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let c = self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64;
        intersection_angle(&c, base_center, neighbor_center).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionRow {
    pub composition: PairComposition,
    pub pairs: usize,
    pub points: usize,
    /// `None` when the class has no points.
    pub vs_mvs: Option<ErrorStats>,
    pub vs_reference: Option<ErrorStats>,
}

/// Distances of stereo-pair points to the MVS and reference clouds, one row
/// per composition class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCompositionStats {
    pub rows: Vec<CompositionRow>,
}

impl PairCompositionStats {
    pub fn row(&self, c: PairComposition) -> &CompositionRow {
        self.rows
            .iter()
            .find(|r| r.composition == c)
            .expect("all classes present")
    }
}

/// `transform` is the registration already applied to the MVS cloud; it is
/// applied to the stereo points as well.
pub fn pair_composition_stats(
    clouds: &[StereoCloud],
    mvs: &KdTree<f64>,
    reference: &KdTree<f64>,
    transform: &RigidTransform<f64>,
) -> Result<PairCompositionStats, EvalError> {
    if mvs.is_empty() {
        return Err(EvalError::EmptyCloud);
    }
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let mut rows = Vec::new();
    for c in PairComposition::ALL {
        let members: Vec<&StereoCloud> = clouds.iter().filter(|s| s.composition == c).collect();
        let pts: Vec<Vector3<f64>> = members
            .iter()
            .flat_map(|s| s.points.iter().map(|p| transform.apply(p)))
            .collect();
        rows.push(CompositionRow {
            composition: c,
            pairs: members.len(),
            points: pts.len(),
            vs_mvs: error_stats(&per_point_error(&pts, mvs)?),
            vs_reference: error_stats(&per_point_error(&pts, reference)?),
        });
    }
    Ok(PairCompositionStats { rows })
}

/// Per-point intersection-angle histogram of every pair in `filter`'s class
/// (all pairs for `None`).
pub fn composition_angle_histogram(
    clouds: &[StereoCloud],
    filter: Option<PairComposition>,
) -> Histogram {
    intersection_angle_histogram(
        clouds
            .iter()
            .filter(|s| filter.is_none_or(|c| s.composition == c))
            .flat_map(|s| s.angles_deg.iter().copied()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{classify_view, ViewKind};
    use crate::synth::{generate_scene, render_view, SceneSpec};

    fn cloud(c: PairComposition, pts: Vec<Vector3<f64>>) -> StereoCloud {
        let n = pts.len();
        StereoCloud {
            base_id: 0,
            neighbor_id: 1,
            composition: c,
            points: pts,
            angles_deg: vec![10.0; n],
        }
    }

    #[test]
    fn identical_to_mvs_gives_zero() {
        let pts: Vec<_> = (0..20).map(|i| Vector3::new(i as f64, 0.0, 1.0)).collect();
        let refs: Vec<_> = pts
            .iter()
            .map(|p| p + Vector3::new(0.0, 0.0, 0.5))
            .collect();
        let stats = pair_composition_stats(
            &[cloud(PairComposition::NadirOblique, pts.clone())],
            &KdTree::new(pts),
            &KdTree::new(refs),
            &RigidTransform::identity(),
        )
        .unwrap();
        let row = stats.row(PairComposition::NadirOblique);
        assert_eq!(row.vs_mvs.unwrap().mean, 0.0);
        assert_eq!(row.vs_mvs.unwrap().std, 0.0);
        assert!((row.vs_reference.unwrap().mean - 0.5).abs() < 1e-12);
        assert_eq!(stats.row(PairComposition::NadirNadir).vs_mvs, None);
        assert_eq!(stats.rows.len(), 3);
    }

    #[test]
    fn spike_and_overflow() {
        let h = composition_angle_histogram(
            &[cloud(
                PairComposition::NadirNadir,
                vec![Vector3::zeros(); 5],
            )],
            None,
        );
        assert_eq!(h.counts[2], 5);
        let c = CameraView::new(
            0,
            10,
            10,
            [10.0, 10.0],
            [5.0, 5.0],
            nalgebra::Matrix3::identity(),
            Vector3::new(0.0, 0.0, -10.0),
        )
        .unwrap();
        let map = PairDepthMap {
            base_id: 0,
            neighbor_id: 1,
            neighbor_center: Vector3::new(5.0, 5.0, 10.0),
            width: 1,
            height: 1,
            depth: vec![10.0],
            energy: vec![0.0],
            corr_x: vec![0.0],
            corr_y: vec![0.0],
        };
        // pixel (0,0) at depth 10 lands on (-5,-5,0); both centers then subtend 90 degrees
        let s = StereoCloud::from_depth_map(&c, &map, PairComposition::NadirNadir);
        let h = composition_angle_histogram(&[s], Some(PairComposition::NadirNadir));
        assert_eq!(h.overflow, 1);
    }

    #[test]
    fn synthetic_classes_match_hand_labels() {
        let mut spec = SceneSpec::plane(2, 1);
        spec.cameras.width = 64;
        spec.cameras.height = 48;
        spec.cameras.focal = 80.0;
        let scene = generate_scene(1, &spec).unwrap();
        let down = Vector3::new(0.0, 0.0, -1.0);
        let kinds: Vec<ViewKind> = scene
            .views
            .iter()
            .map(|v| classify_view(v, 20.0, &down).kind)
            .collect();
        assert_eq!(
            kinds,
            vec![ViewKind::Nadir, ViewKind::Nadir, ViewKind::Oblique]
        );
        assert_eq!(
            PairComposition::of(kinds[0], kinds[1]),
            PairComposition::NadirNadir
        );
        assert_eq!(
            PairComposition::of(kinds[0], kinds[2]),
            PairComposition::NadirOblique
        );
        // ground-truth pair map: per-point angles agree with direct recomputation
        let (_, truth) = render_view(&scene, &scene.views[0]).unwrap();
        let map = PairDepthMap {
            base_id: 0,
            neighbor_id: 2,
            neighbor_center: scene.views[2].center,
            width: truth.width,
            height: truth.height,
            depth: truth.depth.clone(),
            energy: vec![0.0; truth.depth.len()],
            corr_x: vec![0.0; truth.depth.len()],
            corr_y: vec![0.0; truth.depth.len()],
        };
        let s = StereoCloud::from_depth_map(&scene.views[0], &map, PairComposition::NadirOblique);
        assert!(!s.points.is_empty());
        for (p, a) in s.points.iter().zip(&s.angles_deg) {
            let va = scene.views[0].center - p;
            let vb = scene.views[2].center - p;
            let brute = (va.dot(&vb) / (va.norm() * vb.norm()))
                .clamp(-1.0, 1.0)
                .acos()
                .to_degrees();
            assert!((a - brute).abs() < 1e-6);
            assert!(p.z.abs() < 1e-3);
        }
        let pa = s
            .pair_angle(&scene.views[0].center, &scene.views[2].center)
            .unwrap();
        assert!(pa > 30.0 && pa < 60.0, "{pa}");
    }
}
