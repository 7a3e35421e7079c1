use std::sync::Arc;

use mvsuq_core::fusion::{
    fuse_image, merge_clouds, pair_depth_maps, select_neighbors, FusionParams, PointCloud,
};
use mvsuq_core::geom::CameraView;
use mvsuq_core::stereo::SgmParams;
use mvsuq_core::synth::{generate_scene, render_view, SceneSpec, SyntheticScene};
use nalgebra::Vector2;

fn rendered(scene: &SyntheticScene) -> Vec<CameraView<f64>> {
    scene
        .views
        .iter()
        .map(|v| {
            let (raster, _) = render_view(scene, v).unwrap();
            v.clone().with_raster(Arc::new(raster))
        })
        .collect()
}

#[test]
fn plane_pair_depths_match_ground_truth() {
    // 20 m spacing keeps disparities above 40 px, where 1% of depth is 0.4 px
    let mut spec = SceneSpec::plane(5, 0);
    spec.cameras.nadir_spacing = 20.0;
    let scene = generate_scene(3, &spec).unwrap();
    let views = rendered(&scene);
    let base = &views[2];
    let (_, gt) = render_view(&scene, &scene.views[2]).unwrap();
    let others: Vec<&CameraView<f64>> = views.iter().filter(|v| v.image_id != 2).collect();
    let (maps, rejected) = pair_depth_maps(base, &others, &SgmParams::default(), 2);
    assert!(rejected.is_empty());
    assert_eq!(maps.len(), 4);
    for (_, m) in &maps {
        let nb = &views[m.neighbor_id as usize];
        let (mut ok, mut n) = (0, 0);
        for (i, (d, t)) in m.depth.iter().zip(&gt.depth).enumerate() {
            // only pixels whose true match lies well inside the neighbour: without a
            // left-right check, matches near the overlap border are unreliable
            let px = Vector2::new((i % 160) as f64, (i / 160) as f64);
            let q = nb.project(&base.backproject(&px, *t as f64)).unwrap();
            let inside = q.x >= 16.0 && q.y >= 16.0 && q.x <= 143.0 && q.y <= 103.0;
            if !d.is_nan() && inside {
                n += 1;
                ok += ((d - t).abs() <= 0.01 * t) as usize;
            }
        }
        assert!(n > 3000, "pair {} has {n} valid pixels", m.neighbor_id);
        assert!(
            ok as f64 >= 0.95 * n as f64,
            "pair {}: {ok}/{n}",
            m.neighbor_id
        );
    }
}

fn fuse_all(views: &[CameraView<f64>], params: &FusionParams) -> PointCloud {
    let mut clouds = Vec::new();
    for base in views {
        let set = select_neighbors(
            views,
            base.image_id,
            params.n_neighbors,
            params.k_consistency,
        )
        .unwrap();
        let nbs: Vec<&CameraView<f64>> = set
            .neighbor_ids
            .iter()
            .map(|id| views.iter().find(|v| v.image_id == *id).unwrap())
            .collect();
        let (maps, _) = pair_depth_maps(base, &nbs, &SgmParams::default(), params.d_range_margin);
        let maps: Vec<_> = maps.into_iter().map(|(_, m)| m).collect();
        let (_, pts) = fuse_image(base, &maps, params).unwrap();
        clouds.push(PointCloud::new(pts));
    }
    merge_clouds(clouds).unwrap()
}

#[test]
fn fused_points_lie_on_the_surface() {
    let scene = generate_scene(5, &SceneSpec::hills(3, 2)).unwrap();
    let views = rendered(&scene);
    let params = FusionParams::default();
    let cloud = fuse_all(&views, &params);
    assert!(cloud.len() > 10_000, "{}", cloud.len());
    let gsd = 0.5;
    let mut close = 0;
    for p in &cloud.points {
        assert!((3..=params.n_neighbors as u8 + 1).contains(&p.num_rays));
        assert_eq!(p.contributing_pair_ids.len() + 1, p.num_rays as usize);
        assert!(p.median_angle > 0.0 && p.median_angle < 180.0);
        let dz = (p.position.z - scene.height(p.position.x, p.position.y)).abs();
        close += (dz <= 3.0 * gsd) as usize;
    }
    assert!(
        close as f64 >= 0.9 * cloud.len() as f64,
        "{close}/{}",
        cloud.len()
    );
}
