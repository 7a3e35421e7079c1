use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{SynthError, SyntheticScene};
use crate::fusion::{DepthMap, PointCloud};
use crate::geom::CameraView;
use crate::raster::Raster;

const SUBSAMPLES: [f64; 2] = [-0.25, 0.25];

/// Ray-casts `view`: each pixel averages 2x2 sub-pixel samples of the
/// surface texture and adds Gaussian sensor noise (seeded by scene seed, image
/// id and row). The ground-truth depth comes from the pixel-center ray.
/// Pixels whose rays miss the surface are masked and have NaN depth.
pub fn render_view(
    scene: &SyntheticScene,
    view: &CameraView<f64>,
) -> Result<(Raster, DepthMap), SynthError> {
    let (w, h) = (view.width as usize, view.height as usize);
    let sigma = scene.spec.noise_sigma;
    let rows: Vec<(Vec<u8>, Vec<bool>, Vec<f32>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                scene.seed ^ ((view.image_id as u64) << 32) ^ (y as u64).wrapping_mul(0x9E37_79B9),
            );
            let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
            let mut data = vec![0u8; w];
            let mut valid = vec![false; w];
            let mut depth = vec![f32::NAN; w];
            for x in 0..w {
                let (mut acc, mut n) = (0.0, 0);
                for dy in SUBSAMPLES {
                    for dx in SUBSAMPLES {
                        let ray = view.pixel_ray(&Vector2::new(x as f64 + dx, y as f64 + dy));
                        if let Some(t) = scene.intersect(&view.center, &ray) {
                            let p = view.center + ray * t;
                            acc += scene.intensity(p.x, p.y);
                            n += 1;
                        }
                    }
                }
                let n_draw: f64 = noise.sample(&mut rng);
                if n == 0 {
                    continue;
                }
                let v = acc / n as f64 + if sigma > 0.0 { n_draw } else { 0.0 };
                data[x] = v.round().clamp(0.0, 255.0) as u8;
                valid[x] = true;
                if let Some(t) = scene.depth_at(view, &Vector2::new(x as f64, y as f64)) {
                    depth[x] = t as f32;
                }
            }
            (data, valid, depth)
        })
        .collect();
    let mut data = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    let mut gt = DepthMap::invalid(view.image_id, w, h);
    for (y, (d, m, z)) in rows.into_iter().enumerate() {
        data.extend(d);
        mask.extend(m);
        gt.depth[y * w..(y + 1) * w].copy_from_slice(&z);
    }
    if gt.valid_count() == 0 {
        return Err(SynthError::NoIntersection(view.image_id));
    }
    Ok((Raster::new(w, h, data).with_mask(mask), gt))
}

/// Surface samples on a square grid of `pitch` metres covering
/// `[x_min, x_max] x [y_min, y_max]`.
pub fn reference_cloud(scene: &SyntheticScene, bounds: [f64; 4], pitch: f64) -> PointCloud {
    let [x0, x1, y0, y1] = bounds;
    let nx = ((x1 - x0) / pitch).floor() as usize + 1;
    let ny = ((y1 - y0) / pitch).floor() as usize + 1;
    PointCloud::from_positions((0..ny).flat_map(|j| {
        (0..nx).map(move |i| {
            let (x, y) = (x0 + i as f64 * pitch, y0 + j as f64 * pitch);
            Vector3::new(x, y, scene.height(x, y))
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn plane_depth_is_constant() {
        let mut spec = SceneSpec::plane(1, 0);
        spec.cameras.altitude = 50.0;
        let scene = generate_scene(2, &spec).unwrap();
        let (raster, gt) = render_view(&scene, &scene.views[0]).unwrap();
        assert_eq!(raster.width(), 160);
        assert!(gt.depth.iter().all(|&d| (d - 50.0).abs() < 1e-5));
    }

    #[test]
    fn textureless_region_is_flat() {
        let mut spec = SceneSpec::plane(1, 0);
        spec.textureless_fraction = 0.5;
        spec.noise_sigma = 0.0;
        let scene = generate_scene(4, &spec).unwrap();
        let view = &scene.views[0];
        let (raster, _) = render_view(&scene, view).unwrap();
        let mut flat = 0;
        for y in 1..119 {
            for x in 1..159 {
                let p = view.backproject(&Vector2::new(x as f64, y as f64), 100.0);
                // all four sub-samples and neighbours inside the zero-contrast area
                let zero = [-1.0, 0.0, 1.0].iter().all(|&o| {
                    scene.contrast(p.x + o * 0.5, p.y + o * 0.5) == 0.0
                        && scene.contrast(p.x + o * 0.5, p.y - o * 0.5) == 0.0
                });
                if zero {
                    flat += 1;
                    assert_eq!(raster.get(x, y), 128);
                }
            }
        }
        assert!(flat > 100);
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = generate_scene(8, &SceneSpec::hills(2, 2)).unwrap();
        for v in &scene.views {
            let (ra, da) = render_view(&scene, v).unwrap();
            let (rb, db) = render_view(&scene, v).unwrap();
            assert_eq!(ra, rb);
            let bits = |d: &DepthMap| d.depth.iter().map(|z| z.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&da), bits(&db));
        }
    }

    #[test]
    fn reference_grid_on_surface() {
        let scene = generate_scene(8, &SceneSpec::hills(1, 0)).unwrap();
        let c = reference_cloud(&scene, [-1.0, 1.0, 0.0, 0.5], 0.1);
        assert_eq!(c.len(), 21 * 6);
        for p in &c.points {
            assert_eq!(p.position.z, scene.height(p.position.x, p.position.y));
        }
    }
}
