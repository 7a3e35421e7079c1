use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SynthError, ValueNoise};
use crate::geom::CameraView;

/// Surface shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceSpec {
    /// Horizontal plane at height `z`.
    Plane { z: f64 },
    /// Base plane at `z` with `count` random Gaussian hills up to `amplitude`
    /// metres high and `sigma_range` metres wide.
    Hills {
        z: f64,
        count: usize,
        amplitude: f64,
        sigma_range: [f64; 2],
    },
}

/// Camera block: a grid of nadir views plus a ring of oblique views aimed at
/// the footprint center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRigSpec {
    pub nadir: usize,
    pub oblique: usize,
    /// Flying height above the base plane, metres.
    pub altitude: f64,
    pub nadir_spacing: f64,
    pub oblique_tilt_deg: f64,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub surface: SurfaceSpec,
    /// Half side of the square footprint every camera must mostly see.
    pub footprint_half: f64,
    /// Lattice spacing of the finest texture octave, metres.
    pub texture_cell: f64,
    /// Approximate share of the surface rendered without texture.
    pub textureless_fraction: f64,
    /// Lattice spacing of the texture-contrast field, metres.
    pub contrast_cell: f64,
    /// Standard deviation of additive sensor noise, grey levels.
    pub noise_sigma: f64,
    pub cameras: CameraRigSpec,
}

impl SceneSpec {
    /// Flat textured ground seen from 100 m, 160x120 images at 0.5 m GSD.
    pub fn plane(nadir: usize, oblique: usize) -> Self {
        Self {
            surface: SurfaceSpec::Plane { z: 0.0 },
            footprint_half: 20.0,
            texture_cell: 1.2,
            textureless_fraction: 0.0,
            contrast_cell: 12.0,
            noise_sigma: 1.0,
            cameras: CameraRigSpec {
                nadir,
                oblique,
                altitude: 100.0,
                nadir_spacing: 10.0,
                oblique_tilt_deg: 45.0,
                width: 160,
                height: 120,
                focal: 200.0,
            },
        }
    }

    /// Rolling terrain with partly textureless ground.
    pub fn hills(nadir: usize, oblique: usize) -> Self {
        Self {
            surface: SurfaceSpec::Hills {
                z: 0.0,
                count: 8,
                amplitude: 8.0,
                sigma_range: [4.0, 10.0],
            },
            textureless_fraction: 0.3,
            noise_sigma: 2.0,
            ..Self::plane(nadir, oblique)
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        let c = &self.cameras;
        if c.nadir + c.oblique == 0 {
            return bad("no cameras");
        }
        if !(c.altitude > 0.0 && c.focal > 0.0 && c.width > 1 && c.height > 1) {
            return bad("camera geometry must be positive");
        }
        if !(0.0..90.0).contains(&c.oblique_tilt_deg) || c.nadir_spacing < 0.0 {
            return bad("oblique tilt must lie in [0, 90) degrees");
        }
        if !(self.footprint_half > 0.0 && self.texture_cell > 0.0 && self.contrast_cell > 0.0) {
            return bad("footprint and texture scales must be positive");
        }
        if !(0.0..1.0).contains(&self.textureless_fraction) || self.noise_sigma < 0.0 {
            return bad("textureless fraction must lie in [0, 1) and noise must be non-negative");
        }
        if let SurfaceSpec::Hills {
            amplitude,
            sigma_range,
            ..
        } = self.surface
        {
            if amplitude < 0.0 || !(sigma_range[0] > 0.0 && sigma_range[0] <= sigma_range[1]) {
                return bad("hill amplitude must be non-negative and sigma range positive");
            }
            if amplitude >= c.altitude {
                return bad("hills reach the cameras");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hill {
    pub center: [f64; 2],
    pub height: f64,
    pub sigma: f64,
}

/// A generated scene: surface, texture fields and oriented cameras (without
/// rasters; see [`super::render_view`]).
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub seed: u64,
    pub spec: SceneSpec,
    pub base_z: f64,
    pub hills: Vec<Hill>,
    pub views: Vec<CameraView<f64>>,
    fine: ValueNoise,
    coarse: ValueNoise,
    contrast: ValueNoise,
}

impl SyntheticScene {
    /// Surface height at `(x, y)`.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let mut z = self.base_z;
        for h in &self.hills {
            let (dx, dy) = (x - h.center[0], y - h.center[1]);
            z += h.height * (-(dx * dx + dy * dy) / (2.0 * h.sigma * h.sigma)).exp();
        }
        z
    }

    fn max_height(&self) -> f64 {
        self.base_z + self.hills.iter().map(|h| h.height).sum::<f64>()
    }

    /// Texture contrast in `[0, 1]`; 0 marks textureless ground.
    pub fn contrast(&self, x: f64, y: f64) -> f64 {
        let t = self.spec.textureless_fraction;
        ((self.contrast.sample(x, y) - t) / (1.0 - t) * 2.0).clamp(0.0, 1.0)
    }

    /// Noise-free surface intensity in grey levels.
    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        let tex = 0.65 * self.fine.sample(x, y) + 0.35 * self.coarse.sample(x, y);
        128.0 + self.contrast(x, y) * (tex - 0.5) * 400.0
    }

    /// First intersection parameter `t` of the ray `origin + t * dir`
    /// (`t > 0`) with the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        if dir.z >= 0.0 {
            return None;
        }
        let t_base = (self.base_z - origin.z) / dir.z;
        if self.hills.is_empty() {
            return (t_base > 0.0).then_some(t_base);
        }
        let t_top = ((self.max_height() - origin.z) / dir.z).max(0.0);
        if t_base <= 0.0 {
            return None;
        }
        let above = |t: f64| {
            let p = origin + dir * t;
            p.z - self.height(p.x, p.y)
        };
        // Safe jumps while far above the surface: height changes no faster
        // than the summed peak slopes of the bumps.
        let slope: f64 =
            self.hills.iter().map(|h| h.height / h.sigma).sum::<f64>() * (-0.5f64).exp();
        let rate = -dir.z + slope * dir.xy().norm();
        let mut t0 = t_top;
        loop {
            let a = above(t0);
            if a <= 0.05 || t0 >= t_base {
                break;
            }
            t0 = (t0 + a / rate).min(t_base);
        }
        // march in steps of ~0.25 m along the ray, then bisect the bracket
        let step = 0.25 / dir.norm();
        let (mut lo, mut hi) = (t0, t0);
        loop {
            let next = (hi + step).min(t_base);
            if above(next) <= 0.0 {
                hi = next;
                break;
            }
            lo = next;
            hi = next;
            if next >= t_base {
                return Some(t_base);
            }
        }
        if above(lo) <= 0.0 {
            return Some(lo);
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if above(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Camera-frame depth of the surface along the ray through `pixel`.
    pub fn depth_at(&self, view: &CameraView<f64>, pixel: &Vector2<f64>) -> Option<f64> {
        self.intersect(&view.center, &view.pixel_ray(pixel))
    }

    pub fn view(&self, image_id: u32) -> Option<&CameraView<f64>> {
        self.views.iter().find(|v| v.image_id == image_id)
    }
}

/// Rotation whose third row is `axis` and whose first row is `hint` made
/// orthogonal to it.
fn camera_rotation(axis: Vector3<f64>, hint: Vector3<f64>) -> Matrix3<f64> {
    let z = axis.normalize();
    let x = (hint - z * hint.dot(&z)).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

fn camera_poses(spec: &SceneSpec, base_z: f64) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
    let c = &spec.cameras;
    let z = base_z + c.altitude;
    let mut poses = Vec::new();
    let cols = (c.nadir as f64).sqrt().ceil().max(1.0) as usize;
    let rows = c.nadir.div_ceil(cols);
    for i in 0..c.nadir {
        let (r, k) = (i / cols, i % cols);
        let in_row = if r + 1 == rows {
            c.nadir - r * cols
        } else {
            cols
        };
        let x = (k as f64 - (in_row as f64 - 1.0) / 2.0) * c.nadir_spacing;
        let y = (r as f64 - (rows as f64 - 1.0) / 2.0) * c.nadir_spacing;
        poses.push((
            camera_rotation(-Vector3::z(), Vector3::x()),
            Vector3::new(x, y, z),
        ));
    }
    let tilt = c.oblique_tilt_deg.to_radians();
    let radius = c.altitude * tilt.tan();
    for i in 0..c.oblique {
        let phi = std::f64::consts::TAU * i as f64 / c.oblique as f64;
        let center = Vector3::new(radius * phi.cos(), radius * phi.sin(), z);
        let axis = Vector3::new(0.0, 0.0, base_z) - center;
        let hint = Vector3::new(-phi.sin(), phi.cos(), 0.0);
        poses.push((camera_rotation(axis, hint), center));
    }
    poses
}

const PRIOR_GRID: usize = 9;

/// Builds the surface, texture fields and cameras for `seed`. Every camera
/// gets a depth prior from ray casts and must see at least half of the
/// footprint.
pub fn generate_scene(seed: u64, spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (base_z, hills) = match spec.surface {
        SurfaceSpec::Plane { z } => (z, Vec::new()),
        SurfaceSpec::Hills {
            z,
            count,
            amplitude,
            sigma_range,
        } => {
            let f = spec.footprint_half;
            let hills = (0..count)
                .map(|_| Hill {
                    center: [rng.random_range(-f..=f), rng.random_range(-f..=f)],
                    height: amplitude * rng.random_range(0.4..=1.0) / (count as f64).sqrt(),
                    sigma: rng.random_range(sigma_range[0]..=sigma_range[1]),
                })
                .collect();
            (z, hills)
        }
    };
    let mut scene = SyntheticScene {
        seed,
        spec: spec.clone(),
        base_z,
        hills,
        views: Vec::new(),
        fine: ValueNoise::new(rng.random(), spec.texture_cell),
        coarse: ValueNoise::new(rng.random(), spec.texture_cell * 2.7),
        contrast: ValueNoise::new(rng.random(), spec.contrast_cell),
    };
    let c = &spec.cameras;
    for (id, (rotation, center)) in camera_poses(spec, base_z).into_iter().enumerate() {
        let principal = [(c.width as f64 - 1.0) / 2.0, (c.height as f64 - 1.0) / 2.0];
        let view = CameraView::new(
            id as u32,
            c.width,
            c.height,
            [c.focal, c.focal],
            principal,
            rotation,
            center,
        )
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        let (mut near, mut far) = (f64::INFINITY, 0.0f64);
        for gy in 0..PRIOR_GRID {
            for gx in 0..PRIOR_GRID {
                let px = Vector2::new(
                    (c.width - 1) as f64 * gx as f64 / (PRIOR_GRID - 1) as f64,
                    (c.height - 1) as f64 * gy as f64 / (PRIOR_GRID - 1) as f64,
                );
                if let Some(d) = scene.depth_at(&view, &px) {
                    near = near.min(d);
                    far = far.max(d);
                }
            }
        }
        if !near.is_finite() {
            return Err(SynthError::NoIntersection(id as u32));
        }
        let view = view.with_depth_prior(0.9 * near, 1.1 * far);
        let seen = footprint_coverage(&scene, &view);
        if seen < 0.5 {
            return Err(SynthError::InvalidSpec(format!(
                "camera {id} sees only {:.0}% of the footprint",
                seen * 100.0
            )));
        }
        scene.views.push(view);
    }
    Ok(scene)
}

/// Fraction of a 21x21 grid of footprint surface points projecting into the view.
fn footprint_coverage(scene: &SyntheticScene, view: &CameraView<f64>) -> f64 {
    let f = scene.spec.footprint_half;
    let n = 21;
    let mut hits = 0;
    for j in 0..n {
        for i in 0..n {
            let x = -f + 2.0 * f * i as f64 / (n - 1) as f64;
            let y = -f + 2.0 * f * j as f64 / (n - 1) as f64;
            let p = Vector3::new(x, y, scene.height(x, y));
            if view.project(&p).is_ok_and(|q| view.in_bounds(&q)) {
                hits += 1;
            }
        }
    }
    hits as f64 / (n * n) as f64
}
