use std::collections::VecDeque;

use nalgebra::{Quaternion, Rotation3, SVector, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_rigid, EvalError, KdTree, RigidTransform};
use crate::scalar::Real;

/// Starting estimate for ICP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcpInit {
    /// Clouds already share a frame.
    #[default]
    Identity,
    /// Translate the source centroid onto the target centroid first.
    Centroid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop when the trimmed RMS changes by less than this (metres).
    pub conv_tol: f64,
    /// Share of the worst correspondences dropped each iteration.
    pub trim_fraction: f64,
    pub init: IcpInit,
    /// Extrapolate along the registration trajectory when consecutive updates
    /// point the same way.
    pub accelerate: bool,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iters: 50,
            conv_tol: 1e-6,
            trim_fraction: 0.1,
            init: IcpInit::Identity,
            accelerate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult<T: Real> {
    /// Maps source coordinates into the target frame.
    pub transform: RigidTransform<T>,
    /// RMS of the retained correspondences under `transform`.
    pub rms: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Trimmed point-to-point ICP of `source` onto `target`.
pub fn icp_register<T: Real>(
    source: &[Vector3<T>],
    target: &KdTree<T>,
    params: &IcpParams,
) -> Result<IcpResult<T>, EvalError> {
    if source.is_empty() || target.is_empty() {
        return Err(EvalError::EmptyCloud);
    }
    let mut transform = match params.init {
        IcpInit::Identity => RigidTransform::identity(),
        IcpInit::Centroid => {
            let mean = |pts: &[Vector3<T>]| {
                pts.iter().fold(Vector3::zeros(), |a, p| a + p) / T::lit(pts.len() as f64)
            };
            RigidTransform {
                translation: mean(target.points()) - mean(source),
                ..RigidTransform::identity()
            }
        }
    };
    let keep = ((source.len() as f64 * (1.0 - params.trim_fraction)).ceil() as usize)
        .clamp(1, source.len());
    let tol = T::lit(params.conv_tol);
    let mut prev_rms: Option<T> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut rms = T::zero();
    let mut history: VecDeque<(State<T>, T)> = VecDeque::with_capacity(3);
    while iterations < params.max_iters {
        iterations += 1;
        let (pairs, r) = correspondences(source, target, &transform, keep);
        rms = r;
        if prev_rms.is_some_and(|p| (p - rms).abs() < tol) {
            converged = true;
            break;
        }
        prev_rms = Some(rms);
        let mut pairs = pairs;
        if params.accelerate {
            if history.len() == 3 {
                history.pop_front();
            }
            history.push_back((state(&transform), rms));
            if let Some(jump) = extrapolate(&history) {
                transform = from_state(&jump);
                let (p, r) = correspondences(source, target, &transform, keep);
                pairs = p;
                history.clear();
                history.push_back((jump, r));
            }
        }
        let (src, dst): (Vec<_>, Vec<_>) = pairs
            .into_iter()
            .map(|(i, j)| (source[i], target.points()[j]))
            .unzip();
        transform = estimate_rigid(&src, &dst)?;
    }
    if !converged {
        rms = correspondences(source, target, &transform, keep).1;
    }
    Ok(IcpResult {
        transform,
        rms,
        iterations,
        converged,
    })
}

/// Unit quaternion (w >= 0) followed by the translation.
type State<T> = SVector<T, 7>;

fn state<T: Real>(t: &RigidTransform<T>) -> State<T> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(t.rotation));
    let q = if q.w < T::zero() {
        -q.into_inner()
    } else {
        q.into_inner()
    };
    let v = &t.translation;
    State::from_column_slice(&[q.w, q.i, q.j, q.k, v.x, v.y, v.z])
}

fn from_state<T: Real>(s: &State<T>) -> RigidTransform<T> {
    let q = UnitQuaternion::from_quaternion(Quaternion::new(s[0], s[1], s[2], s[3]));
    RigidTransform {
        rotation: *q.to_rotation_matrix().matrix(),
        translation: Vector3::new(s[4], s[5], s[6]),
    }
}

/// Accelerated step along the last three registration states and their RMS
/// values: when the two latest updates are nearly parallel, move along the
/// latest one to the zero of the fitted line or the vertex of the fitted
/// parabola of RMS against arc length, at most 25 update lengths.
fn extrapolate<T: Real>(history: &VecDeque<(State<T>, T)>) -> Option<State<T>> {
    let [(s0, d0), (s1, d1), (s2, d2)] = [history.front()?, history.get(1)?, history.get(2)?];
    let (a, b) = (s2 - s1, s1 - s0);
    let (la, lb) = (a.norm(), b.norm());
    let eps = T::lit(1e-12);
    if la < eps || lb < eps {
        return None;
    }
    let cos = a.dot(&b) / (la * lb);
    if cos < T::lit(10f64.to_radians().cos()) {
        return None;
    }
    // arc-length abscissae with the latest state at 0
    let v = [-(la + lb), -la, T::zero()];
    let d = [*d0, *d1, *d2];
    let vmax = T::lit(25.0) * la;

    let n = T::lit(3.0);
    let mv = (v[0] + v[1] + v[2]) / n;
    let md = (d[0] + d[1] + d[2]) / n;
    let sxy = (0..3).fold(T::zero(), |acc, i| acc + (v[i] - mv) * (d[i] - md));
    let sxx = (0..3).fold(T::zero(), |acc, i| acc + (v[i] - mv) * (v[i] - mv));
    let slope = sxy / sxx;
    let v1 = if slope < T::zero() {
        mv - md / slope
    } else {
        -T::one()
    };

    // parabola through the three points, divided differences
    let f01 = (d[1] - d[0]) / (v[1] - v[0]);
    let f12 = (d[2] - d[1]) / (v[2] - v[1]);
    let curv = (f12 - f01) / (v[2] - v[0]);
    let v2 = if curv > T::zero() {
        // d(v) = d[2] + f12 v + curv v (v - v[1]), vertex at -lin / (2 curv)
        let lin = f12 - curv * v[1];
        -lin / (T::lit(2.0) * curv)
    } else {
        -T::one()
    };

    let pos = |x: T| x > T::zero();
    let step = if pos(v2) && v2 < v1 && v1 < vmax {
        v2
    } else if pos(v1) && v1 < vmax {
        v1
    } else if pos(v2) && v2 < vmax {
        v2
    } else {
        vmax
    };
    Some(s2 + a * (step / la))
}

/// Nearest-neighbour pairs under `transform`, trimmed to the `keep` closest
/// (ties by source index), with their RMS distance.
fn correspondences<T: Real>(
    source: &[Vector3<T>],
    target: &KdTree<T>,
    transform: &RigidTransform<T>,
    keep: usize,
) -> (Vec<(usize, usize)>, T) {
    let mut matches: Vec<(T, usize, usize)> = source
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (j, d2) = target
                .nearest(&transform.apply(p))
                .expect("non-empty target");
            (d2, i, j)
        })
        .collect();
    matches.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
    });
    matches.truncate(keep);
    let sum = matches.iter().fold(T::zero(), |acc, m| acc + m.0);
    let rms = (sum / T::lit(keep as f64)).sqrt();
    (matches.into_iter().map(|(_, i, j)| (i, j)).collect(), rms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::rigid::tests::random_motion;
    use rand::{Rng, SeedableRng};

    fn terrain(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (x, y) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
                let z = 2.0 * (-(x * x + y * y) / 20.0f64).exp() + 0.1 * x + (0.3 * y).sin();
                Vector3::new(x, y, z)
            })
            .collect()
    }

    #[test]
    fn identical_clouds() {
        let p = terrain(2000, 1);
        let r = icp_register(&p, &KdTree::new(p.clone()), &IcpParams::default()).unwrap();
        assert!(r.rms < 1e-9);
        assert!(
            (r.transform.rotation - nalgebra::Matrix3::identity())
                .abs()
                .max()
                < 1e-9
        );
        assert!(r.converged);
    }

    #[test]
    fn small_motion_recovered() {
        let p = terrain(3000, 2);
        let m = random_motion(5, 3.0, 0.3);
        let moved: Vec<_> = p.iter().map(|x| m.apply(x)).collect();
        // register the moved cloud back onto the original
        let r = icp_register(&moved, &KdTree::new(p), &IcpParams::default()).unwrap();
        let err = r.transform.compose(&m);
        assert!(err.angle_deg() < 0.01, "{}", err.angle_deg());
        assert!(err.translation.norm() < 1e-3);
    }

    #[test]
    fn acceleration_shortens_sliding_registrations() {
        // a yaw over gentle terrain slides slowly under plain point-to-point steps
        let p = terrain(3000, 6);
        let m = RigidTransform {
            rotation: *nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 6f64.to_radians())
                .matrix(),
            translation: Vector3::new(0.5, -0.3, 0.1),
        };
        let moved: Vec<_> = p.iter().map(|x| m.apply(x)).collect();
        let tree = KdTree::new(p);
        let run = |accelerate| {
            let params = IcpParams {
                max_iters: 500,
                accelerate,
                ..IcpParams::default()
            };
            icp_register(&moved, &tree, &params).unwrap()
        };
        let (plain, fast) = (run(false), run(true));
        for r in [&plain, &fast] {
            let err = r.transform.compose(&m);
            assert!(r.converged);
            assert!(err.angle_deg() < 1e-6 && err.translation.norm() < 1e-6);
        }
        assert!(
            fast.iterations < plain.iterations,
            "{} vs {}",
            fast.iterations,
            plain.iterations
        );
    }

    #[test]
    fn colinear_source_is_degenerate() {
        let target = KdTree::new(terrain(100, 3));
        let line = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        assert!(matches!(
            icp_register(&line, &target, &IcpParams::default()),
            Err(EvalError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn empty_clouds() {
        let target = KdTree::new(terrain(10, 4));
        assert_eq!(
            icp_register(&[], &target, &IcpParams::default()),
            Err(EvalError::EmptyCloud)
        );
        assert_eq!(
            icp_register(
                &terrain(10, 4),
                &KdTree::<f64>::new(vec![]),
                &IcpParams::default()
            ),
            Err(EvalError::EmptyCloud)
        );
    }
}
