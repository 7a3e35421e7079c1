use nalgebra::Vector3;

use crate::scalar::Real;

const LEAF: usize = 8;

/// Static 3-D kd-tree for nearest-neighbour queries. Equidistant candidates
/// resolve to the lowest input index, so results do not depend on traversal
/// order.
#[derive(Clone, Debug)]
pub struct KdTree<T: Real> {
    points: Vec<Vector3<T>>,
    /// Input indices arranged as an implicit balanced tree.
    order: Vec<usize>,
    /// Split axis of the node whose pivot sits at each position of `order`.
    axes: Vec<u8>,
    /// Bounding box of the node whose pivot sits at each position.
    bounds: Vec<[Vector3<T>; 2]>,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: Vec<Vector3<T>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        let mut bounds = vec![[Vector3::zeros(); 2]; points.len()];
        build(&points, &mut order, &mut axes, &mut bounds);
        Self {
            points,
            order,
            axes,
            bounds,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    /// Index of and squared distance to the nearest point.
    pub fn nearest(&self, query: &Vector3<T>) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, T::max_value().expect("bounded scalar"));
        self.search(query, 0, self.order.len(), &mut best);
        Some(best)
    }

    fn search(&self, q: &Vector3<T>, lo: usize, hi: usize, best: &mut (usize, T)) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                let d = (self.points[i] - q).norm_squared();
                if d < best.1 || (d == best.1 && i < best.0) {
                    *best = (i, d);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.axes[mid] as usize;
        let pivot = self.order[mid];
        let diff = q[axis] - self.points[pivot][axis];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        let d = (self.points[pivot] - q).norm_squared();
        if d < best.1 || (d == best.1 && pivot < best.0) {
            *best = (pivot, d);
        }
        if diff * diff <= best.1 && self.box_distance2(q, far.0, far.1) <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }

    /// Squared distance from `q` to the bounding box of a node; zero for leaves.
    fn box_distance2(&self, q: &Vector3<T>, lo: usize, hi: usize) -> T {
        if hi - lo <= LEAF {
            return T::zero();
        }
        let [min, max] = &self.bounds[(lo + hi) / 2];
        let mut d = T::zero();
        for k in 0..3 {
            let e = if q[k] < min[k] {
                min[k] - q[k]
            } else if q[k] > max[k] {
                q[k] - max[k]
            } else {
                T::zero()
            };
            d += e * e;
        }
        d
    }
}

/// Splits each node at the median of its widest axis.
fn build<T: Real>(
    points: &[Vector3<T>],
    order: &mut [usize],
    axes: &mut [u8],
    bounds: &mut [[Vector3<T>; 2]],
) {
    if order.len() <= LEAF {
        return;
    }
    let first = points[order[0]];
    let (lo, hi) = order.iter().fold((first, first), |(lo, hi), &i| {
        (lo.inf(&points[i]), hi.sup(&points[i]))
    });
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    axes[mid] = axis as u8;
    bounds[mid] = [lo, hi];
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .expect("finite coordinates")
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    let (axes_left, axes_right) = axes.split_at_mut(mid);
    let (bounds_left, bounds_right) = bounds.split_at_mut(mid);
    build(points, left, axes_left, bounds_left);
    build(
        points,
        &mut right[1..],
        &mut axes_right[1..],
        &mut bounds_right[1..],
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vector3<f64>], q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::<f64>::new(vec![])
            .nearest(&Vector3::zeros())
            .is_none());
    }

    #[test]
    fn equidistant_resolves_to_lowest_index() {
        let pts = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let t = KdTree::new(pts);
        assert_eq!(t.nearest(&Vector3::zeros()), Some((0, 1.0)));
        // duplicates in a larger tree
        let mut many: Vec<_> = (0..100).map(|i| Vector3::new(i as f64, 5.0, 0.0)).collect();
        many.push(Vector3::new(3.0, 5.0, 0.0));
        let t = KdTree::new(many);
        assert_eq!(t.nearest(&Vector3::new(3.0, 5.0, 1.0)).unwrap().0, 3);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..300),
            q in (-12.0f64..12.0, -12.0f64..12.0, -12.0f64..12.0),
        ) {
            let pts: Vec<_> = pts.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            let q = Vector3::new(q.0, q.1, q.2);
            let t = KdTree::new(pts.clone());
            prop_assert_eq!(t.nearest(&q).unwrap(), brute(&pts, &q));
        }

        #[test]
        fn f32_agrees_with_brute_force(pts in prop::collection::vec((-5.0f32..5.0, -5.0f32..5.0, -5.0f32..5.0), 1..100)) {
            let pts: Vec<_> = pts.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            let t = KdTree::new(pts.clone());
            let q = Vector3::new(0.1f32, -0.2, 0.3);
            let (i, d) = t.nearest(&q).unwrap();
            let best = pts.iter().map(|p| (p - q).norm_squared()).fold(f32::INFINITY, f32::min);
            prop_assert_eq!(d, best);
            prop_assert_eq!((pts[i] - q).norm_squared(), best);
        }
    }
}
