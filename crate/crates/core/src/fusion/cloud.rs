use nalgebra::Vector3;

use super::FusionError;

/// Frame tag of clouds expressed in the manifest's world coordinates.
pub const WORLD_FRAME: &str = "world";

/// A reconstructed point and its reliability metrics. Reference clouds reuse
/// the type with the metric fields left at their defaults.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FusedPoint {
    pub position: Vector3<f64>,
    pub source_image: u32,
    /// `(col, row)` of the base pixel.
    pub source_pixel: [u32; 2],
    /// Base view plus agreeing neighbours.
    pub num_rays: u8,
    pub median_angle: f32,
    /// Median DIM energy over the contributing pairs.
    pub energy: f32,
    pub contributing_pair_ids: Vec<u32>,
    /// DIM energy of each contributing pair, aligned with `contributing_pair_ids`.
    pub pair_energies: Vec<f32>,
    pub error_m: Option<f32>,
    pub predicted_error_mean_px: Option<f32>,
    pub predicted_error_std_px: Option<f32>,
}

impl FusedPoint {
    pub fn bare(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl BoundingBox {
    pub fn extent(&self) -> f64 {
        (self.max - self.min).norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub frame: String,
    pub points: Vec<FusedPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<FusedPoint>) -> Self {
        Self {
            frame: WORLD_FRAME.to_string(),
            points,
        }
    }

    pub fn from_positions(positions: impl IntoIterator<Item = Vector3<f64>>) -> Self {
        Self::new(positions.into_iter().map(FusedPoint::bare).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let first = self.points.first()?.position;
        let mut b = BoundingBox {
            min: first,
            max: first,
        };
        for p in &self.points[1..] {
            b.min = b.min.inf(&p.position);
            b.max = b.max.sup(&p.position);
        }
        Some(b)
    }

    pub fn is_finite(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.position.iter().all(|c| c.is_finite()))
    }
}

/// Concatenates per-image clouds, ordered by `(source_image, row, col)`.
pub fn merge_clouds(clouds: Vec<PointCloud>) -> Result<PointCloud, FusionError> {
    let mut iter = clouds.into_iter();
    let Some(mut merged) = iter.next() else {
        return Ok(PointCloud::new(Vec::new()));
    };
    for c in iter {
        if c.frame != merged.frame {
            return Err(FusionError::FrameMismatch(format!(
                "'{}' vs '{}'",
                merged.frame, c.frame
            )));
        }
        merged.points.extend(c.points);
    }
    merged
        .points
        .sort_by_key(|p| (p.source_image, p.source_pixel[1], p.source_pixel[0]));
    Ok(merged)
}
