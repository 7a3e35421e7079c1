use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::CameraView;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViewKind {
    Nadir,
    Oblique,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewClass<T: Real> {
    pub kind: ViewKind,
    /// Angle between the optical axis and the world down direction.
    pub tilt_deg: T,
}

/// Nadir when the tilt is strictly below `tilt_threshold` degrees.
pub fn classify_view<T: Real>(
    view: &CameraView<T>,
    tilt_threshold: T,
    down: &Vector3<T>,
) -> ViewClass<T> {
    let axis = view.optical_axis();
    let tilt_deg = axis.cross(down).norm().atan2(axis.dot(down)).deg();
    let kind = if tilt_deg < tilt_threshold {
        ViewKind::Nadir
    } else {
        ViewKind::Oblique
    };
    ViewClass { kind, tilt_deg }
}

/// Composition of a stereo pair by the orientation of its two views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairComposition {
    NadirNadir,
    NadirOblique,
    ObliqueOblique,
}

impl PairComposition {
    pub const ALL: [PairComposition; 3] =
        [Self::NadirNadir, Self::NadirOblique, Self::ObliqueOblique];

    pub fn of(a: ViewKind, b: ViewKind) -> Self {
        match (a, b) {
            (ViewKind::Nadir, ViewKind::Nadir) => Self::NadirNadir,
            (ViewKind::Oblique, ViewKind::Oblique) => Self::ObliqueOblique,
            _ => Self::NadirOblique,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::NadirNadir => "NN",
            Self::NadirOblique => "NO",
            Self::ObliqueOblique => "OO",
        }
    }
}
