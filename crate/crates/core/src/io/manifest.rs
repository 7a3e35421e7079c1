use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{DynamicImage, GrayImage};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geom::CameraView;
use crate::raster::{luma, Raster};

/// One oriented image. `rotation` is row-major world-to-camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestView {
    pub image_id: u32,
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 9],
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_prior: Option<[f64; 2]>,
}

impl ManifestView {
    pub fn from_view(view: &CameraView<f64>, image_path: PathBuf) -> Self {
        let r = view.rotation;
        Self {
            image_id: view.image_id,
            image_path,
            width: view.width,
            height: view.height,
            fx: view.focal_x,
            fy: view.focal_y,
            cx: view.principal_x,
            cy: view.principal_y,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            center: view.center.into(),
            depth_prior: view.depth_prior,
        }
    }

    /// The camera without its image.
    pub fn to_view(&self) -> Result<CameraView<f64>, IoError> {
        let view = CameraView::new(
            self.image_id,
            self.width,
            self.height,
            [self.fx, self.fy],
            [self.cx, self.cy],
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from(self.center),
        )
        .map_err(|e| IoError::Camera(self.image_id, e))?;
        Ok(match self.depth_prior {
            Some([near, far]) => view.with_depth_prior(near, far),
            None => view,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: Vec<ManifestView>,
}

impl Manifest {
    /// Cameras without images, in manifest order.
    pub fn cameras(&self) -> Result<Vec<CameraView<f64>>, IoError> {
        self.views.iter().map(ManifestView::to_view).collect()
    }
}

/// 8-bit grayscale; colour images are converted with integer-rounded luma.
pub fn load_gray(path: &Path) -> Result<Raster, IoError> {
    let img = image::ImageReader::new(super::open(path)?)
        .with_guessed_format()?
        .decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(match img {
        DynamicImage::ImageLuma8(g) => Raster::new(w, h, g.into_raw()),
        other => {
            let rgb = other.to_rgb8();
            Raster::new(w, h, rgb.pixels().map(|p| luma(p[0], p[1], p[2])).collect())
        }
    })
}

pub fn save_png(path: &Path, raster: &Raster) -> Result<(), IoError> {
    let img = GrayImage::from_raw(
        raster.width() as u32,
        raster.height() as u32,
        raster.data().to_vec(),
    )
    .ok_or_else(|| IoError::format("image", "buffer size mismatch"))?;
    let mut w = super::create(path)?;
    img.write_to(&mut w, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a manifest and its images; relative image paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<(Manifest, Vec<CameraView<f64>>), IoError> {
    let manifest: Manifest = super::read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut seen = std::collections::HashSet::new();
    for v in &manifest.views {
        if !seen.insert(v.image_id) {
            return Err(IoError::format(
                "manifest",
                format!("duplicate image_id {}", v.image_id),
            ));
        }
    }
    let views = manifest
        .views
        .par_iter()
        .map(|mv| {
            let view = mv.to_view()?;
            let raster = load_gray(&dir.join(&mv.image_path))?;
            if raster.width() != mv.width as usize || raster.height() != mv.height as usize {
                return Err(IoError::format(
                    "manifest",
                    format!(
                        "image {} is {}x{}, manifest says {}x{}",
                        mv.image_id,
                        raster.width(),
                        raster.height(),
                        mv.width,
                        mv.height
                    ),
                ));
            }
            Ok(view.with_raster(Arc::new(raster)))
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok((manifest, views))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), IoError> {
    super::write_json(path, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn view() -> CameraView<f64> {
        let r = *nalgebra::Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix();
        CameraView::new(
            4,
            3,
            2,
            [10.0, 11.0],
            [1.0, 0.5],
            r,
            Vector3::new(1.0, 2.0, 3.0),
        )
        .unwrap()
        .with_depth_prior(5.0, 9.0)
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raster = Raster::from_fn(3, 2, |x, y| (x * 40 + y * 7) as u8);
        save_png(&dir.path().join("img/a.png"), &raster).unwrap();
        let m = Manifest {
            views: vec![ManifestView::from_view(&view(), "img/a.png".into())],
        };
        let path = dir.path().join("m.json");
        write_manifest(&path, &m).unwrap();
        let (back, views) = load_manifest(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(views[0].rotation, view().rotation);
        assert_eq!(views[0].depth_prior, Some([5.0, 9.0]));
        assert_eq!(views[0].raster.as_ref().unwrap().data(), raster.data());
    }

    #[test]
    fn rgb_is_luma_converted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        RgbImage::from_fn(2, 1, |x, _| {
            if x == 0 {
                image::Rgb([255, 0, 0])
            } else {
                image::Rgb([10, 200, 30])
            }
        })
        .save(&path)
        .unwrap();
        let r = load_gray(&path).unwrap();
        assert_eq!(r.data(), &[76, 124]);
        let pgm = dir.path().join("g.pgm");
        std::fs::write(&pgm, b"P5\n2 1\n255\n\x05\xfa").unwrap();
        assert_eq!(load_gray(&pgm).unwrap().data(), &[5, 250]);
    }

    #[test]
    fn size_mismatch_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        save_png(&dir.path().join("a.png"), &Raster::filled(4, 2, 0)).unwrap();
        let mut m = Manifest {
            views: vec![ManifestView::from_view(&view(), "a.png".into())],
        };
        let path = dir.path().join("m.json");
        write_manifest(&path, &m).unwrap();
        assert!(load_manifest(&path).is_err());
        m.views[0].width = 4;
        m.views.push(m.views[0].clone());
        write_manifest(&path, &m).unwrap();
        assert!(load_manifest(&path)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }
}
