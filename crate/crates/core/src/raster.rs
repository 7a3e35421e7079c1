//! 8-bit grayscale rasters with an optional validity mask.

/// Row-major 8-bit grayscale image. Pixels outside the optional mask carry no
/// information (e.g. areas of a rectified image not covered by the source).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
    valid: Option<Vec<bool>>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "raster buffer does not match dimensions"
        );
        Self {
            width,
            height,
            data,
            valid: None,
        }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn with_mask(mut self, valid: Vec<bool>) -> Self {
        assert_eq!(
            valid.len(),
            self.width * self.height,
            "mask does not match dimensions"
        );
        self.valid = if valid.iter().all(|&v| v) {
            None
        } else {
            Some(valid)
        };
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[y * self.width + x])
    }

    /// Bilinear lookup at a continuous pixel position (pixel centers at
    /// integer coordinates). Returns `None` outside the raster or when any of
    /// the four taps is masked out.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0) || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        for (xx, yy) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
            if !self.is_valid(xx, yy) {
                return None;
            }
        }
        let v00 = self.get(x0, y0) as f64;
        let v10 = self.get(x1, y0) as f64;
        let v01 = self.get(x0, y1) as f64;
        let v11 = self.get(x1, y1) as f64;
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        Some(top + (bottom - top) * fy)
    }

    /// Applies `f` to every intensity, keeping the mask.
    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
            valid: self.valid.clone(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let flip = |buf: &[u8]| -> Vec<u8> {
            buf.chunks(self.width)
                .flat_map(|row| row.iter().rev().copied())
                .collect()
        };
        Self {
            width: self.width,
            height: self.height,
            data: flip(&self.data),
            valid: self.valid.as_ref().map(|m| {
                m.chunks(self.width)
                    .flat_map(|row| row.iter().rev().copied())
                    .collect()
            }),
        }
    }
}

/// ITU-R BT.601 luma, rounded to the nearest integer.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}
