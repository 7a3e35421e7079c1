use serde::{Deserialize, Serialize};

use super::StereoError;
use crate::raster::Raster;

/// Odd-sized census window. At most 64 comparison bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusWindow {
    pub width: usize,
    pub height: usize,
}

impl Default for CensusWindow {
    fn default() -> Self {
        Self {
            width: 9,
            height: 7,
        }
    }
}

impl CensusWindow {
    pub fn bit_count(&self) -> usize {
        self.width * self.height - 1
    }

    fn half(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }
}

/// Per-pixel census bitstrings. Bit `k` is set iff the `k`-th neighbour (row
/// major, centre skipped) is strictly darker than the centre.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CensusMap {
    width: usize,
    height: usize,
    window: CensusWindow,
    bits: Vec<u64>,
    valid: Vec<bool>,
}

impl CensusMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> CensusWindow {
        self.window
    }

    #[inline]
    pub fn bits(&self, x: usize, y: usize) -> u64 {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub(crate) fn raw(&self) -> (&[u64], &[bool]) {
        (&self.bits, &self.valid)
    }
}

pub fn census_transform(raster: &Raster, window: CensusWindow) -> Result<CensusMap, StereoError> {
    let (w, h) = (raster.width(), raster.height());
    let too_large = || StereoError::WindowTooLarge {
        width: window.width,
        height: window.height,
        raster_w: w,
        raster_h: h,
    };
    if window.width.is_multiple_of(2)
        || window.height.is_multiple_of(2)
        || window.bit_count() > 64
        || window.bit_count() == 0
        || window.width >= w
        || window.height >= h
    {
        return Err(too_large());
    }
    let (hw, hh) = window.half();
    let data = raster.data();
    let mask = raster.mask();
    let mut bits = vec![0u64; w * h];
    let mut valid = vec![false; w * h];
    for y in hh..h - hh {
        for x in hw..w - hw {
            let ok = match mask {
                None => true,
                Some(m) => (y - hh..=y + hh)
                    .all(|yy| m[yy * w + x - hw..=yy * w + x + hw].iter().all(|&v| v)),
            };
            if !ok {
                continue;
            }
            let center = data[y * w + x];
            let mut code = 0u64;
            let mut k = 0;
            for yy in y - hh..=y + hh {
                let row = &data[yy * w..(yy + 1) * w];
                for (xx, &v) in row.iter().enumerate().take(x + hw + 1).skip(x - hw) {
                    if yy == y && xx == x {
                        continue;
                    }
                    if v < center {
                        code |= 1 << k;
                    }
                    k += 1;
                }
            }
            bits[y * w + x] = code;
            valid[y * w + x] = true;
        }
    }
    Ok(CensusMap {
        width: w,
        height: h,
        window,
        bits,
        valid,
    })
}
