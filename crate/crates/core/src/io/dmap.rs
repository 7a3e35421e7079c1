use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::IoError;
use crate::fusion::DepthMap;
use crate::stereo::DisparityMap;

const MAGIC: &[u8; 5] = b"DMAP1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DmapKind {
    /// Pixels.
    Disparity = 0,
    /// Metres.
    Depth = 1,
}

/// A raster of disparities or depths with DIM energies; NaN marks invalid
/// pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dmap {
    pub width: u32,
    pub height: u32,
    pub kind: DmapKind,
    pub d_min: f32,
    pub d_max: f32,
    pub values: Vec<f32>,
    pub energy: Vec<f32>,
}

impl Dmap {
    pub fn from_disparity(map: &DisparityMap) -> Self {
        Self {
            width: map.width as u32,
            height: map.height as u32,
            kind: DmapKind::Disparity,
            d_min: map.d_min as f32,
            d_max: map.d_max as f32,
            values: map.disparity.clone(),
            energy: map.energy.clone(),
        }
    }

    pub fn to_disparity(&self) -> Result<DisparityMap, IoError> {
        if self.kind != DmapKind::Disparity {
            return Err(IoError::format("DMAP", "expected a disparity map"));
        }
        Ok(DisparityMap {
            width: self.width as usize,
            height: self.height as usize,
            d_min: self.d_min as i32,
            d_max: self.d_max as i32,
            disparity: self.values.clone(),
            energy: self.energy.clone(),
        })
    }

    /// `d_min`/`d_max` hold the valid depth range (NaN when nothing is valid).
    pub fn from_depth(map: &DepthMap) -> Self {
        let valid = map.depth.iter().copied().filter(|d| !d.is_nan());
        let (lo, hi) = valid.fold((f32::NAN, f32::NAN), |(lo, hi), d| (d.min(lo), d.max(hi)));
        Self {
            width: map.width as u32,
            height: map.height as u32,
            kind: DmapKind::Depth,
            d_min: lo,
            d_max: hi,
            values: map.depth.clone(),
            energy: map.energy.clone(),
        }
    }

    pub fn to_depth(&self, image_id: u32) -> Result<DepthMap, IoError> {
        if self.kind != DmapKind::Depth {
            return Err(IoError::format("DMAP", "expected a depth map"));
        }
        Ok(DepthMap {
            image_id,
            width: self.width as usize,
            height: self.height as usize,
            depth: self.values.clone(),
            energy: self.energy.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let mut w = super::create(path)?;
        write_dmap(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        read_dmap(&mut super::open(path)?)
    }
}

pub fn write_dmap<W: Write>(w: &mut W, map: &Dmap) -> Result<(), IoError> {
    let n = map.width as usize * map.height as usize;
    if map.values.len() != n || map.energy.len() != n {
        return Err(IoError::format(
            "DMAP",
            "buffer length does not match dimensions",
        ));
    }
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(map.width)?;
    w.write_u32::<LittleEndian>(map.height)?;
    w.write_u8(map.kind as u8)?;
    w.write_f32::<LittleEndian>(map.d_min)?;
    w.write_f32::<LittleEndian>(map.d_max)?;
    for &v in map.values.iter().chain(&map.energy) {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_dmap<R: Read>(r: &mut R) -> Result<Dmap, IoError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(IoError::format("DMAP", "bad magic"));
    }
    let width = r.read_u32::<LittleEndian>()?;
    let height = r.read_u32::<LittleEndian>()?;
    let kind = match r.read_u8()? {
        0 => DmapKind::Disparity,
        1 => DmapKind::Depth,
        k => return Err(IoError::format("DMAP", format!("unknown kind {k}"))),
    };
    let d_min = r.read_f32::<LittleEndian>()?;
    let d_max = r.read_f32::<LittleEndian>()?;
    let n = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| IoError::format("DMAP", "dimensions overflow"))?;
    let mut read = |n: usize| -> Result<Vec<f32>, IoError> {
        let mut v = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut v)?;
        Ok(v)
    };
    let values = read(n)?;
    let energy = read(n)?;
    Ok(Dmap {
        width,
        height,
        kind,
        d_min,
        d_max,
        values,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(v: &[f32]) -> Vec<u32> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            w in 1u32..8,
            h in 1u32..8,
            raw in prop::collection::vec(any::<u32>(), 128),
            depth in any::<bool>(),
        ) {
            let n = (w * h) as usize;
            let map = Dmap {
                width: w,
                height: h,
                kind: if depth { DmapKind::Depth } else { DmapKind::Disparity },
                d_min: f32::from_bits(raw[0]),
                d_max: 3.5,
                values: raw[..n].iter().map(|&b| f32::from_bits(b)).collect(),
                energy: raw[64..64 + n].iter().map(|&b| f32::from_bits(b)).collect(),
            };
            let mut buf = Vec::new();
            write_dmap(&mut buf, &map).unwrap();
            prop_assert_eq!(buf.len(), 5 + 4 + 4 + 1 + 4 + 4 + 8 * n);
            let back = read_dmap(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(bits(&back.values), bits(&map.values));
            prop_assert_eq!(bits(&back.energy), bits(&map.energy));
            prop_assert_eq!(back.d_min.to_bits(), map.d_min.to_bits());
            prop_assert_eq!((back.width, back.height, back.kind), (w, h, map.kind));
        }
    }

    #[test]
    fn header_layout() {
        let map = Dmap {
            width: 1,
            height: 1,
            kind: DmapKind::Depth,
            d_min: 1.0,
            d_max: 2.0,
            values: vec![f32::NAN],
            energy: vec![7.0],
        };
        let mut buf = Vec::new();
        write_dmap(&mut buf, &map).unwrap();
        assert_eq!(&buf[..5], b"DMAP1");
        assert_eq!(&buf[5..9], &[1, 0, 0, 0]);
        assert_eq!(buf[13], 1);
        assert_eq!(&buf[14..18], &1.0f32.to_le_bytes());
        assert!(read_dmap(&mut &b"DMAP2"[..]).is_err());
        assert!(read_dmap(&mut &buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn disparity_conversion() {
        let mut d = DisparityMap::invalid(3, 2, -4, 60);
        d.disparity[1] = 12.25;
        d.energy[1] = 300.0;
        let back = Dmap::from_disparity(&d).to_disparity().unwrap();
        assert_eq!(back.d_min, -4);
        assert_eq!(back.disparity(1, 0), Some(12.25));
        assert!(Dmap::from_disparity(&d).to_depth(0).is_err());
    }
}
