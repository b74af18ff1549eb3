use rayon::prelude::*;

use super::{GanError, Generator, Result};
use crate::neural::Tensor;
use crate::volume::{hu_to_unit_value, unit_to_hu_value, Volume};

/// Tile origins along one axis: stride `tile − overlap`, last tile flush
/// with the end.
pub fn tile_starts(len: usize, tile: usize, overlap: usize) -> Result<Vec<usize>> {
    if tile == 0 || tile > len {
        return Err(GanError::Shape(format!(
            "tile extent {tile} does not fit axis of {len}"
        )));
    }
    if tile == len {
        return Ok(vec![0]);
    }
    if overlap >= tile {
        return Err(GanError::Shape(format!(
            "overlap {overlap} must be below tile extent {tile}"
        )));
    }
    let step = tile - overlap;
    let mut starts = Vec::new();
    let mut s = 0;
    while s + tile < len {
        starts.push(s);
        s += step;
    }
    starts.push(len - tile);
    Ok(starts)
}

/// Blend weights along one axis of an output tile: linear ramps of width
/// `overlap` on every side that touches a neighbour, 1 elsewhere.
pub fn blend_profile(len: usize, overlap: usize, first: bool, last: bool) -> Vec<f32> {
    let mut w = vec![1.0f32; len];
    let ovl = overlap.min(len);
    for k in 0..ovl {
        let ramp = (k as f32 + 0.5) / ovl as f32;
        if !first {
            w[k] = w[k].min(ramp);
        }
        if !last {
            w[len - 1 - k] = w[len - 1 - k].min(ramp);
        }
    }
    w
}

/// Tiling of an input volume plus the matching output blend profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLayout {
    pub input_dims: [usize; 3],
    pub tile: [usize; 3],
    pub z_overlap: usize,
    /// Input-space tile origins per axis (z, y, x).
    pub starts: [Vec<usize>; 3],
}

impl TileLayout {
    pub fn new(input_dims: [usize; 3], tile: [usize; 3], z_overlap: usize) -> Result<Self> {
        let mut starts: [Vec<usize>; 3] = Default::default();
        for a in 0..3 {
            starts[a] = tile_starts(input_dims[a], tile[a], z_overlap)?;
        }
        Ok(TileLayout {
            input_dims,
            tile,
            z_overlap,
            starts,
        })
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [
            2 * self.input_dims[0],
            self.input_dims[1],
            self.input_dims[2],
        ]
    }

    pub fn output_tile(&self) -> [usize; 3] {
        [2 * self.tile[0], self.tile[1], self.tile[2]]
    }

    /// Every tile origin in input space, z-major.
    pub fn origins(&self) -> Vec<[usize; 3]> {
        let mut v = Vec::new();
        for &z in &self.starts[0] {
            for &y in &self.starts[1] {
                for &x in &self.starts[2] {
                    v.push([z, y, x]);
                }
            }
        }
        v
    }

    /// Output-space blend profiles (z, y, x) of the tile at `origin`.
    pub fn profiles(&self, origin: [usize; 3]) -> [Vec<f32>; 3] {
        let out_tile = self.output_tile();
        let overlaps = [2 * self.z_overlap, self.z_overlap, self.z_overlap];
        std::array::from_fn(|a| {
            let s = &self.starts[a];
            let first = origin[a] == s[0];
            let last = origin[a] == *s.last().unwrap();
            blend_profile(out_tile[a], overlaps[a], first, last)
        })
    }
}

/// Sum of raw blend weights at every output voxel (z-major).
pub fn blend_weight_sum(
    input_dims: [usize; 3],
    tile: [usize; 3],
    z_overlap: usize,
) -> Result<Vec<f32>> {
    let layout = TileLayout::new(input_dims, tile, z_overlap)?;
    let [oz, oy, ox] = layout.output_dims();
    let mut sum = vec![0.0f32; oz * oy * ox];
    for origin in layout.origins() {
        let [pz, py, px] = layout.profiles(origin);
        let o = [2 * origin[0], origin[1], origin[2]];
        for (k, wz) in pz.iter().enumerate() {
            for (j, wy) in py.iter().enumerate() {
                let row = ((o[0] + k) * oy + o[1] + j) * ox + o[2];
                for (i, wx) in px.iter().enumerate() {
                    sum[row + i] += wz * wy * wx;
                }
            }
        }
    }
    Ok(sum)
}

fn extract_tile(v: &Volume, origin: [usize; 3], tile: [usize; 3]) -> Tensor {
    let [td, th, tw] = tile;
    let mut data = Vec::with_capacity(td * th * tw);
    for z in origin[0]..origin[0] + td {
        for y in origin[1]..origin[1] + th {
            let start = v.index(z, y, origin[2]);
            data.extend(
                v.voxels()[start..start + tw]
                    .iter()
                    .map(|&hu| hu_to_unit_value(hu)),
            );
        }
    }
    Tensor::from_vec([1, 1, td, th, tw], data).expect("tile length matches")
}

/// Runs `g` over `low` (HU) tile by tile and blends the overlaps.
///
/// Output has twice the slices at half the z-spacing, in HU.
pub fn normalize_volume(
    g: &Generator,
    low: &Volume,
    tile: [usize; 3],
    z_overlap: usize,
) -> Result<Volume> {
    let layout = TileLayout::new(low.dims(), tile, z_overlap)?;
    let [oz, oy, ox] = layout.output_dims();
    let mut acc = vec![0.0f32; oz * oy * ox];
    let mut wsum = vec![0.0f32; oz * oy * ox];
    let origins = layout.origins();
    let batch = rayon::current_num_threads().max(1);
    for group in origins.chunks(batch) {
        let outputs: Vec<Result<Tensor>> = group
            .par_iter()
            .map(|&o| g.infer(&extract_tile(low, o, tile)))
            .collect();
        for (&origin, out) in group.iter().zip(outputs) {
            let out = out?;
            let [pz, py, px] = layout.profiles(origin);
            let o = [2 * origin[0], origin[1], origin[2]];
            let (th, tw) = (py.len(), px.len());
            for (k, wz) in pz.iter().enumerate() {
                for (j, wy) in py.iter().enumerate() {
                    let row = ((o[0] + k) * oy + o[1] + j) * ox + o[2];
                    let src = &out.data()[(k * th + j) * tw..(k * th + j + 1) * tw];
                    for (i, wx) in px.iter().enumerate() {
                        let w = wz * wy * wx;
                        acc[row + i] += w * src[i];
                        wsum[row + i] += w;
                    }
                }
            }
        }
    }
    let voxels = acc
        .iter()
        .zip(&wsum)
        .map(|(&a, &w)| unit_to_hu_value(a / w))
        .collect();
    let [sz, sy, sx] = low.spacing();
    Ok(Volume::new([oz, oy, ox], [sz / 2.0, sy, sx], voxels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::{build_generator, GeneratorConfig};

    #[test]
    fn starts_cover_axis() {
        assert_eq!(tile_starts(32, 32, 4).unwrap(), vec![0]);
        assert_eq!(tile_starts(32, 16, 4).unwrap(), vec![0, 12, 16]);
        assert_eq!(tile_starts(28, 16, 4).unwrap(), vec![0, 12]);
        assert!(tile_starts(8, 16, 4).is_err());
        assert!(tile_starts(32, 4, 4).is_err());
    }

    #[test]
    fn profile_ramps() {
        assert_eq!(blend_profile(4, 2, true, true), vec![1.0; 4]);
        assert_eq!(
            blend_profile(6, 2, false, true),
            vec![0.25, 0.75, 1.0, 1.0, 1.0, 1.0]
        );
        assert!(blend_profile(5, 4, false, false).iter().all(|&w| w > 0.0));
    }

    #[test]
    fn single_tile_matches_direct_inference() {
        let cfg = GeneratorConfig {
            n_resblocks: 1,
            channels: 2,
            z_upsample_factor: 2,
        };
        let g = build_generator(cfg, 2).unwrap();
        let vox = (0..4 * 6 * 6)
            .map(|i| -800.0 + (i % 17) as f32 * 50.0)
            .collect();
        let low = Volume::new([4, 6, 6], [2.0, 1.0, 1.0], vox).unwrap();
        let out = normalize_volume(&g, &low, [4, 6, 6], 4).unwrap();
        assert_eq!(out.dims(), [8, 6, 6]);
        assert_eq!(out.spacing(), [1.0, 1.0, 1.0]);
        let direct = g.infer(&extract_tile(&low, [0, 0, 0], [4, 6, 6])).unwrap();
        for (a, &b) in out.voxels().iter().zip(direct.data()) {
            assert!((a - unit_to_hu_value(b)).abs() < 1e-3);
        }
        assert!(normalize_volume(&g, &low, [5, 6, 6], 4).is_err());
    }
}
