//! Desk-scale test input tensors.
//!
//! Synthetic stand-ins for camera and LiDAR data: seeded images pass
//! through the same scale/crop pipeline real camera frames would, and
//! seeded point clouds are voxelized into occupancy-count grids. Every
//! tensor is a pure function of the generation seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ModelGraph, TensorSpec};
use crate::rng::{hash, unit_f32, unit_f64};

/// Flat row-major tensor with its spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub spec: TensorSpec,
    pub data: Vec<f32>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("data length {got} does not match spec volume {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("expected an image tensor of shape (H, W, 3), got {0:?}")]
    NotAnImage(Vec<usize>),
    #[error("tensor file is malformed: {0}")]
    Malformed(String),
}

impl Tensor {
    pub fn new(spec: TensorSpec, data: Vec<f32>) -> Result<Self, TensorError> {
        if data.len() != spec.len() {
            return Err(TensorError::LengthMismatch {
                got: data.len(),
                want: spec.len(),
            });
        }
        Ok(Self { spec, data })
    }

    pub fn zeros(spec: TensorSpec) -> Self {
        let len = spec.len();
        Self {
            spec,
            data: vec![0.0; len],
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn contains_nan(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }
}

/// Mean over all elements of all tensors; zero for an empty set.
pub fn mean_of(tensors: &[Tensor]) -> f64 {
    let count: usize = tensors.iter().map(|t| t.data.len()).sum();
    if count == 0 {
        return 0.0;
    }
    let sum: f64 = tensors
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|&v| v as f64)
        .sum();
    sum / count as f64
}

/// Target frame size the model's camera interface expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub height: usize,
    pub width: usize,
}

/// Axis-aligned voxel grid: per-axis bounds in meters and cell counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGridConfig {
    pub bounds: [(f64, f64); 3],
    pub resolution: [usize; 3],
}

/// Scales by `max(h/H, w/W)` with bilinear interpolation, then center-crops
/// to the camera frame. Equal sizes pass pixels through unchanged.
pub fn prepare_image(raw: &Tensor, config: &CameraConfig) -> Result<Tensor, TensorError> {
    let s = &raw.spec.shape;
    if s.len() != 3 || s[2] != 3 {
        return Err(TensorError::NotAnImage(s.clone()));
    }
    let (src_h, src_w) = (s[0], s[1]);
    let (dst_h, dst_w) = (config.height, config.width);

    let scale = f64::max(dst_h as f64 / src_h as f64, dst_w as f64 / src_w as f64);
    let mid_h = ((src_h as f64 * scale).round() as usize).max(dst_h);
    let mid_w = ((src_w as f64 * scale).round() as usize).max(dst_w);

    let mut resized = vec![0.0f32; mid_h * mid_w * 3];
    let scale_h = mid_h as f64 / src_h as f64;
    let scale_w = mid_w as f64 / src_w as f64;
    for i in 0..mid_h {
        let sy = (i as f64 + 0.5) / scale_h - 0.5;
        let y0 = sy.floor().clamp(0.0, (src_h - 1) as f64) as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let fy = (sy - y0 as f64).clamp(0.0, 1.0) as f32;
        for j in 0..mid_w {
            let sx = (j as f64 + 0.5) / scale_w - 0.5;
            let x0 = sx.floor().clamp(0.0, (src_w - 1) as f64) as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let fx = (sx - x0 as f64).clamp(0.0, 1.0) as f32;
            for c in 0..3 {
                let at = |y: usize, x: usize| raw.data[(y * src_w + x) * 3 + c];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                resized[(i * mid_w + j) * 3 + c] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }

    let off_h = (mid_h - dst_h) / 2;
    let off_w = (mid_w - dst_w) / 2;
    let mut out = vec![0.0f32; dst_h * dst_w * 3];
    for i in 0..dst_h {
        for j in 0..dst_w {
            for c in 0..3 {
                out[(i * dst_w + j) * 3 + c] =
                    resized[((i + off_h) * mid_w + (j + off_w)) * 3 + c];
            }
        }
    }
    Tensor::new(TensorSpec::fp32(&[dst_h, dst_w, 3]), out)
}

/// Bins points into an occupancy-count grid. Points outside the closed
/// bounds are discarded; a point on a cell boundary belongs to the
/// lower-indexed cell, so the global maximum lands in the last cell.
pub fn voxelize(points: &[[f64; 3]], config: &VoxelGridConfig) -> Tensor {
    let res = config.resolution;
    let mut grid = vec![0.0f32; res[0] * res[1] * res[2]];
    'point: for p in points {
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let (lo, hi) = config.bounds[axis];
            let x = p[axis];
            if !x.is_finite() || x < lo || x > hi {
                continue 'point;
            }
            let u = (x - lo) / (hi - lo) * res[axis] as f64;
            let cell = (u.ceil() as i64 - 1).max(0) as usize;
            idx[axis] = cell.min(res[axis] - 1);
        }
        grid[(idx[0] * res[1] + idx[1]) * res[2] + idx[2]] += 1.0;
    }
    Tensor {
        spec: TensorSpec::fp32(&[res[0], res[1], res[2]]),
        data: grid,
    }
}

/// Deterministic input tensors for every input vertex of a graph, in
/// ascending vertex-id order.
///
/// Rank-3 specs with a trailing channel of 3 are treated as camera frames
/// and routed through [`prepare_image`]; cubic rank-3 specs are treated as
/// voxel grids and filled by voxelizing a seeded point cloud; everything
/// else is filled directly with uniform values in `[0, 1)`.
pub fn gen_inputs(graph: &ModelGraph, rng_seed: u64) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(graph.inputs.len());
    let mut sorted = graph.inputs.clone();
    sorted.sort();
    for (index, v) in sorted.iter().enumerate() {
        let spec = graph.spec(*v).clone();
        let shape = spec.shape.clone();
        let key = hash(rng_seed, &[index as u64]);
        let tensor = if shape.len() == 3 && shape[2] == 3 {
            let (h, w) = (shape[0], shape[1]);
            let raw_spec = TensorSpec::fp32(&[2 * h, 2 * w + 3, 3]);
            let raw_len = raw_spec.len();
            let raw = Tensor {
                spec: raw_spec,
                data: (0..raw_len)
                    .map(|i| unit_f32(hash(key, &[i as u64])))
                    .collect(),
            };
            prepare_image(&raw, &CameraConfig { height: h, width: w })
                .expect("raw image is well-formed by construction")
        } else if shape.len() == 3 && shape[0] == shape[1] && shape[1] == shape[2] {
            let config = VoxelGridConfig {
                bounds: [(-1.0, 1.0); 3],
                resolution: [shape[0], shape[1], shape[2]],
            };
            let cells = spec.len();
            let n_points = 2 * cells;
            let points: Vec<[f64; 3]> = (0..n_points)
                .map(|i| {
                    let mut p = [0.0; 3];
                    for (axis, coord) in p.iter_mut().enumerate() {
                        let u = unit_f64(hash(key, &[i as u64, axis as u64]));
                        *coord = -1.0 + 2.0 * u;
                    }
                    p
                })
                .collect();
            voxelize(&points, &config)
        } else {
            let len = spec.len();
            Tensor {
                spec,
                data: (0..len)
                    .map(|i| unit_f32(hash(key, &[i as u64])))
                    .collect(),
            }
        };
        out.push(tensor);
    }
    out
}

/// On-disk tensor container: JSON header plus base64 little-endian f32
/// payload, one tensor per file.
pub fn tensor_to_container(tensor: &Tensor) -> String {
    use base64::Engine;
    let mut bytes = Vec::with_capacity(tensor.data.len() * 4);
    for v in &tensor.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let payload = base64::engine::general_purpose::STANDARD.encode(bytes);
    serde_json::json!({
        "shape": tensor.spec.shape,
        "dtype": tensor.spec.dtype,
        "encoding": "base64_f32_le",
        "data": payload,
    })
    .to_string()
}

pub fn tensor_from_container(text: &str) -> Result<Tensor, TensorError> {
    use base64::Engine;
    #[derive(Deserialize)]
    struct Container {
        shape: Vec<usize>,
        dtype: crate::graph::Dtype,
        encoding: String,
        data: String,
    }
    let c: Container =
        serde_json::from_str(text).map_err(|e| TensorError::Malformed(e.to_string()))?;
    if c.encoding != "base64_f32_le" {
        return Err(TensorError::Malformed(format!(
            "unsupported encoding {}",
            c.encoding
        )));
    }
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(c.data.as_bytes())
        .map_err(|e| TensorError::Malformed(e.to_string()))?;
    if bytes.len() % 4 != 0 {
        return Err(TensorError::Malformed("payload not a multiple of 4".into()));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(
        TensorSpec {
            shape: c.shape,
            dtype: c.dtype,
        },
        data,
    )
}

/// Parses a point cloud from CSV text, one `x,y,z` triple per line.
/// Blank lines and `#` comments are skipped.
pub fn points_from_csv(text: &str) -> Result<Vec<[f64; 3]>, TensorError> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(TensorError::Malformed(format!(
                "line {}: expected 3 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut p = [0.0; 3];
        for (i, f) in fields.iter().enumerate() {
            p[i] = f.parse::<f64>().map_err(|e| {
                TensorError::Malformed(format!("line {}: {}", lineno + 1, e))
            })?;
        }
        points.push(p);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Dtype, OperatorKind};

    #[test]
    fn identity_scale_and_crop_is_pixel_exact() {
        let spec = TensorSpec::fp32(&[5, 7, 3]);
        let data: Vec<f32> = (0..spec.len()).map(|i| (i as f32) / 100.0).collect();
        let raw = Tensor::new(spec, data).unwrap();
        let out = prepare_image(&raw, &CameraConfig { height: 5, width: 7 }).unwrap();
        assert_eq!(out.data, raw.data);
    }

    #[test]
    fn constant_image_stays_constant() {
        let raw = Tensor::new(TensorSpec::fp32(&[9, 4, 3]), vec![0.37; 9 * 4 * 3]).unwrap();
        let out = prepare_image(&raw, &CameraConfig { height: 3, width: 5 }).unwrap();
        assert_eq!(out.spec.shape, vec![3, 5, 3]);
        for v in &out.data {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn downscale_matches_hand_computed_bilinear() {
        // 4x4 ramp, value (4i + j)/15 in every channel. Halving the size
        // samples at source coordinates 0.5 and 2.5 on each axis, which is
        // the plain average of each 2x2 block:
        //   (0+1+4+5)/4/15 = 1/6      (2+3+6+7)/4/15 = 3/10
        //   (8+9+12+13)/4/15 = 7/10   (10+11+14+15)/4/15 = 5/6
        let mut data = vec![0.0f32; 4 * 4 * 3];
        for i in 0..4 {
            for j in 0..4 {
                for c in 0..3 {
                    data[(i * 4 + j) * 3 + c] = (4 * i + j) as f32 / 15.0;
                }
            }
        }
        let raw = Tensor::new(TensorSpec::fp32(&[4, 4, 3]), data).unwrap();
        let out = prepare_image(&raw, &CameraConfig { height: 2, width: 2 }).unwrap();
        let expected = [1.0 / 6.0, 0.3, 0.7, 5.0 / 6.0];
        for (cell, want) in expected.iter().enumerate() {
            for c in 0..3 {
                let got = out.data[cell * 3 + c];
                assert!((got - want).abs() < 1e-6, "cell {cell}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn rejects_non_image_tensors() {
        let t = Tensor::new(TensorSpec::fp32(&[4, 4]), vec![0.0; 16]).unwrap();
        assert!(matches!(
            prepare_image(&t, &CameraConfig { height: 2, width: 2 }),
            Err(TensorError::NotAnImage(_))
        ));
        let t = Tensor::new(TensorSpec::fp32(&[4, 4, 2]), vec![0.0; 32]).unwrap();
        assert!(prepare_image(&t, &CameraConfig { height: 2, width: 2 }).is_err());
    }

    fn unit_grid(res: usize) -> VoxelGridConfig {
        VoxelGridConfig {
            bounds: [(0.0, 1.0); 3],
            resolution: [res; 3],
        }
    }

    #[test]
    fn empty_point_cloud_gives_zero_grid() {
        let grid = voxelize(&[], &unit_grid(3));
        assert!(grid.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_point_lands_in_single_lower_cell() {
        let grid = voxelize(&[[0.5, 0.5, 0.5]], &unit_grid(2));
        let sum: f32 = grid.data.iter().sum();
        assert_eq!(sum, 1.0);
        // The center sits on the boundary between cells 0 and 1 on every
        // axis and belongs to the lower-indexed cell.
        assert_eq!(grid.data[0], 1.0);
    }

    #[test]
    fn global_max_belongs_to_last_cell_and_outside_is_discarded() {
        let grid = voxelize(
            &[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.5, 0.5, 0.5], [-0.1, 0.5, 0.5]],
            &unit_grid(2),
        );
        let sum: f32 = grid.data.iter().sum();
        assert_eq!(sum, 2.0);
        assert_eq!(grid.data[(1 * 2 + 1) * 2 + 1], 1.0);
        assert_eq!(grid.data[0], 1.0);
    }

    #[test]
    fn voxel_conservation_against_per_point_oracle() {
        let config = VoxelGridConfig {
            bounds: [(-2.0, 2.0), (0.0, 1.0), (-1.0, 3.0)],
            resolution: [4, 3, 5],
        };
        let points: Vec<[f64; 3]> = (0..100)
            .map(|i| {
                [
                    -3.0 + 6.0 * unit_f64(hash(77, &[i, 0])),
                    -0.5 + 2.0 * unit_f64(hash(77, &[i, 1])),
                    -2.0 + 6.0 * unit_f64(hash(77, &[i, 2])),
                ]
            })
            .collect();
        // Brute-force oracle: count points inside the closed bounds.
        let in_bounds = points
            .iter()
            .filter(|p| {
                (0..3).all(|a| {
                    let (lo, hi) = config.bounds[a];
                    p[a] >= lo && p[a] <= hi
                })
            })
            .count();
        let grid = voxelize(&points, &config);
        let sum: f32 = grid.data.iter().sum();
        assert_eq!(sum as usize, in_bounds);
        assert!(in_bounds > 0);
    }

    #[test]
    fn gen_inputs_is_deterministic_and_shape_exact() {
        let mut g = ModelGraph::new();
        let img = g.add_vertex(TensorSpec::fp32(&[8, 8, 3]));
        let seq = g.add_vertex(TensorSpec::fp32(&[6, 2, 5]));
        let vox = g.add_vertex(TensorSpec::fp32(&[4, 4, 4]));
        let sum = g.add_vertex(TensorSpec::fp32(&[4]));
        g.add_edge(vec![img], sum, OperatorKind::Dense, 1);
        // seq and vox feed nothing in this fixture; inputs are still generated.
        g.inputs = vec![img, seq, vox];
        g.output = sum;

        let a = gen_inputs(&g, 42);
        let b = gen_inputs(&g, 42);
        assert_eq!(a, b);
        let c = gen_inputs(&g, 43);
        assert_ne!(a, c);

        assert_eq!(a[0].spec.shape, vec![8, 8, 3]);
        assert_eq!(a[1].spec.shape, vec![6, 2, 5]);
        assert_eq!(a[2].spec.shape, vec![4, 4, 4]);
        assert!(a[0].data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a[1].data.iter().all(|&v| (0.0..1.0).contains(&v)));
        let vox_sum: f32 = a[2].data.iter().sum();
        assert!(vox_sum > 0.0);
        for t in &a {
            assert!(t.mean().is_finite());
        }
    }

    #[test]
    fn container_round_trip() {
        let t = Tensor::new(
            TensorSpec {
                shape: vec![2, 3],
                dtype: Dtype::Fp16,
            },
            vec![0.5, -1.25, 3.0, 0.0, f32::MIN_POSITIVE, 1e30],
        )
        .unwrap();
        let text = tensor_to_container(&t);
        let back = tensor_from_container(&text).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn csv_points_parse_and_reject_garbage() {
        let text = "# lidar frame\n0.5, 1.0, -2.0\n\n1,2,3\n";
        let pts = points_from_csv(text).unwrap();
        assert_eq!(pts, vec![[0.5, 1.0, -2.0], [1.0, 2.0, 3.0]]);
        assert!(points_from_csv("1,2\n").is_err());
        assert!(points_from_csv("a,b,c\n").is_err());
    }

    #[test]
    fn mean_of_concatenates_all_inputs() {
        let a = Tensor::new(TensorSpec::fp32(&[3]), vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::new(TensorSpec::fp32(&[1]), vec![10.0]).unwrap();
        assert_eq!(mean_of(&[a.clone()]), 2.0);
        assert_eq!(mean_of(&[a, b]), 4.0);
        assert_eq!(mean_of(&[]), 0.0);
    }
}
