//! Color-name features: a 32768-row lookup from 5-bit-quantized RGB to a
//! 10-dim color-name probability vector, average-pooled per cell.
//!
//! The table asset is row-major 32768x10 little-endian f32. A deterministic
//! built-in table (Gaussian affinity to ten prototype colors) is used when
//! no asset file is configured.

use std::fs;
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::features::{FeatureMap, Patch};
use crate::num::Real;

pub const CN_DIMS: usize = 10;
pub const CN_TABLE_ROWS: usize = 32 * 32 * 32;
const ROW_SUM_TOL: f32 = 1e-3;

/// Prototype colors for the built-in table: black, blue, brown, grey,
/// green, orange, pink, purple, red, yellow.
const PROTOTYPES: [[f64; 3]; CN_DIMS] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 255.0],
    [139.0, 69.0, 19.0],
    [128.0, 128.0, 128.0],
    [0.0, 255.0, 0.0],
    [255.0, 165.0, 0.0],
    [255.0, 105.0, 180.0],
    [128.0, 0.0, 128.0],
    [255.0, 0.0, 0.0],
    [255.0, 255.0, 0.0],
];

#[derive(Debug, Clone)]
pub struct CnTable {
    rows: Vec<f32>,
}

impl CnTable {
    /// Deterministic fallback table: each row is the softmax-like affinity
    /// of the bin-center RGB to the ten prototypes.
    pub fn generate_default() -> Self {
        let sigma2 = 2.0 * 60.0f64.powi(2);
        let mut rows = vec![0f32; CN_TABLE_ROWS * CN_DIMS];
        for r5 in 0..32usize {
            for g5 in 0..32usize {
                for b5 in 0..32usize {
                    let idx = (r5 * 1024 + g5 * 32 + b5) * CN_DIMS;
                    let rgb = [
                        (r5 * 8 + 4) as f64,
                        (g5 * 8 + 4) as f64,
                        (b5 * 8 + 4) as f64,
                    ];
                    let mut sum = 0.0f64;
                    let mut vals = [0.0f64; CN_DIMS];
                    for (k, p) in PROTOTYPES.iter().enumerate() {
                        let d2 = (rgb[0] - p[0]).powi(2)
                            + (rgb[1] - p[1]).powi(2)
                            + (rgb[2] - p[2]).powi(2);
                        vals[k] = (-d2 / sigma2).exp();
                        sum += vals[k];
                    }
                    for k in 0..CN_DIMS {
                        rows[idx + k] = (vals[k] / sum) as f32;
                    }
                }
            }
        }
        CnTable { rows }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let expect = CN_TABLE_ROWS * CN_DIMS * 4;
        if bytes.len() != expect {
            return Err(Error::BadCnTable(format!(
                "expected {expect} bytes, found {}",
                bytes.len()
            )));
        }
        let rows: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let table = CnTable { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.rows.len() * 4);
        for v in &self.rows {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.chunks_exact(CN_DIMS).enumerate() {
            let mut sum = 0.0f32;
            for &v in row {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::BadCnTable(format!("entry out of [0,1] in row {i}")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::BadCnTable(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn row(&self, r: u8, g: u8, b: u8) -> &[f32] {
        let idx = ((r as usize >> 3) * 1024 + (g as usize >> 3) * 32 + (b as usize >> 3)) * CN_DIMS;
        &self.rows[idx..idx + CN_DIMS]
    }
}

/// Per-pixel table lookup, average-pooled over each cell.
pub fn compute_cn<T: Real>(
    patch: &Patch<T>,
    table: &CnTable,
    cell_size: usize,
) -> Result<FeatureMap<T>> {
    let (h, w) = (patch.height(), patch.width());
    if h < cell_size || w < cell_size {
        return Err(Error::PatchTooSmall {
            w,
            h,
            cell: cell_size,
        });
    }
    if h % cell_size != 0 || w % cell_size != 0 {
        return Err(Error::CellMisaligned {
            w,
            h,
            cell: cell_size,
        });
    }
    let (ny, nx) = (h / cell_size, w / cell_size);
    let mut out = Array3::<T>::zeros((ny, nx, CN_DIMS));
    let inv_area = T::one() / T::from_index(cell_size * cell_size);
    let quant = |v: T| -> u8 { v.to_f64().unwrap().round().clamp(0.0, 255.0) as u8 };
    for y in 0..h {
        for x in 0..w {
            let r = quant(patch.data[[y, x, 0]]);
            let g = quant(patch.data[[y, x, 1]]);
            let b = quant(patch.data[[y, x, 2]]);
            let row = table.row(r, g, b);
            let (cy, cx) = (y / cell_size, x / cell_size);
            for k in 0..CN_DIMS {
                out[[cy, cx, k]] += T::c(row[k] as f64) * inv_area;
            }
        }
    }
    Ok(FeatureMap {
        data: out,
        cell_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3 as A3;

    fn solid_patch(rgb: [f64; 3], h: usize, w: usize) -> Patch<f64> {
        let mut data = A3::zeros((h, w, 3));
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    data[[y, x, c]] = rgb[c];
                }
            }
        }
        Patch {
            data,
            src_center: (0.0, 0.0),
            src_step: (1.0, 1.0),
        }
    }

    #[test]
    fn generated_table_rows_are_stochastic() {
        let t = CnTable::generate_default();
        t.validate().unwrap();
    }

    #[test]
    fn solid_patch_equals_table_row() {
        let t = CnTable::generate_default();
        let p = solid_patch([250.0, 10.0, 10.0], 8, 8);
        let f = compute_cn(&p, &t, 4).unwrap();
        let row = t.row(250, 10, 10);
        for cy in 0..2 {
            for cx in 0..2 {
                for k in 0..CN_DIMS {
                    assert!((f.data[[cy, cx, k]] - row[k] as f64).abs() < 1e-6);
                }
            }
        }
        // red prototype dominates
        let best = (0..CN_DIMS).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(best, 8);
    }

    #[test]
    fn cell_rows_sum_to_one() {
        let t = CnTable::generate_default();
        let mut p = solid_patch([0.0, 0.0, 0.0], 8, 8);
        for y in 0..8 {
            for x in 0..8 {
                p.data[[y, x, 0]] = ((x * 31 + y * 17) % 256) as f64;
                p.data[[y, x, 1]] = ((x * 13 + y * 7) % 256) as f64;
                p.data[[y, x, 2]] = ((x * 5 + y * 23) % 256) as f64;
            }
        }
        let f = compute_cn(&p, &t, 4).unwrap();
        for cy in 0..2 {
            for cx in 0..2 {
                let s: f64 = (0..CN_DIMS).map(|k| f.data[[cy, cx, k]]).sum();
                assert!((s - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn boundary_cell_averages_the_two_rows() {
        // Left half red, right half blue; a 4-px cell spanning the boundary
        // must equal the direct mean of the two table rows.
        let t = CnTable::generate_default();
        let mut p = solid_patch([0.0, 0.0, 0.0], 4, 4);
        for y in 0..4 {
            for x in 0..4 {
                if x < 2 {
                    p.data[[y, x, 0]] = 255.0;
                } else {
                    p.data[[y, x, 2]] = 255.0;
                }
            }
        }
        let f = compute_cn(&p, &t, 4).unwrap();
        let red = t.row(255, 0, 0);
        let blue = t.row(0, 0, 255);
        for k in 0..CN_DIMS {
            let expect = 0.5 * (red[k] as f64 + blue[k] as f64);
            assert!((f.data[[0, 0, k]] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn save_load_roundtrip_and_bad_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cn.bin");
        let t = CnTable::generate_default();
        t.save(&path).unwrap();
        let t2 = CnTable::load(&path).unwrap();
        assert_eq!(t.rows, t2.rows);

        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, [0u8; 16]).unwrap();
        assert!(matches!(CnTable::load(&bad), Err(Error::BadCnTable(_))));
        assert!(CnTable::load(&dir.path().join("missing.bin")).is_err());
    }
}
