use std::sync::OnceLock;

use super::{DescriptorKind, FeatureVector, GrayImage};
use crate::error::{contract, Result};

/// 58 uniform patterns plus one bin for everything else.
pub const LBP_BINS: usize = 59;
pub const LBP_GRID: usize = 8;
pub const LBP_LENGTH: usize = LBP_GRID * LBP_GRID * LBP_BINS;

/// Neighbor offsets in bit order 0..7: NW, N, NE, E, SE, S, SW, W.
const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

/// LBP code of an interior pixel; bit `k` is set iff neighbor `k` ≥ center.
pub fn lbp_code(img: &GrayImage, x: usize, y: usize) -> u8 {
    let center = img.get(x, y);
    let mut code = 0u8;
    for (bit, (dx, dy)) in NEIGHBORS.iter().enumerate() {
        let n = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        if n >= center {
            code |= 1 << bit;
        }
    }
    code
}

fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

fn bin_table() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [(LBP_BINS - 1) as u8; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if transitions(code) <= 2 {
                table[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next as usize, LBP_BINS - 1);
        table
    })
}

/// Histogram bin of a code: uniform codes in ascending order take bins
/// 0..=57, all others bin 58.
pub fn uniform_bin(code: u8) -> usize {
    bin_table()[code as usize] as usize
}

/// Region index along one axis for an interior offset; leftover pixels go
/// to the last region.
fn region_of(offset: usize, inner: usize) -> usize {
    let base = inner / LBP_GRID;
    (offset / base).min(LBP_GRID - 1)
}

/// Concatenated 59-bin uniform LBP histograms over an 8×8 grid of regions
/// (row-major region order). The 1-pixel image border is excluded.
pub fn lbp_u2_histogram(img: &GrayImage) -> Result<FeatureVector> {
    let (w, h) = (img.width(), img.height());
    if w < 16 || h < 16 {
        return Err(contract(format!("LBP needs at least a 16x16 image, got {w}x{h}")));
    }
    let (iw, ih) = (w - 2, h - 2);
    let mut values = vec![0.0; LBP_LENGTH];
    for y in 1..h - 1 {
        let ry = region_of(y - 1, ih);
        for x in 1..w - 1 {
            let rx = region_of(x - 1, iw);
            let bin = uniform_bin(lbp_code(img, x, y));
            values[(ry * LBP_GRID + rx) * LBP_BINS + bin] += 1.0;
        }
    }
    Ok(FeatureVector {
        values,
        kind: DescriptorKind::Lbp,
    })
}
