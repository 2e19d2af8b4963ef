//! Upright, fixed-scale SIFT descriptors at given keypoints.

use std::f64::consts::TAU;

use super::{DescriptorKind, FeatureVector, GrayImage, LandmarkSet, LANDMARK_COUNT};

pub const SIFT_DESCRIPTOR_LEN: usize = 128;
pub const SIFT_LENGTH: usize = LANDMARK_COUNT * SIFT_DESCRIPTOR_LEN;

const WINDOW: usize = 16;
const CELL: usize = 4;
const CELLS: usize = WINDOW / CELL;
const ORIENTATIONS: usize = 8;
const SIGMA: f64 = 8.0;
const CLAMP: f64 = 0.2;

/// Central-difference gradient with border clamping.
fn gradient(img: &GrayImage, x: isize, y: isize) -> (f64, f64) {
    let gx = img.get_clamped(x + 1, y) as f64 - img.get_clamped(x - 1, y) as f64;
    let gy = img.get_clamped(x, y + 1) as f64 - img.get_clamped(x, y - 1) as f64;
    (gx, gy)
}

/// Raw (unnormalized) 4×4×8 histogram of the 16×16 window centered at `(cx, cy)`.
fn raw_histogram(img: &GrayImage, cx: isize, cy: isize) -> [f64; SIFT_DESCRIPTOR_LEN] {
    let mut hist = [0.0; SIFT_DESCRIPTOR_LEN];
    let half = (WINDOW / 2) as isize;
    let mid = (WINDOW as f64 - 1.0) / 2.0;
    for j in 0..WINDOW {
        for i in 0..WINDOW {
            let (gx, gy) = gradient(img, cx - half + i as isize, cy - half + j as isize);
            let magnitude = gx.hypot(gy);
            if magnitude == 0.0 {
                continue;
            }
            let (dx, dy) = (i as f64 - mid, j as f64 - mid);
            let weight = (-(dx * dx + dy * dy) / (2.0 * SIGMA * SIGMA)).exp();
            let angle = gy.atan2(gx).rem_euclid(TAU);
            let pos = angle / TAU * ORIENTATIONS as f64;
            let lower = (pos.floor() as usize) % ORIENTATIONS;
            let frac = pos - pos.floor();
            let upper = (lower + 1) % ORIENTATIONS;
            let cell = (j / CELL) * CELLS + i / CELL;
            let base = cell * ORIENTATIONS;
            hist[base + lower] += magnitude * weight * (1.0 - frac);
            hist[base + upper] += magnitude * weight * frac;
        }
    }
    hist
}

/// Normalize to unit length, clamp at 0.2, renormalize. Near-zero input stays zero.
fn normalize(hist: &mut [f64]) {
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        hist.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    hist.iter_mut().for_each(|v| *v = (*v / norm).min(CLAMP));
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    hist.iter_mut().for_each(|v| *v /= norm);
}

/// One 128-value descriptor per landmark, concatenated in landmark order.
/// Landmarks are rounded to the nearest pixel and clamped into the image.
pub fn sift_at_landmarks(img: &GrayImage, landmarks: &LandmarkSet) -> FeatureVector {
    let mut values = Vec::with_capacity(SIFT_LENGTH);
    for &(x, y) in landmarks.points() {
        let cx = (x.round() as isize).clamp(0, img.width() as isize - 1);
        let cy = (y.round() as isize).clamp(0, img.height() as isize - 1);
        let mut hist = raw_histogram(img, cx, cy);
        normalize(&mut hist);
        values.extend_from_slice(&hist);
    }
    FeatureVector {
        values,
        kind: DescriptorKind::Sift,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_landmarks(w: f64, h: f64) -> LandmarkSet {
        LandmarkSet::new(
            (0..LANDMARK_COUNT)
                .map(|k| ((k % 9) as f64 * w / 8.0, (k / 9) as f64 * h / 7.0))
                .collect(),
        )
        .unwrap()
    }

    /// Straightforward accumulator: loops over the window by absolute pixel
    /// position and computes each contribution from scratch.
    fn oracle_descriptor(img: &GrayImage, cx: i64, cy: i64) -> Vec<f64> {
        let mut h = vec![0.0; 128];
        for py in cy - 8..cy + 8 {
            for px in cx - 8..cx + 8 {
                let at = |x: i64, y: i64| {
                    let x = x.max(0).min(img.width() as i64 - 1) as usize;
                    let y = y.max(0).min(img.height() as i64 - 1) as usize;
                    img.get(x, y) as f64
                };
                let gx = at(px + 1, py) - at(px - 1, py);
                let gy = at(px, py + 1) - at(px, py - 1);
                let m = (gx * gx + gy * gy).sqrt();
                let rx = (px - cx) as f64 + 0.5;
                let ry = (py - cy) as f64 + 0.5;
                let w = (-(rx * rx + ry * ry) / 128.0).exp();
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += 2.0 * std::f64::consts::PI;
                }
                let o = theta / (2.0 * std::f64::consts::PI) * 8.0;
                let b = o.floor();
                let cell = (((py - cy + 8) / 4) * 4 + (px - cx + 8) / 4) as usize;
                h[cell * 8 + (b as usize) % 8] += m * w * (1.0 - (o - b));
                h[cell * 8 + (b as usize + 1) % 8] += m * w * (o - b);
            }
        }
        h
    }

    #[test]
    fn constant_image_gives_zero_descriptors() {
        let img = GrayImage::from_fn(40, 40, |_, _| 128);
        let f = sift_at_landmarks(&img, &grid_landmarks(40.0, 40.0));
        assert_eq!(f.len(), 8704);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_concentrates_in_horizontal_bins() {
        // dark left half, bright right half: gradient points along +x (angle 0)
        let img = GrayImage::from_fn(48, 48, |x, _| if x < 24 { 20 } else { 220 });
        let cx = 24;
        let cy = 24;
        let raw = raw_histogram(&img, cx, cy);
        let oracle = oracle_descriptor(&img, cx as i64, cy as i64);
        for (a, b) in raw.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let total: f64 = raw.iter().sum();
        let horizontal: f64 = raw
            .chunks(8)
            .map(|cell| cell[0] + cell[1] + cell[7])
            .sum();
        assert!(total > 0.0);
        assert!(horizontal / total > 0.999);
        // the bins adjacent to angle 0 hold the mass; bin 0 gets it all
        let bin0: f64 = raw.chunks(8).map(|c| c[0]).sum();
        assert!((bin0 - total).abs() < 1e-9);
    }

    #[test]
    fn diagonal_gradient_splits_between_adjacent_bins() {
        // intensity increasing along x + 2y: angle atan2(2,1) ≈ 63.4°, between bins 1 and 2
        let img = GrayImage::from_fn(40, 40, |x, y| (x + 2 * y) as u8);
        let raw = raw_histogram(&img, 20, 20);
        let oracle = oracle_descriptor(&img, 20, 20);
        for (a, b) in raw.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        let c = &raw[5 * 8..6 * 8];
        assert!(c[1] > 0.0 && c[2] > 0.0);
        assert_eq!(c[0] + c[3] + c[4] + c[5] + c[6] + c[7], 0.0);
    }

    #[test]
    fn border_landmarks_are_clamped() {
        let img = GrayImage::from_fn(20, 20, |x, y| ((x * 7 + y * 13) % 256) as u8);
        let lm = LandmarkSet::new(vec![(-5.0, 100.0); LANDMARK_COUNT]).unwrap();
        let f = sift_at_landmarks(&img, &lm);
        let corner = LandmarkSet::new(vec![(0.0, 19.0); LANDMARK_COUNT]).unwrap();
        assert_eq!(f, sift_at_landmarks(&img, &corner));
    }

    proptest! {
        #[test]
        fn descriptors_are_normalized_and_clamped(
            (w, h, px) in (8usize..40, 8usize..40).prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(any::<u8>(), w * h))),
            pts in prop::collection::vec((-10.0f64..50.0, -10.0f64..50.0), LANDMARK_COUNT),
        ) {
            let img = GrayImage::new(w, h, px).unwrap();
            let lm = LandmarkSet::new(pts.clone()).unwrap();
            let f = sift_at_landmarks(&img, &lm);
            prop_assert_eq!(f.len(), 8704);
            for (d, &(x, y)) in f.values.chunks(128).zip(&pts) {
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
                prop_assert!(d.iter().all(|&v| v >= 0.0));
                // clamping shrinks the norm, so renormalised entries may exceed 0.2
                // by exactly the factor 1/‖clamped‖
                let cx = (x.round() as isize).clamp(0, w as isize - 1);
                let cy = (y.round() as isize).clamp(0, h as isize - 1);
                let raw = raw_histogram(&img, cx, cy);
                let n0 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n0 >= 1e-12 {
                    let clamped: Vec<f64> = raw.iter().map(|v| (v / n0).min(0.2)).collect();
                    let n1 = clamped.iter().map(|v| v * v).sum::<f64>().sqrt();
                    prop_assert!(d.iter().all(|&v| v <= 0.2 / n1 * (1.0 + 1e-9)));
                }
            }
        }
    }
}
