//! Synthetic multi-view, two-domain data with a controllable domain gap.
//!
//! Feature mode: class means sit on a circle of radius 4 inside a random
//! 2-plane of a 16-dimensional space. Each view tilts that plane out of
//! itself by `view * rotation_step_deg`; the target domain tilts it further
//! by `target_rotation_deg`, translates it in-plane and scales the noise.
//!
//! Image mode: 32×32 bar images. Bar orientation encodes the class, shear
//! the view, and a brightness offset plus noise level the domain. Every
//! image comes with 68 landmarks on concentric rings around the center.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Domain, Manifest, SampleRecord};
use crate::error::{contract, Result};
use crate::features::{GrayImage, LandmarkSet, LANDMARK_COUNT};
use crate::linalg::Matrix;
use crate::{seeded_rng, SeededRng};

pub const FEATURE_DIM: usize = 16;
pub const IMAGE_SIZE: usize = 32;
const CLASS_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticMode {
    Feature,
    Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub views_per_domain: usize,
    pub samples_per_cell: usize,
    pub mode: SyntheticMode,
    /// Relative class frequencies; the largest weight gets `samples_per_cell`.
    pub class_weights: Option<Vec<f64>>,
    /// In-plane translation of the target domain.
    pub shift_magnitude: f64,
    pub shift_angle_deg: f64,
    /// Out-of-plane tilt added per view index.
    pub rotation_step_deg: f64,
    /// Extra tilt of every target view.
    pub target_rotation_deg: f64,
    pub noise_std: f64,
    /// Target noise is `noise_std * target_noise_scale`.
    pub target_noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            views_per_domain: 2,
            samples_per_cell: 25,
            mode: SyntheticMode::Feature,
            class_weights: None,
            shift_magnitude: 2.5,
            shift_angle_deg: 45.0,
            rotation_step_deg: 20.0,
            target_rotation_deg: 30.0,
            noise_std: 1.0,
            target_noise_scale: 1.25,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.views_per_domain == 0 || self.samples_per_cell == 0 {
            return Err(contract("synthetic config needs ≥2 classes, ≥1 view and ≥1 sample per cell"));
        }
        let reals = [
            self.shift_magnitude,
            self.shift_angle_deg,
            self.rotation_step_deg,
            self.target_rotation_deg,
            self.noise_std,
            self.target_noise_scale,
        ];
        if reals.iter().any(|v| !v.is_finite()) {
            return Err(contract("synthetic config values must be finite"));
        }
        if self.noise_std < 0.0 || self.target_noise_scale < 0.0 {
            return Err(contract("noise parameters must be non-negative"));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.classes || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(contract("class_weights needs one positive weight per class"));
            }
        }
        Ok(())
    }

    /// Samples per (view, domain) for class `k`.
    pub fn class_count(&self, k: usize) -> usize {
        match &self.class_weights {
            None => self.samples_per_cell,
            Some(w) => {
                let max = w.iter().cloned().fold(f64::MIN, f64::max);
                ((self.samples_per_cell as f64 * w[k] / max).round() as usize).max(1)
            }
        }
    }
}

/// One domain: its manifest plus either a feature matrix (feature mode) or
/// images with landmarks (image mode, aligned with the manifest rows).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub manifest: Manifest,
    pub features: Option<Matrix>,
    pub images: Vec<GrayImage>,
    pub landmarks: Vec<LandmarkSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub source: DomainData,
    pub target: DomainData,
}

/// Deterministic in `cfg.seed`. Target samples keep their labels for evaluation.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    match cfg.mode {
        SyntheticMode::Feature => {
            let basis = random_orthonormal(&mut rng);
            let source = feature_domain(cfg, Domain::Source, &basis, &mut rng)?;
            let target = feature_domain(cfg, Domain::Target, &basis, &mut rng)?;
            Ok(SyntheticDataset { source, target })
        }
        SyntheticMode::Image => {
            let source = image_domain(cfg, Domain::Source, &mut rng)?;
            let target = image_domain(cfg, Domain::Target, &mut rng)?;
            Ok(SyntheticDataset { source, target })
        }
    }
}

fn class_names(c: usize) -> Vec<String> {
    (0..c).map(|k| format!("class{k}")).collect()
}

fn prefix(domain: Domain) -> &'static str {
    match domain {
        Domain::Source => "src",
        Domain::Target => "tgt",
    }
}

/// Sample layout shared by both modes: class-major, then view, then index.
fn cells(cfg: &SyntheticConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..cfg.classes {
        for v in 0..cfg.views_per_domain {
            for _ in 0..cfg.class_count(k) {
                out.push((k, v));
            }
        }
    }
    out
}

/// Columns of a random orthogonal `D×D` matrix (Gram-Schmidt on Gaussians).
fn random_orthonormal(rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(FEATURE_DIM);
    while basis.len() < FEATURE_DIM {
        let mut v: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

fn feature_domain(
    cfg: &SyntheticConfig,
    domain: Domain,
    basis: &[Vec<f64>],
    rng: &mut SeededRng,
) -> Result<DomainData> {
    let is_target = domain == Domain::Target;
    let sigma = cfg.noise_std * if is_target { cfg.target_noise_scale } else { 1.0 };
    let noise = Normal::new(0.0, sigma).map_err(|e| contract(e.to_string()))?;
    let (u0, u1, u2, u3) = (&basis[0], &basis[1], &basis[2], &basis[3]);
    let shift_angle = cfg.shift_angle_deg.to_radians();
    let shift: Vec<f64> = if is_target {
        (0..FEATURE_DIM)
            .map(|i| cfg.shift_magnitude * (shift_angle.cos() * u0[i] + shift_angle.sin() * u1[i]))
            .collect()
    } else {
        vec![0.0; FEATURE_DIM]
    };

    let layout = cells(cfg);
    let mut values = Vec::with_capacity(layout.len() * FEATURE_DIM);
    let mut records = Vec::with_capacity(layout.len());
    for (n, &(k, v)) in layout.iter().enumerate() {
        let tilt = (v as f64 * cfg.rotation_step_deg + if is_target { cfg.target_rotation_deg } else { 0.0 }).to_radians();
        let phi = std::f64::consts::TAU * k as f64 / cfg.classes as f64;
        let (a, b) = (CLASS_RADIUS * phi.cos(), CLASS_RADIUS * phi.sin());
        for i in 0..FEATURE_DIM {
            let e1 = tilt.cos() * u0[i] + tilt.sin() * u2[i];
            let e2 = tilt.cos() * u1[i] + tilt.sin() * u3[i];
            let eps = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            values.push(a * e1 + b * e2 + shift[i] + eps);
        }
        records.push(SampleRecord {
            id: format!("{}_{n:04}", prefix(domain)),
            path: String::new(),
            label: Some(k),
            domain,
            view: v as u32,
        });
    }
    let features = Matrix::from_vec(records.len(), FEATURE_DIM, values)?;
    Ok(DomainData {
        manifest: Manifest::new(records, cfg.classes, class_names(cfg.classes))?,
        features: Some(features),
        images: Vec::new(),
        landmarks: Vec::new(),
    })
}

/// 68 points: four rings of 17 around the image center.
pub fn ring_landmarks(size: usize) -> LandmarkSet {
    let c = (size as f64 - 1.0) / 2.0;
    let radii = [3.0, 6.0, 9.0, 12.0];
    let per_ring = LANDMARK_COUNT / radii.len();
    let points = (0..LANDMARK_COUNT)
        .map(|i| {
            let r = radii[i / per_ring];
            let t = std::f64::consts::TAU * (i % per_ring) as f64 / per_ring as f64;
            (c + r * t.cos(), c + r * t.sin())
        })
        .collect();
    LandmarkSet::new(points).expect("68 finite points")
}

fn image_domain(cfg: &SyntheticConfig, domain: Domain, rng: &mut SeededRng) -> Result<DomainData> {
    let is_target = domain == Domain::Target;
    let sigma = 8.0 * cfg.noise_std * if is_target { cfg.target_noise_scale } else { 1.0 };
    let noise = Normal::new(0.0, sigma).map_err(|e| contract(e.to_string()))?;
    let brightness = if is_target { 10.0 * cfg.shift_magnitude } else { 0.0 };
    let layout = cells(cfg);
    let landmarks = ring_landmarks(IMAGE_SIZE);
    let mut records = Vec::with_capacity(layout.len());
    let mut images = Vec::with_capacity(layout.len());
    for (n, &(k, v)) in layout.iter().enumerate() {
        let extra = if is_target { cfg.target_rotation_deg } else { 0.0 };
        let theta = (180.0 * k as f64 / cfg.classes as f64 + extra).to_radians();
        let shear = (v as f64 * cfg.rotation_step_deg).to_radians().tan();
        let jitter = rng.random_range(-0.15..0.15);
        let (ox, oy) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let (dx, dy) = ((theta + jitter).cos(), (theta + jitter).sin());
        let c = (IMAGE_SIZE as f64 - 1.0) / 2.0;
        let img = GrayImage::from_fn(IMAGE_SIZE, IMAGE_SIZE, |x, y| {
            let py = y as f64 - c - oy;
            let px = x as f64 - c - ox - shear * py;
            // distance from the bar's center line
            let dist = (px * dy - py * dx).abs();
            let bar = if dist < 2.5 { 140.0 } else { 0.0 };
            let eps = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            (60.0 + brightness + bar + eps).round().clamp(0.0, 255.0) as u8
        });
        let id = format!("{}_{n:04}", prefix(domain));
        records.push(SampleRecord {
            path: format!("images/{id}.pgm"),
            id,
            label: Some(k),
            domain,
            view: v as u32,
        });
        images.push(img);
    }
    let count = images.len();
    Ok(DomainData {
        manifest: Manifest::new(records, cfg.classes, class_names(cfg.classes))?,
        features: None,
        images,
        landmarks: vec![landmarks; count],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::nn1_classify;
    use crate::data::accuracy;

    fn labels(d: &DomainData) -> Vec<usize> {
        d.manifest.known_labels().unwrap()
    }

    fn cross_and_within(cfg: &SyntheticConfig) -> (f64, f64) {
        let ds = generate_synthetic(cfg).unwrap();
        let xs = ds.source.features.as_ref().unwrap();
        let xt = ds.target.features.as_ref().unwrap();
        let (ys, yt) = (labels(&ds.source), labels(&ds.target));
        let cross = accuracy(&nn1_classify(xs, &ys, xt).unwrap(), &yt).unwrap();
        // within-domain: even rows train, odd rows test
        let even: Vec<usize> = (0..xt.rows()).step_by(2).collect();
        let odd: Vec<usize> = (1..xt.rows()).step_by(2).collect();
        let pick = |idx: &[usize]| idx.iter().map(|&i| yt[i]).collect::<Vec<_>>();
        let pred = nn1_classify(&xt.select_rows(&even), &pick(&even), &xt.select_rows(&odd)).unwrap();
        (cross, accuracy(&pred, &pick(&odd)).unwrap())
    }

    #[test]
    fn default_sizes() {
        let ds = generate_synthetic(&SyntheticConfig::default()).unwrap();
        assert_eq!(ds.source.manifest.len(), 200);
        assert_eq!(ds.target.manifest.len(), 200);
        assert_eq!(ds.source.features.as_ref().unwrap().shape(), (200, FEATURE_DIM));
    }

    #[test]
    fn null_shift_gives_identical_domains() {
        let cfg = SyntheticConfig {
            shift_magnitude: 0.0,
            rotation_step_deg: 0.0,
            target_rotation_deg: 0.0,
            noise_std: 0.0,
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.source.features, ds.target.features);
        assert_eq!(labels(&ds.source), labels(&ds.target));
    }

    #[test]
    fn same_seed_same_output() {
        for mode in [SyntheticMode::Feature, SyntheticMode::Image] {
            let cfg = SyntheticConfig {
                mode,
                samples_per_cell: 3,
                ..SyntheticConfig::default()
            };
            assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
            let other = SyntheticConfig { seed: 43, ..cfg.clone() };
            assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
        }
    }

    #[test]
    fn default_has_a_domain_gap() {
        let (cross, within) = cross_and_within(&SyntheticConfig::default());
        assert!(cross < within, "cross {cross} within {within}");
    }

    #[test]
    fn larger_shift_does_not_help_on_average() {
        let mean = |shift: f64| {
            (0..10)
                .map(|s| {
                    let cfg = SyntheticConfig {
                        shift_magnitude: shift,
                        seed: 100 + s,
                        ..SyntheticConfig::default()
                    };
                    cross_and_within(&cfg).0
                })
                .sum::<f64>()
                / 10.0
        };
        let accs: Vec<f64> = [0.0, 1.5, 3.0, 4.5].iter().map(|&s| mean(s)).collect();
        for w in accs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{accs:?}");
        }
    }

    #[test]
    fn imbalance_knob() {
        let cfg = SyntheticConfig {
            class_weights: Some(vec![4.0, 4.0, 4.0, 1.0]),
            samples_per_cell: 20,
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let ys = labels(&ds.source);
        let count = |k| ys.iter().filter(|&&y| y == k).count();
        assert_eq!((count(0), count(3)), (40, 10));
    }

    #[test]
    fn image_mode_images_and_landmarks() {
        let cfg = SyntheticConfig {
            mode: SyntheticMode::Image,
            samples_per_cell: 2,
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.source.images.len(), 16);
        assert_eq!(ds.target.landmarks.len(), 16);
        assert!(ds.source.features.is_none());
        let img = &ds.source.images[0];
        assert_eq!((img.width(), img.height()), (IMAGE_SIZE, IMAGE_SIZE));
        assert!(ds.source.manifest.records()[0].path.ends_with(".pgm"));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = SyntheticConfig {
            classes: 1,
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&bad).is_err());
        let bad = SyntheticConfig {
            noise_std: -1.0,
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&bad).is_err());
    }
}
