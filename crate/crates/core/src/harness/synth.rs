//! Synthetic scenes with clearly visible and barely visible heads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundtruth::{AnnotationSet, HeadKind, Point};
use crate::numerics::Tensor4;
use crate::scalar::Scalar;

/// Consecutive failed placements allowed for a single head.
pub const MAX_REJECTIONS: usize = 1000;
pub const MAX_HARD_CONTRAST: f64 = 0.15;
pub const MIN_EASY_CONTRAST: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub image_size: usize,
    pub n_easy: usize,
    pub n_hard: usize,
    pub easy_radius: f64,
    pub easy_contrast: f64,
    pub hard_radius: f64,
    pub hard_contrast: f64,
    /// Mean background intensity.
    pub background: f64,
    /// Amplitude of the low-frequency background texture.
    pub texture_amplitude: f64,
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            n_easy: 8,
            n_hard: 7,
            easy_radius: 6.0,
            easy_contrast: 0.6,
            hard_radius: 2.0,
            hard_contrast: 0.12,
            background: 0.2,
            texture_amplitude: 0.05,
            min_separation: 8.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::invalid("image_size must be positive"));
        }
        if !(self.hard_contrast > 0.0 && self.hard_contrast <= MAX_HARD_CONTRAST) {
            return Err(Error::invalid(format!("hard contrast must lie in (0, {MAX_HARD_CONTRAST}]")));
        }
        if self.easy_contrast < MIN_EASY_CONTRAST {
            return Err(Error::invalid(format!("easy contrast must be at least {MIN_EASY_CONTRAST}")));
        }
        if !(self.easy_radius > 0.0 && self.hard_radius > 0.0) {
            return Err(Error::invalid("blob radii must be positive"));
        }
        if self.texture_amplitude < 0.0 || self.min_separation < 0.0 {
            return Err(Error::invalid("texture amplitude and separation must be non-negative"));
        }
        let lo = self.background - self.texture_amplitude;
        let hi = self.background + self.texture_amplitude + self.easy_contrast.max(self.hard_contrast);
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::invalid(format!(
                "intensities would span [{lo}, {hi}], outside [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Raised-cosine bump: 1 at the centre, 0 at and beyond `radius`.
fn bump(r: f64, radius: f64) -> f64 {
    if r >= radius {
        0.0
    } else {
        0.5 * (1.0 + (PI * r / radius).cos())
    }
}

/// Renders a scene: a smooth textured background with one radial blob per head.
/// Overlapping blobs combine by maximum so each head keeps its nominal contrast.
pub fn synth_scene<T: Scalar>(cfg: &SynthConfig) -> Result<(Tensor4<T>, AnnotationSet)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size = cfg.image_size as f64;
    let total = cfg.n_easy + cfg.n_hard;
    let min_d2 = cfg.min_separation * cfg.min_separation;

    let mut points: Vec<Point> = Vec::with_capacity(total);
    for i in 0..total {
        let mut rejections = 0;
        loop {
            let p = Point {
                x: rng.random_range(0.0..size),
                y: rng.random_range(0.0..size),
            };
            if points.iter().all(|q| (p.x - q.x).powi(2) + (p.y - q.y).powi(2) >= min_d2) {
                points.push(p);
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::Data(format!(
                    "could not place head {} of {total} at separation {} after {MAX_REJECTIONS} attempts; use fewer heads",
                    i + 1,
                    cfg.min_separation
                )));
            }
        }
    }
    let kinds: Vec<HeadKind> = (0..total)
        .map(|i| if i < cfg.n_easy { HeadKind::Easy } else { HeadKind::Hard })
        .collect();

    // Two oblique sinusoids with random phase and a period of about one image side.
    let phases: [f64; 2] = [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)];
    let k = 2.0 * PI / size;
    let n = cfg.image_size;
    let mut lift = vec![0.0f64; n * n];
    for (p, kind) in points.iter().zip(&kinds) {
        let (radius, contrast) = match kind {
            HeadKind::Easy => (cfg.easy_radius, cfg.easy_contrast),
            HeadKind::Hard => (cfg.hard_radius, cfg.hard_contrast),
        };
        let reach = radius.ceil() as i64;
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for y in (cy - reach).max(0)..=(cy + reach).min(n as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(n as i64 - 1) {
                let r = ((x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2)).sqrt();
                let i = y as usize * n + x as usize;
                lift[i] = lift[i].max(contrast * bump(r, radius));
            }
        }
    }
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f64, y as f64);
            let tex = 0.5 * ((k * (fx + 0.5 * fy) + phases[0]).sin() + (k * (0.7 * fx - fy) + phases[1]).sin());
            let v = cfg.background + cfg.texture_amplitude * tex + lift[y * n + x];
            data.push(T::of(v.clamp(0.0, 1.0)));
        }
    }
    let ann = AnnotationSet::new(n, n, points)?.with_kinds(kinds)?;
    Ok((Tensor4::from_vec([1, 1, n, n], data)?, ann))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_is_pure_background() {
        let cfg = SynthConfig {
            n_easy: 0,
            n_hard: 0,
            ..SynthConfig::default()
        };
        let (img, ann) = synth_scene::<f64>(&cfg).unwrap();
        assert!(ann.is_empty());
        for &v in img.as_slice() {
            assert!((v - cfg.background).abs() <= cfg.texture_amplitude + 1e-12);
        }
    }

    #[test]
    fn deterministic_and_separated() {
        let cfg = SynthConfig {
            seed: 9,
            ..SynthConfig::default()
        };
        let (a, ann) = synth_scene::<f64>(&cfg).unwrap();
        let (b, _) = synth_scene::<f64>(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ann.len(), 15);
        for i in 0..ann.len() {
            for j in 0..i {
                let (p, q) = (ann.points[i], ann.points[j]);
                assert!(((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt() >= 8.0);
            }
        }
        let kinds = ann.kinds.as_ref().unwrap();
        assert_eq!(kinds.iter().filter(|k| **k == HeadKind::Hard).count(), 7);
    }

    #[test]
    fn contrast_levels_at_head_centres() {
        let cfg = SynthConfig {
            seed: 3,
            texture_amplitude: 0.0,
            ..SynthConfig::default()
        };
        let (img, ann) = synth_scene::<f64>(&cfg).unwrap();
        for (i, p) in ann.points.iter().enumerate() {
            let v = img.at(0, 0, p.y.round() as usize, p.x.round() as usize) - cfg.background;
            match ann.kind_of(i).unwrap() {
                HeadKind::Easy => assert!(v >= 0.45, "easy lift {v}"),
                HeadKind::Hard => assert!(v > 0.0 && v <= MAX_HARD_CONTRAST, "hard lift {v}"),
            }
        }
    }

    #[test]
    fn overcrowded_scene_fails_with_hint() {
        let cfg = SynthConfig {
            image_size: 16,
            n_easy: 40,
            n_hard: 0,
            ..SynthConfig::default()
        };
        let err = synth_scene::<f64>(&cfg).unwrap_err();
        assert!(err.to_string().contains("fewer heads"));
    }

    #[test]
    fn invalid_contrast_rejected() {
        let cfg = SynthConfig {
            hard_contrast: 0.3,
            ..SynthConfig::default()
        };
        assert!(synth_scene::<f64>(&cfg).is_err());
    }
}
