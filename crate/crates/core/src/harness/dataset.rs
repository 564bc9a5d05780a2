//! Directory datasets: `<stem>.pgm` images next to `<stem>.json` annotations.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::groundtruth::AnnotationSet;
use crate::harness::formats::{read_pgm, write_pgm};
use crate::harness::synth::{synth_scene, SynthConfig};
use crate::numerics::Tensor4;
use crate::scalar::Scalar;

pub type Dataset<T> = Vec<(Tensor4<T>, AnnotationSet)>;

/// Loads every `*.pgm` in `dir` (sorted by file name) with its annotation file.
pub fn load_dataset<T: Scalar>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::Data(format!("cannot list {}: {e}", dir.display())))?;
    let mut images: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(Error::Data(format!("no .pgm images in {}", dir.display())));
    }
    images
        .into_iter()
        .map(|img_path| {
            let ann_path = img_path.with_extension("json");
            let img: Tensor4<T> = read_pgm(&img_path)?;
            let ann = AnnotationSet::load(&ann_path)?;
            if (ann.width, ann.height) != (img.width(), img.height()) {
                return Err(Error::Data(format!(
                    "{} is {}x{} but {} describes {}x{}",
                    img_path.display(),
                    img.width(),
                    img.height(),
                    ann_path.display(),
                    ann.width,
                    ann.height
                )));
            }
            Ok((img, ann))
        })
        .collect()
}

pub fn save_dataset<T: Scalar>(dir: impl AsRef<Path>, data: &[(Tensor4<T>, AnnotationSet)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, (img, ann)) in data.iter().enumerate() {
        write_pgm(img, dir.join(format!("{i:04}.pgm")))?;
        ann.save(dir.join(format!("{i:04}.json")))?;
    }
    Ok(())
}

/// `count` scenes generated from consecutive seeds starting at `base.seed`.
pub fn synth_dataset<T: Scalar>(base: &SynthConfig, count: usize) -> Result<Dataset<T>> {
    (0..count as u64)
        .map(|i| {
            let cfg = SynthConfig {
                seed: base.seed.wrapping_add(i),
                ..base.clone()
            };
            synth_scene(&cfg)
        })
        .collect()
}

/// Rounds image intensities to 8 bits, as they would be after a save and load.
pub fn quantize<T: Scalar>(data: &[(Tensor4<T>, AnnotationSet)]) -> Dataset<T> {
    data.iter()
        .map(|(img, ann)| (img.map(|v| T::of((v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() / 255.0)), ann.clone()))
        .collect()
}

/// Number of scenes in [`overfit_scenes`].
pub const OVERFIT_SCENES: usize = 8;

const OVERFIT_EASY: [usize; OVERFIT_SCENES] = [8, 7, 9, 6, 8, 7, 10, 5];
const OVERFIT_HARD: [usize; OVERFIT_SCENES] = [7, 8, 6, 9, 8, 5, 7, 10];

/// Eight 64×64 scenes with 12 to 17 heads each (mean 15), about half of them hard.
pub fn overfit_scenes<T: Scalar>(seed: u64) -> Result<Dataset<T>> {
    (0..OVERFIT_SCENES)
        .map(|i| {
            let cfg = SynthConfig {
                image_size: 64,
                n_easy: OVERFIT_EASY[i],
                n_hard: OVERFIT_HARD[i],
                seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
                ..SynthConfig::default()
            };
            synth_scene(&cfg)
        })
        .collect()
}
