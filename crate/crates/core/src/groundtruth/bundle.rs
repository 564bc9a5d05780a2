use crate::error::Result;
use crate::groundtruth::annotation::AnnotationSet;
use crate::groundtruth::classes::{encode_class_label, ClassLabelSpec};
use crate::groundtruth::density::{downsample_density, encode_density, DensityMap};
use crate::groundtruth::segmentation::{build_seg_pyramid, encode_segmentation, SegPyramid};
use crate::scalar::Scalar;

/// Stride of the predicted density map.
pub const OUTPUT_STRIDE: usize = 8;

/// Every supervision target for one image or patch.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBundle<T> {
    pub density: DensityMap<T>,
    pub density_s8: DensityMap<T>,
    pub pyramid: SegPyramid,
    pub class_label: usize,
    pub head_count: usize,
}

impl<T: Scalar> GroundTruthBundle<T> {
    /// Mirror image of the targets; the class label and count are unchanged.
    pub fn flip_horizontal(&self) -> Self {
        Self {
            density: self.density.flip_horizontal(),
            density_s8: self.density_s8.flip_horizontal(),
            pyramid: self.pyramid.flip_horizontal(),
            class_label: self.class_label,
            head_count: self.head_count,
        }
    }
}

pub fn make_bundle<T: Scalar>(ann: &AnnotationSet, sigma: f64, spec: &ClassLabelSpec) -> Result<GroundTruthBundle<T>> {
    let density = encode_density(ann, sigma)?;
    let density_s8 = downsample_density(&density, OUTPUT_STRIDE)?;
    let pyramid = build_seg_pyramid(&encode_segmentation(ann));
    let class_label = encode_class_label(ann.len() as f64, spec)?;
    Ok(GroundTruthBundle {
        density,
        density_s8,
        pyramid,
        class_label,
        head_count: ann.len(),
    })
}
