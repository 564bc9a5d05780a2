//! Supervision targets derived from head-point annotations.

pub mod annotation;
pub mod bundle;
pub mod classes;
pub mod density;
pub mod segmentation;

pub use annotation::{AnnotationSet, HeadKind, Point};
pub use bundle::{make_bundle, GroundTruthBundle, OUTPUT_STRIDE};
pub use classes::{compute_thr, encode_class_label, ClassLabelSpec, DEFAULT_NUM_CLASSES};
pub use density::{downsample_density, encode_density, DensityMap};
pub use segmentation::{build_seg_pyramid, encode_segmentation, BinaryMap, SegPyramid, SEG_LEVELS, TEMPLATE_SIZE};
