//! File formats, synthetic data, evaluation, ablation, and gradient checks.

pub mod ablate;
pub mod dataset;
pub mod eval;
pub mod formats;
pub mod gradcheck;
pub mod synth;

pub use ablate::{ablate, AblationArm, AblationReport};
pub use dataset::{load_dataset, overfit_scenes, quantize, save_dataset, synth_dataset, Dataset, OVERFIT_SCENES};
pub use eval::{evaluate, evaluate_densities, score_image, EvalReport, HeadScore, ImageEval, SubsetStats, LOCAL_WINDOW};
pub use formats::{
    decode_checkpoint, decode_dmap, decode_pgm, density_to_pgm, encode_checkpoint, encode_dmap, encode_pgm,
    export_density_image, image_to_bytes, load_checkpoint, read_dmap, read_pgm, save_checkpoint, write_dmap, write_pgm,
};
pub use gradcheck::{run_model_check, run_op_suite, CaseResult, SUITE_SEEDS, SUITE_TOLERANCE};
pub use synth::{synth_scene, SynthConfig};
