//! Evaluation toolkit: flow-file I/O, endpoint-error metrics, color-wheel
//! visualization, and synthetic ground-truth pairs for verification.

mod flo;
mod metrics;
mod synth;
mod viz;

pub use flo::{read_flo, write_flo, FLO_MAGIC};
pub use metrics::{endpoint_metrics, Metrics, ValidityMask};
pub use synth::{
    noise_image, smooth_noise_image, synth_pair, OccluderFill, SynthMotion, SynthPair,
};
pub use viz::flow_to_color;
