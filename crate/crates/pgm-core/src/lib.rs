//! Pyramidal gradient matching for optical flow.
//!
//! The pipeline turns an image pair into a dense correspondence field:
//! gradient-image features ([`imgproc`]), limited PatchMatch ([`matcher`]),
//! a two-phase pyramidal outlier-filtering framework ([`pyramid_flow`]),
//! match sparsification and a baseline sparse-to-dense interpolator
//! ([`interp`]), plus flow I/O, metrics and synthetic ground truth
//! ([`eval`]).
//!
//! ```
//! use pgm_core::eval::{noise_image, synth_pair, SynthMotion};
//! use pgm_core::interp::{densify, select_interpolator, sparsify_to_grid};
//! use pgm_core::pyramid_flow::pyramidal_matching;
//! use pgm_core::{endpoint_metrics, PipelineConfig};
//!
//! let base = noise_image(64, 48, 3, 1);
//! let pair = synth_pair(&base, &SynthMotion::Translation { tx: 3.0, ty: -2.0 }, 2)?;
//!
//! let cfg = PipelineConfig { seed: 7, ..PipelineConfig::default() };
//! let out = pyramidal_matching(&pair.img1, &pair.img2, &cfg)?;
//!
//! let matches = sparsify_to_grid(&out.field, 3);
//! let mode = select_interpolator(matches.len(), 64, 48, 0.022);
//! let flow = densify(&matches, 64, 48, mode, 25)?;
//!
//! let metrics = endpoint_metrics(&flow, &pair.gt, Some(&pair.mask), 3.0)?;
//! assert!(metrics.aee < 0.5);
//! # Ok::<(), pgm_core::PgmError>(())
//! ```

pub mod error;
pub mod eval;
pub mod imgproc;
pub mod interp;
pub mod matcher;
pub mod pyramid_flow;

pub use error::{PgmError, Result};
pub use eval::{endpoint_metrics, flow_to_color, read_flo, synth_pair, write_flo, Metrics};
pub use imgproc::{ColorSpace, GradientImage, GradientVariant, ImagePyramid, RasterImage};
pub use interp::{FlowField, InterpolatorMode, MatchPoint, MatchSet};
pub use matcher::{CorrespondenceField, MatchParams, Offset};
pub use pyramid_flow::{AblationMode, PipelineConfig, PipelineOutput};
