//! Shared fixtures for the pipeline benchmarks.

use pgm_core::eval::{noise_image, synth_pair, SynthMotion, SynthPair};
use pgm_core::imgproc::{build_gradient_image, sobel_gradients, GradientImage};

/// A translated noise pair at the given size.
pub fn translated_pair(width: usize, height: usize, shift: (f64, f64)) -> SynthPair {
    let base = noise_image(width, height, 3, 7);
    synth_pair(
        &base,
        &SynthMotion::Translation {
            tx: shift.0,
            ty: shift.1,
        },
        11,
    )
    .expect("shift keeps enough pixels in bounds")
}

/// Six-channel gradient images of both halves of a translated pair.
pub fn gradient_pair(width: usize, height: usize) -> (GradientImage, GradientImage) {
    let pair = translated_pair(width, height, (3.0, 2.0));
    let grad = |img| {
        let (gx, gy) = sobel_gradients(img, 5).expect("valid kernel");
        build_gradient_image(&gx, &gy).expect("matching shapes")
    };
    (grad(&pair.img1), grad(&pair.img2))
}
