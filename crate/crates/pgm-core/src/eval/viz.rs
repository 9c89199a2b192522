//! Flow visualization on the standard color wheel.

use crate::imgproc::RasterImage;
use crate::interp::FlowField;

/// Renders a flow field: hue encodes the direction `atan2(v, u)`, saturation
/// the magnitude normalized by `max_magnitude` (the 99th magnitude
/// percentile when absent). Zero flow renders white.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> RasterImage {
    let (w, h) = (flow.width(), flow.height());
    let norm = max_magnitude.unwrap_or_else(|| {
        let mut mags: Vec<f64> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                let (u, v) = flow.get(x, y);
                ((u as f64).powi(2) + (v as f64).powi(2)).sqrt()
            })
            .collect();
        mags.sort_by(f64::total_cmp);
        let idx = ((mags.len() as f64 * 0.99).ceil() as usize).saturating_sub(1);
        mags[idx]
    });
    let norm = if norm > 0.0 { norm } else { 1.0 };

    let mut out = RasterImage::new(w, h, 3, 0.0).expect("valid shape");
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let mag = ((u as f64).powi(2) + (v as f64).powi(2)).sqrt();
            let sat = (mag / norm).min(1.0);
            let hue = (v as f64).atan2(u as f64); // [-pi, pi]
            let (r, g, b) = hsv_to_rgb(hue.rem_euclid(std::f64::consts::TAU), sat, 1.0);
            out.set(x, y, 0, (r * 255.0) as f32);
            out.set(x, y, 1, (g * 255.0) as f32);
            out.set(x, y, 2, (b * 255.0) as f32);
        }
    }
    out
}

/// `hue` in radians `[0, 2pi)`, `s`/`v` in `[0, 1]`.
fn hsv_to_rgb(hue: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h = hue / std::f64::consts::TAU * 6.0;
    let i = h.floor() as i64 % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_renders_white() {
        let img = flow_to_color(&FlowField::new(4, 3), None);
        assert!(img.data().iter().all(|&v| (v - 255.0).abs() < 0.5));
    }

    #[test]
    fn constant_flow_renders_constant_color() {
        let mut flow = FlowField::new(5, 5);
        for y in 0..5 {
            for x in 0..5 {
                flow.set(x, y, 2.0, -1.0);
            }
        }
        let img = flow_to_color(&flow, None);
        let first = img.pixel(0, 0).to_vec();
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(img.pixel(x, y), &first[..]);
            }
        }
    }

    #[test]
    fn positive_x_flow_at_full_magnitude_is_the_zero_radian_color() {
        let mut flow = FlowField::new(1, 1);
        flow.set(0, 0, 4.0, 0.0);
        let img = flow_to_color(&flow, Some(4.0));
        // Hue 0 at full saturation on the HSV wheel: pure red.
        assert!((img.get(0, 0, 0) - 255.0).abs() < 0.5);
        assert!(img.get(0, 0, 1) < 1.0);
        assert!(img.get(0, 0, 2) < 1.0);
    }
}
