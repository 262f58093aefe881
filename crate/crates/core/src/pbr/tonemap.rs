//! sRGB transfer function used for display output and composite losses.

/// Clamp to [0,1] and apply the exact sRGB opto-electronic transfer:
/// x <= 0.0031308 -> 12.92 x, else 1.055 x^(1/2.4) - 0.055.
pub fn tonemap_srgb(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

/// Derivative of `tonemap_srgb` (subgradient 0 outside [0,1], left limit at
/// the clamp edges).
pub fn tonemap_srgb_deriv(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if x <= 0.003_130_8 {
        12.92
    } else {
        1.055 / 2.4 * x.powf(1.0 / 2.4 - 1.0)
    }
}

/// Inverse sRGB transfer on [0,1].
pub fn srgb_to_linear(y: f64) -> f64 {
    let y = y.clamp(0.0, 1.0);
    if y <= 0.040_449_936 {
        y / 12.92
    } else {
        ((y + 0.055) / 1.055).powf(2.4)
    }
}

pub fn tonemap_rgb(rgb: [f64; 3]) -> [f64; 3] {
    [tonemap_srgb(rgb[0]), tonemap_srgb(rgb[1]), tonemap_srgb(rgb[2])]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn endpoints_and_midgray() {
        assert_eq!(tonemap_srgb(0.0), 0.0);
        assert_relative_eq!(tonemap_srgb(1.0), 1.0, epsilon = 1e-12);
        // 18% gray
        assert_relative_eq!(tonemap_srgb(0.18), 0.4613, epsilon = 1e-4);
    }

    #[test]
    fn inverse_round_trip() {
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert_relative_eq!(srgb_to_linear(tonemap_srgb(x)), x, epsilon = 1e-9);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for &x in &[0.001, 0.01, 0.2, 0.5, 0.9] {
            let eps = 1e-7;
            let fd = (tonemap_srgb(x + eps) - tonemap_srgb(x - eps)) / (2.0 * eps);
            assert_relative_eq!(tonemap_srgb_deriv(x), fd, max_relative = 1e-4);
        }
    }
}
